"""
Synthetic Lambertian scene generator.

Renders a color board on a tilted plane in front of a co-located pinhole
hyperspectral camera and LiDAR:

    I(λ) = m · e(λ) · ρ*(λ) + noise,   m = cos θ_light × (1 lit | shadow_floor in umbra)

The umbra is black unless a spec opts in to an ambient shadow_floor.

and LiDAR intensities through the range equation with the same geometry.
Outputs share one grid and frame and come with ground-truth albedo and a
reference chart. All randomness comes from one seeded generator.
"""

from pathlib import Path
from typing import List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from hsalbedo.logging_config import get_logger
from hsalbedo.models import (
    AlbedoMap,
    ChartPatch,
    HsAlbedoError,
    IlluminantField,
    IlluminantSpectrum,
    LidarSample,
    LidarSampleSet,
    PixelRect,
    Provenance,
    ReferenceChart,
    SensorConstants,
    ShadingField,
    SpectralCube,
    WavelengthGrid,
)
from hsalbedo.services.albedo_pipeline import spectrum_to_xyz, xyz_to_srgb
from hsalbedo.services.lidar_model import (
    PinholeIntrinsics,
    back_project,
    forward_intensity,
    incidence_cosines,
)
from hsalbedo.services.metrics import delta_e_2000, linear_rgb_to_lab
from hsalbedo.services.spectral_core import GridError, find_band
from hsalbedo.utils.file_utils import read_json, write_json

logger = get_logger(__name__)

DEFAULT_BANDS = tuple(float(w) for w in range(400, 701, 10)) + (905.0,)
PALETTE_SIZE = 24
MIN_PALETTE_DELTA_E = 5.0
MAX_REGION_SLOPE = 0.95
AMBIENT_SHADOW_FLOOR = 0.25
# Second radiation constant hc/k in nm·K
PLANCK_C2_NM_K = 1.438777e7


class SceneSpecError(HsAlbedoError, ValueError):
    """Raised for an invalid or unreadable scene specification."""


# =============================================================================
# SPEC MODELS
# =============================================================================


class MaterialSpec(BaseModel):
    """A named reflectance spectrum on the scene grid."""

    name: str = Field(..., min_length=1)
    reflectance: List[float] = Field(..., min_length=1)

    @field_validator("reflectance")
    @classmethod
    def validate_reflectance(cls, v: List[float]) -> List[float]:
        if any(not (0.0 <= r <= 1.0) for r in v):
            raise ValueError("Material reflectance must be in [0, 1]")
        return v


class BoardLayout(BaseModel):
    """rows × cols square patches, row-major, at margin/gap spacing."""

    rows: int = Field(default=4, ge=1)
    cols: int = Field(default=6, ge=1)
    patch_size: int = Field(default=20, ge=1)
    gap: int = Field(default=4, ge=0)
    margin: int = Field(default=4, ge=0)

    def patch_rects(self) -> List[PixelRect]:
        step = self.patch_size + self.gap
        return [
            PixelRect(
                x=self.margin + c * step,
                y=self.margin + r * step,
                width=self.patch_size,
                height=self.patch_size,
            )
            for r in range(self.rows)
            for c in range(self.cols)
        ]


class IlluminantSpec(BaseModel):
    """Blackbody-shaped source, normalized to `scale` at 560 nm."""

    temperature_k: float = Field(default=5500.0, gt=0)
    scale: float = Field(default=1.0, gt=0)
    slope: float = Field(default=0.0, description="Linear tilt per 350 nm around 550 nm")

    @field_validator("slope")
    @classmethod
    def validate_slope(cls, v: float) -> float:
        if abs(v) >= MAX_REGION_SLOPE:
            raise ValueError(f"Illuminant slope must satisfy |slope| < {MAX_REGION_SLOPE}")
        return v


class IlluminantRegionSpec(BaseModel):
    """Image region lit by a spectrally tilted copy of the main source."""

    rect: List[int] = Field(..., min_length=4, max_length=4, description="[x, y, width, height]")
    slope: float

    @field_validator("slope")
    @classmethod
    def validate_slope(cls, v: float) -> float:
        if abs(v) >= MAX_REGION_SLOPE:
            raise ValueError(f"Region slope must satisfy |slope| < {MAX_REGION_SLOPE}")
        return v


class LidarScanSpec(BaseModel):
    coverage: float = Field(default=0.2, gt=0, le=1, description="Fraction of pixels sampled")
    pattern: Literal["grid", "random", "scanline"] = "grid"


class NoiseSpec(BaseModel):
    radiance_sigma: float = Field(
        default=0.0, ge=0, description="Additive Gaussian σ as a fraction of peak radiance"
    )
    intensity_sigma: float = Field(
        default=0.0, ge=0, description="Multiplicative Gaussian σ on LiDAR intensity"
    )


class SceneSpec(BaseModel):
    """Complete description of a synthetic capture."""

    model_config = ConfigDict(extra="forbid")

    width: int = Field(default=148, gt=2)
    height: int = Field(default=100, gt=2)
    bands: List[float] = Field(default_factory=lambda: list(DEFAULT_BANDS))
    materials: List[MaterialSpec] = Field(..., min_length=1, description="Board materials, row-major")
    background: MaterialSpec
    board: BoardLayout = Field(default_factory=BoardLayout)
    illuminant: IlluminantSpec = Field(default_factory=IlluminantSpec)
    illuminant_regions: List[IlluminantRegionSpec] = Field(default_factory=list)
    occluders: List[List[int]] = Field(
        default_factory=list, description="Umbra rectangles [x, y, width, height] in image space"
    )
    shadow_floor: float = Field(default=0.0, ge=0, le=1, description="Ambient fraction in umbra")
    light_direction: Tuple[float, float, float] = Field(
        default=(-0.2, -0.3, -1.0), description="Surface-to-light direction, camera frame"
    )
    board_tilt_deg: float = Field(default=15.0, ge=0, lt=80)
    board_depth: float = Field(default=1.5, gt=0, description="Meters along the optical axis")
    fov_deg: float = Field(default=40.0, gt=0, lt=180)
    sensor: SensorConstants = Field(
        default_factory=lambda: SensorConstants(
            receiver_aperture_d_r=0.1, eta_sys=0.9, eta_atm=0.98, lidar_wavelength=905.0
        )
    )
    lidar: LidarScanSpec = Field(default_factory=LidarScanSpec)
    noise: NoiseSpec = Field(default_factory=NoiseSpec)
    whiteboard_reflectance: float = Field(default=1.0, gt=0, le=1)
    seed: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def validate_scene(self) -> "SceneSpec":
        """
        Cross-field checks: grid, spectra lengths, layout and regions fit the frame.

        Raises:
            ValueError: On any inconsistency
        """
        grid = WavelengthGrid(bands=tuple(self.bands))
        try:
            find_band(grid, self.sensor.lidar_wavelength)
        except GridError as e:
            raise ValueError(str(e)) from e

        for material in [*self.materials, self.background]:
            if len(material.reflectance) != grid.band_count:
                raise ValueError(
                    f"Material '{material.name}' has {len(material.reflectance)} values, "
                    f"grid has {grid.band_count} bands"
                )
        patch_count = self.board.rows * self.board.cols
        if len(self.materials) < patch_count:
            raise ValueError(
                f"Board has {patch_count} patches but only {len(self.materials)} materials"
            )
        names = [m.name for m in self.materials[:patch_count]]
        if len(set(names)) != len(names):
            raise ValueError("Board material names must be unique")
        for rect in self.board.patch_rects():
            if not rect.fits(self.width, self.height):
                raise ValueError(f"Board patch {rect.to_list()} outside frame")

        for values in self.occluders:
            if not PixelRect.from_list(values).fits(self.width, self.height):
                raise ValueError(f"Occluder {values} outside frame")
        regions = [PixelRect.from_list(r.rect) for r in self.illuminant_regions]
        for i, rect in enumerate(regions):
            if not rect.fits(self.width, self.height):
                raise ValueError(f"Illuminant region {rect.to_list()} outside frame")
            if any(rect.overlaps(other) for other in regions[i + 1:]):
                raise ValueError(f"Illuminant region {rect.to_list()} overlaps another region")
        if not np.any(self.light_direction):
            raise ValueError("light_direction must be nonzero")
        return self

    @property
    def grid(self) -> WavelengthGrid:
        return WavelengthGrid(bands=tuple(self.bands))


class SceneRender(BaseModel):
    """Everything render_scene produces for one spec."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    spec: SceneSpec
    cube: SpectralCube
    white_cube: SpectralCube
    lidar_set: LidarSampleSet
    shading: ShadingField
    truth_albedo: AlbedoMap
    chart: ReferenceChart
    illuminant: IlluminantSpectrum = Field(..., description="True e(λ), with regions if any")
    reflectance: np.ndarray = Field(..., description="H×W×B true ρ*(λ)")
    material_map: np.ndarray = Field(..., description="H×W material index, -1 = background")
    shadow_mask: np.ndarray
    depth: np.ndarray = Field(..., description="H×W Z-depth in meters")
    intrinsics: PinholeIntrinsics


# =============================================================================
# SPECTRA
# =============================================================================


def blackbody_illuminant(bands: np.ndarray, spec: IlluminantSpec) -> np.ndarray:
    """Planck curve on the bands, scaled to spec.scale at 560 nm, with optional tilt."""
    def planck(wavelength):
        return wavelength ** -5.0 / np.expm1(PLANCK_C2_NM_K / (wavelength * spec.temperature_k))

    values = spec.scale * planck(bands) / planck(560.0)
    return values * (1.0 + spec.slope * (bands - 550.0) / 350.0)


def _gaussian(bands: np.ndarray, center: float, width: float) -> np.ndarray:
    return np.exp(-0.5 * ((bands - center) / width) ** 2)


def palette_pool(bands: np.ndarray) -> List[Tuple[str, np.ndarray]]:
    """
    Candidate material spectra: single peaks, purples, long-pass edges and grays.

    Every candidate keeps a floor of at least 0.05 so the LiDAR band never
    reads zero.
    """
    pool: List[Tuple[str, np.ndarray]] = []
    tiers = (("deep", 0.05, 0.60, 40.0), ("soft", 0.05, 0.35, 60.0), ("pale", 0.20, 0.60, 50.0))
    for center in range(420, 681, 20):
        for tier, base, amplitude, width in tiers:
            pool.append((f"peak_{center}_{tier}", base + amplitude * _gaussian(bands, center, width)))
    for tier, base, amplitude, width in (("deep", 0.05, 0.45, 35.0), ("pale", 0.10, 0.60, 40.0)):
        spectrum = base + amplitude * (_gaussian(bands, 430, width) + _gaussian(bands, 650, width))
        pool.append((f"purple_{tier}", spectrum))
    for edge in (500, 530, 560, 590, 620):
        pool.append((f"edge_{edge}", 0.05 + 0.70 / (1.0 + np.exp(-(bands - edge) / 15.0))))
    for level in (0.05, 0.10, 0.20, 0.35, 0.50, 0.70, 0.90):
        pool.append((f"gray_{level:.2f}", np.full_like(bands, level)))
    return [(name, np.clip(spectrum, 0.0, 0.95)) for name, spectrum in pool]


def material_linear_rgb(spectra: np.ndarray, grid: WavelengthGrid) -> np.ndarray:
    """Ground-truth linear RGB of reflectance spectra under D65."""
    linear, _, _ = xyz_to_srgb(spectrum_to_xyz(spectra, grid))
    return linear


def select_palette(
    pool: List[Tuple[str, np.ndarray]], grid: WavelengthGrid, count: int = PALETTE_SIZE
) -> Tuple[List[int], float]:
    """
    Greedy maximin selection under CIEDE2000, seeded with the lightest candidate.

    Returns:
        (selected pool indices in pool order, minimum pairwise ΔE00)
    """
    spectra = np.stack([spectrum for _, spectrum in pool])
    lab = linear_rgb_to_lab(material_linear_rgb(spectra, grid))
    distances = delta_e_2000(lab[:, None, :], lab[None, :, :])

    selected = [int(np.argmax(lab[:, 0]))]
    nearest = distances[selected[0]].copy()
    while len(selected) < count:
        nearest[selected] = -np.inf
        choice = int(np.argmax(nearest))
        selected.append(choice)
        nearest = np.minimum(nearest, distances[choice])

    chosen = sorted(selected)
    sub = distances[np.ix_(chosen, chosen)]
    minimum = float(np.min(sub[~np.eye(len(chosen), dtype=bool)]))
    return chosen, minimum


def default_colorboard_spec(seed: int = 0) -> SceneSpec:
    """
    The 4×6 color board scene with a T-shaped occluder.

    Grid is 400–700 nm at 10 nm plus the 905 nm LiDAR band.
    The umbra keeps 25% ambient light so shadowed patches stay measurable.

    Raises:
        SceneSpecError: If the palette is not separated by more than 5 ΔE00
    """
    bands = np.asarray(DEFAULT_BANDS)
    grid = WavelengthGrid(bands=DEFAULT_BANDS)
    pool = palette_pool(bands)
    chosen, minimum = select_palette(pool, grid)
    if minimum <= MIN_PALETTE_DELTA_E:
        raise SceneSpecError(
            f"Palette minimum pairwise CIEDE2000 is {minimum:.3f}, "
            f"must exceed {MIN_PALETTE_DELTA_E}"
        )
    logger.debug(f"Selected {len(chosen)} materials, min pairwise ΔE00 {minimum:.2f}")

    materials = [
        MaterialSpec(name=pool[i][0], reflectance=pool[i][1].tolist()) for i in chosen
    ]
    return SceneSpec(
        bands=list(DEFAULT_BANDS),
        materials=materials,
        background=MaterialSpec(name="background", reflectance=[0.08] * len(DEFAULT_BANDS)),
        occluders=[[20, 18, 108, 16], [64, 34, 20, 56]],
        shadow_floor=AMBIENT_SHADOW_FLOOR,
        seed=seed,
    )


# =============================================================================
# RENDERING
# =============================================================================


def _board_normal(tilt_deg: float) -> np.ndarray:
    tilt = np.radians(tilt_deg)
    return np.array([np.sin(tilt), 0.0, -np.cos(tilt)])


def plane_depth(spec: SceneSpec, intrinsics: PinholeIntrinsics) -> np.ndarray:
    """Z-depth of the board plane through (0, 0, board_depth)."""
    normal = _board_normal(spec.board_tilt_deg)
    u, v = np.meshgrid(np.arange(spec.width, dtype=np.float64), np.arange(spec.height, dtype=np.float64))
    x = (u - intrinsics.cx) / intrinsics.fx
    y = (v - intrinsics.cy) / intrinsics.fy
    return (normal[2] * spec.board_depth) / (normal[0] * x + normal[1] * y + normal[2])


def _select_lidar_pixels(spec: SceneSpec, rng: np.random.Generator) -> np.ndarray:
    """Row-major flat pixel indices for the scan pattern."""
    width, height = spec.width, spec.height
    coverage = spec.lidar.coverage
    if spec.lidar.pattern == "random":
        count = max(1, int(round(coverage * width * height)))
        return np.sort(rng.choice(width * height, size=count, replace=False))
    if spec.lidar.pattern == "scanline":
        step = max(1, int(round(1.0 / coverage)))
        rows = np.arange(step // 2, height, step)
        return (rows[:, None] * width + np.arange(width)[None, :]).ravel()
    step = max(1, int(round(1.0 / np.sqrt(coverage))))
    rows = np.arange(step // 2, height, step)
    cols = np.arange(step // 2, width, step)
    return (rows[:, None] * width + cols[None, :]).ravel()


def _illuminant_map(spec: SceneSpec, base: np.ndarray, bands: np.ndarray) -> Tuple[np.ndarray, IlluminantSpectrum]:
    e_map = np.broadcast_to(base, (spec.height, spec.width, base.size)).copy()
    grid = spec.grid
    if not spec.illuminant_regions:
        return e_map, IlluminantSpectrum(grid=grid, values=base)

    region_map = np.full((spec.height, spec.width), -1, dtype=np.int32)
    rects, spectra = [], []
    for index, region in enumerate(spec.illuminant_regions):
        rect = PixelRect.from_list(region.rect)
        spectrum = base * (1.0 + region.slope * (bands - 550.0) / 350.0)
        e_map[rect.slices] = spectrum
        region_map[rect.slices] = index
        rects.append(rect)
        spectra.append(spectrum)
    field = IlluminantField(regions=tuple(rects), region_map=region_map, spectra=np.stack(spectra))
    return e_map, IlluminantSpectrum(grid=grid, values=base, spatial_field=field)


def render_scene(spec: SceneSpec, shading_scale: Optional[np.ndarray] = None) -> SceneRender:
    """
    Render cube, white reference, LiDAR samples and ground truth for a spec.

    Args:
        spec: Validated scene spec
        shading_scale: Optional H×W positive multiplier on the shading field

    Returns:
        SceneRender with every output on the spec's grid and frame

    Raises:
        SceneSpecError: If shading_scale has the wrong shape or nonpositive values
    """
    grid = spec.grid
    bands = grid.as_array()
    height, width = spec.height, spec.width
    rng = np.random.default_rng(spec.seed)

    # materials
    rects = spec.board.patch_rects()
    board_materials = spec.materials[: len(rects)]
    spectra = np.array([m.reflectance for m in board_materials], dtype=np.float64)
    background = np.asarray(spec.background.reflectance, dtype=np.float64)
    material_map = np.full((height, width), -1, dtype=np.int32)
    for index, rect in enumerate(rects):
        material_map[rect.slices] = index
    reflectance = np.where(
        (material_map >= 0)[..., None], spectra[np.clip(material_map, 0, None)], background
    )

    # geometry
    intrinsics = PinholeIntrinsics.from_fov(width, height, spec.fov_deg)
    depth = plane_depth(spec, intrinsics)
    normal = _board_normal(spec.board_tilt_deg)
    normals = np.broadcast_to(normal, (height, width, 3)).copy()
    light = np.asarray(spec.light_direction, dtype=np.float64)
    cos_light = float(np.clip(normal @ (light / np.linalg.norm(light)), 0.0, 1.0))

    shadow_mask = np.zeros((height, width), dtype=bool)
    for values in spec.occluders:
        shadow_mask[PixelRect.from_list(values).slices] = True
    shading = np.where(shadow_mask, cos_light * spec.shadow_floor, cos_light)
    if shading_scale is not None:
        scale = np.asarray(shading_scale, dtype=np.float64)
        if scale.shape != (height, width) or not np.all(np.isfinite(scale)) or np.any(scale <= 0):
            raise SceneSpecError(f"shading_scale must be a positive {height}x{width} array")
        shading = shading * scale

    base = blackbody_illuminant(bands, spec.illuminant)
    e_map, true_illuminant = _illuminant_map(spec, base, bands)

    radiance = shading[..., None] * e_map * reflectance
    white = spec.whiteboard_reflectance * e_map

    # draw order: lidar selection, radiance noise, white noise, intensity noise
    pixels = _select_lidar_pixels(spec, rng)
    if spec.noise.radiance_sigma > 0:
        sigma = spec.noise.radiance_sigma * radiance.max()
        radiance = np.clip(radiance + rng.normal(0.0, sigma, radiance.shape), 0.0, None)
        white_sigma = spec.noise.radiance_sigma * white.max()
        white = np.clip(white + rng.normal(0.0, white_sigma, white.shape), 0.0, None)

    lidar_band = find_band(grid, spec.sensor.lidar_wavelength)
    cosines, _ = incidence_cosines(normals, intrinsics, depth)
    ranges = np.linalg.norm(back_project(depth, intrinsics), axis=-1)
    v, u = np.divmod(pixels, width)
    rho_lidar = reflectance[v, u, lidar_band]
    intensity = forward_intensity(spec.sensor, rho_lidar, ranges[v, u], cosines[v, u])
    intensity = np.atleast_1d(intensity)
    if spec.noise.intensity_sigma > 0:
        noise = rng.normal(0.0, spec.noise.intensity_sigma, intensity.shape)
        intensity = np.clip(intensity * (1.0 + noise), 0.0, None)

    samples = tuple(
        LidarSample(
            u=int(u[i]),
            v=int(v[i]),
            range_r=float(ranges[v[i], u[i]]),
            intensity_l=float(intensity[i]),
            incidence_cos=float(cosines[v[i], u[i]]),
        )
        for i in range(pixels.size)
    )
    lidar_set = LidarSampleSet(constants=spec.sensor, samples=samples, width=width, height=height)

    # ground truth
    board_rgb = material_linear_rgb(spectra, grid)
    background_rgb = material_linear_rgb(background, grid)
    truth = np.where(
        (material_map >= 0)[..., None], board_rgb[np.clip(material_map, 0, None)], background_rgb
    )
    chart = ReferenceChart(
        width=width,
        height=height,
        patches=tuple(
            ChartPatch(name=material.name, region=rect, truth=tuple(float(c) for c in board_rgb[i]))
            for i, (material, rect) in enumerate(zip(board_materials, rects))
        ),
    )

    logger.info(
        f"Rendered scene {width}x{height}x{grid.band_count}: {len(samples)} LiDAR samples, "
        f"{100.0 * shadow_mask.mean():.1f}% in shadow, seed={spec.seed}"
    )
    return SceneRender(
        spec=spec,
        cube=SpectralCube(grid=grid, radiance=radiance),
        white_cube=SpectralCube(grid=grid, radiance=white),
        lidar_set=lidar_set,
        shading=ShadingField(values=shading),
        truth_albedo=AlbedoMap(
            linear_rgb=truth,
            provenance=np.full((height, width), Provenance.MEASURED, dtype=np.uint8),
        ),
        chart=chart,
        illuminant=true_illuminant,
        reflectance=reflectance,
        material_map=material_map,
        shadow_mask=shadow_mask,
        depth=depth,
        intrinsics=intrinsics,
    )


# =============================================================================
# FILES
# =============================================================================


def load_scene_spec(path: Union[str, Path]) -> SceneSpec:
    """
    Read a scene.json spec.

    Raises:
        SceneSpecError: If the file is missing or invalid; the message names
            the offending field
    """
    try:
        return SceneSpec.model_validate(read_json(path))
    except FileNotFoundError as e:
        raise SceneSpecError(f"Scene spec not found: {path}") from e
    except ValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(part) for part in error['loc']) or 'spec'}: {error['msg']}"
            for error in e.errors()
        )
        raise SceneSpecError(f"{path}: invalid scene spec: {problems}") from e
    except ValueError as e:
        raise SceneSpecError(f"{path}: not valid JSON: {e}") from e


def save_scene_spec(spec: SceneSpec, path: Union[str, Path]) -> Path:
    return write_json(path, spec.model_dump(mode="json"))
