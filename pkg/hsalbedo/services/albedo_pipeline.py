"""
Albedo recovery service.

Recovers per-pixel reflectance spectra with the LiDAR-anchored ratio

    ρ(λ) = [e(λ_L) / e(λ)] · [I(λ) / I(λ_L)] · ρ(λ_L)

in which the shading factor m(n, l) cancels, then renders the spectra to
linear and encoded sRGB through the CIE 1931 2° observer. Also provides the
plain RGB rendering of a cube used as the comparison baseline, and albedo
map file I/O.
"""

from enum import Enum
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from PIL import Image
from pydantic import BaseModel, ConfigDict, Field

from hsalbedo.logging_config import get_logger
from hsalbedo.models import (
    AlbedoMap,
    HsAlbedoError,
    IlluminantSpectrum,
    LidarSample,
    LidarSampleSet,
    Provenance,
    ReflectanceSpectrumMap,
    SensorConstants,
    SpectralCube,
    WavelengthGrid,
)
from hsalbedo.services.lidar_model import CLAMP_MAX, COS_MIN, invert_samples
from hsalbedo.services.spectral_core import GridError, find_band, require_same_grid
from hsalbedo.utils.srgb import decode_srgb, encode_srgb

logger = get_logger(__name__)

DATA_DIR = Path(__file__).resolve().parent.parent / "data"
CMF_FILE = DATA_DIR / "cie1931_2deg_5nm.csv"
D65_FILE = DATA_DIR / "d65_5nm.csv"

VISIBLE_MIN_NM = 380.0
VISIBLE_MAX_NM = 780.0
MIN_VISIBLE_BANDS = 5
DARK_ANCHOR_FRACTION = 1e-6
DEFAULT_LIDAR_WAVELENGTH = 905.0
GAMUT_TOLERANCE = 1e-9

D65_WHITE_XYZ = (0.95047, 1.0, 1.08883)

XYZ_TO_LINEAR_SRGB = np.array(
    [
        [3.2404542, -1.5371385, -0.4985314],
        [-0.9692660, 1.8760108, 0.0415560],
        [0.0556434, -0.2040259, 1.0572252],
    ]
)
LINEAR_SRGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)

REFERENCE_ILLUMINANTS = ("D65", "E")


class RecoveryError(HsAlbedoError, ValueError):
    """Raised when albedo recovery cannot produce any valid pixel or inputs disagree."""


class RejectionReason(str, Enum):
    """Why a LiDAR sample produced no albedo."""

    GRAZING = "grazing"
    DARK_ANCHOR = "dark_anchor"


class RecoverySummary(BaseModel):
    """Counts collected while recovering a sparse albedo map."""

    total_samples: int = Field(default=0, ge=0)
    accepted: int = Field(default=0, ge=0)
    rejected: Dict[str, int] = Field(
        default_factory=lambda: {reason.value: 0 for reason in RejectionReason}
    )
    clamped: int = Field(default=0, ge=0, description="Samples with ρ(λ_L) above clamp_max")
    flagged_spectra: int = Field(default=0, ge=0, description="Spectra above clamp_max in a band")
    gamut_clipped: int = Field(default=0, ge=0, description="RGB triples clipped into [0, 1]")
    outside_regions: int = Field(
        default=0, ge=0, description="Accepted samples outside every illuminant region"
    )
    lidar_band_nm: float
    epsilon_i: float = Field(..., description="Dark-anchor threshold on I(λ_L)")
    reference_illuminant: str = "D65"
    warnings: List[str] = Field(default_factory=list)


class RecoveryResult(BaseModel):
    """Sparse albedo, recovered spectra and the run summary."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    albedo: AlbedoMap
    spectra: ReflectanceSpectrumMap
    summary: RecoverySummary


# =============================================================================
# COLORIMETRY
# =============================================================================


@lru_cache(maxsize=None)
def _load_table(path: Path) -> np.ndarray:
    table = np.loadtxt(path, delimiter=",", skiprows=1, dtype=np.float64)
    table.setflags(write=False)
    return table


def _visible_weights(grid: WavelengthGrid) -> np.ndarray:
    """Δλ per band for visible bands, zero elsewhere."""
    bands = grid.as_array()
    visible = (bands >= VISIBLE_MIN_NM) & (bands <= VISIBLE_MAX_NM)
    if np.count_nonzero(visible) < MIN_VISIBLE_BANDS:
        raise GridError(
            f"Grid has {np.count_nonzero(visible)} bands in "
            f"[{VISIBLE_MIN_NM:g}, {VISIBLE_MAX_NM:g}] nm; at least {MIN_VISIBLE_BANDS} required"
        )
    weights = np.zeros_like(bands)
    weights[visible] = np.gradient(bands[visible])
    return weights


def cmf_on_grid(grid: WavelengthGrid) -> np.ndarray:
    """
    Color matching functions sampled on a grid.

    Linear interpolation of the 5 nm CIE 1931 2° table; zero outside it.

    Returns:
        B×3 array of x̄, ȳ, z̄
    """
    table = _load_table(CMF_FILE)
    bands = grid.as_array()
    return np.stack(
        [np.interp(bands, table[:, 0], table[:, i], left=0.0, right=0.0) for i in (1, 2, 3)],
        axis=-1,
    )


def reference_illuminant_for(grid: WavelengthGrid, name: str = "D65") -> np.ndarray:
    """
    Reference illuminant S(λ) on a grid.

    Args:
        grid: Target grid
        name: "D65" or "E" (equal energy)

    Raises:
        RecoveryError: For an unknown illuminant name
    """
    bands = grid.as_array()
    if name == "E":
        return np.ones_like(bands)
    if name == "D65":
        table = _load_table(D65_FILE)
        return np.interp(bands, table[:, 0], table[:, 1])
    raise RecoveryError(
        f"Unknown reference illuminant '{name}', expected one of {REFERENCE_ILLUMINANTS}"
    )


def _xyz_weights(grid: WavelengthGrid, reference_illuminant: np.ndarray) -> np.ndarray:
    """B×3 weights k·S·cmf·Δλ, normalized so a perfect reflector has Y = 1."""
    illuminant = np.asarray(reference_illuminant, dtype=np.float64)
    if illuminant.shape != (grid.band_count,):
        raise RecoveryError(
            f"Reference illuminant has shape {illuminant.shape}, grid has {grid.band_count} bands"
        )
    weighted = cmf_on_grid(grid) * (illuminant * _visible_weights(grid))[:, None]
    norm = weighted[:, 1].sum()
    if not norm > 0:
        raise RecoveryError("Reference illuminant has no luminance on the visible bands")
    return weighted / norm


def spectrum_to_xyz(
    spectrum: np.ndarray,
    grid: WavelengthGrid,
    reference_illuminant: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Integrate reflectance spectra against the CIE 1931 2° observer.

    Args:
        spectrum: Per-band ρ(λ), shape (..., B)
        grid: Grid of the spectrum
        reference_illuminant: S(λ) on the grid, defaults to D65

    Returns:
        XYZ with shape (..., 3); Y = 1 for a perfect reflector

    Raises:
        GridError: If fewer than five bands fall in the visible range
    """
    if reference_illuminant is None:
        reference_illuminant = reference_illuminant_for(grid)
    spectrum = np.asarray(spectrum, dtype=np.float64)
    if spectrum.shape[-1] != grid.band_count:
        raise RecoveryError(
            f"Spectrum has {spectrum.shape[-1]} bands, grid has {grid.band_count}"
        )
    return spectrum @ _xyz_weights(grid, reference_illuminant)


def xyz_to_srgb(xyz: np.ndarray) -> Tuple[np.ndarray, np.ndarray, int]:
    """
    Convert XYZ to gamut-clipped linear sRGB and its encoded form.

    Args:
        xyz: XYZ values, shape (..., 3)

    Returns:
        (linear RGB in [0, 1], encoded sRGB in [0, 1], number of clipped triples)
    """
    linear = np.asarray(xyz, dtype=np.float64) @ XYZ_TO_LINEAR_SRGB.T
    outside = np.any((linear < -GAMUT_TOLERANCE) | (linear > 1.0 + GAMUT_TOLERANCE), axis=-1)
    clip_count = int(np.count_nonzero(outside))
    linear = np.clip(linear, 0.0, 1.0)
    return linear, encode_srgb(linear), clip_count


# =============================================================================
# RECOVERY
# =============================================================================


def dark_anchor_threshold(cube: SpectralCube) -> float:
    """epsilon_i: minimum usable I(λ_L), relative to the cube's peak radiance."""
    return DARK_ANCHOR_FRACTION * cube.max_radiance()


def recover_spectrum(
    cube: SpectralCube,
    illum: IlluminantSpectrum,
    sample: LidarSample,
    rho_lidar: float,
    lidar_wavelength: float = DEFAULT_LIDAR_WAVELENGTH,
) -> np.ndarray:
    """
    Recover ρ(λ) at one sample's pixel.

    Args:
        cube: Scene radiance
        illum: Calibrated illuminant on the cube's grid
        sample: LiDAR sample locating the pixel
        rho_lidar: Reflectance at the LiDAR wavelength
        lidar_wavelength: Laser wavelength in nm

    Returns:
        Per-band reflectance, float64

    Raises:
        GridError: If the grids differ or the LiDAR band is missing
        RecoveryError: If I(λ_L) is at or below epsilon_i
        IlluminantLookupError: If the pixel has no illuminant region
    """
    require_same_grid(cube.grid, illum.grid, "cube and illuminant grids")
    band = find_band(cube.grid, lidar_wavelength)
    radiance = cube.radiance[sample.v, sample.u, :].astype(np.float64)
    epsilon = dark_anchor_threshold(cube)
    if not radiance[band] > epsilon:
        raise RecoveryError(
            f"I({cube.grid.bands[band]} nm) = {radiance[band]} at ({sample.u}, {sample.v}) "
            f"is at or below epsilon_i = {epsilon}"
        )
    e = illum.spectrum_at(sample.u, sample.v)
    return (e[band] / e) * (radiance / radiance[band]) * rho_lidar


def _illuminant_rows(
    illum: IlluminantSpectrum, u: np.ndarray, v: np.ndarray
) -> Tuple[np.ndarray, int]:
    """
    Per-sample e(λ) rows, honoring a spatial field.

    Returns:
        (rows, number of samples outside every region that used the global e)
    """
    rows = np.broadcast_to(illum.values, (u.shape[0], illum.grid.band_count))
    field = illum.spatial_field
    if field is None:
        return rows, 0
    region = field.region_map[v, u]
    if np.any(region >= field.spectra.shape[0]):
        raise RecoveryError("Illuminant region map references an unknown region")
    regional = field.spectra[np.clip(region, 0, None)]
    outside = int(np.count_nonzero(region < 0))
    return np.where((region >= 0)[:, None], regional, rows), outside


def compute_sparse_albedo(
    cube: SpectralCube,
    illum: IlluminantSpectrum,
    lidar_set: LidarSampleSet,
    constants: Optional[SensorConstants] = None,
    cos_min: float = COS_MIN,
    clamp_max: float = CLAMP_MAX,
    reference_illuminant: str = "D65",
) -> RecoveryResult:
    """
    Run inversion, ratio recovery and color conversion over all samples.

    Per-sample failures are counted by cause in the summary; the run only
    fails when no sample survives.

    Args:
        cube: Scene radiance
        illum: Calibrated illuminant on the cube's grid
        lidar_set: Registered LiDAR samples for the cube's frame
        constants: Sensor constants, defaults to the sample set's
        cos_min: Grazing-incidence cutoff
        clamp_max: Reflectance clamp
        reference_illuminant: Rendering illuminant name for XYZ

    Returns:
        RecoveryResult with the sparse albedo, spectra and summary

    Raises:
        RecoveryError: On frame mismatch or zero valid samples
        GridError: On grid mismatch or a missing LiDAR band
    """
    constants = constants or lidar_set.constants
    if (lidar_set.width, lidar_set.height) != (cube.width, cube.height):
        raise RecoveryError(
            f"LiDAR frame {lidar_set.width}x{lidar_set.height} does not match "
            f"cube {cube.width}x{cube.height}"
        )
    field = illum.spatial_field
    if field is not None and (field.width, field.height) != (cube.width, cube.height):
        raise RecoveryError(
            f"Illuminant field {field.width}x{field.height} does not match "
            f"cube {cube.width}x{cube.height}"
        )
    require_same_grid(cube.grid, illum.grid, "cube and illuminant grids")
    band = find_band(cube.grid, constants.lidar_wavelength)
    epsilon = dark_anchor_threshold(cube)

    summary = RecoverySummary(
        total_samples=len(lidar_set.samples),
        lidar_band_nm=cube.grid.bands[band],
        epsilon_i=epsilon,
        reference_illuminant=reference_illuminant,
    )
    if not lidar_set.samples:
        raise RecoveryError("zero valid samples: the LiDAR sample set is empty")

    inverted = invert_samples(lidar_set, cos_min=cos_min, clamp_max=clamp_max)
    u, v = inverted["u"], inverted["v"]
    radiance = cube.radiance[v, u, :].astype(np.float64)
    anchor = radiance[:, band]
    grazing = inverted["rejected"]
    dark = ~grazing & ~(anchor > epsilon)
    accepted = ~grazing & ~dark

    summary.rejected[RejectionReason.GRAZING.value] = int(np.count_nonzero(grazing))
    summary.rejected[RejectionReason.DARK_ANCHOR.value] = int(np.count_nonzero(dark))
    summary.clamped = int(np.count_nonzero(inverted["clamped"] & accepted))
    summary.accepted = int(np.count_nonzero(accepted))
    if summary.accepted == 0:
        raise RecoveryError(
            f"zero valid samples: {summary.rejected} of {summary.total_samples} rejected"
        )

    u, v = u[accepted], v[accepted]
    radiance, anchor = radiance[accepted], anchor[accepted]
    e, summary.outside_regions = _illuminant_rows(illum, u, v)
    rho = (e[:, band:band + 1] / e) * (radiance / anchor[:, None]) * inverted["rho"][accepted, None]

    xyz = spectrum_to_xyz(rho, cube.grid, reference_illuminant_for(cube.grid, reference_illuminant))
    linear, _, clip_count = xyz_to_srgb(xyz)
    summary.gamut_clipped = clip_count
    flagged_rows = np.any(rho > clamp_max, axis=-1)
    summary.flagged_spectra = int(np.count_nonzero(flagged_rows))

    height, width, bands = cube.radiance.shape
    spectra = np.zeros((height, width, bands))
    mask = np.zeros((height, width), dtype=bool)
    flagged = np.zeros((height, width), dtype=bool)
    rgb = np.zeros((height, width, 3))
    provenance = np.zeros((height, width), dtype=np.uint8)
    spectra[v, u] = rho
    mask[v, u] = True
    flagged[v, u] = flagged_rows
    rgb[v, u] = linear
    provenance[v, u] = Provenance.MEASURED

    for reason, count in summary.rejected.items():
        if count:
            summary.warnings.append(f"{count} samples rejected: {reason}")
    if summary.clamped:
        summary.warnings.append(f"{summary.clamped} samples clamped to rho={clamp_max}")
    if clip_count:
        summary.warnings.append(f"{clip_count} albedo triples gamut-clipped")
    if summary.outside_regions:
        summary.warnings.append(
            f"{summary.outside_regions} samples outside every illuminant region "
            f"used the global illuminant"
        )
    for warning in summary.warnings:
        logger.warning(warning)
    logger.info(
        f"Recovered sparse albedo: {summary.accepted}/{summary.total_samples} samples accepted"
    )

    return RecoveryResult(
        albedo=AlbedoMap(linear_rgb=rgb, provenance=provenance),
        spectra=ReflectanceSpectrumMap(grid=cube.grid, spectra=spectra, mask=mask, flagged=flagged),
        summary=summary,
    )


def render_rgb_image(cube: SpectralCube, illum: IlluminantSpectrum) -> AlbedoMap:
    """
    Plain RGB rendering of a cube, the no-decomposition baseline.

    Radiance is integrated against the observer with the normalization that
    gives the calibrated white (global e) Y = 1. Shading and illuminant
    color stay in the result.

    Args:
        cube: Scene radiance
        illum: Calibrated illuminant on the cube's grid

    Returns:
        AlbedoMap with every pixel valid
    """
    require_same_grid(cube.grid, illum.grid, "cube and illuminant grids")
    weights = cmf_on_grid(cube.grid) * _visible_weights(cube.grid)[:, None]
    white_y = float(illum.values @ weights[:, 1])
    xyz = cube.radiance.astype(np.float64) @ (weights / white_y)
    linear, _, clip_count = xyz_to_srgb(xyz)
    if clip_count:
        logger.debug(f"RGB rendering clipped {clip_count} triples")
    return AlbedoMap(
        linear_rgb=linear,
        provenance=np.full((cube.height, cube.width), Provenance.MEASURED, dtype=np.uint8),
    )


# =============================================================================
# FILES
# =============================================================================


def albedo_paths(directory: Union[str, Path], stem: str) -> Dict[str, Path]:
    directory = Path(directory)
    return {
        "png": directory / f"{stem}.png",
        "linear": directory / f"{stem}.npy",
        "provenance": directory / f"{stem}_provenance.npy",
    }


def save_albedo(albedo: AlbedoMap, directory: Union[str, Path], stem: str) -> Dict[str, Path]:
    """
    Write an albedo map: RGBA PNG (transparent where invalid) plus raw arrays.

    Returns:
        Written paths keyed by role
    """
    paths = albedo_paths(directory, stem)
    paths["png"].parent.mkdir(parents=True, exist_ok=True)

    alpha = np.where(albedo.mask, 255, 0).astype(np.uint8)
    rgba = np.dstack([albedo.srgb8, alpha])
    Image.fromarray(rgba).save(paths["png"], format="PNG")
    np.save(paths["linear"], np.ascontiguousarray(albedo.linear_rgb, dtype=np.float64))
    np.save(paths["provenance"], np.ascontiguousarray(albedo.provenance, dtype=np.uint8))

    logger.debug(f"Saved albedo '{stem}' ({albedo.valid_count()} valid pixels)")
    return paths


def load_albedo(directory: Union[str, Path], stem: str) -> AlbedoMap:
    """
    Read an albedo map written by save_albedo.

    Raises:
        RecoveryError: If the raw arrays are missing
    """
    paths = albedo_paths(directory, stem)
    for role in ("linear", "provenance"):
        if not paths[role].exists():
            raise RecoveryError(f"Albedo file not found: {paths[role]}")
    return AlbedoMap(
        linear_rgb=np.load(paths["linear"]),
        provenance=np.load(paths["provenance"]),
    )


def albedo_from_png(path: Union[str, Path]) -> AlbedoMap:
    """
    Ingest an externally produced sRGB albedo image.

    Fully transparent pixels are invalid; everything else counts as measured.

    Raises:
        RecoveryError: If the file is missing or unreadable
    """
    path = Path(path)
    if not path.exists():
        raise RecoveryError(f"Albedo image not found: {path}")
    try:
        with Image.open(path) as image:
            rgba = np.asarray(image.convert("RGBA"))
    except OSError as e:
        raise RecoveryError(f"Cannot read albedo image {path}: {e}") from e

    valid = rgba[..., 3] > 0
    linear = decode_srgb(rgba[..., :3].astype(np.float64) / 255.0)
    linear[~valid] = 0.0
    provenance = np.where(valid, Provenance.MEASURED, Provenance.NONE).astype(np.uint8)
    return AlbedoMap(linear_rgb=linear, provenance=provenance)
