"""
Pydantic models for hsalbedo.

Defines the core data structures shared by every service: wavelength grids,
hyperspectral cubes, illuminants, LiDAR samples, albedo maps and reference
charts. Array payloads are numpy arrays that are copied and frozen on
validation, so every instance is immutable after construction.
"""

from enum import Enum, IntEnum
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, computed_field, field_validator, model_validator

from hsalbedo.utils.srgb import encode_srgb, to_8bit


WAVELENGTH_MIN_NM = 350.0
WAVELENGTH_MAX_NM = 1100.0

_ARRAY_CONFIG = ConfigDict(frozen=True, arbitrary_types_allowed=True)


class HsAlbedoError(Exception):
    """Base class for every error raised by hsalbedo."""


class IlluminantLookupError(HsAlbedoError, LookupError):
    """Raised when a pixel has no illuminant spectrum in a spatial field."""


def _frozen(values, dtype=None) -> np.ndarray:
    array = np.array(values, dtype=dtype, copy=True)
    array.setflags(write=False)
    return array


class PixelRect(BaseModel):
    """Axis-aligned pixel rectangle, half-open: [x, x+width) × [y, y+height)."""

    model_config = ConfigDict(
        frozen=True,
        json_schema_extra={"example": {"x": 4, "y": 4, "width": 20, "height": 20}},
    )

    x: int = Field(..., ge=0, description="Left column")
    y: int = Field(..., ge=0, description="Top row")
    width: int = Field(..., gt=0, description="Width in pixels")
    height: int = Field(..., gt=0, description="Height in pixels")

    @classmethod
    def from_list(cls, values: List[int]) -> "PixelRect":
        """Build from the `[x, y, width, height]` list used in files."""
        if len(values) != 4:
            raise ValueError(f"Rect must have 4 values [x, y, width, height], got {values}")
        x, y, width, height = values
        return cls(x=x, y=y, width=width, height=height)

    def to_list(self) -> List[int]:
        return [self.x, self.y, self.width, self.height]

    @property
    def area(self) -> int:
        return self.width * self.height

    @property
    def slices(self) -> Tuple[slice, slice]:
        """Row and column slices for indexing an H×W array."""
        return slice(self.y, self.y + self.height), slice(self.x, self.x + self.width)

    def fits(self, width: int, height: int) -> bool:
        """Check the rectangle lies inside a width × height frame."""
        return self.x + self.width <= width and self.y + self.height <= height

    def contains(self, x: int, y: int) -> bool:
        return self.x <= x < self.x + self.width and self.y <= y < self.y + self.height

    def overlaps(self, other: "PixelRect") -> bool:
        return not (
            self.x + self.width <= other.x
            or other.x + other.width <= self.x
            or self.y + self.height <= other.y
            or other.y + other.height <= self.y
        )


class WavelengthGrid(BaseModel):
    """
    Ordered wavelength sampling of a spectral device, in nanometers.

    Grids are compared by value; operations across grids require equality
    and never resample.
    """

    model_config = ConfigDict(
        frozen=True,
        json_schema_extra={"example": {"bands": [400.0, 410.0, 420.0, 905.0]}},
    )

    bands: Tuple[float, ...] = Field(..., min_length=1, description="Band centers in nm")

    @field_validator("bands")
    @classmethod
    def validate_bands(cls, v: Tuple[float, ...]) -> Tuple[float, ...]:
        """
        Validate wavelength range and strict ordering.

        Raises:
            ValueError: If a band is out of range or the grid is not increasing
        """
        for wavelength in v:
            if not (WAVELENGTH_MIN_NM <= wavelength <= WAVELENGTH_MAX_NM):
                raise ValueError(
                    f"Wavelength {wavelength} nm outside "
                    f"[{WAVELENGTH_MIN_NM}, {WAVELENGTH_MAX_NM}] nm"
                )
        for previous, current in zip(v, v[1:]):
            if current <= previous:
                raise ValueError(
                    f"Wavelengths must be strictly increasing: {previous} then {current}"
                )
        return v

    @computed_field
    @property
    def band_count(self) -> int:
        return len(self.bands)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.bands, dtype=np.float64)


class SpectralCube(BaseModel):
    """H×W×B nonnegative radiance image on a fixed wavelength grid."""

    model_config = _ARRAY_CONFIG

    grid: WavelengthGrid
    radiance: np.ndarray = Field(..., description="H×W×B radiance, band-interleaved-by-pixel")

    @field_validator("radiance", mode="before")
    @classmethod
    def validate_radiance(cls, v) -> np.ndarray:
        array = np.asarray(v)
        if array.ndim != 3:
            raise ValueError(f"Radiance must be H×W×B, got shape {array.shape}")
        if array.dtype not in (np.float32, np.float64):
            array = array.astype(np.float64)
        if not np.all(np.isfinite(array)):
            raise ValueError("Radiance contains non-finite values")
        if np.any(array < 0):
            raise ValueError("Radiance values must be >= 0")
        return _frozen(array)

    @model_validator(mode="after")
    def validate_band_count(self) -> "SpectralCube":
        if self.radiance.shape[2] != self.grid.band_count:
            raise ValueError(
                f"Radiance has {self.radiance.shape[2]} bands, "
                f"grid has {self.grid.band_count}"
            )
        return self

    @property
    def height(self) -> int:
        return int(self.radiance.shape[0])

    @property
    def width(self) -> int:
        return int(self.radiance.shape[1])

    def max_radiance(self) -> float:
        return float(self.radiance.max()) if self.radiance.size else 0.0


class IlluminantField(BaseModel):
    """Spatially varying illuminant: region-id map plus one spectrum per region."""

    model_config = _ARRAY_CONFIG

    regions: Tuple[PixelRect, ...] = Field(..., description="Calibration rectangles")
    region_map: np.ndarray = Field(..., description="H×W region ids, -1 outside every region")
    spectra: np.ndarray = Field(..., description="R×B per-region spectra")

    @field_validator("region_map", mode="before")
    @classmethod
    def validate_region_map(cls, v) -> np.ndarray:
        array = np.asarray(v)
        if array.ndim != 2:
            raise ValueError(f"Region map must be H×W, got shape {array.shape}")
        if array.size and array.min() < -1:
            raise ValueError("Region ids must be >= -1")
        return _frozen(array, dtype=np.int32)

    @field_validator("spectra", mode="before")
    @classmethod
    def validate_spectra(cls, v) -> np.ndarray:
        array = np.asarray(v, dtype=np.float64)
        if array.ndim != 2:
            raise ValueError(f"Region spectra must be R×B, got shape {array.shape}")
        if np.any(~np.isfinite(array)) or np.any(array <= 0):
            raise ValueError("Region spectra must be finite and > 0 in every band")
        return _frozen(array)

    @property
    def height(self) -> int:
        return int(self.region_map.shape[0])

    @property
    def width(self) -> int:
        return int(self.region_map.shape[1])


class IlluminantSpectrum(BaseModel):
    """
    Incident light e(λ) calibrated from a white reference.

    The global spectrum always exists. An optional spatial field overrides it
    per region; pixels outside every region fall back to the global spectrum.
    """

    model_config = _ARRAY_CONFIG

    grid: WavelengthGrid
    values: np.ndarray = Field(..., description="Per-band incident light, all > 0")
    spatial_field: Optional[IlluminantField] = None

    @field_validator("values", mode="before")
    @classmethod
    def validate_values(cls, v) -> np.ndarray:
        array = np.asarray(v, dtype=np.float64)
        if array.ndim != 1:
            raise ValueError(f"Illuminant values must be 1-D, got shape {array.shape}")
        if np.any(~np.isfinite(array)) or np.any(array <= 0):
            raise ValueError("Illuminant e(λ) must be > 0 in every band")
        return _frozen(array)

    @model_validator(mode="after")
    def validate_lengths(self) -> "IlluminantSpectrum":
        if self.values.shape[0] != self.grid.band_count:
            raise ValueError(
                f"Illuminant has {self.values.shape[0]} values, grid has {self.grid.band_count}"
            )
        if self.spatial_field is not None and (
            self.spatial_field.spectra.shape[1] != self.grid.band_count
        ):
            raise ValueError("Region spectra do not match the grid band count")
        return self

    def spectrum_at(self, x: int, y: int) -> np.ndarray:
        """
        Look up e(λ) for a pixel.

        Args:
            x: Column
            y: Row

        Returns:
            Per-band spectrum for the pixel

        Raises:
            IlluminantLookupError: If the pixel is outside the field or its
                region id has no spectrum
        """
        field = self.spatial_field
        if field is None:
            return self.values
        if not (0 <= x < field.width and 0 <= y < field.height):
            raise IlluminantLookupError(
                f"Pixel ({x}, {y}) outside illuminant field {field.width}x{field.height}"
            )
        region_id = int(field.region_map[y, x])
        if region_id < 0:
            return self.values
        if region_id >= field.spectra.shape[0]:
            raise IlluminantLookupError(f"Pixel ({x}, {y}) maps to unknown region {region_id}")
        return field.spectra[region_id]


class SpectralSignature(BaseModel):
    """Per-band radiance vector extracted at one pixel."""

    model_config = _ARRAY_CONFIG

    grid: WavelengthGrid
    values: np.ndarray

    @field_validator("values", mode="before")
    @classmethod
    def validate_values(cls, v) -> np.ndarray:
        array = np.asarray(v, dtype=np.float64)
        if array.ndim != 1:
            raise ValueError("Signature must be a 1-D vector")
        return _frozen(array)

    @model_validator(mode="after")
    def validate_length(self) -> "SpectralSignature":
        if self.values.shape[0] != self.grid.band_count:
            raise ValueError(
                f"Signature length {self.values.shape[0]} != band count {self.grid.band_count}"
            )
        return self


class SensorConstants(BaseModel):
    """LiDAR range-equation constants."""

    model_config = ConfigDict(
        frozen=True,
        json_schema_extra={
            "example": {
                "receiver_aperture_d_r": 0.1,
                "eta_sys": 0.9,
                "eta_atm": 0.98,
                "lidar_wavelength": 905.0,
            }
        },
    )

    receiver_aperture_d_r: float = Field(..., gt=0, description="Receiver aperture diameter (m)")
    eta_sys: float = Field(..., gt=0, le=1, description="System transmission factor")
    eta_atm: float = Field(..., gt=0, le=1, description="Atmospheric attenuation factor")
    lidar_wavelength: float = Field(..., gt=0, description="Laser wavelength (nm)")

    @property
    def gain(self) -> float:
        """D_r² η_sys η_atm / 4, the range-independent factor of the range equation."""
        return self.receiver_aperture_d_r ** 2 * self.eta_sys * self.eta_atm / 4.0


class LidarSample(BaseModel):
    """One LiDAR return registered to a hyperspectral pixel."""

    model_config = ConfigDict(frozen=True)

    u: int = Field(..., ge=0, description="Column in the hyperspectral frame")
    v: int = Field(..., ge=0, description="Row in the hyperspectral frame")
    range_r: float = Field(..., gt=0, description="Range in meters")
    intensity_l: float = Field(..., ge=0, description="Return intensity")
    incidence_cos: float = Field(..., gt=0, le=1, description="cos θ of the incidence angle")


class LidarSampleSet(BaseModel):
    """Sparse LiDAR samples for one frame plus their sensor constants."""

    model_config = ConfigDict(frozen=True)

    constants: SensorConstants
    samples: Tuple[LidarSample, ...] = Field(default_factory=tuple)
    width: int = Field(..., gt=0, description="Frame width")
    height: int = Field(..., gt=0, description="Frame height")

    @model_validator(mode="after")
    def validate_samples(self) -> "LidarSampleSet":
        """
        Validate in-frame and unique pixel assignments.

        Raises:
            ValueError: If a sample is out of frame or two samples share a pixel
        """
        seen = set()
        for sample in self.samples:
            if sample.u >= self.width or sample.v >= self.height:
                raise ValueError(
                    f"Sample at ({sample.u}, {sample.v}) outside frame {self.width}x{self.height}"
                )
            key = (sample.u, sample.v)
            if key in seen:
                raise ValueError(f"Duplicate sample at pixel {key}")
            seen.add(key)
        return self

    def as_arrays(self) -> Dict[str, np.ndarray]:
        """Column arrays u, v, range_r, intensity_l, incidence_cos."""
        return {
            "u": np.array([s.u for s in self.samples], dtype=np.int64),
            "v": np.array([s.v for s in self.samples], dtype=np.int64),
            "range_r": np.array([s.range_r for s in self.samples], dtype=np.float64),
            "intensity_l": np.array([s.intensity_l for s in self.samples], dtype=np.float64),
            "incidence_cos": np.array([s.incidence_cos for s in self.samples], dtype=np.float64),
        }


class Provenance(IntEnum):
    """Where an albedo pixel came from."""

    NONE = 0
    MEASURED = 1
    DENSIFIED = 2


class ReflectanceSpectrumMap(BaseModel):
    """Recovered ρ(λ) per pixel, valid only where a LiDAR sample was accepted."""

    model_config = _ARRAY_CONFIG

    grid: WavelengthGrid
    spectra: np.ndarray = Field(..., description="H×W×B reflectance")
    mask: np.ndarray = Field(..., description="H×W validity")
    flagged: np.ndarray = Field(..., description="H×W, reflectance above clamp_max somewhere")

    @field_validator("spectra", mode="before")
    @classmethod
    def validate_spectra(cls, v) -> np.ndarray:
        array = np.asarray(v, dtype=np.float64)
        if array.ndim != 3:
            raise ValueError("Spectra must be H×W×B")
        if np.any(array < 0):
            raise ValueError("Reflectance values must be >= 0")
        return _frozen(array)

    @field_validator("mask", "flagged", mode="before")
    @classmethod
    def validate_masks(cls, v) -> np.ndarray:
        return _frozen(v, dtype=bool)


class AlbedoMap(BaseModel):
    """
    Per-pixel albedo in linear RGB with provenance.

    Pixels with provenance NONE are invalid; their linear values are zero.
    The 8-bit sRGB view is derived from the linear values on demand.
    """

    model_config = _ARRAY_CONFIG

    linear_rgb: np.ndarray = Field(..., description="H×W×3 linear RGB in [0, 1]")
    provenance: np.ndarray = Field(..., description="H×W Provenance codes")

    @field_validator("linear_rgb", mode="before")
    @classmethod
    def validate_linear(cls, v) -> np.ndarray:
        array = np.asarray(v, dtype=np.float64)
        if array.ndim != 3 or array.shape[2] != 3:
            raise ValueError(f"Linear RGB must be H×W×3, got shape {array.shape}")
        if not np.all(np.isfinite(array)):
            raise ValueError("Linear RGB contains non-finite values")
        if np.any(array < 0) or np.any(array > 1):
            raise ValueError("Linear RGB must be gamut-clipped to [0, 1]")
        return _frozen(array)

    @field_validator("provenance", mode="before")
    @classmethod
    def validate_provenance(cls, v) -> np.ndarray:
        array = np.asarray(v)
        if array.ndim != 2:
            raise ValueError("Provenance must be H×W")
        allowed = {int(p) for p in Provenance}
        if not set(np.unique(array).tolist()) <= allowed:
            raise ValueError(f"Provenance codes must be in {sorted(allowed)}")
        return _frozen(array, dtype=np.uint8)

    @model_validator(mode="after")
    def validate_shapes(self) -> "AlbedoMap":
        if self.linear_rgb.shape[:2] != self.provenance.shape:
            raise ValueError("Linear RGB and provenance shapes differ")
        return self

    @classmethod
    def empty(cls, width: int, height: int) -> "AlbedoMap":
        return cls(
            linear_rgb=np.zeros((height, width, 3)),
            provenance=np.zeros((height, width), dtype=np.uint8),
        )

    @property
    def height(self) -> int:
        return int(self.provenance.shape[0])

    @property
    def width(self) -> int:
        return int(self.provenance.shape[1])

    @property
    def mask(self) -> np.ndarray:
        return self.provenance != Provenance.NONE

    @property
    def srgb8(self) -> np.ndarray:
        """H×W×3 uint8 sRGB encoding of the linear values."""
        return to_8bit(encode_srgb(self.linear_rgb))

    def valid_count(self) -> int:
        return int(np.count_nonzero(self.mask))


class ShadingField(BaseModel):
    """Per-pixel geometric factor m(n, l) ≥ 0."""

    model_config = _ARRAY_CONFIG

    values: np.ndarray

    @field_validator("values", mode="before")
    @classmethod
    def validate_values(cls, v) -> np.ndarray:
        array = np.asarray(v, dtype=np.float64)
        if array.ndim != 2:
            raise ValueError("Shading must be H×W")
        if np.any(array < 0):
            raise ValueError("Shading must be >= 0")
        return _frozen(array)


class LabColor(BaseModel):
    """CIELAB coordinates tagged with their reference white."""

    model_config = ConfigDict(frozen=True)

    L: float
    a: float
    b: float
    white: str = Field(default="D65", description="Reference white name")

    def as_array(self) -> np.ndarray:
        return np.array([self.L, self.a, self.b], dtype=np.float64)


class ChartPatch(BaseModel):
    """One patch of a reference chart with its ground-truth linear RGB."""

    model_config = ConfigDict(frozen=True)

    name: str = Field(..., min_length=1)
    region: PixelRect
    truth: Tuple[float, float, float]

    @field_validator("truth")
    @classmethod
    def validate_truth(cls, v: Tuple[float, float, float]) -> Tuple[float, float, float]:
        if any(c < 0 or c > 1 for c in v):
            raise ValueError(f"Truth linear RGB must be in [0, 1], got {v}")
        return v


class ReferenceChart(BaseModel):
    """Ground-truth patch colors and their pixel regions."""

    model_config = ConfigDict(frozen=True)

    width: int = Field(..., gt=0)
    height: int = Field(..., gt=0)
    white: str = Field(default="D65")
    patches: Tuple[ChartPatch, ...]

    @model_validator(mode="after")
    def validate_patches(self) -> "ReferenceChart":
        """
        Validate in-frame, disjoint, uniquely named patches.

        Raises:
            ValueError: On any overlap, out-of-frame region or duplicate name
        """
        names = set()
        for i, patch in enumerate(self.patches):
            if not patch.region.fits(self.width, self.height):
                raise ValueError(f"Patch '{patch.name}' outside frame {self.width}x{self.height}")
            if patch.name in names:
                raise ValueError(f"Duplicate patch name '{patch.name}'")
            names.add(patch.name)
            for other in self.patches[i + 1:]:
                if patch.region.overlaps(other.region):
                    raise ValueError(f"Patches '{patch.name}' and '{other.name}' overlap")
        return self


class Judgment(str, Enum):
    """Relative reflectance judgment for a pair of points."""

    A_DARKER = "A_darker"
    B_DARKER = "B_darker"
    EQUAL = "Equal"


class PairAnnotation(BaseModel):
    """Human judgment of relative reflectance between two pixels."""

    model_config = ConfigDict(
        frozen=True,
        json_schema_extra={
            "example": {"point_a": [10, 12], "point_b": [40, 12], "judgment": "A_darker", "weight": 1.0}
        },
    )

    point_a: Tuple[int, int] = Field(..., description="(u, v) of point A")
    point_b: Tuple[int, int] = Field(..., description="(u, v) of point B")
    judgment: Judgment
    weight: float = Field(default=1.0, gt=0)

    @model_validator(mode="after")
    def validate_points(self) -> "PairAnnotation":
        if self.point_a == self.point_b:
            raise ValueError(f"Annotation points must be distinct, got {self.point_a} twice")
        if min(self.point_a + self.point_b) < 0:
            raise ValueError("Annotation points must have nonnegative coordinates")
        return self
