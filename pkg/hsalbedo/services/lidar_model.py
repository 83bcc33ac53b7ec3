"""
LiDAR range-equation service.

Forward model and inversion of the intensity equation

    L = D_r² η_sys η_atm ρ cos θ / (4 R²)

plus pinhole back-projection, depth-derived normals and incidence cosines,
and the CSV/JSON sample-set formats.
"""

import csv
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple, TypeVar, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError
from scipy import ndimage

from hsalbedo.file_schema import SensorConstantsFile, migrate_data
from hsalbedo.logging_config import get_logger
from hsalbedo.models import HsAlbedoError, LidarSample, LidarSampleSet, SensorConstants
from hsalbedo.utils.file_utils import read_json, write_json

logger = get_logger(__name__)

# Grazing-incidence cutoff, θ ≈ 84°
COS_MIN = 0.1
CLAMP_MAX = 1.5

SAMPLE_COLUMNS = ["u", "v", "range_m", "intensity", "cos_theta"]
POINT_COLUMNS = ["index", "range_m", "intensity", "cos_theta"]
REGISTRATION_COLUMNS = ["index", "u", "v"]

Number = Union[float, np.ndarray]
T = TypeVar("T")


class LidarDomainError(HsAlbedoError, ValueError):
    """Raised when range-equation inputs violate their domain."""


class LidarFormatError(HsAlbedoError, ValueError):
    """Raised for malformed sample, point or registration files."""


class PinholeIntrinsics(BaseModel):
    """Pinhole camera intrinsics in pixels."""

    model_config = ConfigDict(frozen=True)

    fx: float = Field(..., gt=0)
    fy: float = Field(..., gt=0)
    cx: float
    cy: float

    @classmethod
    def from_fov(cls, width: int, height: int, fov_deg: float) -> "PinholeIntrinsics":
        """Square-pixel intrinsics from a horizontal field of view, centered."""
        focal = (width / 2.0) / np.tan(np.radians(fov_deg) / 2.0)
        return cls(fx=float(focal), fy=float(focal), cx=(width - 1) / 2.0, cy=(height - 1) / 2.0)


class InversionResult(BaseModel):
    """Reflectance recovered from one LiDAR sample."""

    model_config = ConfigDict(frozen=True)

    rho: float = Field(..., ge=0)
    clamped: bool = False
    rejected: bool = False


# =============================================================================
# RANGE EQUATION
# =============================================================================


def forward_intensity(
    constants: SensorConstants, rho_lidar: Number, range_r: Number, incidence_cos: Number
) -> Number:
    """
    Predict LiDAR intensity from reflectance and geometry.

    Accepts scalars or broadcastable arrays.

    Args:
        constants: Sensor constants
        rho_lidar: Reflectance at the LiDAR wavelength, in [0, 1]
        range_r: Range in meters, > 0
        incidence_cos: cos θ in (0, 1]

    Returns:
        Intensity L, same shape as the broadcast inputs

    Raises:
        LidarDomainError: If any input is outside its domain
    """
    rho = np.asarray(rho_lidar, dtype=np.float64)
    rng = np.asarray(range_r, dtype=np.float64)
    cos = np.asarray(incidence_cos, dtype=np.float64)
    if np.any(rho < 0) or np.any(rho > 1):
        raise LidarDomainError("rho_lidar must be in [0, 1]")
    if np.any(rng <= 0):
        raise LidarDomainError("range_r must be > 0")
    if np.any(cos <= 0) or np.any(cos > 1):
        raise LidarDomainError("incidence_cos must be in (0, 1]")

    intensity = constants.gain * rho * cos / rng ** 2
    return float(intensity) if intensity.ndim == 0 else intensity


def invert_reflectance(
    constants: SensorConstants,
    sample: LidarSample,
    cos_min: float = COS_MIN,
    clamp_max: float = CLAMP_MAX,
) -> InversionResult:
    """
    Recover ρ(λ_LiDAR) from one sample.

    ρ = 4 L R² / (D_r² η_sys η_atm cos θ), clamped to [0, clamp_max].
    Grazing samples (cos θ < cos_min) are marked rejected, not raised.

    Args:
        constants: Sensor constants
        sample: The LiDAR sample
        cos_min: Grazing-incidence cutoff
        clamp_max: Upper clamp for the recovered reflectance

    Returns:
        InversionResult with the reflectance and diagnostic flags
    """
    if sample.incidence_cos < cos_min:
        return InversionResult(rho=0.0, rejected=True)
    rho = sample.intensity_l * sample.range_r ** 2 / (constants.gain * sample.incidence_cos)
    if rho > clamp_max:
        return InversionResult(rho=clamp_max, clamped=True)
    return InversionResult(rho=rho)


def invert_samples(
    sample_set: LidarSampleSet, cos_min: float = COS_MIN, clamp_max: float = CLAMP_MAX
) -> Dict[str, np.ndarray]:
    """
    Vectorized invert_reflectance over a whole sample set.

    Returns:
        Dict with arrays u, v, rho, clamped, rejected (sample order)
    """
    columns = sample_set.as_arrays()
    cos = columns["incidence_cos"]
    rejected = cos < cos_min
    rho = columns["intensity_l"] * columns["range_r"] ** 2 / (sample_set.constants.gain * cos)
    clamped = (rho > clamp_max) & ~rejected
    rho = np.where(clamped, clamp_max, rho)
    rho = np.where(rejected, 0.0, rho)
    return {
        "u": columns["u"],
        "v": columns["v"],
        "rho": rho,
        "clamped": clamped,
        "rejected": rejected,
    }


# =============================================================================
# GEOMETRY
# =============================================================================


def pixel_rays(width: int, height: int, intrinsics: PinholeIntrinsics) -> np.ndarray:
    """H×W×3 unit ray directions from the sensor origin through pixel centers."""
    u, v = np.meshgrid(np.arange(width, dtype=np.float64), np.arange(height, dtype=np.float64))
    rays = np.stack(
        [(u - intrinsics.cx) / intrinsics.fx, (v - intrinsics.cy) / intrinsics.fy, np.ones_like(u)],
        axis=-1,
    )
    return rays / np.linalg.norm(rays, axis=-1, keepdims=True)


def back_project(depth: np.ndarray, intrinsics: PinholeIntrinsics) -> np.ndarray:
    """
    Back-project a Z-depth map to camera-frame points.

    Args:
        depth: H×W depth along the optical axis, meters
        intrinsics: Pinhole intrinsics

    Returns:
        H×W×3 points (X, Y, Z)
    """
    depth = np.asarray(depth, dtype=np.float64)
    height, width = depth.shape
    u, v = np.meshgrid(np.arange(width, dtype=np.float64), np.arange(height, dtype=np.float64))
    x = (u - intrinsics.cx) / intrinsics.fx * depth
    y = (v - intrinsics.cy) / intrinsics.fy * depth
    return np.stack([x, y, depth], axis=-1)


def normals_from_depth(
    depth: np.ndarray, intrinsics: PinholeIntrinsics
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Estimate unit surface normals from a depth map.

    Normals are the cross product of central differences of back-projected
    points, oriented toward the sensor. A pixel is valid only when its full
    3×3 neighborhood has finite positive depth; invalid pixels get a zero
    vector.

    Args:
        depth: H×W depth map in meters (nonpositive or non-finite = missing)
        intrinsics: Pinhole intrinsics

    Returns:
        (normals H×W×3, valid H×W bool)
    """
    depth = np.asarray(depth, dtype=np.float64)
    has_depth = np.isfinite(depth) & (depth > 0)
    valid = ndimage.binary_erosion(has_depth, structure=np.ones((3, 3), bool), border_value=0)

    points = back_project(np.where(has_depth, depth, 1.0), intrinsics)
    d_du = np.zeros_like(points)
    d_dv = np.zeros_like(points)
    d_du[:, 1:-1] = points[:, 2:] - points[:, :-2]
    d_dv[1:-1, :] = points[2:, :] - points[:-2, :]

    normals = np.cross(d_dv, d_du)
    norms = np.linalg.norm(normals, axis=-1, keepdims=True)
    valid &= norms[..., 0] > 0
    normals = np.divide(normals, norms, out=np.zeros_like(normals), where=norms > 0)

    # face the sensor: n · P < 0
    facing = np.sum(normals * points, axis=-1) > 0
    normals[facing] *= -1.0
    normals[~valid] = 0.0

    logger.debug(f"Estimated normals: {int(valid.sum())}/{valid.size} valid pixels")
    return normals, valid


def incidence_cosines(
    normals: np.ndarray, intrinsics: PinholeIntrinsics, depth: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Per-pixel cos θ between surface normal and the sensor ray.

    Args:
        normals: H×W×3 unit normals (zero vectors where invalid)
        intrinsics: Pinhole intrinsics
        depth: H×W depth map, used for validity

    Returns:
        (cos H×W in [0, 1], valid H×W bool)
    """
    depth = np.asarray(depth, dtype=np.float64)
    height, width = depth.shape
    rays = pixel_rays(width, height, intrinsics)
    cos = np.clip(np.abs(np.sum(normals * rays, axis=-1)), 0.0, 1.0)
    valid = (np.linalg.norm(normals, axis=-1) > 0) & np.isfinite(depth) & (depth > 0)
    return np.where(valid, cos, 0.0), valid


# =============================================================================
# FILES
# =============================================================================


def _read_rows(path: Path, columns: List[str]) -> List[Dict[str, str]]:
    if not path.exists():
        raise LidarFormatError(f"File not found: {path}")
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames != columns:
            raise LidarFormatError(
                f"{path}: expected header {','.join(columns)}, got {reader.fieldnames}"
            )
        return list(reader)


def _parse_rows(
    path: Path, rows: List[Dict[str, str]], parse: Callable[[Dict[str, str]], T]
) -> List[T]:
    """Apply parse to each row; failures name the file line (header is line 1)."""
    parsed = []
    for line, row in enumerate(rows, start=2):
        try:
            parsed.append(parse(row))
        except (ValidationError, ValueError, TypeError) as e:
            raise LidarFormatError(f"{path}:{line}: {e}") from e
    return parsed


def _sidecar_path(csv_path: Path) -> Path:
    return csv_path.with_suffix(".json")


def load_constants(path: Union[str, Path]) -> Tuple[SensorConstants, int, int]:
    """
    Read a sensor sidecar.

    Returns:
        (constants, frame width, frame height)
    """
    try:
        document = SensorConstantsFile.model_validate(migrate_data(read_json(path)))
        constants = SensorConstants(
            receiver_aperture_d_r=document.receiver_aperture_d_r,
            eta_sys=document.eta_sys,
            eta_atm=document.eta_atm,
            lidar_wavelength=document.lidar_wavelength,
        )
    except FileNotFoundError as e:
        raise LidarFormatError(f"Sensor sidecar not found: {path}") from e
    except ValidationError as e:
        raise LidarFormatError(f"{path}: invalid sensor constants: {e}") from e
    except ValueError as e:
        raise LidarFormatError(f"{path}: not valid JSON: {e}") from e
    return constants, document.width, document.height


def load_sample_set(
    csv_path: Union[str, Path], sidecar_path: Optional[Union[str, Path]] = None
) -> LidarSampleSet:
    """
    Load samples from `u,v,range_m,intensity,cos_theta` CSV plus JSON sidecar.

    Args:
        csv_path: Sample CSV
        sidecar_path: Sensor sidecar, defaults to the CSV path with `.json`

    Raises:
        LidarFormatError: If either file is missing or malformed
    """
    csv_path = Path(csv_path)
    constants, width, height = load_constants(sidecar_path or _sidecar_path(csv_path))
    samples = tuple(
        _parse_rows(
            csv_path,
            _read_rows(csv_path, SAMPLE_COLUMNS),
            lambda row: LidarSample(
                u=int(row["u"]),
                v=int(row["v"]),
                range_r=float(row["range_m"]),
                intensity_l=float(row["intensity"]),
                incidence_cos=float(row["cos_theta"]),
            ),
        )
    )
    try:
        sample_set = LidarSampleSet(
            constants=constants, samples=samples, width=width, height=height
        )
    except (ValidationError, ValueError) as e:
        raise LidarFormatError(f"{csv_path}: {e}") from e

    logger.info(f"Loaded {len(samples)} LiDAR samples from {csv_path.name}")
    return sample_set


def save_constants(
    constants: SensorConstants, width: int, height: int, path: Union[str, Path]
) -> Path:
    document = SensorConstantsFile(
        receiver_aperture_d_r=constants.receiver_aperture_d_r,
        eta_sys=constants.eta_sys,
        eta_atm=constants.eta_atm,
        lidar_wavelength=constants.lidar_wavelength,
        width=width,
        height=height,
    )
    return write_json(path, document.model_dump())


def save_sample_set(sample_set: LidarSampleSet, csv_path: Union[str, Path]) -> Tuple[Path, Path]:
    """
    Write samples as CSV plus the JSON sidecar next to it.

    Floats are written with repr so that a reload is exact.

    Returns:
        (csv path, sidecar path)
    """
    csv_path = Path(csv_path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    with open(csv_path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(SAMPLE_COLUMNS)
        for s in sample_set.samples:
            writer.writerow([s.u, s.v, repr(s.range_r), repr(s.intensity_l), repr(s.incidence_cos)])
    sidecar = save_constants(
        sample_set.constants, sample_set.width, sample_set.height, _sidecar_path(csv_path)
    )
    return csv_path, sidecar


def apply_registration(
    points_path: Union[str, Path],
    registration_path: Union[str, Path],
    constants: SensorConstants,
    width: int,
    height: int,
) -> LidarSampleSet:
    """
    Assign raw LiDAR points to hyperspectral pixels with a registration table.

    Points without a registration entry, or registered outside the frame,
    are dropped. When several points land on one pixel the lowest index wins.

    Args:
        points_path: CSV `index,range_m,intensity,cos_theta`
        registration_path: CSV `index,u,v`
        constants: Sensor constants
        width: Frame width
        height: Frame height

    Returns:
        LidarSampleSet in point-index order
    """
    points_path, registration_path = Path(points_path), Path(registration_path)
    points = _parse_rows(
        points_path,
        _read_rows(points_path, POINT_COLUMNS),
        lambda row: (
            int(row["index"]),
            float(row["range_m"]),
            float(row["intensity"]),
            float(row["cos_theta"]),
        ),
    )
    table = dict(
        _parse_rows(
            registration_path,
            _read_rows(registration_path, REGISTRATION_COLUMNS),
            lambda row: (int(row["index"]), (int(row["u"]), int(row["v"]))),
        )
    )

    samples = []
    taken = set()
    unregistered = out_of_frame = duplicates = 0
    for index, range_m, intensity, cos_theta in sorted(points, key=lambda p: p[0]):
        pixel = table.get(index)
        if pixel is None:
            unregistered += 1
            continue
        u, v = pixel
        if not (0 <= u < width and 0 <= v < height):
            out_of_frame += 1
            continue
        if pixel in taken:
            duplicates += 1
            continue
        taken.add(pixel)
        try:
            sample = LidarSample(
                u=u, v=v, range_r=range_m, intensity_l=intensity, incidence_cos=cos_theta
            )
        except ValidationError as e:
            raise LidarFormatError(f"{points_path}: point {index}: {e}") from e
        samples.append(sample)

    if unregistered or out_of_frame or duplicates:
        logger.warning(
            f"Registration dropped points: unregistered={unregistered}, "
            f"out_of_frame={out_of_frame}, duplicate_pixel={duplicates}"
        )
    return LidarSampleSet(constants=constants, samples=tuple(samples), width=width, height=height)
