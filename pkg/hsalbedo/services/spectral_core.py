"""
Spectral data service: cube files, band lookup, signatures and
white-reference illuminant calibration.

Cube files (`.hsc`) are a compact JSON header, a `\\n\\0` separator and a
little-endian band-interleaved-by-pixel payload. Grids are never resampled;
operations that combine two grids require them to be equal.
"""

import math
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
from pydantic import ValidationError

from hsalbedo.file_schema import (
    CubeHeader,
    IlluminantFile,
    IlluminantRegionRecord,
    migrate_data,
)
from hsalbedo.logging_config import get_logger
from hsalbedo.models import (
    HsAlbedoError,
    IlluminantField,
    IlluminantSpectrum,
    PixelRect,
    SpectralCube,
    SpectralSignature,
    WavelengthGrid,
)
from hsalbedo.utils.file_utils import read_json, write_json

logger = get_logger(__name__)

HEADER_SEPARATOR = b"\n\0"
GRID_TOLERANCE_NM = 5.0
DEFAULT_WHITEBOARD_REFLECTANCE = 1.0

_DTYPES = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8")}


class CubeFormatError(HsAlbedoError, ValueError):
    """Raised when a cube file is missing or malformed."""


class GridError(HsAlbedoError, ValueError):
    """Raised for invalid grids, grid mismatches or a missing band."""


class CalibrationError(HsAlbedoError, ValueError):
    """Raised when a white reference cannot yield a positive illuminant."""


class PixelBoundsError(HsAlbedoError, IndexError):
    """Raised when a pixel lies outside a cube."""


# =============================================================================
# CUBE FILES
# =============================================================================


def load_cube(path: Union[str, Path]) -> SpectralCube:
    """
    Load a `.hsc` cube file.

    Args:
        path: Path to the cube file

    Returns:
        SpectralCube with the file's grid and radiance

    Raises:
        CubeFormatError: If the file is missing, the header is invalid or the
            payload size disagrees with the header
        GridError: If the header's wavelengths are not a valid grid
    """
    path = Path(path)
    if not path.exists():
        raise CubeFormatError(f"Cube file not found: {path}")

    raw = path.read_bytes()
    split = raw.find(HEADER_SEPARATOR)
    if split < 0:
        raise CubeFormatError(f"{path}: missing header separator")

    try:
        header = CubeHeader.model_validate_json(raw[:split])
    except ValidationError as e:
        raise CubeFormatError(f"{path}: invalid header: {e}") from e

    try:
        grid = WavelengthGrid(bands=tuple(header.bands))
    except ValidationError as e:
        raise GridError(f"{path}: {e.errors()[0]['msg']}") from e

    dtype = _DTYPES[header.dtype]
    payload = raw[split + len(HEADER_SEPARATOR):]
    expected = header.width * header.height * len(header.bands) * dtype.itemsize
    if len(payload) != expected:
        raise CubeFormatError(
            f"{path}: header claims {header.width}x{header.height}x{len(header.bands)} "
            f"{header.dtype} ({expected} bytes), payload holds {len(payload)} bytes"
        )

    radiance = np.frombuffer(payload, dtype=dtype).reshape(
        header.height, header.width, len(header.bands)
    )
    try:
        cube = SpectralCube(grid=grid, radiance=radiance.astype(dtype.newbyteorder("=")))
    except ValidationError as e:
        raise CubeFormatError(f"{path}: {e.errors()[0]['msg']}") from e

    logger.info(f"Loaded cube {path.name}: {cube.width}x{cube.height}x{grid.band_count}")
    return cube


def save_cube(cube: SpectralCube, path: Union[str, Path], dtype: str = "f32") -> Path:
    """
    Write a cube in `.hsc` format.

    Args:
        cube: Cube to write
        path: Destination path
        dtype: Payload type, "f32" (default) or "f64"

    Returns:
        The written path
    """
    if dtype not in _DTYPES:
        raise CubeFormatError(f"Unsupported cube dtype '{dtype}'")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    header = CubeHeader(
        width=cube.width,
        height=cube.height,
        bands=list(cube.grid.bands),
        dtype=dtype,
        layout="bip",
    )
    payload = np.ascontiguousarray(cube.radiance, dtype=_DTYPES[dtype]).tobytes(order="C")
    path.write_bytes(header.model_dump_json().encode("utf-8") + HEADER_SEPARATOR + payload)

    logger.debug(f"Saved cube {path.name} ({dtype}, {len(payload)} payload bytes)")
    return path


# =============================================================================
# GRIDS AND SIGNATURES
# =============================================================================


def find_band(
    grid: WavelengthGrid, wavelength: float, tolerance: float = GRID_TOLERANCE_NM
) -> int:
    """
    Index of the band nearest to a wavelength.

    Args:
        grid: Grid to search
        wavelength: Target wavelength in nm
        tolerance: Maximum allowed distance in nm

    Returns:
        Band index

    Raises:
        GridError: If the nearest band is farther than tolerance
    """
    bands = grid.as_array()
    index = int(np.argmin(np.abs(bands - wavelength)))
    distance = abs(bands[index] - wavelength)
    if distance > tolerance:
        raise GridError(
            f"No band within ±{tolerance} nm of {wavelength} nm "
            f"(nearest is {bands[index]} nm)"
        )
    return index


def require_same_grid(first: WavelengthGrid, second: WavelengthGrid, what: str = "grids") -> None:
    """
    Reject mismatched grids.

    Raises:
        GridError: If the grids differ in any band
    """
    if first.bands != second.bands:
        raise GridError(
            f"Mismatched {what}: {first.band_count} vs {second.band_count} bands; "
            "resampling across grids is not supported"
        )


def signature_at(cube: SpectralCube, x: int, y: int) -> SpectralSignature:
    """
    Spectral signature of one pixel.

    Raises:
        PixelBoundsError: If (x, y) lies outside the cube
    """
    if not (0 <= x < cube.width and 0 <= y < cube.height):
        raise PixelBoundsError(f"Pixel ({x}, {y}) outside cube {cube.width}x{cube.height}")
    return SpectralSignature(grid=cube.grid, values=cube.radiance[y, x, :])


# =============================================================================
# ILLUMINANT CALIBRATION
# =============================================================================


def _region_mean(cube: SpectralCube, region: PixelRect) -> np.ndarray:
    # fsum keeps the mean independent of pixel order
    rows, cols = region.slices
    flat = cube.radiance[rows, cols, :].reshape(-1, cube.grid.band_count)
    count = flat.shape[0]
    return np.array([math.fsum(column.tolist()) / count for column in flat.T], dtype=np.float64)


def _check_region(cube: SpectralCube, region: PixelRect) -> None:
    if not region.fits(cube.width, cube.height):
        raise CalibrationError(
            f"White region {region.to_list()} outside cube {cube.width}x{cube.height}"
        )


def _positive_or_raise(values: np.ndarray, grid: WavelengthGrid, where: str) -> None:
    for wavelength, value in zip(grid.bands, values):
        if not value > 0:
            raise CalibrationError(
                f"White reference mean is {value} at band {wavelength} nm ({where}); "
                "incident light must be > 0"
            )


def calibrate_illuminant(
    white_cube: SpectralCube,
    region: Optional[PixelRect] = None,
    whiteboard_reflectance: float = DEFAULT_WHITEBOARD_REFLECTANCE,
) -> IlluminantSpectrum:
    """
    Estimate e(λ) from a white-reference capture.

    e(λ) is the mean radiance over the region divided by the whiteboard's
    reflectance.

    Args:
        white_cube: Capture of the white reference
        region: Pixel rectangle on the whiteboard, defaults to the full frame
        whiteboard_reflectance: Reflectance of the reference target

    Returns:
        IlluminantSpectrum without a spatial field

    Raises:
        CalibrationError: If the region is outside the cube or any band mean
            is not positive
    """
    if whiteboard_reflectance <= 0:
        raise CalibrationError(f"Whiteboard reflectance must be > 0, got {whiteboard_reflectance}")
    if region is None:
        region = PixelRect(x=0, y=0, width=white_cube.width, height=white_cube.height)
    _check_region(white_cube, region)

    values = _region_mean(white_cube, region) / whiteboard_reflectance
    _positive_or_raise(values, white_cube.grid, f"region {region.to_list()}")

    logger.info(
        f"Calibrated illuminant over {region.area} pixels, "
        f"e range [{values.min():.4g}, {values.max():.4g}]"
    )
    return IlluminantSpectrum(grid=white_cube.grid, values=values)


def calibrate_illuminant_field(
    white_cube: SpectralCube,
    regions: Sequence[PixelRect],
    whiteboard_reflectance: float = DEFAULT_WHITEBOARD_REFLECTANCE,
) -> IlluminantSpectrum:
    """
    Calibrate a spatially varying illuminant from several whiteboard regions.

    The global spectrum is the full-frame mean; each region gets its own
    spectrum and pixels outside every region use the global one.

    Args:
        white_cube: White-reference capture under the scene's lighting
        regions: Disjoint calibration rectangles
        whiteboard_reflectance: Reflectance of the reference target

    Returns:
        IlluminantSpectrum with a spatial field

    Raises:
        CalibrationError: On overlapping or out-of-frame regions, or
            nonpositive band means
    """
    base = calibrate_illuminant(white_cube, None, whiteboard_reflectance)
    regions = list(regions)
    if not regions:
        return base

    region_map = np.full((white_cube.height, white_cube.width), -1, dtype=np.int32)
    spectra = []
    for index, region in enumerate(regions):
        _check_region(white_cube, region)
        for other in regions[index + 1:]:
            if region.overlaps(other):
                raise CalibrationError(
                    f"Illuminant regions {region.to_list()} and {other.to_list()} overlap"
                )
        values = _region_mean(white_cube, region) / whiteboard_reflectance
        _positive_or_raise(values, white_cube.grid, f"region {index}")
        spectra.append(values)
        region_map[region.slices] = index

    logger.info(f"Calibrated spatial illuminant field with {len(regions)} regions")
    return IlluminantSpectrum(
        grid=white_cube.grid,
        values=base.values,
        spatial_field=IlluminantField(
            regions=tuple(regions), region_map=region_map, spectra=np.stack(spectra)
        ),
    )


def save_illuminant(illum: IlluminantSpectrum, path: Union[str, Path]) -> Path:
    """Write an illuminant as JSON, with its regions when spatially varying."""
    document = IlluminantFile(bands=list(illum.grid.bands), values=illum.values.tolist())
    field = illum.spatial_field
    if field is not None:
        document.frame = [field.width, field.height]
        document.regions = [
            IlluminantRegionRecord(rect=rect.to_list(), values=spectrum.tolist())
            for rect, spectrum in zip(field.regions, field.spectra)
        ]
    return write_json(path, document.model_dump())


def load_illuminant(path: Union[str, Path]) -> IlluminantSpectrum:
    """
    Read an illuminant JSON file.

    Raises:
        CalibrationError: If the document is invalid or values are not positive
    """
    try:
        document = IlluminantFile.model_validate(migrate_data(read_json(path)))
        grid = WavelengthGrid(bands=tuple(document.bands))
        field = None
        if document.regions:
            if document.frame is None:
                raise CalibrationError(f"{path}: regions require a frame [width, height]")
            width, height = document.frame
            rects: List[PixelRect] = [PixelRect.from_list(r.rect) for r in document.regions]
            region_map = np.full((height, width), -1, dtype=np.int32)
            for index, rect in enumerate(rects):
                if not rect.fits(width, height):
                    raise CalibrationError(
                        f"{path}: illuminant region {index} {rect.to_list()} "
                        f"outside frame {width}x{height}"
                    )
                if any(rect.overlaps(other) for other in rects[index + 1:]):
                    raise CalibrationError(
                        f"{path}: illuminant region {index} {rect.to_list()} "
                        f"overlaps another region"
                    )
                region_map[rect.slices] = index
            field = IlluminantField(
                regions=tuple(rects),
                region_map=region_map,
                spectra=np.array([r.values for r in document.regions]),
            )
        return IlluminantSpectrum(grid=grid, values=document.values, spatial_field=field)
    except (ValidationError, ValueError) as e:
        if isinstance(e, CalibrationError):
            raise
        raise CalibrationError(f"{path}: invalid illuminant file: {e}") from e
