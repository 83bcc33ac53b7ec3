"""
Pydantic models for the JSON documents hsalbedo reads and writes.

Covers cube headers, illuminant files, LiDAR sidecars, charts, annotations
and the simulation manifest. Schema versioning supports forward-compatible
migrations of the versioned documents.
"""

from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field

from hsalbedo.models import HsAlbedoError


CURRENT_SCHEMA_VERSION = 1


class SchemaVersionError(HsAlbedoError, ValueError):
    """Raised when a document was written by a newer schema."""


class CubeHeader(BaseModel):
    """JSON header of a `.hsc` cube file."""

    model_config = ConfigDict(
        extra="forbid",
        json_schema_extra={
            "example": {
                "width": 2,
                "height": 2,
                "bands": [450.0, 550.0, 905.0],
                "dtype": "f32",
                "layout": "bip",
            }
        },
    )

    width: int = Field(..., gt=0)
    height: int = Field(..., gt=0)
    bands: List[float] = Field(..., min_length=1, description="Band centers in nm")
    dtype: Literal["f32", "f64"] = Field(default="f32")
    layout: Literal["bip"] = Field(default="bip", description="Band-interleaved-by-pixel")


class IlluminantRegionRecord(BaseModel):
    """One calibrated region of a spatially varying illuminant."""

    rect: List[int] = Field(..., min_length=4, max_length=4, description="[x, y, width, height]")
    values: List[float]


class IlluminantFile(BaseModel):
    """Calibrated illuminant document."""

    model_config = ConfigDict(extra="forbid")

    schema_version: int = Field(default=CURRENT_SCHEMA_VERSION)
    bands: List[float]
    values: List[float]
    frame: Optional[List[int]] = Field(default=None, description="[width, height] of the field")
    regions: List[IlluminantRegionRecord] = Field(default_factory=list)


class SensorConstantsFile(BaseModel):
    """JSON sidecar of a LiDAR sample CSV."""

    model_config = ConfigDict(
        extra="forbid",
        json_schema_extra={
            "example": {
                "receiver_aperture_d_r": 0.1,
                "eta_sys": 0.9,
                "eta_atm": 0.98,
                "lidar_wavelength": 905.0,
                "width": 148,
                "height": 100,
            }
        },
    )

    schema_version: int = Field(default=CURRENT_SCHEMA_VERSION)
    receiver_aperture_d_r: float
    eta_sys: float
    eta_atm: float
    lidar_wavelength: float
    width: int
    height: int


class ChartPatchRecord(BaseModel):
    name: str
    rect: List[int] = Field(..., min_length=4, max_length=4)
    truth: List[float] = Field(..., min_length=3, max_length=3, description="Linear RGB")


class ChartFile(BaseModel):
    """Reference chart document."""

    model_config = ConfigDict(extra="forbid")

    schema_version: int = Field(default=CURRENT_SCHEMA_VERSION)
    width: int
    height: int
    white: str = Field(default="D65")
    patches: List[ChartPatchRecord]


class AnnotationRecord(BaseModel):
    """One entry of an annotation file: `{a:[u,v], b:[u,v], judgment, weight}`."""

    a: List[int] = Field(..., min_length=2, max_length=2)
    b: List[int] = Field(..., min_length=2, max_length=2)
    judgment: str
    weight: float = Field(default=1.0)


class Manifest(BaseModel):
    """Index of a simulated dataset bundle."""

    model_config = ConfigDict(extra="forbid")

    schema_version: int = Field(default=CURRENT_SCHEMA_VERSION)
    seed: int
    width: int
    height: int
    lidar_wavelength: float
    artifacts: Dict[str, Dict[str, str]] = Field(
        ..., description="Artifact name to {role: relative file name}"
    )
    sha256: Dict[str, str] = Field(..., description="Relative file name to hex digest")


def migrate_data(data: dict) -> dict:
    """
    Migrate old schema versions to current.

    Rules:
    - Documents without a version are treated as version 1
    - Documents from a newer schema are rejected

    Args:
        data: Raw JSON data

    Returns:
        Data compatible with the current schema

    Raises:
        SchemaVersionError: If the document is newer than this library
    """
    version = data.get("schema_version", 1)
    if version > CURRENT_SCHEMA_VERSION:
        raise SchemaVersionError(
            f"Document schema version {version} is newer than supported {CURRENT_SCHEMA_VERSION}"
        )

    # only version 1 exists; upgrades from older versions slot in before the stamp

    data["schema_version"] = CURRENT_SCHEMA_VERSION
    return data
