"""
Configuration management for hsalbedo.

Loads defaults from settings.ini with environment variable overrides, and
merges them with command-line flags and an optional JSON run file into a
validated RunConfig.
"""

import configparser
import os
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from hsalbedo.logging_config import get_logger
from hsalbedo.models import HsAlbedoError
from hsalbedo.utils.file_utils import read_json

logger = get_logger(__name__)


class ConfigError(HsAlbedoError, ValueError):
    """Raised for unreadable or invalid run configuration."""


def _env_float(name: str) -> Optional[float]:
    value = os.getenv(name)
    if not value:
        return None
    try:
        return float(value)
    except ValueError as e:
        raise ConfigError(f"Environment variable {name}={value!r} is not a number") from e


def _env_int(name: str) -> Optional[int]:
    value = os.getenv(name)
    if not value:
        return None
    try:
        return int(value)
    except ValueError as e:
        raise ConfigError(f"Environment variable {name}={value!r} is not an integer") from e


class Config:
    """Application configuration manager."""

    def __init__(self, config_path: Optional[Path] = None):
        """
        Initialize configuration manager.

        Args:
            config_path: Path to config file, defaults to config/settings.ini
        """
        self.config_path = Path(config_path) if config_path else self._default_config_path()
        self._config = configparser.ConfigParser()
        self._load()

    def _default_config_path(self) -> Path:
        project_root = Path(__file__).parent.parent
        return project_root / "config" / "settings.ini"

    def _load(self):
        if self.config_path.exists():
            try:
                self._config.read(self.config_path)
                logger.info(f"Loaded configuration from {self.config_path}")
            except configparser.Error as e:
                logger.warning(f"Failed to read config file: {e}. Using defaults.")
        else:
            logger.debug(f"Config file not found at {self.config_path}. Using defaults.")

    def _float(self, env: str, section: str, key: str, fallback: float) -> float:
        value = _env_float(env)
        if value is not None:
            return value
        return self._config.getfloat(section, key, fallback=fallback)

    def get_pipeline_config(self) -> Dict[str, Any]:
        """
        Get albedo recovery settings with environment overrides.

        Environment variables take precedence over config file:
        - HSALBEDO_LIDAR_WAVELENGTH (overrides the sensor sidecar when set)
        - HSALBEDO_COS_MIN
        - HSALBEDO_CLAMP_MAX
        - HSALBEDO_WHITEBOARD_REFLECTANCE

        Returns:
            Dictionary with pipeline configuration
        """
        wavelength = _env_float("HSALBEDO_LIDAR_WAVELENGTH")
        if wavelength is None and self._config.has_option("pipeline", "lidar_wavelength"):
            wavelength = self._config.getfloat("pipeline", "lidar_wavelength")
        config = {
            "lidar_wavelength": wavelength,
            "cos_min": self._float("HSALBEDO_COS_MIN", "pipeline", "cos_min", 0.1),
            "clamp_max": self._float("HSALBEDO_CLAMP_MAX", "pipeline", "clamp_max", 1.5),
            "whiteboard_reflectance": self._float(
                "HSALBEDO_WHITEBOARD_REFLECTANCE", "pipeline", "whiteboard_reflectance", 1.0
            ),
            "reference_illuminant": self._config.get(
                "pipeline", "reference_illuminant", fallback="D65"
            ),
        }
        logger.debug(f"Pipeline config: {config}")
        return config

    def get_densifier_config(self) -> Dict[str, Any]:
        """
        Get densifier settings with environment overrides.

        Environment variables take precedence over config file:
        - HSALBEDO_ALPHA
        - HSALBEDO_K_NEIGHBORS

        Returns:
            Dictionary with densifier configuration
        """
        k_neighbors = _env_int("HSALBEDO_K_NEIGHBORS")
        config = {
            "alpha": self._float("HSALBEDO_ALPHA", "densifier", "alpha", 1.0),
            "k_neighbors": (
                k_neighbors
                if k_neighbors is not None
                else self._config.getint("densifier", "k_neighbors", fallback=3)
            ),
            "method": self._config.get("densifier", "method", fallback="brute"),
        }
        logger.debug(f"Densifier config: {config}")
        return config

    def get_metrics_config(self) -> Dict[str, Any]:
        """
        Get metrics settings with environment overrides.

        Environment variables take precedence over config file:
        - HSALBEDO_DELTA
        - HSALBEDO_SEED (None when neither it nor [simulation] seed is set,
          so a scene file keeps its own seed)

        Returns:
            Dictionary with metrics and simulation configuration
        """
        seed = _env_int("HSALBEDO_SEED")
        if seed is None and self._config.has_option("simulation", "seed"):
            seed = self._config.getint("simulation", "seed")
        config = {
            "delta": self._float("HSALBEDO_DELTA", "metrics", "delta", 0.10),
            "seed": seed,
        }
        logger.debug(f"Metrics config: {config}")
        return config

    def get(self, section: str, key: str, fallback: Any = None) -> Any:
        return self._config.get(section, key, fallback=fallback)

    def get_bool(self, section: str, key: str, fallback: bool = False) -> bool:
        return self._config.getboolean(section, key, fallback=fallback)

    def get_int(self, section: str, key: str, fallback: int = 0) -> int:
        return self._config.getint(section, key, fallback=fallback)

    def get_float(self, section: str, key: str, fallback: float = 0.0) -> float:
        return self._config.getfloat(section, key, fallback=fallback)

    def has_section(self, section: str) -> bool:
        return self._config.has_section(section)

    def sections(self) -> list:
        return self._config.sections()


class RunConfig(BaseModel):
    """
    Settings for one CLI run.

    Precedence, lowest first: Config defaults, command-line flags, the JSON
    file given with --config.
    """

    model_config = ConfigDict(extra="forbid")

    # inputs
    manifest: Optional[Path] = Field(default=None, description="Simulated bundle manifest")
    cube: Optional[Path] = None
    white: Optional[Path] = None
    lidar: Optional[Path] = Field(default=None, description="Sample CSV u,v,range_m,intensity,cos_theta")
    lidar_sidecar: Optional[Path] = None
    points: Optional[Path] = Field(default=None, description="Raw points CSV for registration")
    registration: Optional[Path] = Field(default=None, description="Registration CSV index,u,v")
    chart: Optional[Path] = None
    annotations: Optional[Path] = None
    truth: Optional[Path] = Field(default=None, description="Ground-truth albedo .npy")
    baselines: Dict[str, Path] = Field(default_factory=dict, description="name -> sRGB PNG")
    out_dir: Path = Field(default=Path("out"))

    # pipeline
    lidar_wavelength: Optional[float] = Field(default=None, gt=0)
    cos_min: float = Field(default=0.1, gt=0, le=1)
    clamp_max: float = Field(default=1.5, gt=0)
    whiteboard_reflectance: float = Field(default=1.0, gt=0, le=1)
    white_region: Optional[List[int]] = Field(default=None, min_length=4, max_length=4)
    illuminant_regions: List[List[int]] = Field(default_factory=list)
    reference_illuminant: Literal["D65", "E"] = "D65"
    save_spectra: bool = False

    # densifier
    alpha: float = Field(default=1.0, ge=0)
    k_neighbors: int = Field(default=3, ge=1)
    method: Literal["brute", "kdtree"] = "brute"

    # metrics
    delta: float = Field(default=0.10, ge=0)

    # simulation
    scene: Optional[Path] = Field(default=None, description="scene.json, default color board")
    seed: Optional[int] = Field(default=None, ge=0, description="Overrides the scene seed")
    coverage: Optional[float] = Field(default=None, gt=0, le=1)
    noise_sigma: Optional[float] = Field(default=None, ge=0, description="Radiance noise σ")
    pattern: Optional[Literal["grid", "random", "scanline"]] = None

    @classmethod
    def resolve(
        cls,
        config: Optional[Config] = None,
        flags: Optional[Dict[str, Any]] = None,
        json_path: Optional[Path] = None,
    ) -> "RunConfig":
        """
        Merge defaults, flags and a JSON run file.

        Args:
            config: INI/env defaults, defaults to Config()
            flags: Command-line values; None entries are ignored
            json_path: Optional JSON file whose keys override everything

        Raises:
            ConfigError: On unknown keys, unreadable files or invalid values
        """
        config = config or Config()
        merged: Dict[str, Any] = {}
        merged.update(
            {k: v for k, v in config.get_pipeline_config().items() if v is not None}
        )
        merged.update(config.get_densifier_config())
        merged.update({k: v for k, v in config.get_metrics_config().items() if v is not None})
        merged.update({k: v for k, v in (flags or {}).items() if v is not None})

        if json_path is not None:
            try:
                document = read_json(json_path)
            except FileNotFoundError as e:
                raise ConfigError(f"Run config not found: {json_path}") from e
            except ValueError as e:
                raise ConfigError(f"{json_path}: not valid JSON: {e}") from e
            if not isinstance(document, dict):
                raise ConfigError(f"{json_path}: expected a JSON object")
            unknown = sorted(set(document) - set(cls.model_fields))
            if unknown:
                raise ConfigError(f"{json_path}: unknown config key(s): {', '.join(unknown)}")
            merged.update(document)

        try:
            return cls.model_validate(merged)
        except ValidationError as e:
            problems = "; ".join(
                f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors()
            )
            raise ConfigError(f"Invalid run configuration: {problems}") from e

    def require(self, *names: str) -> None:
        """
        Check that path settings are present and exist.

        Raises:
            ConfigError: Naming the first missing setting or file
        """
        for name in names:
            value = getattr(self, name)
            if value is None:
                raise ConfigError(f"Missing required setting '{name}'")
            if not Path(value).exists():
                raise ConfigError(f"File for '{name}' not found: {value}")
