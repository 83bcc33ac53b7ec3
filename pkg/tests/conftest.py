"""
Pytest configuration and fixtures for hsalbedo tests.

Provides small deterministic cubes, sensor constants and rendered scenes.
Rendered scenes are session-scoped; every model they hold is immutable.
"""

from typing import Sequence

import numpy as np
import pytest

from hsalbedo.models import (
    AlbedoMap,
    IlluminantSpectrum,
    Provenance,
    SensorConstants,
    SpectralCube,
    WavelengthGrid,
)
from hsalbedo.services.scene_sim import (
    AMBIENT_SHADOW_FLOOR,
    BoardLayout,
    LidarScanSpec,
    SceneSpec,
    default_colorboard_spec,
    render_scene,
)


def make_grid(bands: Sequence[float] = (450.0, 550.0, 650.0, 905.0)) -> WavelengthGrid:
    """Build a grid from band centers."""
    return WavelengthGrid(bands=tuple(float(b) for b in bands))


def make_cube(radiance, bands: Sequence[float] = (450.0, 550.0, 650.0, 905.0)) -> SpectralCube:
    """Build a cube from an H×W×B array."""
    return SpectralCube(grid=make_grid(bands), radiance=np.asarray(radiance, dtype=np.float64))


def uniform_cube(width: int, height: int, spectrum: Sequence[float], bands=None) -> SpectralCube:
    """Cube with the same spectrum at every pixel."""
    spectrum = np.asarray(spectrum, dtype=np.float64)
    radiance = np.broadcast_to(spectrum, (height, width, spectrum.size)).copy()
    if bands is None:
        return make_cube(radiance)
    return make_cube(radiance, bands)


def measured_map(linear: np.ndarray) -> AlbedoMap:
    """AlbedoMap with every pixel measured."""
    linear = np.asarray(linear, dtype=np.float64)
    return AlbedoMap(
        linear_rgb=linear,
        provenance=np.full(linear.shape[:2], Provenance.MEASURED, dtype=np.uint8),
    )


@pytest.fixture
def sensor_constants():
    """Sensor constants of the default simulated rig."""
    return SensorConstants(
        receiver_aperture_d_r=0.1, eta_sys=0.9, eta_atm=0.98, lidar_wavelength=905.0
    )


@pytest.fixture
def flat_illuminant():
    """Equal-energy illuminant on the four-band test grid."""
    return IlluminantSpectrum(grid=make_grid(), values=np.ones(4))


@pytest.fixture(scope="session")
def colorboard_spec():
    """Default 4×6 color board spec, seed 0, 20% grid LiDAR coverage."""
    return default_colorboard_spec(seed=0)


@pytest.fixture(scope="session")
def colorboard_scene(colorboard_spec):
    """Noiseless render of the default color board."""
    return render_scene(colorboard_spec)


@pytest.fixture(scope="session")
def sparse_colorboard_scene(colorboard_spec):
    """Noiseless color board with 10% grid LiDAR coverage."""
    spec = colorboard_spec.model_copy(update={"lidar": LidarScanSpec(coverage=0.1)})
    return render_scene(spec)


@pytest.fixture(scope="session")
def small_spec(colorboard_spec):
    """
    64×64 scene with a 2×2 board and one occluder.

    Uses the first four color board materials on the default 32-band grid.
    """
    return SceneSpec(
        width=64,
        height=64,
        bands=list(colorboard_spec.bands),
        materials=colorboard_spec.materials[:4],
        background=colorboard_spec.background,
        board=BoardLayout(rows=2, cols=2, patch_size=24, gap=4, margin=4),
        occluders=[[10, 20, 40, 12]],
        shadow_floor=AMBIENT_SHADOW_FLOOR,
        seed=3,
    )


@pytest.fixture(scope="session")
def small_scene(small_spec):
    """Noiseless render of the 64×64 scene."""
    return render_scene(small_spec)
