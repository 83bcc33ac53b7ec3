"""
Tests for hsalbedo Pydantic models.

Tests cover:
- Grid ordering and range validation
- Cube, illuminant and albedo array invariants
- LiDAR sample set frame and uniqueness checks
- Chart and annotation validation
"""

import numpy as np
import pytest
from pydantic import ValidationError

from hsalbedo.models import (
    AlbedoMap,
    ChartPatch,
    IlluminantField,
    IlluminantLookupError,
    IlluminantSpectrum,
    Judgment,
    LidarSample,
    LidarSampleSet,
    PairAnnotation,
    PixelRect,
    Provenance,
    ReferenceChart,
    SensorConstants,
    SpectralCube,
    WavelengthGrid,
)
from tests.conftest import make_grid


class TestPixelRect:
    """Tests for PixelRect."""

    def test_from_list_round_trip(self):
        """Test [x, y, w, h] lists convert both ways."""
        rect = PixelRect.from_list([1, 2, 3, 4])
        assert rect.to_list() == [1, 2, 3, 4]
        assert rect.area == 12

    def test_from_list_wrong_length(self):
        """Test that a list without four values is rejected."""
        with pytest.raises(ValueError):
            PixelRect.from_list([1, 2, 3])

    def test_slices_index_rows_then_columns(self):
        """Test slices select the rectangle from an H×W array."""
        array = np.arange(100).reshape(10, 10)
        rect = PixelRect(x=2, y=5, width=3, height=1)
        assert array[rect.slices].tolist() == [[52, 53, 54]]

    def test_overlap_is_half_open(self):
        """Test that touching rectangles do not overlap."""
        first = PixelRect(x=0, y=0, width=4, height=4)
        assert not first.overlaps(PixelRect(x=4, y=0, width=4, height=4))
        assert first.overlaps(PixelRect(x=3, y=3, width=4, height=4))

    def test_fits_and_contains(self):
        """Test frame fitting and point containment."""
        rect = PixelRect(x=6, y=0, width=4, height=2)
        assert rect.fits(10, 2)
        assert not rect.fits(9, 2)
        assert rect.contains(9, 1)
        assert not rect.contains(10, 1)


class TestWavelengthGrid:
    """Tests for WavelengthGrid."""

    def test_band_count(self):
        """Test band count matches the band tuple."""
        assert make_grid().band_count == 4

    def test_rejects_non_increasing(self):
        """Test that repeated or decreasing bands are rejected."""
        with pytest.raises(ValidationError, match="strictly increasing"):
            WavelengthGrid(bands=(500.0, 500.0))
        with pytest.raises(ValidationError):
            WavelengthGrid(bands=(600.0, 500.0))

    def test_rejects_out_of_range(self):
        """Test that bands outside 350-1100 nm are rejected."""
        with pytest.raises(ValidationError, match="outside"):
            WavelengthGrid(bands=(300.0, 500.0))
        with pytest.raises(ValidationError):
            WavelengthGrid(bands=(500.0, 1200.0))

    def test_grids_compare_by_value(self):
        """Test that equal band tuples make equal grids."""
        assert make_grid() == make_grid()


class TestSpectralCube:
    """Tests for SpectralCube."""

    def test_keeps_float32(self):
        """Test that float32 radiance is not widened."""
        cube = SpectralCube(grid=make_grid(), radiance=np.ones((2, 3, 4), dtype=np.float32))
        assert cube.radiance.dtype == np.float32
        assert (cube.width, cube.height) == (3, 2)

    def test_rejects_negative_radiance(self):
        """Test that negative radiance is rejected."""
        radiance = np.ones((2, 2, 4))
        radiance[0, 0, 0] = -1.0
        with pytest.raises(ValidationError, match=">= 0"):
            SpectralCube(grid=make_grid(), radiance=radiance)

    def test_rejects_non_finite(self):
        """Test that NaN radiance is rejected."""
        radiance = np.ones((2, 2, 4))
        radiance[1, 1, 2] = np.nan
        with pytest.raises(ValidationError, match="non-finite"):
            SpectralCube(grid=make_grid(), radiance=radiance)

    def test_rejects_band_mismatch(self):
        """Test that the band axis must match the grid."""
        with pytest.raises(ValidationError, match="bands"):
            SpectralCube(grid=make_grid(), radiance=np.ones((2, 2, 3)))

    def test_radiance_is_read_only(self):
        """Test that the stored array cannot be modified."""
        source = np.ones((1, 1, 4))
        cube = SpectralCube(grid=make_grid(), radiance=source)
        source[0, 0, 0] = 5.0
        assert cube.radiance[0, 0, 0] == 1.0
        with pytest.raises(ValueError):
            cube.radiance[0, 0, 0] = 2.0


class TestIlluminantSpectrum:
    """Tests for IlluminantSpectrum and its spatial field."""

    def test_rejects_zero_band(self):
        """Test that e(λ) must be positive in every band."""
        with pytest.raises(ValidationError, match="> 0"):
            IlluminantSpectrum(grid=make_grid(), values=[1.0, 0.0, 1.0, 1.0])

    def test_spectrum_at_without_field(self):
        """Test that every pixel gets the global spectrum without a field."""
        illum = IlluminantSpectrum(grid=make_grid(), values=[1.0, 2.0, 3.0, 4.0])
        assert illum.spectrum_at(100, 100).tolist() == [1.0, 2.0, 3.0, 4.0]

    def test_spectrum_at_with_field(self):
        """Test region lookup and fallback outside every region."""
        region_map = np.full((2, 4), -1)
        region_map[:, 2:] = 0
        field = IlluminantField(
            regions=(PixelRect(x=2, y=0, width=2, height=2),),
            region_map=region_map,
            spectra=[[2.0, 2.0, 2.0, 2.0]],
        )
        illum = IlluminantSpectrum(grid=make_grid(), values=np.ones(4), spatial_field=field)
        assert illum.spectrum_at(0, 0).tolist() == [1.0] * 4
        assert illum.spectrum_at(3, 1).tolist() == [2.0] * 4

    def test_spectrum_at_outside_field(self):
        """Test that out-of-frame pixels raise IlluminantLookupError."""
        field = IlluminantField(regions=(), region_map=np.zeros((2, 2)), spectra=[[1.0] * 4])
        illum = IlluminantSpectrum(grid=make_grid(), values=np.ones(4), spatial_field=field)
        with pytest.raises(IlluminantLookupError):
            illum.spectrum_at(2, 0)

    def test_unknown_region_id(self):
        """Test that a region id without a spectrum raises IlluminantLookupError."""
        field = IlluminantField(regions=(), region_map=np.full((2, 2), 3), spectra=[[1.0] * 4])
        illum = IlluminantSpectrum(grid=make_grid(), values=np.ones(4), spatial_field=field)
        with pytest.raises(IlluminantLookupError, match="unknown region"):
            illum.spectrum_at(0, 0)


class TestSensorConstants:
    """Tests for SensorConstants."""

    def test_gain(self):
        """Test the range-independent factor D²ηη/4."""
        constants = SensorConstants(
            receiver_aperture_d_r=0.2, eta_sys=0.5, eta_atm=1.0, lidar_wavelength=905.0
        )
        assert constants.gain == pytest.approx(0.005)

    def test_efficiency_range(self):
        """Test that efficiencies above 1 are rejected."""
        with pytest.raises(ValidationError):
            SensorConstants(
                receiver_aperture_d_r=0.1, eta_sys=1.2, eta_atm=1.0, lidar_wavelength=905.0
            )


class TestLidarSampleSet:
    """Tests for LidarSample and LidarSampleSet."""

    def _sample(self, u=0, v=0, cos=0.5):
        return LidarSample(u=u, v=v, range_r=2.0, intensity_l=1e-3, incidence_cos=cos)

    def test_incidence_cos_domain(self):
        """Test that cos θ must be in (0, 1]."""
        with pytest.raises(ValidationError):
            self._sample(cos=0.0)
        with pytest.raises(ValidationError):
            self._sample(cos=1.01)

    def test_rejects_out_of_frame(self, sensor_constants):
        """Test that samples must lie inside the frame."""
        with pytest.raises(ValidationError, match="outside frame"):
            LidarSampleSet(
                constants=sensor_constants, samples=(self._sample(u=4),), width=4, height=4
            )

    def test_rejects_duplicate_pixels(self, sensor_constants):
        """Test that two samples cannot share a pixel."""
        with pytest.raises(ValidationError, match="Duplicate"):
            LidarSampleSet(
                constants=sensor_constants,
                samples=(self._sample(1, 1), self._sample(1, 1)),
                width=4,
                height=4,
            )

    def test_as_arrays(self, sensor_constants):
        """Test column extraction in sample order."""
        sample_set = LidarSampleSet(
            constants=sensor_constants,
            samples=(self._sample(1, 2), self._sample(3, 0)),
            width=4,
            height=4,
        )
        columns = sample_set.as_arrays()
        assert columns["u"].tolist() == [1, 3]
        assert columns["v"].tolist() == [2, 0]
        assert columns["range_r"].tolist() == [2.0, 2.0]


class TestAlbedoMap:
    """Tests for AlbedoMap."""

    def test_empty(self):
        """Test an empty map has no valid pixels."""
        albedo = AlbedoMap.empty(5, 3)
        assert (albedo.width, albedo.height) == (5, 3)
        assert albedo.valid_count() == 0

    def test_rejects_out_of_gamut(self):
        """Test that linear values must be clipped to [0, 1]."""
        with pytest.raises(ValidationError, match="gamut"):
            AlbedoMap(linear_rgb=np.full((1, 1, 3), 1.5), provenance=np.ones((1, 1)))

    def test_rejects_unknown_provenance(self):
        """Test that provenance codes are restricted to the enum."""
        with pytest.raises(ValidationError, match="Provenance"):
            AlbedoMap(linear_rgb=np.zeros((1, 1, 3)), provenance=np.full((1, 1), 7))

    def test_mask_and_srgb8(self):
        """Test validity mask and the derived 8-bit encoding."""
        linear = np.array([[[1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]])
        provenance = np.array([[Provenance.MEASURED, Provenance.NONE]])
        albedo = AlbedoMap(linear_rgb=linear, provenance=provenance)
        assert albedo.mask.tolist() == [[True, False]]
        assert albedo.srgb8[0, 0].tolist() == [255, 0, 0]


class TestReferenceChart:
    """Tests for ReferenceChart."""

    def _patch(self, name, x):
        return ChartPatch(
            name=name, region=PixelRect(x=x, y=0, width=4, height=4), truth=(0.1, 0.2, 0.3)
        )

    def test_valid_chart(self):
        """Test a chart with disjoint patches."""
        chart = ReferenceChart(width=8, height=4, patches=(self._patch("a", 0), self._patch("b", 4)))
        assert chart.white == "D65"

    def test_rejects_overlap(self):
        """Test that overlapping patches are rejected."""
        with pytest.raises(ValidationError, match="overlap"):
            ReferenceChart(width=8, height=4, patches=(self._patch("a", 0), self._patch("b", 2)))

    def test_rejects_duplicate_names(self):
        """Test that patch names must be unique."""
        with pytest.raises(ValidationError, match="Duplicate"):
            ReferenceChart(width=8, height=4, patches=(self._patch("a", 0), self._patch("a", 4)))

    def test_rejects_truth_out_of_range(self):
        """Test that truth colors are linear RGB in [0, 1]."""
        with pytest.raises(ValidationError):
            ChartPatch(name="x", region=PixelRect(x=0, y=0, width=1, height=1), truth=(1.2, 0, 0))


class TestPairAnnotation:
    """Tests for PairAnnotation."""

    def test_judgment_from_string(self):
        """Test that judgments parse from their file spelling."""
        annotation = PairAnnotation(point_a=(0, 0), point_b=(1, 0), judgment="A_darker")
        assert annotation.judgment is Judgment.A_DARKER
        assert annotation.weight == 1.0

    def test_rejects_identical_points(self):
        """Test that both points must differ."""
        with pytest.raises(ValidationError, match="distinct"):
            PairAnnotation(point_a=(2, 2), point_b=(2, 2), judgment="Equal")

    def test_rejects_zero_weight(self):
        """Test that weights must be positive."""
        with pytest.raises(ValidationError):
            PairAnnotation(point_a=(0, 0), point_b=(1, 0), judgment="Equal", weight=0.0)
