"""
Tests for the albedo recovery service.

Tests cover:
- Colorimetry: observer integration, reference illuminants, gamut clipping
- Single-pixel ratio recovery and its failure modes
- Sparse recovery on simulated scenes (accuracy, shading cancellation)
- RGB baseline rendering and albedo map files
"""

import numpy as np
import pytest

from hsalbedo.models import (
    IlluminantSpectrum,
    LidarSample,
    LidarSampleSet,
    PixelRect,
    Provenance,
    WavelengthGrid,
)
from hsalbedo.services.albedo_pipeline import (
    CMF_FILE,
    D65_WHITE_XYZ,
    RecoveryError,
    albedo_from_png,
    compute_sparse_albedo,
    load_albedo,
    recover_spectrum,
    reference_illuminant_for,
    render_rgb_image,
    save_albedo,
    spectrum_to_xyz,
    xyz_to_srgb,
)
from hsalbedo.services.lidar_model import forward_intensity
from hsalbedo.services.metrics import chart_report, delta_e_2000, linear_rgb_to_lab
from hsalbedo.services.scene_sim import IlluminantSpec, SceneSpec, render_scene
from hsalbedo.services.spectral_core import (
    GridError,
    calibrate_illuminant,
    calibrate_illuminant_field,
)
from tests.conftest import make_cube, make_grid, uniform_cube

VISIBLE_GRID = WavelengthGrid(bands=tuple(float(w) for w in range(400, 701, 10)) + (905.0,))


def recover(scene, **kwargs):
    """Calibrate from the scene's white cube and recover the sparse map."""
    illum = calibrate_illuminant(scene.white_cube, whiteboard_reflectance=1.0)
    return compute_sparse_albedo(scene.cube, illum, scene.lidar_set, **kwargs)


class TestColorimetry:
    """Tests for spectrum_to_xyz and xyz_to_srgb."""

    def test_perfect_reflector_has_unit_luminance(self):
        """Test that ρ = 1 integrates to Y = 1."""
        xyz = spectrum_to_xyz(np.ones(VISIBLE_GRID.band_count), VISIBLE_GRID)
        assert xyz[1] == pytest.approx(1.0, abs=1e-12)

    def test_flat_spectrum_is_neutral_under_d65(self):
        """Test that a flat spectrum maps to equal sRGB channels under D65."""
        xyz = spectrum_to_xyz(np.full(VISIBLE_GRID.band_count, 0.4), VISIBLE_GRID)
        linear, encoded, clipped = xyz_to_srgb(xyz)
        assert linear == pytest.approx([0.4, 0.4, 0.4], abs=2e-2)
        assert np.ptp(linear) < 2e-2
        assert np.all(encoded >= linear)
        assert clipped == 0

    def test_perfect_reflector_matches_d65_white(self):
        """Test that the perfect reflector lands near the D65 white point."""
        xyz = spectrum_to_xyz(np.ones(VISIBLE_GRID.band_count), VISIBLE_GRID)
        np.testing.assert_allclose(xyz, D65_WHITE_XYZ, atol=3e-2)

    def test_scale_invariance_of_chromaticity(self):
        """Test that scaling a spectrum scales XYZ linearly."""
        spectrum = np.linspace(0.1, 0.9, VISIBLE_GRID.band_count)
        np.testing.assert_allclose(
            spectrum_to_xyz(0.5 * spectrum, VISIBLE_GRID),
            0.5 * spectrum_to_xyz(spectrum, VISIBLE_GRID),
            rtol=1e-12,
        )

    def test_narrowband_550_under_equal_energy_is_green(self):
        """Test that a narrow 550 nm spike is green and clipped into gamut."""
        spectrum = np.where(VISIBLE_GRID.as_array() == 550.0, 1.0, 0.0)
        illuminant = reference_illuminant_for(VISIBLE_GRID, "E")
        xyz = spectrum_to_xyz(spectrum, VISIBLE_GRID, illuminant)
        linear, _, clipped = xyz_to_srgb(xyz)
        assert np.argmax(linear) == 1
        assert clipped == 1

    def test_d65_white_point_maps_to_unit_rgb(self):
        """Test that the D65 white point converts to linear RGB (1, 1, 1)."""
        linear, encoded, _ = xyz_to_srgb(np.array(D65_WHITE_XYZ))
        np.testing.assert_allclose(linear, [1.0, 1.0, 1.0], atol=1e-3)
        np.testing.assert_allclose(encoded, [1.0, 1.0, 1.0], atol=1e-3)

    def test_narrowband_550_chromaticity_matches_observer_table(self):
        """Test that a 550 nm spike under E has the tabulated observer chromaticity."""
        table = np.loadtxt(CMF_FILE, delimiter=",", skiprows=1)
        x_bar, y_bar, z_bar = table[table[:, 0] == 550.0, 1:][0]
        total = x_bar + y_bar + z_bar

        spectrum = np.where(VISIBLE_GRID.as_array() == 550.0, 1.0, 0.0)
        xyz = spectrum_to_xyz(spectrum, VISIBLE_GRID, reference_illuminant_for(VISIBLE_GRID, "E"))
        chromaticity = xyz[:2] / xyz.sum()
        np.testing.assert_allclose(chromaticity, [x_bar / total, y_bar / total], atol=1e-3)

    def test_xyz_is_linear_in_reflectance(self):
        """Test XYZ(a·ρ1 + b·ρ2) = a·XYZ(ρ1) + b·XYZ(ρ2)."""
        bands = VISIBLE_GRID.as_array()
        first = np.linspace(0.1, 0.9, bands.size)
        second = 0.3 + 0.2 * np.sin(bands / 40.0)
        a, b = 0.35, 1.7
        np.testing.assert_allclose(
            spectrum_to_xyz(a * first + b * second, VISIBLE_GRID),
            a * spectrum_to_xyz(first, VISIBLE_GRID) + b * spectrum_to_xyz(second, VISIBLE_GRID),
            rtol=1e-12,
            atol=1e-12,
        )

    def test_clip_counts_triples(self):
        """Test that out-of-gamut triples are clipped and counted once each."""
        xyz = np.array([[0.2, 0.2, 0.2], [0.9, 0.1, 0.0], [2.0, 2.0, 2.0]])
        linear, _, clipped = xyz_to_srgb(xyz)
        assert clipped == 2
        assert linear.min() >= 0.0 and linear.max() <= 1.0

    def test_unknown_reference_illuminant(self):
        """Test that only D65 and E are accepted."""
        with pytest.raises(RecoveryError, match="D50"):
            reference_illuminant_for(VISIBLE_GRID, "D50")

    def test_too_few_visible_bands(self):
        """Test that a near-infrared grid cannot be rendered."""
        grid = make_grid((800.0, 850.0, 905.0))
        with pytest.raises(GridError):
            spectrum_to_xyz(np.ones(3), grid)


class TestRecoverSpectrum:
    """Tests for the single-pixel ratio recovery."""

    def test_exact_on_uniform_light(self):
        """Test ρ(λ) = (e_L/e)(I/I_L)ρ_L on a single pixel."""
        reflectance = np.array([0.2, 0.4, 0.6, 0.5])
        illum = IlluminantSpectrum(grid=make_grid(), values=[2.0, 1.0, 0.5, 1.5])
        shading = 0.7
        cube = make_cube((shading * illum.values * reflectance)[None, None, :])
        sample = LidarSample(u=0, v=0, range_r=2.0, intensity_l=0.01, incidence_cos=0.9)

        rho = recover_spectrum(cube, illum, sample, rho_lidar=0.5)
        np.testing.assert_allclose(rho, reflectance, rtol=1e-12)

    def test_dark_anchor(self, flat_illuminant):
        """Test that I(λ_L) at or below epsilon_i raises RecoveryError."""
        radiance = np.zeros((1, 2, 4))
        radiance[0, 0] = [1.0, 1.0, 1.0, 1.0]
        radiance[0, 1] = [1.0, 1.0, 1.0, 0.0]
        cube = make_cube(radiance)
        sample = LidarSample(u=1, v=0, range_r=1.0, intensity_l=0.01, incidence_cos=1.0)
        with pytest.raises(RecoveryError, match="epsilon_i"):
            recover_spectrum(cube, flat_illuminant, sample, 0.5)

    def test_missing_lidar_band(self, flat_illuminant):
        """Test that a LiDAR wavelength off the grid raises GridError."""
        cube = uniform_cube(1, 1, [1.0] * 4)
        sample = LidarSample(u=0, v=0, range_r=1.0, intensity_l=0.01, incidence_cos=1.0)
        with pytest.raises(GridError):
            recover_spectrum(cube, flat_illuminant, sample, 0.5, lidar_wavelength=1064.0)

    def test_grid_mismatch(self):
        """Test that cube and illuminant grids must match."""
        cube = uniform_cube(1, 1, [1.0] * 4)
        illum = IlluminantSpectrum(grid=make_grid((450.0, 905.0)), values=[1.0, 1.0])
        sample = LidarSample(u=0, v=0, range_r=1.0, intensity_l=0.01, incidence_cos=1.0)
        with pytest.raises(GridError):
            recover_spectrum(cube, illum, sample, 0.5)


class TestComputeSparseAlbedo:
    """Tests for compute_sparse_albedo on simulated scenes."""

    def test_noiseless_spectra_exact(self, small_scene):
        """Test recovered ρ(λ) equals the true reflectance at every sample."""
        result = recover(small_scene)
        mask = result.spectra.mask
        assert result.summary.accepted == len(small_scene.lidar_set.samples)
        assert result.summary.rejected == {"grazing": 0, "dark_anchor": 0}
        np.testing.assert_allclose(
            result.spectra.spectra[mask], small_scene.reflectance[mask], atol=1e-9
        )

    def test_shading_cancels(self, small_spec):
        """Test that a random per-pixel shading factor changes ρ(λ) by < 1e-9."""
        base = render_scene(small_spec)
        rng = np.random.default_rng(11)
        scale = rng.uniform(0.2, 1.0, (small_spec.height, small_spec.width))
        scaled = render_scene(small_spec, shading_scale=scale)

        first = recover(base).spectra
        second = recover(scaled).spectra
        assert np.array_equal(first.mask, second.mask)
        assert np.max(np.abs(first.spectra - second.spectra)) < 1e-9

    def test_colorboard_end_to_end(self, colorboard_scene):
        """Test per-patch CIEDE2000 < 0.5 and correlation > 0.999 at 20% coverage."""
        result = recover(colorboard_scene)
        report = chart_report(result.albedo, colorboard_scene.chart)
        assert not report.excluded
        assert max(p.ciede2000 for p in report.patches) < 0.5
        assert report.luminance_correlation > 0.999

    def test_shadowed_and_lit_agree(self, colorboard_scene):
        """Test that one material recovers the same color in and out of shadow."""
        result = recover(colorboard_scene)
        lab = linear_rgb_to_lab(result.albedo.linear_rgb)
        valid = result.albedo.mask
        materials = colorboard_scene.material_map
        shadow = colorboard_scene.shadow_mask
        checked = 0
        for index in np.unique(materials[materials >= 0]):
            lit = valid & (materials == index) & ~shadow
            dark = valid & (materials == index) & shadow
            if lit.any() and dark.any():
                difference = delta_e_2000(lab[lit].mean(axis=0), lab[dark].mean(axis=0))
                assert difference < 1.0
                checked += 1
        assert checked > 0

    def test_illuminant_invariance(self, colorboard_spec, colorboard_scene):
        """Test that a 3200 K source, recalibrated, leaves the albedo within 0.5 CIEDE2000."""
        warm = colorboard_spec.model_copy(
            update={"illuminant": IlluminantSpec(temperature_k=3200.0, scale=0.8)}
        )
        warm_scene = render_scene(warm)
        assert not np.allclose(warm_scene.white_cube.radiance, colorboard_scene.white_cube.radiance)

        reference = recover(colorboard_scene).albedo
        relit = recover(warm_scene).albedo
        np.testing.assert_array_equal(relit.mask, reference.mask)
        mask = reference.mask
        differences = delta_e_2000(
            linear_rgb_to_lab(relit.linear_rgb[mask]), linear_rgb_to_lab(reference.linear_rgb[mask])
        )
        assert float(np.mean(differences)) < 0.5

    def test_grazing_and_dark_counts(self, sensor_constants):
        """Test that rejections are counted by cause, not raised."""
        radiance = np.ones((1, 3, VISIBLE_GRID.band_count))
        radiance[0, 2, -1] = 0.0
        cube = make_cube(radiance, VISIBLE_GRID.bands)
        illum = IlluminantSpectrum(grid=VISIBLE_GRID, values=np.ones(VISIBLE_GRID.band_count))
        intensity = forward_intensity(sensor_constants, 0.5, 1.0, 1.0)
        samples = (
            LidarSample(u=0, v=0, range_r=1.0, intensity_l=intensity, incidence_cos=1.0),
            LidarSample(u=1, v=0, range_r=1.0, intensity_l=intensity, incidence_cos=0.05),
            LidarSample(u=2, v=0, range_r=1.0, intensity_l=intensity, incidence_cos=1.0),
        )
        lidar_set = LidarSampleSet(constants=sensor_constants, samples=samples, width=3, height=1)

        result = compute_sparse_albedo(cube, illum, lidar_set)
        summary = result.summary
        assert summary.accepted == 1
        assert summary.rejected == {"grazing": 1, "dark_anchor": 1}
        assert len(summary.warnings) == 2
        assert result.albedo.provenance[0].tolist() == [Provenance.MEASURED, 0, 0]
        np.testing.assert_allclose(result.spectra.spectra[0, 0], 0.5, rtol=1e-12)

    def test_empty_sample_set(self, small_scene):
        """Test that zero samples is a fatal RecoveryError."""
        illum = calibrate_illuminant(small_scene.white_cube)
        empty = small_scene.lidar_set.model_copy(update={"samples": ()})
        with pytest.raises(RecoveryError, match="zero valid samples"):
            compute_sparse_albedo(small_scene.cube, illum, empty)

    def test_frame_mismatch(self, small_scene, colorboard_scene):
        """Test that LiDAR and cube frames must agree."""
        illum = calibrate_illuminant(small_scene.white_cube)
        with pytest.raises(RecoveryError, match="frame"):
            compute_sparse_albedo(small_scene.cube, illum, colorboard_scene.lidar_set)

    def test_spatial_illuminant(self, small_spec):
        """Test exact recovery under region-wise illuminants."""
        halves = [[0, 0, 32, 64], [32, 0, 32, 64]]
        spec = SceneSpec.model_validate(
            {
                **small_spec.model_dump(),
                "illuminant_regions": [
                    {"rect": halves[0], "slope": 0.4},
                    {"rect": halves[1], "slope": -0.3},
                ],
            }
        )
        scene = render_scene(spec)
        illum = calibrate_illuminant_field(
            scene.white_cube, [PixelRect.from_list(rect) for rect in halves]
        )
        result = compute_sparse_albedo(scene.cube, illum, scene.lidar_set)
        mask = result.spectra.mask
        np.testing.assert_allclose(result.spectra.spectra[mask], scene.reflectance[mask], atol=1e-9)

    def test_samples_outside_regions_are_counted(self, small_spec):
        """Test that samples outside every illuminant region are counted and warned."""
        left = [0, 0, 32, 64]
        spec = SceneSpec.model_validate(
            {**small_spec.model_dump(), "illuminant_regions": [{"rect": left, "slope": 0.4}]}
        )
        scene = render_scene(spec)
        illum = calibrate_illuminant_field(scene.white_cube, [PixelRect.from_list(left)])
        result = compute_sparse_albedo(scene.cube, illum, scene.lidar_set)

        expected = sum(1 for s in scene.lidar_set.samples if s.u >= 32)
        assert expected > 0
        assert result.summary.outside_regions == expected
        assert any("outside every illuminant region" in w for w in result.summary.warnings)


class TestRgbBaseline:
    """Tests for render_rgb_image."""

    def test_white_renders_white(self):
        """Test that the calibration white renders to Y = 1."""
        d65 = reference_illuminant_for(VISIBLE_GRID, "D65")
        white = uniform_cube(2, 2, d65, bands=VISIBLE_GRID.bands)
        illum = calibrate_illuminant(white)
        albedo = render_rgb_image(white, illum)
        assert albedo.valid_count() == 4
        y = albedo.linear_rgb[0, 0] @ [0.2126729, 0.7151522, 0.0721750]
        assert y == pytest.approx(1.0, abs=2e-2)

    def test_albedo_beats_rgb_image(self, colorboard_scene):
        """Test that recovered albedo beats the RGB rendering on every aggregate."""
        result = recover(colorboard_scene)
        illum = calibrate_illuminant(colorboard_scene.white_cube)
        ours = chart_report(result.albedo, colorboard_scene.chart)
        rgb = chart_report(render_rgb_image(colorboard_scene.cube, illum), colorboard_scene.chart)
        assert ours.mean_cie76 < rgb.mean_cie76
        assert ours.mean_ciede2000 < rgb.mean_ciede2000
        assert ours.mse < rgb.mse
        assert ours.luminance_correlation > rgb.luminance_correlation


class TestAlbedoFiles:
    """Tests for save_albedo, load_albedo and albedo_from_png."""

    def test_round_trip_exact(self, tmp_path, small_scene):
        """Test that raw arrays reload bit-identical."""
        albedo = recover(small_scene).albedo
        paths = save_albedo(albedo, tmp_path, "sparse")
        assert paths["png"].exists()
        loaded = load_albedo(tmp_path, "sparse")
        np.testing.assert_array_equal(loaded.linear_rgb, albedo.linear_rgb)
        np.testing.assert_array_equal(loaded.provenance, albedo.provenance)

    def test_png_transparent_where_invalid(self, tmp_path, small_scene):
        """Test that invalid pixels come back invalid from the PNG."""
        albedo = recover(small_scene).albedo
        paths = save_albedo(albedo, tmp_path, "sparse")
        ingested = albedo_from_png(paths["png"])
        np.testing.assert_array_equal(ingested.mask, albedo.mask)
        np.testing.assert_allclose(
            ingested.linear_rgb[albedo.mask], albedo.linear_rgb[albedo.mask], atol=1e-2
        )

    def test_missing_files(self, tmp_path):
        """Test that missing albedo files raise RecoveryError."""
        with pytest.raises(RecoveryError):
            load_albedo(tmp_path, "dense")
        with pytest.raises(RecoveryError):
            albedo_from_png(tmp_path / "absent.png")
