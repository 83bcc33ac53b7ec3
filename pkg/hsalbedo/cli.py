"""
Command-line surface: simulate, recover, densify and report.

Each subcommand resolves a RunConfig (settings.ini and environment < flags <
--config JSON), runs one pipeline stage and writes byte-deterministic
artifacts into the output directory.
"""

import argparse
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import ValidationError

from hsalbedo import __version__
from hsalbedo.config import Config, ConfigError, RunConfig
from hsalbedo.file_schema import Manifest, migrate_data
from hsalbedo.logging_config import get_logger, setup_logging
from hsalbedo.models import (
    AlbedoMap,
    HsAlbedoError,
    IlluminantSpectrum,
    LidarSampleSet,
    PixelRect,
    Provenance,
)
from hsalbedo.services.albedo_pipeline import (
    RecoveryResult,
    albedo_from_png,
    albedo_paths,
    compute_sparse_albedo,
    load_albedo,
    render_rgb_image,
    save_albedo,
)
from hsalbedo.services.densifier import DensifierConfig, DensifyResult, densify
from hsalbedo.services.lidar_model import (
    apply_registration,
    load_constants,
    load_sample_set,
    save_sample_set,
)
from hsalbedo.services.metrics import (
    annotation_truth_report,
    chart_report,
    compare_methods,
    load_annotations,
    load_chart,
    ratio_scatter_report,
    save_chart,
    save_report,
    whdr,
)
from hsalbedo.services.scene_sim import default_colorboard_spec, load_scene_spec, render_scene
from hsalbedo.services.spectral_core import (
    CalibrationError,
    calibrate_illuminant,
    calibrate_illuminant_field,
    load_cube,
    load_illuminant,
    save_cube,
    save_illuminant,
)
from hsalbedo.utils.file_utils import read_json, sha256_file, write_json

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_FAILURE = 2

MANIFEST_NAME = "manifest.json"
SPARSE_STEM = "sparse"
DENSE_STEM = "dense"

# Roles of each bundle artifact, relative to the bundle directory
BUNDLE_LAYOUT: Dict[str, Dict[str, str]] = {
    "cube": {"cube": "cube.hsc"},
    "white": {"cube": "white.hsc"},
    "lidar": {"samples": "lidar.csv", "constants": "lidar.json"},
    "shading": {"values": "shading.npy"},
    "truth_albedo": {"linear": "truth_albedo.npy"},
    "chart": {"chart": "chart.json"},
}


# =============================================================================
# SIMULATE
# =============================================================================


def cmd_simulate(run: RunConfig) -> Path:
    """
    Render a scene and write the dataset bundle plus its manifest.

    The scene comes from run.scene or the default color board; run.seed,
    run.coverage, run.noise_sigma and run.pattern override it when set.

    Returns:
        Path of the written manifest
    """
    spec = load_scene_spec(run.scene) if run.scene else default_colorboard_spec()
    updates: Dict[str, Any] = {}
    if run.seed is not None:
        updates["seed"] = run.seed
    lidar = spec.lidar.model_dump()
    if run.coverage is not None:
        lidar["coverage"] = run.coverage
    if run.pattern is not None:
        lidar["pattern"] = run.pattern
    if lidar != spec.lidar.model_dump():
        updates["lidar"] = lidar
    if run.noise_sigma is not None:
        updates["noise"] = {**spec.noise.model_dump(), "radiance_sigma": run.noise_sigma}
    if updates:
        # revalidate so overrides get the same checks as a spec file
        spec = type(spec).model_validate({**spec.model_dump(), **updates})

    scene = render_scene(spec)
    out_dir = Path(run.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_cube(scene.cube, out_dir / BUNDLE_LAYOUT["cube"]["cube"])
    save_cube(scene.white_cube, out_dir / BUNDLE_LAYOUT["white"]["cube"])
    save_sample_set(scene.lidar_set, out_dir / BUNDLE_LAYOUT["lidar"]["samples"])
    np.save(out_dir / BUNDLE_LAYOUT["shading"]["values"], scene.shading.values)
    np.save(out_dir / BUNDLE_LAYOUT["truth_albedo"]["linear"], scene.truth_albedo.linear_rgb)
    save_chart(scene.chart, out_dir / BUNDLE_LAYOUT["chart"]["chart"])

    names = sorted(name for artifact in BUNDLE_LAYOUT.values() for name in artifact.values())
    manifest = Manifest(
        seed=spec.seed,
        width=spec.width,
        height=spec.height,
        lidar_wavelength=spec.sensor.lidar_wavelength,
        artifacts=BUNDLE_LAYOUT,
        sha256={name: sha256_file(out_dir / name) for name in names},
    )
    path = write_json(out_dir / MANIFEST_NAME, manifest.model_dump())
    logger.info(f"Wrote simulated bundle with {len(names)} files to {out_dir}")
    return path


def load_manifest(path: Path) -> Manifest:
    """
    Read a bundle manifest.

    Raises:
        ConfigError: If the manifest is missing or invalid
    """
    try:
        return Manifest.model_validate(migrate_data(read_json(path)))
    except FileNotFoundError as e:
        raise ConfigError(f"Manifest not found: {path}") from e
    except ValidationError as e:
        raise ConfigError(f"{path}: invalid manifest: {e}") from e
    except ValueError as e:
        raise ConfigError(f"{path}: not valid JSON: {e}") from e


def apply_manifest(run: RunConfig) -> RunConfig:
    """Fill unset input paths from the bundle manifest, if one is configured."""
    if run.manifest is None:
        return run
    manifest = load_manifest(run.manifest)
    root = Path(run.manifest).parent
    available = {
        "cube": manifest.artifacts.get("cube", {}).get("cube"),
        "white": manifest.artifacts.get("white", {}).get("cube"),
        "lidar": manifest.artifacts.get("lidar", {}).get("samples"),
        "lidar_sidecar": manifest.artifacts.get("lidar", {}).get("constants"),
        "chart": manifest.artifacts.get("chart", {}).get("chart"),
        "truth": manifest.artifacts.get("truth_albedo", {}).get("linear"),
    }
    updates = {
        key: root / name
        for key, name in available.items()
        if name is not None and getattr(run, key) is None
    }
    return run.model_copy(update=updates)


# =============================================================================
# RECOVER
# =============================================================================


def _load_lidar(run: RunConfig) -> LidarSampleSet:
    if run.points is not None or run.registration is not None:
        run.require("points", "registration", "lidar_sidecar")
        constants, width, height = load_constants(run.lidar_sidecar)
        return apply_registration(run.points, run.registration, constants, width, height)
    run.require("lidar")
    return load_sample_set(run.lidar, run.lidar_sidecar)


def _calibrate(run: RunConfig) -> IlluminantSpectrum:
    if run.white is None or not Path(run.white).exists():
        raise CalibrationError(f"White reference cube not found: {run.white}")
    white = load_cube(run.white)
    if run.illuminant_regions:
        regions = [PixelRect.from_list(r) for r in run.illuminant_regions]
        return calibrate_illuminant_field(white, regions, run.whiteboard_reflectance)
    region = PixelRect.from_list(run.white_region) if run.white_region else None
    return calibrate_illuminant(white, region, run.whiteboard_reflectance)


def cmd_recover(run: RunConfig) -> RecoveryResult:
    """
    Calibrate, invert LiDAR and recover the sparse albedo map.

    Writes sparse.png/.npy, sparse_provenance.npy, illuminant.json,
    recover_summary.json and optionally spectra.npy into out_dir.
    """
    run = apply_manifest(run)
    run.require("cube")
    cube = load_cube(run.cube)
    illum = _calibrate(run)
    lidar_set = _load_lidar(run)
    constants = lidar_set.constants
    if run.lidar_wavelength is not None:
        constants = constants.model_copy(update={"lidar_wavelength": run.lidar_wavelength})

    result = compute_sparse_albedo(
        cube,
        illum,
        lidar_set,
        constants,
        cos_min=run.cos_min,
        clamp_max=run.clamp_max,
        reference_illuminant=run.reference_illuminant,
    )

    out_dir = Path(run.out_dir)
    save_albedo(result.albedo, out_dir, SPARSE_STEM)
    save_illuminant(illum, out_dir / "illuminant.json")
    write_json(out_dir / "recover_summary.json", result.summary.model_dump(mode="json"))
    if run.save_spectra:
        np.save(out_dir / "spectra.npy", result.spectra.spectra)
    return result


# =============================================================================
# DENSIFY
# =============================================================================


def cmd_densify(run: RunConfig) -> Tuple[AlbedoMap, DensifyResult]:
    """
    Fill the sparse map from out_dir by spectral lookup.

    Writes dense.png/.npy, dense_provenance.npy and densify_summary.json.
    """
    run = apply_manifest(run)
    run.require("cube")
    cube = load_cube(run.cube)
    out_dir = Path(run.out_dir)
    sparse = load_albedo(out_dir, SPARSE_STEM)

    dense, result = densify(
        cube,
        sparse,
        DensifierConfig(alpha=run.alpha, k_neighbors=run.k_neighbors, method=run.method),
    )
    save_albedo(dense, out_dir, DENSE_STEM)
    write_json(out_dir / "densify_summary.json", result.model_dump(mode="json"))
    return dense, result


# =============================================================================
# REPORT
# =============================================================================


def _rgb_baseline(run: RunConfig) -> Optional[AlbedoMap]:
    if run.cube is None:
        return None
    illuminant_path = Path(run.out_dir) / "illuminant.json"
    illum = load_illuminant(illuminant_path) if illuminant_path.exists() else _calibrate(run)
    return render_rgb_image(load_cube(run.cube), illum)


def cmd_report(run: RunConfig) -> Dict[str, Path]:
    """
    Score the recovered albedo against the chart and annotations.

    Writes report.json, patches.csv, ratios.csv, ratio_scatter.png,
    methods.csv and, with annotations, whdr.json.
    """
    run = apply_manifest(run)
    run.require("chart")
    chart = load_chart(run.chart)
    out_dir = Path(run.out_dir)

    methods: Dict[str, AlbedoMap] = {"sparse": load_albedo(out_dir, SPARSE_STEM)}
    if albedo_paths(out_dir, DENSE_STEM)["linear"].exists():
        methods["dense"] = load_albedo(out_dir, DENSE_STEM)
    primary_name = "dense" if "dense" in methods else "sparse"
    primary = methods[primary_name]

    rgb = _rgb_baseline(run)
    if rgb is not None:
        methods["rgb_image"] = rgb
    for name, png in run.baselines.items():
        methods[name] = albedo_from_png(png)

    report = chart_report(primary, chart)
    series = {primary_name: primary}
    if rgb is not None:
        series["rgb_image"] = rgb
    scatter = ratio_scatter_report(series, chart)
    rows = compare_methods(chart, methods)

    whdr_results = {}
    if run.annotations is not None:
        annotations = load_annotations(run.annotations)
        whdr_results[primary_name] = whdr(primary, annotations, run.delta)
        if run.truth is not None:
            truth = np.load(run.truth)
            truth_map = AlbedoMap(
                linear_rgb=truth,
                provenance=np.full(truth.shape[:2], Provenance.MEASURED, dtype=np.uint8),
            )
            whdr_results["annotations_vs_truth"] = annotation_truth_report(
                truth_map, annotations, run.delta
            )

    return save_report(out_dir, report, scatter, rows, whdr_results)


# =============================================================================
# ARGUMENT PARSING
# =============================================================================


def _baseline(value: str) -> Tuple[str, str]:
    name, sep, path = value.partition("=")
    if not sep or not name or not path:
        raise argparse.ArgumentTypeError(f"Expected name=path, got '{value}'")
    return name, path


def build_parser() -> argparse.ArgumentParser:
    """Build the argument parser for all subcommands."""
    parser = argparse.ArgumentParser(
        prog="hsalbedo",
        description="Albedo recovery from hyperspectral images and LiDAR intensity",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", help="DEBUG, INFO, WARNING, ERROR (default: INFO)")
    parser.add_argument("--log-file", type=Path, help="Log file (default: ~/.hsalbedo/logs)")
    parser.add_argument("--settings", type=Path, help="settings.ini path")
    sub = parser.add_subparsers(dest="command", required=True)

    simulate = sub.add_parser("simulate", help="Render a synthetic dataset bundle")
    simulate.add_argument("--config", type=Path, help="JSON run file, overrides flags")
    simulate.add_argument(
        "--spec", dest="scene", type=Path, help="scene.json (default: color board scene)"
    )
    simulate.add_argument(
        "--out", dest="out_dir", type=Path, required=True, help="Bundle directory"
    )
    simulate.add_argument("--seed", type=int, help="Random seed override")
    simulate.add_argument("--coverage", type=float, help="LiDAR coverage fraction override")
    simulate.add_argument("--noise-sigma", type=float, help="Radiance noise σ override")
    simulate.add_argument(
        "--pattern", choices=["grid", "random", "scanline"], help="LiDAR sampling pattern"
    )

    def add_run_flags(command: argparse.ArgumentParser) -> None:
        command.add_argument("--config", type=Path, help="JSON run file, overrides flags")
        command.add_argument("--manifest", type=Path, help="Simulated bundle manifest")
        command.add_argument("--cube", type=Path, help="Scene cube (.hsc)")
        command.add_argument("--out", dest="out_dir", type=Path, help="Output directory")

    recover = sub.add_parser("recover", help="Recover the sparse albedo map")
    add_run_flags(recover)
    recover.add_argument("--white", type=Path, help="White reference cube (.hsc)")
    recover.add_argument("--lidar", type=Path, help="LiDAR sample CSV")
    recover.add_argument("--lidar-sidecar", type=Path, help="Sensor constants JSON")
    recover.add_argument("--points", type=Path, help="Raw LiDAR points CSV")
    recover.add_argument("--registration", type=Path, help="Registration CSV index,u,v")
    recover.add_argument("--lidar-wavelength", type=float, help="LiDAR wavelength in nm")
    recover.add_argument("--cos-min", type=float, help="Grazing-incidence cutoff")
    recover.add_argument("--clamp-max", type=float, help="Reflectance clamp")
    recover.add_argument(
        "--white-region", type=int, nargs=4, metavar=("X", "Y", "W", "H"),
        help="Whiteboard rectangle (default: full frame)",
    )
    recover.add_argument(
        "--illuminant-region", dest="illuminant_regions", type=int, nargs=4, action="append",
        default=None, metavar=("X", "Y", "W", "H"),
        help="Calibrate a spatially varying illuminant over this rectangle (repeatable)",
    )
    recover.add_argument(
        "--whiteboard-reflectance", type=float, help="Reflectance of the white reference"
    )
    recover.add_argument(
        "--reference-illuminant", choices=["D65", "E"], help="Rendering illuminant for XYZ"
    )
    recover.add_argument(
        "--save-spectra", action="store_true", default=None, help="Also write spectra.npy"
    )

    densify_cmd = sub.add_parser("densify", help="Fill pixels without LiDAR albedo")
    add_run_flags(densify_cmd)
    densify_cmd.add_argument("--alpha", type=float, help="Cosine weight of the hybrid score")
    densify_cmd.add_argument("--k", dest="k_neighbors", type=int, help="Neighbors to average")
    densify_cmd.add_argument("--method", choices=["brute", "kdtree"], help="Neighbor search")

    report = sub.add_parser("report", help="Evaluate albedo against a chart")
    add_run_flags(report)
    report.add_argument("--white", type=Path, help="White reference cube for the RGB baseline")
    report.add_argument("--chart", type=Path, help="Reference chart JSON")
    report.add_argument("--annotations", type=Path, help="Pairwise annotation JSON")
    report.add_argument("--truth", type=Path, help="Ground-truth albedo .npy")
    report.add_argument("--delta", type=float, help="WHDR equality threshold")
    report.add_argument(
        "--baseline", type=_baseline, action="append", default=None, metavar="NAME=PNG",
        help="External albedo image to score (repeatable)",
    )
    return parser


_NON_RUN_KEYS = {"command", "config", "log_level", "log_file", "settings", "baseline"}


def _run_config(args: argparse.Namespace) -> RunConfig:
    flags = {k: v for k, v in vars(args).items() if k not in _NON_RUN_KEYS}
    if getattr(args, "baseline", None):
        flags["baselines"] = dict(args.baseline)
    return RunConfig.resolve(Config(args.settings), flags, args.config)


def run(argv: Optional[List[str]] = None) -> int:
    """
    Parse arguments and dispatch a subcommand.

    Returns:
        0 on success, 2 for a reported pipeline or validation error,
        1 for an unexpected failure
    """
    args = build_parser().parse_args(argv)
    setup_logging(log_level=args.log_level, log_file=args.log_file)

    try:
        run_config = _run_config(args)
        if args.command == "simulate":
            print(cmd_simulate(run_config))
        elif args.command == "recover":
            summary = cmd_recover(run_config).summary
            print(f"accepted {summary.accepted}/{summary.total_samples} samples")
        elif args.command == "densify":
            _, result = cmd_densify(run_config)
            print(f"filled {result.filled} pixels (k={result.effective_k})")
        else:
            for name, path in sorted(cmd_report(run_config).items()):
                print(f"{name}: {path}")
        return EXIT_OK
    except (HsAlbedoError, ValidationError) as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILURE
    except Exception as e:
        logger.error(f"Unexpected error in {args.command}", exc_info=True)
        print(f"unexpected error: {e}", file=sys.stderr)
        return EXIT_UNEXPECTED
