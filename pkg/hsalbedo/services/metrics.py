"""
Evaluation metrics for albedo maps.

Color differences (CIE76, CIEDE2000) in CIELAB under D65, linear-RGB MSE,
Pearson correlation of patch luminance, weighted human disagreement rate
(WHDR) against pairwise annotations, and luminance-ratio scatter reports.
Also reads charts and annotation files and writes report artifacts.
"""

import csv
from collections import Counter
from enum import Enum
from itertools import combinations
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from pydantic import BaseModel, Field, ValidationError  # noqa: E402

from hsalbedo.file_schema import (  # noqa: E402
    AnnotationRecord,
    ChartFile,
    ChartPatchRecord,
    migrate_data,
)
from hsalbedo.logging_config import get_logger  # noqa: E402
from hsalbedo.models import (  # noqa: E402
    AlbedoMap,
    ChartPatch,
    HsAlbedoError,
    Judgment,
    LabColor,
    PairAnnotation,
    PixelRect,
    ReferenceChart,
)
from hsalbedo.services.albedo_pipeline import D65_WHITE_XYZ, LINEAR_SRGB_TO_XYZ  # noqa: E402
from hsalbedo.utils.file_utils import read_json, write_json  # noqa: E402

logger = get_logger(__name__)

DEFAULT_DELTA = 0.10

WHITE_POINTS: Dict[str, Tuple[float, float, float]] = {"D65": D65_WHITE_XYZ}

LAB_EPSILON = 216.0 / 24389.0
LAB_KAPPA = 24389.0 / 27.0
_25_POW_7 = 25.0 ** 7


class WhitePointError(HsAlbedoError, ValueError):
    """Raised when colors with different or unknown white points are mixed."""


class MetricsError(HsAlbedoError, ValueError):
    """Raised when a metric is undefined for its inputs."""


# =============================================================================
# CIELAB
# =============================================================================


def _white_xyz(white: str) -> np.ndarray:
    if white not in WHITE_POINTS:
        raise WhitePointError(f"Unknown white point '{white}', expected one of {list(WHITE_POINTS)}")
    return np.asarray(WHITE_POINTS[white], dtype=np.float64)


def xyz_to_lab(xyz: np.ndarray, white: str = "D65") -> np.ndarray:
    """
    Convert XYZ to CIELAB.

    Args:
        xyz: XYZ values, shape (..., 3), scaled so the white has Y = 1
        white: Reference white name

    Returns:
        Lab values, shape (..., 3)
    """
    t = np.asarray(xyz, dtype=np.float64) / _white_xyz(white)
    f = np.where(t > LAB_EPSILON, np.cbrt(t), (LAB_KAPPA * t + 16.0) / 116.0)
    lab = np.empty_like(f)
    lab[..., 0] = 116.0 * f[..., 1] - 16.0
    lab[..., 1] = 500.0 * (f[..., 0] - f[..., 1])
    lab[..., 2] = 200.0 * (f[..., 1] - f[..., 2])
    return lab


def linear_rgb_to_lab(rgb: np.ndarray, white: str = "D65") -> np.ndarray:
    """CIELAB of linear sRGB values, shape (..., 3)."""
    return xyz_to_lab(np.asarray(rgb, dtype=np.float64) @ LINEAR_SRGB_TO_XYZ.T, white)


def lab_color(values: Sequence[float], white: str = "D65") -> LabColor:
    L, a, b = (float(c) for c in values)
    return LabColor(L=L, a=a, b=b, white=white)


def luminance(rgb: np.ndarray) -> np.ndarray:
    """Relative luminance Y of linear sRGB values."""
    return np.asarray(rgb, dtype=np.float64) @ LINEAR_SRGB_TO_XYZ[1]


# =============================================================================
# COLOR DIFFERENCES
# =============================================================================


def delta_e_76(lab1: np.ndarray, lab2: np.ndarray) -> np.ndarray:
    """Euclidean Lab distance, broadcasting over leading axes."""
    diff = np.asarray(lab1, dtype=np.float64) - np.asarray(lab2, dtype=np.float64)
    return np.sqrt(np.sum(diff * diff, axis=-1))


def delta_e_2000(
    lab1: np.ndarray,
    lab2: np.ndarray,
    k_l: float = 1.0,
    k_c: float = 1.0,
    k_h: float = 1.0,
) -> np.ndarray:
    """
    CIEDE2000 color difference, broadcasting over leading axes.

    Args:
        lab1: First Lab array, shape (..., 3)
        lab2: Second Lab array, shape (..., 3)
        k_l: Lightness parametric factor
        k_c: Chroma parametric factor
        k_h: Hue parametric factor

    Returns:
        ΔE00 values, shape of the broadcast leading axes
    """
    lab1 = np.asarray(lab1, dtype=np.float64)
    lab2 = np.asarray(lab2, dtype=np.float64)
    L1, a1, b1 = lab1[..., 0], lab1[..., 1], lab1[..., 2]
    L2, a2, b2 = lab2[..., 0], lab2[..., 1], lab2[..., 2]

    c_bar = (np.hypot(a1, b1) + np.hypot(a2, b2)) / 2.0
    c_bar_7 = c_bar ** 7
    g = 0.5 * (1.0 - np.sqrt(c_bar_7 / (c_bar_7 + _25_POW_7)))
    a1_p = (1.0 + g) * a1
    a2_p = (1.0 + g) * a2
    c1_p = np.hypot(a1_p, b1)
    c2_p = np.hypot(a2_p, b2)
    h1_p = np.degrees(np.arctan2(b1, a1_p)) % 360.0
    h2_p = np.degrees(np.arctan2(b2, a2_p)) % 360.0

    chroma_product = c1_p * c2_p
    achromatic = chroma_product == 0

    dL_p = L2 - L1
    dC_p = c2_p - c1_p
    dh = h2_p - h1_p
    dh_p = np.where(dh > 180.0, dh - 360.0, np.where(dh < -180.0, dh + 360.0, dh))
    dh_p = np.where(achromatic, 0.0, dh_p)
    dH_p = 2.0 * np.sqrt(chroma_product) * np.sin(np.radians(dh_p) / 2.0)

    L_bar_p = (L1 + L2) / 2.0
    C_bar_p = (c1_p + c2_p) / 2.0
    h_sum = h1_p + h2_p
    h_bar_p = np.where(
        np.abs(h1_p - h2_p) <= 180.0,
        h_sum / 2.0,
        np.where(h_sum < 360.0, (h_sum + 360.0) / 2.0, (h_sum - 360.0) / 2.0),
    )
    h_bar_p = np.where(achromatic, h_sum, h_bar_p)

    t = (
        1.0
        - 0.17 * np.cos(np.radians(h_bar_p - 30.0))
        + 0.24 * np.cos(np.radians(2.0 * h_bar_p))
        + 0.32 * np.cos(np.radians(3.0 * h_bar_p + 6.0))
        - 0.20 * np.cos(np.radians(4.0 * h_bar_p - 63.0))
    )
    d_theta = 30.0 * np.exp(-(((h_bar_p - 275.0) / 25.0) ** 2))
    C_bar_p_7 = C_bar_p ** 7
    r_c = 2.0 * np.sqrt(C_bar_p_7 / (C_bar_p_7 + _25_POW_7))
    r_t = -np.sin(np.radians(2.0 * d_theta)) * r_c
    l_term = (L_bar_p - 50.0) ** 2
    s_l = 1.0 + 0.015 * l_term / np.sqrt(20.0 + l_term)
    s_c = 1.0 + 0.045 * C_bar_p
    s_h = 1.0 + 0.015 * C_bar_p * t

    term_l = dL_p / (k_l * s_l)
    term_c = dC_p / (k_c * s_c)
    term_h = dH_p / (k_h * s_h)
    return np.sqrt(term_l ** 2 + term_c ** 2 + term_h ** 2 + r_t * term_c * term_h)


def _same_white(first: LabColor, second: LabColor) -> None:
    if first.white != second.white:
        raise WhitePointError(
            f"Cannot compare Lab colors under different whites: {first.white} vs {second.white}"
        )


def cie76(first: LabColor, second: LabColor) -> float:
    """
    CIE76 ΔE between two Lab colors.

    Raises:
        WhitePointError: If the white points differ
    """
    _same_white(first, second)
    return float(delta_e_76(first.as_array(), second.as_array()))


def ciede2000(first: LabColor, second: LabColor) -> float:
    """
    CIEDE2000 ΔE00 between two Lab colors, unit parametric factors.

    Raises:
        WhitePointError: If the white points differ
    """
    _same_white(first, second)
    return float(delta_e_2000(first.as_array(), second.as_array()))


# =============================================================================
# CHART REPORT
# =============================================================================


class PatchResult(BaseModel):
    """Per-patch comparison of mean albedo against truth."""

    name: str
    valid_pixels: int
    mean_linear: List[float]
    truth_linear: List[float]
    cie76: float
    ciede2000: float
    mse: float
    luminance: float
    truth_luminance: float


class ChartReport(BaseModel):
    """Per-patch results plus aggregates over included patches."""

    patches: List[PatchResult] = Field(default_factory=list)
    excluded: List[str] = Field(default_factory=list, description="Patches with no valid pixel")
    warnings: List[str] = Field(default_factory=list)
    mean_cie76: float
    mean_ciede2000: float
    mse: float
    luminance_correlation: Optional[float] = Field(
        default=None, description="Pearson r of patch luminance; None when undefined"
    )


def _pearson(x: np.ndarray, y: np.ndarray) -> Optional[float]:
    if x.size < 2 or np.ptp(x) == 0 or np.ptp(y) == 0:
        return None
    return float(np.corrcoef(x, y)[0, 1])


def patch_means(albedo: AlbedoMap, chart: ReferenceChart) -> Dict[str, Tuple[np.ndarray, int]]:
    """Mean linear RGB over valid pixels per patch; patches without valid pixels are omitted."""
    if (albedo.width, albedo.height) != (chart.width, chart.height):
        raise MetricsError(
            f"Albedo frame {albedo.width}x{albedo.height} does not match "
            f"chart frame {chart.width}x{chart.height}"
        )
    means = {}
    for patch in chart.patches:
        rows, cols = patch.region.slices
        valid = albedo.mask[rows, cols]
        count = int(np.count_nonzero(valid))
        if count:
            means[patch.name] = (albedo.linear_rgb[rows, cols][valid].mean(axis=0), count)
    return means


def chart_report(albedo: AlbedoMap, chart: ReferenceChart) -> ChartReport:
    """
    Compare patch-mean albedo with chart truth.

    ΔE values are computed in Lab under the chart's white, MSE over linear
    RGB channels, and the correlation over patch luminance.

    Raises:
        MetricsError: If the frames differ or no patch has valid pixels
    """
    means = patch_means(albedo, chart)
    results: List[PatchResult] = []
    excluded: List[str] = []
    for patch in chart.patches:
        if patch.name not in means:
            excluded.append(patch.name)
            continue
        mean, count = means[patch.name]
        truth = np.asarray(patch.truth, dtype=np.float64)
        lab_mean = linear_rgb_to_lab(mean, chart.white)
        lab_truth = linear_rgb_to_lab(truth, chart.white)
        results.append(
            PatchResult(
                name=patch.name,
                valid_pixels=count,
                mean_linear=mean.tolist(),
                truth_linear=truth.tolist(),
                cie76=float(delta_e_76(lab_mean, lab_truth)),
                ciede2000=float(delta_e_2000(lab_mean, lab_truth)),
                mse=float(np.mean((mean - truth) ** 2)),
                luminance=float(luminance(mean)),
                truth_luminance=float(luminance(truth)),
            )
        )

    if not results:
        raise MetricsError("No chart patch contains a valid albedo pixel")
    warnings = []
    if excluded:
        warnings.append(f"Excluded {len(excluded)} patches without valid pixels: {excluded}")
        logger.warning(warnings[-1])

    return ChartReport(
        warnings=warnings,
        patches=results,
        excluded=excluded,
        mean_cie76=float(np.mean([r.cie76 for r in results])),
        mean_ciede2000=float(np.mean([r.ciede2000 for r in results])),
        mse=float(np.mean([r.mse for r in results])),
        luminance_correlation=_pearson(
            np.array([r.luminance for r in results]),
            np.array([r.truth_luminance for r in results]),
        ),
    )


class MethodRow(BaseModel):
    """One row of a method comparison table."""

    method: str
    cie76: float
    ciede2000: float
    correlation: Optional[float]
    mse: float
    excluded_patches: int = 0


def compare_methods(chart: ReferenceChart, methods: Dict[str, AlbedoMap]) -> List[MethodRow]:
    """Chart aggregates for several albedo estimates, in the given order."""
    rows = []
    for name, albedo in methods.items():
        report = chart_report(albedo, chart)
        rows.append(
            MethodRow(
                method=name,
                cie76=report.mean_cie76,
                ciede2000=report.mean_ciede2000,
                correlation=report.luminance_correlation,
                mse=report.mse,
                excluded_patches=len(report.excluded),
            )
        )
        logger.info(
            f"{name}: CIE76={report.mean_cie76:.4f} CIEDE2000={report.mean_ciede2000:.4f} "
            f"MSE={report.mse:.3e} r={report.luminance_correlation}"
        )
    return rows


# =============================================================================
# WHDR
# =============================================================================


class AnnotationOutcome(BaseModel):
    """Prediction for one annotation."""

    point_a: Tuple[int, int]
    point_b: Tuple[int, int]
    judgment: Judgment
    predicted: Judgment
    weight: float
    luminance_a: float
    luminance_b: float
    agrees: bool


class WhdrResult(BaseModel):
    whdr: float = Field(..., ge=0, le=1)
    delta: float
    total_weight: float
    disagreement_weight: float
    disagreements: int
    outcomes: List[AnnotationOutcome] = Field(default_factory=list)


def predict_judgment(y_a: float, y_b: float, delta: float = DEFAULT_DELTA) -> Judgment:
    """
    Judgment implied by two luminances.

    Equal when Y_A / Y_B lies in [1/(1+δ), 1+δ]; otherwise the darker side.
    """
    if y_b <= 0:
        return Judgment.EQUAL if y_a <= 0 else Judgment.B_DARKER
    ratio = y_a / y_b
    if ratio < 1.0 / (1.0 + delta):
        return Judgment.A_DARKER
    if ratio > 1.0 + delta:
        return Judgment.B_DARKER
    return Judgment.EQUAL


def whdr(
    albedo: AlbedoMap, annotations: Sequence[PairAnnotation], delta: float = DEFAULT_DELTA
) -> WhdrResult:
    """
    Weighted human disagreement rate of an albedo map.

    Args:
        albedo: Albedo map to score
        annotations: Pairwise judgments
        delta: Equality band half-width

    Returns:
        WhdrResult with the rate and per-annotation outcomes

    Raises:
        MetricsError: If a point is outside the frame or invalid, or the
            total weight is zero
    """
    if delta < 0:
        raise MetricsError(f"delta must be >= 0, got {delta}")
    y = luminance(albedo.linear_rgb)
    outcomes = []
    for annotation in annotations:
        for u, v in (annotation.point_a, annotation.point_b):
            if not (0 <= u < albedo.width and 0 <= v < albedo.height):
                raise MetricsError(f"Annotation point ({u}, {v}) outside the albedo frame")
            if not albedo.mask[v, u]:
                raise MetricsError(f"Annotation point ({u}, {v}) has no valid albedo")
        y_a = float(y[annotation.point_a[1], annotation.point_a[0]])
        y_b = float(y[annotation.point_b[1], annotation.point_b[0]])
        predicted = predict_judgment(y_a, y_b, delta)
        outcomes.append(
            AnnotationOutcome(
                point_a=annotation.point_a,
                point_b=annotation.point_b,
                judgment=annotation.judgment,
                predicted=predicted,
                weight=annotation.weight,
                luminance_a=y_a,
                luminance_b=y_b,
                agrees=predicted == annotation.judgment,
            )
        )

    total = float(sum(o.weight for o in outcomes))
    if not total > 0:
        raise MetricsError("WHDR is undefined for zero total annotation weight")
    wrong = float(sum(o.weight for o in outcomes if not o.agrees))
    return WhdrResult(
        whdr=wrong / total,
        delta=delta,
        total_weight=total,
        disagreement_weight=wrong,
        disagreements=sum(1 for o in outcomes if not o.agrees),
        outcomes=outcomes,
    )


def annotation_truth_report(
    truth: AlbedoMap, annotations: Sequence[PairAnnotation], delta: float = DEFAULT_DELTA
) -> WhdrResult:
    """How often the annotations themselves contradict the true albedo."""
    result = whdr(truth, annotations, delta)
    logger.info(
        f"Annotations disagree with truth on {result.disagreements}/{len(result.outcomes)} pairs"
    )
    return result


# =============================================================================
# LUMINANCE RATIOS
# =============================================================================


class RatioPair(BaseModel):
    patch_a: str
    patch_b: str
    truth_ratio: float
    predicted_ratio: float


class SkipReason(str, Enum):
    """Why a patch pair has no luminance ratio."""

    NO_VALID_PIXELS = "no_valid_pixels"
    ZERO_TRUTH_LUMINANCE = "zero_truth_luminance"
    ZERO_PREDICTED_LUMINANCE = "zero_predicted_luminance"


class SkippedPair(BaseModel):
    patch_a: str
    patch_b: str
    reason: SkipReason


class RatioSeries(BaseModel):
    """Luminance-ratio pairs of one albedo estimate."""

    name: str
    pairs: List[RatioPair] = Field(default_factory=list)
    skipped: List[SkippedPair] = Field(default_factory=list)
    warnings: List[str] = Field(default_factory=list)
    rms_deviation: Optional[float] = Field(
        default=None, description="RMS of predicted minus truth ratio"
    )


class RatioScatterReport(BaseModel):
    series: List[RatioSeries] = Field(default_factory=list)


def _ratio_series(name: str, albedo: AlbedoMap, chart: ReferenceChart) -> RatioSeries:
    means = patch_means(albedo, chart)
    series = RatioSeries(name=name)
    for first, second in combinations(chart.patches, 2):
        truth_b = float(luminance(np.asarray(second.truth)))
        reason = None
        if first.name not in means or second.name not in means:
            reason = SkipReason.NO_VALID_PIXELS
        elif truth_b <= 0:
            reason = SkipReason.ZERO_TRUTH_LUMINANCE
        elif float(luminance(means[second.name][0])) <= 0:
            reason = SkipReason.ZERO_PREDICTED_LUMINANCE
        if reason is not None:
            series.skipped.append(
                SkippedPair(patch_a=first.name, patch_b=second.name, reason=reason)
            )
            continue
        predicted_b = float(luminance(means[second.name][0]))
        series.pairs.append(
            RatioPair(
                patch_a=first.name,
                patch_b=second.name,
                truth_ratio=float(luminance(np.asarray(first.truth))) / truth_b,
                predicted_ratio=float(luminance(means[first.name][0])) / predicted_b,
            )
        )
    if series.pairs:
        deviation = np.array([p.predicted_ratio - p.truth_ratio for p in series.pairs])
        series.rms_deviation = float(np.sqrt(np.mean(deviation ** 2)))
    if series.skipped:
        counts = dict(sorted(Counter(s.reason.value for s in series.skipped).items()))
        series.warnings.append(
            f"{name}: skipped {len(series.skipped)} patch pairs without a ratio {counts}"
        )
        logger.warning(series.warnings[-1])
    return series


def ratio_scatter_report(
    albedo: Union[AlbedoMap, Dict[str, AlbedoMap]], chart: ReferenceChart
) -> RatioScatterReport:
    """
    Truth vs predicted luminance ratios for every patch pair A < B in chart order.

    Args:
        albedo: One albedo map, or several keyed by series name
        chart: Reference chart with at least two patches

    Raises:
        MetricsError: If the chart has fewer than two patches
    """
    if len(chart.patches) < 2:
        raise MetricsError("Ratio scatter needs at least two chart patches")
    named = albedo if isinstance(albedo, dict) else {"albedo": albedo}
    return RatioScatterReport(
        series=[_ratio_series(name, estimate, chart) for name, estimate in named.items()]
    )


# =============================================================================
# FILES
# =============================================================================


def load_chart(path: Union[str, Path]) -> ReferenceChart:
    """
    Read a chart JSON document.

    Raises:
        MetricsError: If the file is missing or invalid
    """
    try:
        document = ChartFile.model_validate(migrate_data(read_json(path)))
        return ReferenceChart(
            width=document.width,
            height=document.height,
            white=document.white,
            patches=tuple(
                ChartPatch(name=p.name, region=PixelRect.from_list(p.rect), truth=tuple(p.truth))
                for p in document.patches
            ),
        )
    except FileNotFoundError as e:
        raise MetricsError(f"Chart file not found: {path}") from e
    except ValidationError as e:
        raise MetricsError(f"{path}: invalid chart: {e}") from e
    except ValueError as e:
        raise MetricsError(f"{path}: not valid JSON: {e}") from e


def save_chart(chart: ReferenceChart, path: Union[str, Path]) -> Path:
    document = ChartFile(
        width=chart.width,
        height=chart.height,
        white=chart.white,
        patches=[
            ChartPatchRecord(name=p.name, rect=p.region.to_list(), truth=list(p.truth))
            for p in chart.patches
        ],
    )
    return write_json(path, document.model_dump())


def load_annotations(path: Union[str, Path]) -> List[PairAnnotation]:
    """
    Read an annotation file: a JSON list of {a, b, judgment, weight}.

    Raises:
        MetricsError: If the file is missing or an entry is invalid
    """
    try:
        raw = read_json(path)
    except FileNotFoundError as e:
        raise MetricsError(f"Annotation file not found: {path}") from e
    except ValueError as e:
        raise MetricsError(f"{path}: not valid JSON: {e}") from e
    if not isinstance(raw, list):
        raise MetricsError(f"{path}: expected a JSON list of annotations")
    annotations = []
    for index, entry in enumerate(raw):
        try:
            record = AnnotationRecord.model_validate(entry)
            annotations.append(
                PairAnnotation(
                    point_a=tuple(record.a),
                    point_b=tuple(record.b),
                    judgment=record.judgment,
                    weight=record.weight,
                )
            )
        except ValidationError as e:
            raise MetricsError(f"{path}: annotation {index} invalid: {e}") from e
    return annotations


def save_annotations(annotations: Sequence[PairAnnotation], path: Union[str, Path]) -> Path:
    records = [
        AnnotationRecord(
            a=list(a.point_a), b=list(a.point_b), judgment=a.judgment.value, weight=a.weight
        ).model_dump()
        for a in annotations
    ]
    return write_json(path, records)


def _write_csv(path: Path, header: List[str], rows: List[List[object]]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    return path


def _cell(value: Optional[float]) -> str:
    return "" if value is None else repr(float(value))


def write_patches_csv(report: ChartReport, path: Union[str, Path]) -> Path:
    rows = [
        [p.name, p.valid_pixels, _cell(p.cie76), _cell(p.ciede2000), _cell(p.mse),
         _cell(p.luminance), _cell(p.truth_luminance)]
        for p in report.patches
    ]
    header = ["patch", "valid_pixels", "cie76", "ciede2000", "mse", "luminance", "truth_luminance"]
    return _write_csv(Path(path), header, rows)


def write_methods_csv(rows: Sequence[MethodRow], path: Union[str, Path]) -> Path:
    body = [
        [r.method, _cell(r.cie76), _cell(r.ciede2000), _cell(r.correlation), _cell(r.mse),
         r.excluded_patches]
        for r in rows
    ]
    header = ["method", "cie76", "ciede2000", "correlation", "mse", "excluded_patches"]
    return _write_csv(Path(path), header, body)


def write_ratios_csv(report: RatioScatterReport, path: Union[str, Path]) -> Path:
    """One row per pair; skipped pairs have empty ratios and their reason."""
    body = []
    for s in report.series:
        body.extend(
            [s.name, p.patch_a, p.patch_b, _cell(p.truth_ratio), _cell(p.predicted_ratio), ""]
            for p in s.pairs
        )
        body.extend([s.name, p.patch_a, p.patch_b, "", "", p.reason.value] for p in s.skipped)
    header = ["series", "patch_a", "patch_b", "truth_ratio", "predicted_ratio", "skipped"]
    return _write_csv(Path(path), header, body)


def plot_ratio_scatter(report: RatioScatterReport, path: Union[str, Path]) -> Path:
    """Scatter of predicted vs truth ratios per series, with the identity line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(5, 5), dpi=100)
    upper = 1.0
    for series in report.series:
        if not series.pairs:
            continue
        truth = [p.truth_ratio for p in series.pairs]
        predicted = [p.predicted_ratio for p in series.pairs]
        upper = max(upper, max(truth), max(predicted))
        ax.scatter(truth, predicted, s=8, alpha=0.7, label=series.name)
    ax.plot([0.0, upper], [0.0, upper], color="black", linewidth=1.0, label="identity")
    ax.set_xlabel("ground-truth luminance ratio")
    ax.set_ylabel("predicted luminance ratio")
    ax.legend(loc="upper left")
    fig.tight_layout()
    fig.savefig(path, format="png", metadata={"Software": None})
    plt.close(fig)
    return path


def save_report(
    directory: Union[str, Path],
    report: ChartReport,
    scatter: RatioScatterReport,
    methods: Sequence[MethodRow],
    whdr_results: Optional[Dict[str, WhdrResult]] = None,
) -> Dict[str, Path]:
    """
    Write every report artifact into a directory.

    Returns:
        Written paths keyed by artifact name
    """
    directory = Path(directory)
    paths = {
        "report": write_json(
            directory / "report.json",
            {
                "chart": report.model_dump(mode="json"),
                "methods": [row.model_dump(mode="json") for row in methods],
                "ratio_rms": {s.name: s.rms_deviation for s in scatter.series},
                "skipped": {
                    s.name: [pair.model_dump(mode="json") for pair in s.skipped]
                    for s in scatter.series
                },
                "warnings": report.warnings + [w for s in scatter.series for w in s.warnings],
            },
        ),
        "patches": write_patches_csv(report, directory / "patches.csv"),
        "ratios": write_ratios_csv(scatter, directory / "ratios.csv"),
        "ratio_scatter": plot_ratio_scatter(scatter, directory / "ratio_scatter.png"),
        "methods": write_methods_csv(methods, directory / "methods.csv"),
    }
    if whdr_results:
        paths["whdr"] = write_json(
            directory / "whdr.json",
            {name: result.model_dump(mode="json") for name, result in whdr_results.items()},
        )
    logger.info(f"Wrote {len(paths)} report artifacts to {directory}")
    return paths
