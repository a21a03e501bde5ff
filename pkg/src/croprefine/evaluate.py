"""Label-quality evaluation against a reference product.

Covers the confusion matrix and per-class precision/recall/F1, NDVI
computation, per-grid characteristic NDVI series, max-normalized MSE
(NMSE) of disagreement pixels, Score(E)/area analysis, estimated F1 from
threshold counts, and scatter statistics comparing the two strategies.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .catalog import UNKNOWN, ClassCatalog

LOGGER = logging.getLogger(__name__)

T_MIN_AGREEMENT = 100
THRESHOLD_LADDER = (0.1, 0.2, 0.3, 0.4, 0.5)
THRESHOLD_BAND = (0.25, 0.45)


# ---------------------------------------------------------------------------
# confusion matrix and P/R/F1


def confusion(reference: np.ndarray, candidate: np.ndarray, num_classes: int) -> np.ndarray:
    """(K, K) counts over pixels non-unknown in both maps; rows are the
    reference class, columns the candidate class."""
    if reference.shape != candidate.shape:
        raise ValueError(f"shape mismatch: {reference.shape} vs {candidate.shape}")
    both = (reference != UNKNOWN) & (candidate != UNKNOWN)
    r = reference[both].astype(np.int64) - 1
    c = candidate[both].astype(np.int64) - 1
    flat = np.bincount(r * num_classes + c, minlength=num_classes * num_classes)
    return flat.reshape(num_classes, num_classes)


@dataclass
class PrfResult:
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    accuracy: float
    mean_precision: float
    mean_recall: float
    mean_f1: float
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float
    total: int


def _safe_div(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    return np.divide(num, den, out=np.zeros_like(num, dtype=np.float64), where=den > 0)


def prf1(matrix: np.ndarray) -> PrfResult:
    """Per-class precision/recall/F1 plus mean, support-weighted mean, and
    overall accuracy. Zero denominators yield 0."""
    matrix = np.asarray(matrix, dtype=np.int64)
    total = int(matrix.sum())
    if total == 0:
        raise ValueError("empty confusion matrix")
    diag = np.diag(matrix).astype(np.float64)
    precision = _safe_div(diag, matrix.sum(axis=0).astype(np.float64))
    recall = _safe_div(diag, matrix.sum(axis=1).astype(np.float64))
    f1 = _safe_div(2 * precision * recall, precision + recall)
    support = matrix.sum(axis=1)
    weights = support / total
    return PrfResult(
        precision=precision,
        recall=recall,
        f1=f1,
        support=support,
        accuracy=float(diag.sum() / total),
        mean_precision=float(precision.mean()),
        mean_recall=float(recall.mean()),
        mean_f1=float(f1.mean()),
        weighted_precision=float((precision * weights).sum()),
        weighted_recall=float((recall * weights).sum()),
        weighted_f1=float((f1 * weights).sum()),
        total=total,
    )


def disagreement_ratio(matrix: np.ndarray) -> float:
    matrix = np.asarray(matrix, dtype=np.int64)
    total = matrix.sum()
    if total == 0:
        raise ValueError("empty confusion matrix")
    return float(1.0 - np.trace(matrix) / total)


def crop_submatrix(matrix: np.ndarray, crop_codes: list[int]) -> np.ndarray:
    """Restrict the matrix to pixels where both maps chose a crop class."""
    idx = np.array([c - 1 for c in crop_codes], dtype=np.int64)
    return matrix[np.ix_(idx, idx)]


# ---------------------------------------------------------------------------
# NDVI and characteristic series


def compute_ndvi(stack: np.ndarray, red_index: int, nir_index: int) -> np.ndarray:
    """(T, H, W) NDVI = (NIR - Red) / (NIR + Red); 0 where the denominator is 0."""
    red = stack[..., red_index].astype(np.float64)
    nir = stack[..., nir_index].astype(np.float64)
    den = nir + red
    return np.divide(nir - red, den, out=np.zeros_like(den), where=den != 0)


def characteristic_series(
    ndvi: np.ndarray, agreement_mask: np.ndarray, t_min: int = T_MIN_AGREEMENT
) -> np.ndarray | None:
    """Window-wise median NDVI over agreement pixels; None below t_min support."""
    support = int(np.count_nonzero(agreement_mask))
    if support < t_min:
        return None
    return np.median(ndvi[:, agreement_mask], axis=1)


def series_errors(ndvi: np.ndarray, pixel_mask: np.ndarray, series: np.ndarray) -> np.ndarray:
    """Raw mean squared error over windows between each masked pixel's NDVI
    series and the characteristic series."""
    pixels = ndvi[:, pixel_mask]  # (T, N)
    return np.mean((pixels - series[:, None]) ** 2, axis=0)


def normalize_errors(errors: np.ndarray, pooled_max: float) -> np.ndarray:
    """Divide by the pooled per-class maximum so NMSE lies in [0, 1]."""
    if pooled_max <= 0:
        return np.zeros_like(errors)
    return errors / pooled_max


# ---------------------------------------------------------------------------
# Score(E) / area under the curve


def score_curve(nmse: np.ndarray, e: float) -> float:
    """Fraction of the strategy's disagreement pixels with NMSE <= e."""
    nmse = np.asarray(nmse)
    if nmse.size == 0:
        raise ValueError("empty NMSE multiset")
    return float(np.count_nonzero(nmse <= e) / nmse.size)


def auc(nmse: np.ndarray) -> float:
    """Exact step-function integral of Score over [0, E_max], divided by E_max.

    Score jumps by 1/n at each value, so the integral is the mean of
    (E_max - value). An all-zero multiset has Score identically 1: area 1.
    """
    nmse = np.asarray(nmse, dtype=np.float64)
    if nmse.size == 0:
        raise ValueError("empty NMSE multiset")
    e_max = float(nmse.max())
    if e_max == 0:
        return 1.0
    return float(np.mean(e_max - nmse) / e_max)


# ---------------------------------------------------------------------------
# estimated F1 and threshold selection


def estimated_f1(
    count_agreement: int,
    count_disagree_strategy: int,
    count_thresholded_strategy: int,
    count_thresholded_total: int,
) -> float:
    """F1 from agreement and below-threshold disagreement counts; zero
    denominators yield 0."""
    p_den = count_disagree_strategy + count_agreement
    r_den = count_thresholded_total + count_agreement
    if p_den == 0 or r_den == 0:
        return 0.0
    hits = count_thresholded_strategy + count_agreement
    precision = hits / p_den
    recall = hits / r_den
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def select_threshold(
    nmse: np.ndarray,
    band: tuple[float, float] = THRESHOLD_BAND,
    ladder: tuple[float, ...] = THRESHOLD_LADDER,
) -> float:
    """Smallest ladder threshold whose strictly-below fraction lands in the
    band; otherwise the ladder value whose fraction is nearest the band."""
    nmse = np.asarray(nmse)
    if nmse.size == 0:
        raise ValueError("empty NMSE multiset")
    lo, hi = band
    fractions = [float(np.count_nonzero(nmse < t) / nmse.size) for t in ladder]
    for t, frac in zip(ladder, fractions):
        if lo <= frac <= hi:
            return t
    def band_distance(frac: float) -> float:
        return min(abs(frac - lo), abs(frac - hi))
    best = min(range(len(ladder)), key=lambda i: (band_distance(fractions[i]), ladder[i]))
    return ladder[best]


# ---------------------------------------------------------------------------
# scatter statistics


@dataclass
class ScatterStats:
    total: int
    statt_better: int
    cdl_better: int
    ties: int
    statt_better_mean: float
    cdl_better_mean: float


def scatter_stats(nmse_vs_cdl: np.ndarray, nmse_vs_statt: np.ndarray) -> ScatterStats:
    """Counts and mean winning margins for disagreement pixels whose NDVI
    series lies closer to the candidate's (STATT) class signature vs the
    reference's (CDL). Exact ties join neither bucket."""
    nmse_vs_cdl = np.asarray(nmse_vs_cdl, dtype=np.float64)
    nmse_vs_statt = np.asarray(nmse_vs_statt, dtype=np.float64)
    statt_better = nmse_vs_statt < nmse_vs_cdl
    cdl_better = nmse_vs_cdl < nmse_vs_statt
    margin = nmse_vs_cdl - nmse_vs_statt
    return ScatterStats(
        total=int(nmse_vs_cdl.size),
        statt_better=int(statt_better.sum()),
        cdl_better=int(cdl_better.sum()),
        ties=int(nmse_vs_cdl.size - statt_better.sum() - cdl_better.sum()),
        statt_better_mean=float(margin[statt_better].mean()) if statt_better.any() else 0.0,
        cdl_better_mean=float((-margin[cdl_better]).mean()) if cdl_better.any() else 0.0,
    )


# ---------------------------------------------------------------------------
# full evaluation over a set of grids


@dataclass
class ClassAnalysis:
    code: int
    name: str
    agreement_count: int
    cdl_nmse: np.ndarray
    statt_nmse: np.ndarray
    area_cdl: float | None
    area_statt: float | None
    threshold: float | None
    f1_cdl: float | None
    f1_statt: float | None
    fraction_below: float | None
    excluded_pixels: int


@dataclass
class EvaluationResult:
    matrix: np.ndarray
    class_names: list[str]
    metrics: PrfResult
    crop_metrics: PrfResult | None
    disagreement: float
    classes: list[ClassAnalysis]
    scatter_all: ScatterStats
    scatter_crop: ScatterStats


def _curve_samples(nmse: np.ndarray, points: int = 101) -> tuple[list[float], list[float]]:
    es = np.linspace(0.0, 1.0, points)
    return list(map(float, es)), [score_curve(nmse, e) for e in es]


def curve_payload(analysis: ClassAnalysis, points: int = 101) -> dict:
    """Sampled (E, Score_cdl, Score_statt) pairs for external plotting."""
    payload: dict = {"class": analysis.name, "code": analysis.code}
    if analysis.cdl_nmse.size:
        es, scores = _curve_samples(analysis.cdl_nmse, points)
        payload["E"] = es
        payload["score_cdl"] = scores
    if analysis.statt_nmse.size:
        es, scores = _curve_samples(analysis.statt_nmse, points)
        payload.setdefault("E", es)
        payload["score_statt"] = scores
    return payload


def evaluate_grids(
    grids: list[tuple[str, np.ndarray, np.ndarray, np.ndarray]],
    catalog: ClassCatalog,
    t_min: int = T_MIN_AGREEMENT,
) -> EvaluationResult:
    """Full evaluation over (grid_id, ndvi, reference, candidate) tuples.

    Characteristic series are per grid and per class, valid only with at
    least t_min agreement pixels; disagreement pixels in grids without a
    valid series for the relevant class are excluded and counted.
    """
    k = catalog.num_classes
    matrix = np.zeros((k, k), dtype=np.int64)
    agreement_count = np.zeros(k + 1, dtype=np.int64)
    excluded = np.zeros(k + 1, dtype=np.int64)
    cdl_raw: list[list[np.ndarray]] = [[] for _ in range(k + 1)]
    statt_raw: list[list[np.ndarray]] = [[] for _ in range(k + 1)]
    # paired raw errors for the scatter analysis, tagged with both classes
    pair_ref_err: list[np.ndarray] = []
    pair_cand_err: list[np.ndarray] = []
    pair_ref_cls: list[np.ndarray] = []
    pair_cand_cls: list[np.ndarray] = []

    for grid_name, ndvi, reference, candidate in grids:
        matrix += confusion(reference, candidate, k)
        known = (reference != UNKNOWN) & (candidate != UNKNOWN)
        agree = known & (reference == candidate)
        disagree = known & (reference != candidate)
        series: dict[int, np.ndarray | None] = {}
        for code in range(1, k + 1):
            mask = agree & (reference == code)
            series[code] = characteristic_series(ndvi, mask, t_min)
            if series[code] is not None:
                agreement_count[code] += int(mask.sum())
        ref_err = np.full(reference.shape, np.nan)
        cand_err = np.full(reference.shape, np.nan)
        for code in range(1, k + 1):
            ref_mask = disagree & (reference == code)
            cand_mask = disagree & (candidate == code)
            if series[code] is None:
                n_skipped = int(ref_mask.sum() + cand_mask.sum())
                if n_skipped:
                    excluded[code] += n_skipped
                    LOGGER.debug(
                        "grid %s: class %d has no valid signature; %d pixels excluded",
                        grid_name, code, n_skipped,
                    )
                continue
            if ref_mask.any():
                errs = series_errors(ndvi, ref_mask, series[code])
                cdl_raw[code].append(errs)
                ref_err[ref_mask] = errs
            if cand_mask.any():
                errs = series_errors(ndvi, cand_mask, series[code])
                statt_raw[code].append(errs)
                cand_err[cand_mask] = errs
        both = disagree & ~np.isnan(ref_err) & ~np.isnan(cand_err)
        if both.any():
            pair_ref_err.append(ref_err[both])
            pair_cand_err.append(cand_err[both])
            pair_ref_cls.append(reference[both])
            pair_cand_cls.append(candidate[both])

    metrics = prf1(matrix)
    crop_codes = catalog.crop_codes
    crop = crop_submatrix(matrix, crop_codes)
    crop_metrics = prf1(crop) if crop.sum() > 0 else None

    pooled_max = np.zeros(k + 1)
    analyses: list[ClassAnalysis] = []
    for code in range(1, k + 1):
        cdl_errs = np.concatenate(cdl_raw[code]) if cdl_raw[code] else np.array([])
        statt_errs = np.concatenate(statt_raw[code]) if statt_raw[code] else np.array([])
        pooled = np.concatenate([cdl_errs, statt_errs])
        pooled_max[code] = float(pooled.max()) if pooled.size else 0.0
        cdl_nmse = normalize_errors(cdl_errs, pooled_max[code])
        statt_nmse = normalize_errors(statt_errs, pooled_max[code])
        area_cdl = auc(cdl_nmse) if cdl_nmse.size else None
        area_statt = auc(statt_nmse) if statt_nmse.size else None
        threshold = f1_cdl = f1_statt = fraction_below = None
        if pooled.size:
            pooled_nmse = normalize_errors(pooled, pooled_max[code])
            threshold = select_threshold(pooled_nmse)
            thresholded_cdl = int(np.count_nonzero(cdl_nmse < threshold)) if cdl_nmse.size else 0
            thresholded_statt = int(np.count_nonzero(statt_nmse < threshold)) if statt_nmse.size else 0
            thresholded_total = thresholded_cdl + thresholded_statt
            fraction_below = float(np.count_nonzero(pooled_nmse < threshold) / pooled_nmse.size)
            agreement = int(agreement_count[code])
            f1_cdl = estimated_f1(agreement, int(cdl_nmse.size), thresholded_cdl, thresholded_total)
            f1_statt = estimated_f1(agreement, int(statt_nmse.size), thresholded_statt, thresholded_total)
        analyses.append(
            ClassAnalysis(
                code=code,
                name=catalog.entry(code).name,
                agreement_count=int(agreement_count[code]),
                cdl_nmse=cdl_nmse,
                statt_nmse=statt_nmse,
                area_cdl=area_cdl,
                area_statt=area_statt,
                threshold=threshold,
                f1_cdl=f1_cdl,
                f1_statt=f1_statt,
                fraction_below=fraction_below,
                excluded_pixels=int(excluded[code]),
            )
        )

    if pair_ref_err:
        ref_err = np.concatenate(pair_ref_err)
        cand_err = np.concatenate(pair_cand_err)
        ref_cls = np.concatenate(pair_ref_cls).astype(np.int64)
        cand_cls = np.concatenate(pair_cand_cls).astype(np.int64)
        with np.errstate(invalid="ignore"):
            nmse_ref = np.where(pooled_max[ref_cls] > 0, ref_err / pooled_max[ref_cls], 0.0)
            nmse_cand = np.where(pooled_max[cand_cls] > 0, cand_err / pooled_max[cand_cls], 0.0)
        crop_set = np.array(crop_codes, dtype=np.int64)
        is_crop_pair = np.isin(ref_cls, crop_set) | np.isin(cand_cls, crop_set)
        scatter_all = scatter_stats(nmse_ref, nmse_cand)
        scatter_crop = scatter_stats(nmse_ref[is_crop_pair], nmse_cand[is_crop_pair])
    else:
        scatter_all = ScatterStats(0, 0, 0, 0, 0.0, 0.0)
        scatter_crop = ScatterStats(0, 0, 0, 0, 0.0, 0.0)

    return EvaluationResult(
        matrix=matrix,
        class_names=catalog.names,
        metrics=metrics,
        crop_metrics=crop_metrics,
        disagreement=disagreement_ratio(matrix),
        classes=analyses,
        scatter_all=scatter_all,
        scatter_crop=scatter_crop,
    )
