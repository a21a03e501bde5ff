"""Report emission: delimited evaluation tables, per-class curve JSON, and
matplotlib figures rendered alongside them, plus PNG chip export."""
from __future__ import annotations

import csv
import io as _io
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
from PIL import Image

from .catalog import UNKNOWN, ClassCatalog
from .evaluate import EvaluationResult, curve_payload
from .io import atomic_write_text


def _csv_text(rows: list[list]) -> str:
    buf = _io.StringIO()
    csv.writer(buf).writerows(rows)
    return buf.getvalue()


def _fmt(value, digits: int = 4) -> str:
    return "" if value is None else f"{value:.{digits}f}"


def write_evaluation(result: EvaluationResult, out_dir: Path) -> list[Path]:
    """Write confusion matrix, per-class metrics, AUC, estimated-F1, and
    scatter-stat CSVs plus per-class score-curve JSON."""
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    names = result.class_names
    rows = [["reference\\candidate"] + names]
    for name, row in zip(names, result.matrix):
        rows.append([name] + [int(v) for v in row])
    path = out_dir / "confusion_matrix.csv"
    atomic_write_text(path, _csv_text(rows))
    written.append(path)

    m = result.metrics
    rows = [["class", "precision", "recall", "f1", "support"]]
    for i, name in enumerate(names):
        rows.append([name, _fmt(m.precision[i]), _fmt(m.recall[i]), _fmt(m.f1[i]), int(m.support[i])])
    rows.append(["MEAN", _fmt(m.mean_precision), _fmt(m.mean_recall), _fmt(m.mean_f1), m.total])
    rows.append(["WEIGHTED_MEAN", _fmt(m.weighted_precision), _fmt(m.weighted_recall),
                 _fmt(m.weighted_f1), m.total])
    rows.append(["ACCURACY", "", "", _fmt(m.accuracy), m.total])
    rows.append(["DISAGREEMENT", "", "", _fmt(result.disagreement), m.total])
    if result.crop_metrics is not None:
        cm = result.crop_metrics
        rows.append(["CROPS_ACCURACY", "", "", _fmt(cm.accuracy), cm.total])
    path = out_dir / "class_metrics.csv"
    atomic_write_text(path, _csv_text(rows))
    written.append(path)

    rows = [["class", "area_cdl", "area_statt", "difference", "agreement_count", "f1"]]
    for a in result.classes:
        diff = None
        if a.area_cdl is not None and a.area_statt is not None:
            diff = a.area_statt - a.area_cdl
        rows.append([a.name, _fmt(a.area_cdl), _fmt(a.area_statt), _fmt(diff),
                     a.agreement_count, _fmt(m.f1[a.code - 1])])
    path = out_dir / "auc_table.csv"
    atomic_write_text(path, _csv_text(rows))
    written.append(path)

    rows = [["class", "nmse_threshold", "agreement_count", "f1_cdl", "f1_statt",
             "fraction_below", "excluded_pixels"]]
    for a in result.classes:
        rows.append([a.name, _fmt(a.threshold, 2), a.agreement_count,
                     _fmt(a.f1_cdl), _fmt(a.f1_statt), _fmt(a.fraction_below), a.excluded_pixels])
    path = out_dir / "estimated_f1.csv"
    atomic_write_text(path, _csv_text(rows))
    written.append(path)

    rows = [["statistic", "all_disagreement", "crop_disagreement"]]
    sa, sc = result.scatter_all, result.scatter_crop
    rows.append(["total_points", sa.total, sc.total])
    rows.append(["statt_better", sa.statt_better, sc.statt_better])
    rows.append(["cdl_better", sa.cdl_better, sc.cdl_better])
    rows.append(["ties", sa.ties, sc.ties])
    rows.append(["statt_better_mean", _fmt(sa.statt_better_mean), _fmt(sc.statt_better_mean)])
    rows.append(["cdl_better_mean", _fmt(sa.cdl_better_mean), _fmt(sc.cdl_better_mean)])
    path = out_dir / "scatter_stats.csv"
    atomic_write_text(path, _csv_text(rows))
    written.append(path)

    curves_dir = out_dir / "curves"
    for a in result.classes:
        if not (a.cdl_nmse.size or a.statt_nmse.size):
            continue
        path = curves_dir / f"{a.name.replace(' ', '_')}.json"
        atomic_write_text(path, json.dumps(curve_payload(a), indent=2))
        written.append(path)
    return written


def render_figures(reports_dir: Path, figures_dir: Path) -> list[Path]:
    """Render score curves per class and a confusion-matrix heatmap from
    the evaluation artifacts."""
    figures_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    for curve_path in sorted((reports_dir / "curves").glob("*.json")):
        payload = json.loads(curve_path.read_text())
        fig, ax = plt.subplots(figsize=(4, 3))
        es = payload.get("E", [])
        if "score_cdl" in payload:
            ax.plot(es, payload["score_cdl"], color="red", label="CDL")
        if "score_statt" in payload:
            ax.plot(es, payload["score_statt"], color="blue", label="STATT")
        ax.set_xlabel("NMSE threshold E")
        ax.set_ylabel("Score(E)")
        ax.set_title(payload["class"])
        ax.set_ylim(0, 1.02)
        ax.legend(loc="lower right")
        fig.tight_layout()
        out = figures_dir / f"score_curve_{curve_path.stem}.png"
        fig.savefig(out, dpi=120)
        plt.close(fig)
        written.append(out)

    matrix_path = reports_dir / "confusion_matrix.csv"
    with open(matrix_path) as f:
        rows = list(csv.reader(f))
    names = rows[0][1:]
    matrix = np.array([[int(v) for v in row[1:]] for row in rows[1:]], dtype=np.float64)
    fig, ax = plt.subplots(figsize=(max(4, len(names) * 0.35),) * 2)
    with np.errstate(divide="ignore"):
        shown = np.log10(np.where(matrix > 0, matrix, np.nan))
    im = ax.imshow(shown, cmap="viridis")
    ax.set_xticks(range(len(names)), names, rotation=90, fontsize=6)
    ax.set_yticks(range(len(names)), names, fontsize=6)
    ax.set_xlabel("candidate")
    ax.set_ylabel("reference")
    fig.colorbar(im, ax=ax, label="log10 pixels")
    fig.tight_layout()
    out = figures_dir / "confusion_matrix.png"
    fig.savefig(out, dpi=120)
    plt.close(fig)
    written.append(out)
    return written


def label_palette(num_classes: int) -> np.ndarray:
    """(K+1, 3) uint8 palette; unknown is light gray."""
    cmap = plt.get_cmap("tab20")
    colors = [(220, 220, 220)]
    for k in range(num_classes):
        r, g, b, _ = cmap(k % 20)
        colors.append((int(r * 255), int(g * 255), int(b * 255)))
    return np.array(colors, dtype=np.uint8)


def _save_png(path: Path, rgb: np.ndarray) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(rgb).save(path)


def export_chips(
    grid_id: str,
    reference: np.ndarray,
    refined: np.ndarray,
    stack: np.ndarray,
    catalog: ClassCatalog,
    out_dir: Path,
    window: int,
    rgb_bands: tuple[int, int, int],
) -> list[Path]:
    """PNG triplet for visual audit: reference label, refined label, and
    one window's composite rendered with the configured RGB bands."""
    palette = label_palette(catalog.num_classes)
    written = []
    for suffix, codes in (("cdl", reference), ("statt", refined)):
        path = out_dir / f"{grid_id}_{suffix}.png"
        _save_png(path, palette[codes])
        written.append(path)
    rgb = stack[window][..., list(rgb_bands)]
    lo, hi = rgb.min(), rgb.max()
    scaled = np.zeros_like(rgb) if hi == lo else (rgb - lo) / (hi - lo)
    path = out_dir / f"{grid_id}_image.png"
    _save_png(path, (scaled * 255).astype(np.uint8))
    written.append(path)
    return written
