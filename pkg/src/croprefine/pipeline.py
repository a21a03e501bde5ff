"""Stage orchestration: wiring the modules over a manifest, with
content-hash caching, atomic outputs, and an append-only run ledger."""
from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import composite, evaluate, io, labelprep, mocksegmenter, regiongrow
from .catalog import UNKNOWN, ClassCatalog
from .manifest import ManifestError, PipelineManifest

LOGGER = logging.getLogger(__name__)

STAGES = ["composite", "prep-labels", "curate", "split", "refine", "evaluate", "report", "chips"]

PREREQUISITES = {
    "composite": [],
    "prep-labels": [],
    "curate": ["prep-labels"],
    "split": ["curate"],
    "refine": ["composite", "prep-labels", "split"],
    "evaluate": ["composite", "refine", "split"],
    "report": ["evaluate"],
    "chips": ["composite", "refine"],
}


class PrerequisiteError(ManifestError):
    """A stage ran before its upstream outputs existed."""


@dataclass
class Paths:
    root: Path

    @property
    def composites(self) -> Path:
        return self.root / "composites"

    @property
    def labels(self) -> Path:
        return self.root / "labels"

    @property
    def probs(self) -> Path:
        return self.root / "probs"

    @property
    def refined(self) -> Path:
        return self.root / "refined"

    @property
    def reports(self) -> Path:
        return self.root / "reports"

    @property
    def figures(self) -> Path:
        return self.reports / "figures"

    @property
    def chips(self) -> Path:
        return self.root / "chips"

    @property
    def curation(self) -> Path:
        return self.root / "curation.csv"

    @property
    def accepted(self) -> Path:
        return self.root / "accepted_grids.json"

    @property
    def splits(self) -> Path:
        return self.root / "splits.csv"

    @property
    def ledger(self) -> Path:
        return self.root / "ledger.json"


@dataclass
class LedgerEntry:
    stage: str
    input_hash: str
    outputs: dict[str, str]
    duration_s: float
    warnings: list[str] = field(default_factory=list)
    cached: bool = False
    timestamp: float = field(default_factory=time.time)


class RunLedger:
    """Append-only per-stage record of input/output hashes and timings."""

    def __init__(self, path: Path):
        self.path = path
        self.entries: list[dict] = []
        if path.exists():
            self.entries = json.loads(path.read_text())

    def latest(self, stage: str) -> dict | None:
        for entry in reversed(self.entries):
            if entry["stage"] == stage:
                return entry
        return None

    def append(self, entry: LedgerEntry) -> None:
        self.entries.append(entry.__dict__)
        io.atomic_write_text(self.path, json.dumps(self.entries, indent=2))


def _hash_payload(*parts) -> str:
    h = hashlib.sha256()
    for part in parts:
        h.update(json.dumps(part, sort_keys=True, default=str).encode())
    return h.hexdigest()


def _hash_files(paths: list[Path]) -> list[str]:
    return [io.sha256_file(p) for p in sorted(paths)]


def _grid_ids(directory: Path, kind: str) -> list[str]:
    return sorted(
        io.parse_grid_file(p.name)[0]
        for p in directory.glob(f"*_{kind}.npy")
    )


def _require(condition: bool, stage: str, prerequisite: str) -> None:
    if not condition:
        raise PrerequisiteError(
            f"{prerequisite} outputs missing; run the '{prerequisite}' stage before '{stage}'"
        )


def load_splits(path: Path) -> dict[str, str]:
    with open(path) as f:
        return {row["grid_id"]: row["split"] for row in csv.DictReader(f)}


# ---------------------------------------------------------------------------
# stage bodies; each returns {output_path: sha256}


def _stage_composite(m: PipelineManifest, paths: Paths, seed: int) -> dict[str, str]:
    specs = io.load_scene_manifest(m.scene_manifest)
    by_tile: dict[str, list] = {}
    for spec in specs:
        by_tile.setdefault(spec.tile_id, []).append(spec)
    outputs: dict[str, str] = {}
    for tile_id, tile_specs in sorted(by_tile.items()):
        scenes = []
        for spec in tile_specs:
            reflectance, qa = io.load_scene_arrays(spec)
            scenes.append(
                composite.Scene(
                    tile_id=tile_id,
                    acquisition_time=spec.acquisition_time,
                    reflectance=reflectance,
                    qa=qa,
                )
            )
        stack, validity = composite.build_stack(scenes, m.year, m.num_windows, m.window_days)
        normalized = composite.clip_normalize(stack, validity, m.thresholds.percentiles)
        for grid_id, block in composite.split_grids(normalized, tile_id, m.year, m.grid_size):
            path = paths.composites / io.grid_file(grid_id, io.IMAGE_KIND)
            io.atomic_save_npy(path, block.astype(np.float32))
            outputs[str(path)] = io.sha256_file(path)
            vpath = paths.composites / io.grid_file(grid_id, io.VALIDITY_KIND)
            io.atomic_save_npy(vpath, validity)
            outputs[str(vpath)] = io.sha256_file(vpath)
    return outputs


def _stage_prep_labels(m: PipelineManifest, paths: Paths, seed: int) -> dict[str, str]:
    catalog = ClassCatalog.from_json(m.class_catalog)
    outputs: dict[str, str] = {}
    for tile_id, raster_path in sorted(m.label_rasters.items()):
        raw = io.read_raster(raster_path)
        if m.label_resample_factor > 1:
            raw = labelprep.resample_labels(raw, m.label_resample_factor)
        prepped = labelprep.prepare_labels(raw, catalog)
        for grid_id, block in composite.split_grids(prepped, tile_id, m.year, m.grid_size):
            path = paths.labels / io.grid_file(grid_id, io.CDL_LABEL_KIND)
            io.atomic_save_npy(path, block.astype(np.uint8))
            outputs[str(path)] = io.sha256_file(path)
    return outputs


def _stage_curate(m: PipelineManifest, paths: Paths, seed: int) -> dict[str, str]:
    _require(paths.labels.is_dir() and any(paths.labels.iterdir()), "curate", "prep-labels")
    catalog = ClassCatalog.from_json(m.class_catalog)
    crop_codes = catalog.crop_codes
    rows = []
    accepted = []
    for grid_id in _grid_ids(paths.labels, io.CDL_LABEL_KIND):
        codes = np.load(paths.labels / io.grid_file(grid_id, io.CDL_LABEL_KIND))
        known = codes != UNKNOWN
        known_frac = float(known.mean())
        crop_frac = float(np.isin(codes[known], crop_codes).mean()) if known.any() else 0.0
        ok = labelprep.curate_grid(
            codes, crop_codes, m.thresholds.min_known_fraction, m.thresholds.min_crop_fraction
        )
        rows.append((grid_id, known_frac, crop_frac, ok))
        if ok:
            accepted.append(grid_id)
    buf = _io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["grid_id", "known_fraction", "crop_fraction", "accepted"])
    for grid_id, kf, cf, ok in rows:
        writer.writerow([grid_id, f"{kf:.6f}", f"{cf:.6f}", int(ok)])
    io.atomic_write_text(paths.curation, buf.getvalue())
    io.atomic_write_text(paths.accepted, json.dumps({"accepted": accepted}, indent=2))
    return {str(p): io.sha256_file(p) for p in (paths.curation, paths.accepted)}


def _stage_split(m: PipelineManifest, paths: Paths, seed: int) -> dict[str, str]:
    _require(paths.accepted.exists(), "split", "curate")
    catalog = ClassCatalog.from_json(m.class_catalog)
    accepted = json.loads(paths.accepted.read_text())["accepted"]
    counts = {}
    for grid_id in accepted:
        codes = np.load(paths.labels / io.grid_file(grid_id, io.CDL_LABEL_KIND))
        counts[grid_id] = labelprep.class_pixel_counts(codes, catalog.num_classes)
    assignment = labelprep.split_grids(counts, m.thresholds.split_targets, seed)
    buf = _io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["grid_id", "split"])
    for grid_id in sorted(assignment):
        writer.writerow([grid_id, assignment[grid_id]])
    io.atomic_write_text(paths.splits, buf.getvalue())
    return {str(paths.splits): io.sha256_file(paths.splits)}


def _load_ndvi(m: PipelineManifest, paths: Paths, grid_id: str) -> np.ndarray:
    stack = np.load(paths.composites / io.grid_file(grid_id, io.IMAGE_KIND))
    return evaluate.compute_ndvi(stack, m.red_band, m.nir_band)


def _stage_refine(m: PipelineManifest, paths: Paths, seed: int, jobs: int = 1) -> dict[str, str]:
    _require(paths.splits.exists(), "refine", "split")
    _require(paths.composites.is_dir() and any(paths.composites.iterdir()), "refine", "composite")
    catalog = ClassCatalog.from_json(m.class_catalog)
    splits = load_splits(paths.splits)
    accepted = sorted(splits)
    outputs: dict[str, str] = {}
    if m.segmenter_mode == "mock":
        training = []
        for grid_id, split in splits.items():
            if split != "train":
                continue
            labels = np.load(paths.labels / io.grid_file(grid_id, io.CDL_LABEL_KIND))
            training.append((_load_ndvi(m, paths, grid_id), labels))
        model = mocksegmenter.fit_centroids(training, catalog.num_classes, m.mock_temperature)
        for grid_id in accepted:
            probs = mocksegmenter.predict_probs(model, _load_ndvi(m, paths, grid_id))
            path = paths.probs / io.grid_file(grid_id, io.PROBS_KIND)
            io.atomic_save_npy(path, probs.astype(np.float32))
            outputs[str(path)] = io.sha256_file(path)
    else:
        missing = [
            g for g in accepted if not (paths.probs / io.grid_file(g, io.PROBS_KIND)).exists()
        ]
        if missing:
            raise PrerequisiteError(
                f"external_probs mode: probability grids missing for {missing[:5]}"
                f"{'...' if len(missing) > 5 else ''}; place them under {paths.probs}"
            )
    def _refine_one(grid_id: str) -> tuple[str, str]:
        probs = np.load(paths.probs / io.grid_file(grid_id, io.PROBS_KIND))
        valid = probs.sum(axis=-1) > 0.5  # zero rows mark uncovered pixels
        refined = regiongrow.refine_labels(
            probs, valid, m.thresholds.theta_anchor, m.thresholds.theta_grow
        )
        path = paths.refined / io.grid_file(grid_id, io.STATT_LABEL_KIND)
        io.atomic_save_npy(path, refined.astype(np.uint8))
        return str(path), io.sha256_file(path)

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outputs.update(dict(pool.map(_refine_one, accepted)))
    else:
        outputs.update(dict(map(_refine_one, accepted)))
    return outputs


def _eval_grid_ids(m: PipelineManifest, paths: Paths) -> list[str]:
    splits = load_splits(paths.splits)
    if m.eval_split == "all":
        return sorted(splits)
    return sorted(g for g, s in splits.items() if s == m.eval_split)


def _stage_evaluate(m: PipelineManifest, paths: Paths, seed: int) -> dict[str, str]:
    _require(paths.refined.is_dir() and any(paths.refined.iterdir()), "evaluate", "refine")
    _require(paths.splits.exists(), "evaluate", "split")
    catalog = ClassCatalog.from_json(m.class_catalog)
    grids = []
    for grid_id in _eval_grid_ids(m, paths):
        reference = np.load(paths.labels / io.grid_file(grid_id, io.CDL_LABEL_KIND))
        candidate = np.load(paths.refined / io.grid_file(grid_id, io.STATT_LABEL_KIND))
        grids.append((grid_id, _load_ndvi(m, paths, grid_id), reference, candidate))
    if not grids:
        raise PrerequisiteError("no grids selected for evaluation; check eval_split")
    result = evaluate.evaluate_grids(grids, catalog, m.thresholds.t_min)
    from . import reports

    written = reports.write_evaluation(result, paths.reports)
    return {str(p): io.sha256_file(p) for p in written}


def _stage_report(m: PipelineManifest, paths: Paths, seed: int) -> dict[str, str]:
    _require((paths.reports / "class_metrics.csv").exists(), "report", "evaluate")
    from . import reports

    written = reports.render_figures(paths.reports, paths.figures)
    return {str(p): io.sha256_file(p) for p in written}


def _stage_chips(m: PipelineManifest, paths: Paths, seed: int) -> dict[str, str]:
    _require(paths.refined.is_dir() and any(paths.refined.iterdir()), "chips", "refine")
    _require(paths.composites.is_dir() and any(paths.composites.iterdir()), "chips", "composite")
    catalog = ClassCatalog.from_json(m.class_catalog)
    from . import reports

    written = []
    for grid_id in _grid_ids(paths.refined, io.STATT_LABEL_KIND):
        reference = np.load(paths.labels / io.grid_file(grid_id, io.CDL_LABEL_KIND))
        refined = np.load(paths.refined / io.grid_file(grid_id, io.STATT_LABEL_KIND))
        stack = np.load(paths.composites / io.grid_file(grid_id, io.IMAGE_KIND))
        written += reports.export_chips(
            grid_id, reference, refined, stack, catalog,
            paths.chips, m.chip_window, m.chip_rgb_bands,
        )
    return {str(p): io.sha256_file(p) for p in written}


_STAGE_BODIES = {
    "composite": _stage_composite,
    "prep-labels": _stage_prep_labels,
    "curate": _stage_curate,
    "split": _stage_split,
    "refine": _stage_refine,
    "evaluate": _stage_evaluate,
    "report": _stage_report,
    "chips": _stage_chips,
}

# manifest fields that feed each stage's cache signature
_STAGE_CONFIG_KEYS = {
    "composite": ["year", "num_windows", "window_days", "grid_size", "bands"],
    "prep-labels": ["year", "grid_size", "label_resample_factor"],
    "curate": [],
    "split": [],
    "refine": ["segmenter_mode", "mock_temperature", "red_band", "nir_band"],
    "evaluate": ["eval_split", "red_band", "nir_band"],
    "report": [],
    "chips": ["chip_window", "chip_rgb_bands"],
}


def _stage_input_hash(manifest: PipelineManifest, paths: Paths, stage: str, seed: int) -> str:
    config = {k: getattr(manifest, k) for k in _STAGE_CONFIG_KEYS[stage]}
    config["thresholds"] = manifest.thresholds.__dict__
    config["seed"] = seed
    files: list[Path] = [manifest.class_catalog]
    if stage == "composite":
        files.append(manifest.scene_manifest)
        for spec in io.load_scene_manifest(manifest.scene_manifest):
            files.append(spec.qa_path)
            files += [spec.image_path] if spec.image_path else list(spec.band_paths)
    elif stage == "prep-labels":
        files += list(manifest.label_rasters.values())
    elif stage == "curate":
        files += sorted(paths.labels.glob("*.npy")) if paths.labels.is_dir() else []
    elif stage == "split":
        files += [paths.accepted] if paths.accepted.exists() else []
    elif stage == "refine":
        if paths.splits.exists():
            files.append(paths.splits)
        for d in (paths.composites, paths.labels):
            files += sorted(d.glob("*.npy")) if d.is_dir() else []
        if manifest.segmenter_mode == "external_probs" and paths.probs.is_dir():
            files += sorted(paths.probs.glob("*.npy"))
    elif stage == "evaluate":
        for d in (paths.composites, paths.labels, paths.refined):
            files += sorted(d.glob("*.npy")) if d.is_dir() else []
        if paths.splits.exists():
            files.append(paths.splits)
    elif stage == "report":
        files += sorted(paths.reports.glob("*.csv")) + sorted(paths.reports.glob("curves/*.json"))
    elif stage == "chips":
        for d in (paths.composites, paths.labels, paths.refined):
            files += sorted(d.glob("*.npy")) if d.is_dir() else []
    existing = [f for f in files if f.exists()]
    return _hash_payload(config, [str(f) for f in existing], _hash_files(existing))


def run_stage(
    manifest: PipelineManifest, stage: str, seed: int = 0, force: bool = False, jobs: int = 1
) -> LedgerEntry:
    """Run one stage with content-hash caching; outputs are written
    atomically and the ledger gains one entry either way."""
    if stage not in STAGES:
        raise ManifestError(f"unknown stage '{stage}'; expected one of {STAGES}")
    manifest.validate()
    paths = Paths(manifest.output_root)
    paths.root.mkdir(parents=True, exist_ok=True)
    ledger = RunLedger(paths.ledger)
    input_hash = _stage_input_hash(manifest, paths, stage, seed)
    previous = ledger.latest(stage)
    if not force and previous and previous["input_hash"] == input_hash:
        outputs = previous["outputs"]
        intact = all(
            Path(p).exists() and io.sha256_file(p) == digest for p, digest in outputs.items()
        )
        if intact:
            LOGGER.info("stage %s: cache hit, skipping", stage)
            entry = LedgerEntry(stage=stage, input_hash=input_hash, outputs=outputs,
                                duration_s=0.0, cached=True)
            ledger.append(entry)
            return entry
    start = time.monotonic()
    if stage == "refine":
        outputs = _stage_refine(manifest, paths, seed, jobs)
    else:
        outputs = _STAGE_BODIES[stage](manifest, paths, seed)
    entry = LedgerEntry(
        stage=stage, input_hash=input_hash, outputs=outputs,
        duration_s=time.monotonic() - start,
    )
    ledger.append(entry)
    LOGGER.info("stage %s: %d outputs in %.2fs", stage, len(outputs), entry.duration_s)
    return entry
