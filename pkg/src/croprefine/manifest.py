"""Pipeline manifest: paths, year, thresholds, and stage configuration.

Loads from JSON or TOML. The output root can be overridden with the
CROPREFINE_OUTPUT_ROOT environment variable.
"""
from __future__ import annotations

import json
import os
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import asdict, dataclass, field
from pathlib import Path

OUTPUT_ROOT_ENV = "CROPREFINE_OUTPUT_ROOT"

DEFAULT_BANDS = ["B2", "B3", "B4", "B5", "B6", "B7", "B8", "B8A", "B11", "B12"]


class ManifestError(ValueError):
    """Invalid or inconsistent manifest contents."""


@dataclass
class Thresholds:
    theta_anchor: float = 0.9
    theta_grow: float = 0.3
    t_min: int = 100
    percentiles: tuple[float, float] = (2.0, 98.0)
    min_known_fraction: float = 0.5
    min_crop_fraction: float = 0.5
    split_targets: tuple[float, float, float] = (0.6, 0.2, 0.2)

    def validate(self) -> None:
        if not 0.5 < self.theta_anchor <= 1.0:
            raise ManifestError(f"theta_anchor {self.theta_anchor} outside (0.5, 1]")
        if not 0.0 <= self.theta_grow <= 1.0:
            raise ManifestError(f"theta_grow {self.theta_grow} outside [0, 1]")
        if self.t_min < 1:
            raise ManifestError("t_min must be positive")
        lo, hi = self.percentiles
        if not 0.0 <= lo < hi <= 100.0:
            raise ManifestError(f"percentiles {self.percentiles} must satisfy 0 <= lo < hi <= 100")
        for name, frac in (("min_known_fraction", self.min_known_fraction),
                           ("min_crop_fraction", self.min_crop_fraction)):
            if not 0.0 <= frac <= 1.0:
                raise ManifestError(f"{name} {frac} outside [0, 1]")
        if abs(sum(self.split_targets) - 1.0) > 1e-9 or any(t <= 0 for t in self.split_targets):
            raise ManifestError(f"split_targets {self.split_targets} must be positive and sum to 1")


@dataclass
class PipelineManifest:
    year: int
    scene_manifest: Path
    label_rasters: dict[str, Path]  # tile_id -> raw label raster
    output_root: Path
    class_catalog: Path
    grid_size: int = 1098
    num_windows: int = 24
    window_days: int = 14
    bands: list[str] = field(default_factory=lambda: list(DEFAULT_BANDS))
    red_band: int = 2
    nir_band: int = 6
    label_resample_factor: int = 3
    segmenter_mode: str = "mock"
    mock_temperature: float = 0.01
    eval_split: str = "test"
    chip_window: int = 12
    chip_rgb_bands: tuple[int, int, int] = (2, 1, 0)
    thresholds: Thresholds = field(default_factory=Thresholds)

    @classmethod
    def from_dict(cls, raw: dict, base: Path) -> "PipelineManifest":
        data = dict(raw)
        thresholds = Thresholds(**{
            k: tuple(v) if isinstance(v, list) else v
            for k, v in data.pop("thresholds", {}).items()
        })
        for key in ("scene_manifest", "output_root", "class_catalog"):
            if key not in data:
                raise ManifestError(f"manifest missing required field '{key}'")
            data[key] = base / data[key]
        data["label_rasters"] = {
            tile: base / p for tile, p in data.get("label_rasters", {}).items()
        }
        if "chip_rgb_bands" in data:
            data["chip_rgb_bands"] = tuple(data["chip_rgb_bands"])
        override = os.environ.get(OUTPUT_ROOT_ENV)
        if override:
            data["output_root"] = Path(override)
        try:
            manifest = cls(thresholds=thresholds, **data)
        except TypeError as exc:
            raise ManifestError(str(exc)) from exc
        return manifest

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineManifest":
        path = Path(path)
        if path.suffix == ".toml":
            raw = tomllib.loads(path.read_text())
        else:
            raw = json.loads(path.read_text())
        return cls.from_dict(raw, base=path.parent)

    def to_dict(self) -> dict:
        data = asdict(self)
        for key in ("scene_manifest", "output_root", "class_catalog"):
            data[key] = str(data[key])
        data["label_rasters"] = {t: str(p) for t, p in self.label_rasters.items()}
        data["chip_rgb_bands"] = list(self.chip_rgb_bands)
        data["thresholds"]["percentiles"] = list(self.thresholds.percentiles)
        data["thresholds"]["split_targets"] = list(self.thresholds.split_targets)
        return data

    def validate(self) -> None:
        self.thresholds.validate()
        if self.segmenter_mode not in ("mock", "external_probs"):
            raise ManifestError(f"unknown segmenter_mode '{self.segmenter_mode}'")
        if self.eval_split not in ("train", "val", "test", "all"):
            raise ManifestError(f"unknown eval_split '{self.eval_split}'")
        if not self.class_catalog.exists():
            raise ManifestError(f"class catalog not found: {self.class_catalog}")
        if not self.scene_manifest.exists():
            raise ManifestError(f"scene manifest not found: {self.scene_manifest}")
        for tile, path in self.label_rasters.items():
            if not path.exists():
                raise ManifestError(f"label raster for tile {tile} not found: {path}")
        for name, idx in (("red_band", self.red_band), ("nir_band", self.nir_band)):
            if not 0 <= idx < len(self.bands):
                raise ManifestError(f"{name} index {idx} outside band list")
        if not 0 <= self.chip_window < self.num_windows:
            raise ManifestError(f"chip_window {self.chip_window} outside [0, {self.num_windows})")
