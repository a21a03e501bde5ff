"""Release gate for the segmenter: shape/normalization contracts, a
finite-difference gradient check, memorization and held-out accuracy on
separable synthetic data, and an end-to-end handoff of probability
rasters to the refinement pipeline. Each test prints one PASS/FAIL line
on the real stdout."""
import functools
import json
import sys

import numpy as np
import pytest
import torch

from conftest import make_patches
from stattseg.config import ModelConfig
from stattseg.model import Statt, masked_loss, pixel_accuracy
from stattseg.train import train


def report(name):
    def decorator(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            try:
                fn(*args, **kwargs)
            except BaseException:
                print(f"[ACCEPTANCE] {name}: FAIL", file=sys.__stdout__, flush=True)
                raise
            print(f"[ACCEPTANCE] {name}: PASS", file=sys.__stdout__, flush=True)

        return wrapper

    return decorator


@report("probability raster shape and normalization")
def test_output_shape_and_softmax():
    torch.manual_seed(0)
    model = Statt(ModelConfig.micro(num_classes=28, in_channels=11))
    logits = model(torch.randn(2, 4, 11, 32, 32))
    per_pixel = logits.permute(0, 2, 3, 1)
    assert per_pixel.shape[1:] == (16, 16, 28)
    sums = torch.softmax(per_pixel, dim=-1).sum(dim=-1)
    assert torch.allclose(sums, torch.ones_like(sums), atol=1e-5)


@report("attention weights normalized over time")
def test_attention_normalization():
    torch.manual_seed(1)
    model = Statt(ModelConfig.micro(num_classes=4, in_channels=3))
    _, weights = model(torch.randn(3, 9, 3, 32, 32), return_attention=True)
    sums = weights.sum(dim=1)
    assert torch.allclose(sums, torch.ones_like(sums), atol=1e-5)
    assert (weights >= 0).all()


@report("finite-difference gradient check")
def test_gradient_check():
    torch.manual_seed(2)
    cfg = ModelConfig(num_classes=3, in_channels=2,
                      encoder_channels=(3, 3, 4, 4, 6, 6),
                      decoder_channels=(4, 4, 3, 3),
                      upsample_channels=(4, 3),
                      lstm_hidden=4, attention_width=3)
    model = Statt(cfg).double()
    x = torch.randn(1, 3, 2, 32, 32, dtype=torch.float64)
    targets = torch.randint(0, 4, (1, 16, 16))

    def loss_value():
        return masked_loss(model(x), targets)

    loss_value().backward()
    rng = np.random.default_rng(3)
    eps = 1e-5
    checked = 0
    for name, param in model.named_parameters():
        flat = param.detach().reshape(-1)
        grad = param.grad.reshape(-1)
        idx = int(rng.integers(0, flat.numel()))
        analytic = grad[idx].item()
        with torch.no_grad():
            original = flat[idx].item()
            flat[idx] = original + eps
            plus = loss_value().item()
            flat[idx] = original - eps
            minus = loss_value().item()
            flat[idx] = original
        numeric = (plus - minus) / (2 * eps)
        rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-6)
        assert rel < 1e-3, f"{name}[{idx}]: analytic {analytic}, numeric {numeric}"
        checked += 1
    assert checked >= 10


@report("memorization of 50 training patches")
def test_overfit_50_patches():
    rng = np.random.default_rng(4)
    patches, _ = make_patches(rng, 6, size=64)  # 9 patches per 64x64 grid
    patches = patches[:50]
    assert len(patches) == 50
    cfg = ModelConfig.micro(num_classes=4, in_channels=3)
    cfg.epochs = 200
    model, log = train(cfg, patches, patches, seed=5)
    best = max(e["train_accuracy"] for e in log)
    print(f"[ACCEPTANCE]   best train pixel accuracy {best:.4f}",
          file=sys.__stdout__, flush=True)
    assert best >= 0.95


@report("held-out accuracy on separable synthetic region")
def test_held_out_accuracy():
    rng = np.random.default_rng(6)
    train_patches, _ = make_patches(rng, 8, size=64)
    val_patches, _ = make_patches(rng, 1, size=64)
    held_out, _ = make_patches(rng, 2, size=64)
    cfg = ModelConfig.micro(num_classes=4, in_channels=3)
    cfg.epochs = 120
    model, _ = train(cfg, train_patches, val_patches, seed=7)
    x = torch.from_numpy(np.stack([p.input for p in held_out])).float()
    y = torch.from_numpy(np.stack([p.target for p in held_out])).long()
    with torch.no_grad():
        acc = pixel_accuracy(model(x), y)
    print(f"[ACCEPTANCE]   held-out pixel accuracy {acc:.4f}",
          file=sys.__stdout__, flush=True)
    assert acc >= 0.90


@report("probability rasters accepted by the refinement pipeline")
def test_probs_through_refinement_pipeline(tmp_path):
    croprefine = pytest.importorskip("croprefine")
    from croprefine.manifest import PipelineManifest
    from croprefine.pipeline import Paths, run_stage
    from croprefine.synthetic import write_fixture
    from stattseg.gridio import list_grids, load_grid, load_splits, save_probs
    from stattseg.patches import extract_patches
    from stattseg.predict import predict_probs

    summary = write_fixture(tmp_path, size=128, grid_size=32, num_windows=12)
    manifest_path = summary["manifest"]
    raw = json.loads(manifest_path.read_text())
    raw["segmenter_mode"] = "external_probs"
    manifest_path.write_text(json.dumps(raw))
    manifest = PipelineManifest.from_file(manifest_path)
    for stage in ("composite", "prep-labels", "curate", "split"):
        run_stage(manifest, stage)
    paths = Paths(manifest.output_root)

    splits = load_splits(paths.splits)
    sets = {"train": [], "val": []}
    for grid_id, split in sorted(splits.items()):
        if split not in sets:
            continue
        stack, validity, labels = load_grid(paths.composites, paths.labels, grid_id)
        sets[split] += extract_patches(stack, validity, labels, grid_id)
    if not sets["val"]:
        sets["val"] = sets["train"]
    cfg = ModelConfig.micro(num_classes=4, in_channels=11)
    cfg.epochs = 120
    model, _ = train(cfg, sets["train"], sets["val"], seed=8)

    for grid_id in list_grids(paths.composites):
        if grid_id not in splits:
            continue
        stack, validity = load_grid(paths.composites, None, grid_id)
        probs = predict_probs(model, stack, validity)
        assert probs.dtype == np.float32 and probs.shape == (32, 32, 4)
        covered = probs.sum(axis=-1) > 0.5
        np.testing.assert_allclose(probs[covered].sum(axis=-1), 1.0, atol=1e-4)
        save_probs(paths.probs, grid_id, probs)

    run_stage(manifest, "refine")
    run_stage(manifest, "evaluate")
    refined = list(paths.refined.glob("*_PREPROCESSED_STATT_LABEL.npy"))
    assert refined
    for path in refined:
        codes = np.load(path)
        assert codes.dtype == np.uint8 and codes.max() <= 4
    assert (paths.reports / "class_metrics.csv").exists()
