"""Command-line entry point: train on grid files, predict probability
rasters for the refinement pipeline."""
from __future__ import annotations

import logging
from pathlib import Path

import click

from . import gridio
from .config import ModelConfig
from .patches import extract_patches
from .predict import predict_probs
from .train import load_checkpoint, save_checkpoint, train

LOGGER = logging.getLogger("stattseg")


@click.group()
@click.option("--log-level", default="INFO", show_default=True,
              type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False))
def main(log_level: str):
    """Toy spatio-temporal attention segmenter over composite grid files."""
    logging.basicConfig(level=getattr(logging, log_level.upper()),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")


@main.command(name="train")
@click.option("--composites", type=click.Path(path_type=Path, exists=True), required=True)
@click.option("--labels", type=click.Path(path_type=Path, exists=True), required=True)
@click.option("--splits", type=click.Path(path_type=Path, exists=True), required=True)
@click.option("--classes", type=int, required=True, help="Number of prediction classes K.")
@click.option("--checkpoint", type=click.Path(path_type=Path), required=True)
@click.option("--epochs", type=int, default=None)
@click.option("--micro", is_flag=True, help="Use the shrunken CPU-scale architecture.")
@click.option("--seed", type=int, default=0, show_default=True)
def train_cmd(composites: Path, labels: Path, splits: Path, classes: int,
              checkpoint: Path, epochs: int | None, micro: bool, seed: int):
    """Train on the 'train' split, select the checkpoint on 'val'."""
    assignment = gridio.load_splits(splits)
    sets: dict[str, list] = {"train": [], "val": []}
    in_channels = None
    for grid_id, split in sorted(assignment.items()):
        if split not in sets:
            continue
        stack, validity, targets = gridio.load_grid(composites, labels, grid_id)
        in_channels = stack.shape[-1] + 1
        sets[split] += extract_patches(stack, validity, targets, grid_id)
    if not sets["val"]:  # tiny runs may lack a val split; reuse train
        sets["val"] = sets["train"]
    if in_channels is None:
        raise click.ClickException("no grids found in the splits file")
    config = (ModelConfig.micro(classes, in_channels) if micro
              else ModelConfig(num_classes=classes, in_channels=in_channels))
    if epochs is not None:
        config.epochs = epochs
    LOGGER.info("training on %d patches, validating on %d",
                len(sets["train"]), len(sets["val"]))
    model, log = train(config, sets["train"], sets["val"], seed=seed,
                       log_path=checkpoint.with_suffix(".log.json"))
    checkpoint.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, checkpoint)
    click.echo(f"checkpoint written to {checkpoint} "
               f"(best val accuracy {max(e['val_accuracy'] for e in log):.4f})")


@main.command(name="predict")
@click.option("--composites", type=click.Path(path_type=Path, exists=True), required=True)
@click.option("--checkpoint", type=click.Path(path_type=Path, exists=True), required=True)
@click.option("--out", type=click.Path(path_type=Path), required=True)
def predict_cmd(composites: Path, checkpoint: Path, out: Path):
    """Write one probability raster per composite grid."""
    model = load_checkpoint(checkpoint)
    grids = gridio.list_grids(composites)
    if not grids:
        raise click.ClickException(f"no composite grids under {composites}")
    for grid_id in grids:
        stack, validity = gridio.load_grid(composites, None, grid_id)
        probs = predict_probs(model, stack, validity)
        gridio.save_probs(out, grid_id, probs)
    click.echo(f"{len(grids)} probability grids written to {out}")


if __name__ == "__main__":
    main()
