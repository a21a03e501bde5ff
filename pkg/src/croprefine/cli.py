"""Command-line entry point: one subcommand per pipeline stage plus a
synthetic fixture generator and a run-everything command."""
from __future__ import annotations

import logging
import sys
from pathlib import Path

import click

from .manifest import ManifestError, PipelineManifest
from .pipeline import STAGES, run_stage
from .synthetic import write_fixture

EXIT_VALIDATION = 1
EXIT_RUNTIME = 2

LOGGER = logging.getLogger("croprefine")


@click.group()
@click.option("--manifest", "manifest_path", type=click.Path(path_type=Path), default=None,
              help="Pipeline manifest (JSON or TOML).")
@click.option("--jobs", type=int, default=1, show_default=True,
              help="Worker processes for per-grid fan-out (1 = serial).")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--log-level", default="INFO", show_default=True,
              type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False))
@click.pass_context
def main(ctx: click.Context, manifest_path: Path | None, jobs: int, seed: int, log_level: str):
    """Refine coarse crop labels with multi-temporal composites and
    evaluate the result against the reference product."""
    logging.basicConfig(level=getattr(logging, log_level.upper()),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    ctx.obj = {"manifest_path": manifest_path, "jobs": jobs, "seed": seed}


def _run(ctx: click.Context, stage: str, force: bool = False) -> None:
    manifest_path = ctx.obj["manifest_path"]
    if manifest_path is None:
        click.echo("error: --manifest is required for pipeline stages", err=True)
        sys.exit(EXIT_VALIDATION)
    try:
        manifest = PipelineManifest.from_file(manifest_path)
        entry = run_stage(manifest, stage, seed=ctx.obj["seed"], force=force, jobs=ctx.obj["jobs"])
    except (ManifestError, FileNotFoundError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)
    except Exception as exc:  # runtime failure
        LOGGER.exception("stage %s failed", stage)
        click.echo(f"runtime failure in stage {stage}: {exc}", err=True)
        sys.exit(EXIT_RUNTIME)
    status = "cached" if entry.cached else f"{len(entry.outputs)} outputs, {entry.duration_s:.2f}s"
    click.echo(f"{stage}: {status}")


def _stage_command(stage: str, help_text: str):
    @main.command(name=stage, help=help_text)
    @click.option("--force", is_flag=True, help="Ignore the cache and recompute.")
    @click.pass_context
    def _cmd(ctx: click.Context, force: bool):
        _run(ctx, stage, force)
    return _cmd


_stage_command("composite", "Build cloud-filtered bi-weekly composites and tile them into grids.")
_stage_command("prep-labels", "Merge, erode, and despeckle the raw reference labels into grid files.")
_stage_command("curate", "Select grids with enough known and crop pixels.")
_stage_command("split", "Assign accepted grids to train/val/test.")
_stage_command("refine", "Predict class probabilities and region-grow refined labels.")
_stage_command("evaluate", "Compare refined labels against the reference and write report tables.")
_stage_command("report", "Render figures from the evaluation tables.")
_stage_command("chips", "Export PNG triplets for visual audit.")


@main.command(name="run")
@click.option("--force", is_flag=True, help="Ignore the cache and recompute every stage.")
@click.pass_context
def run_all(ctx: click.Context, force: bool):
    """Run every stage in order."""
    for stage in STAGES:
        _run(ctx, stage, force)


@main.command(name="make-fixture")
@click.argument("directory", type=click.Path(path_type=Path))
@click.option("--size", type=int, default=128, show_default=True)
@click.option("--grid-size", type=int, default=32, show_default=True)
@click.option("--classes", "num_classes", type=int, default=4, show_default=True)
@click.option("--windows", "num_windows", type=int, default=24, show_default=True)
@click.option("--speckle", type=float, default=0.15, show_default=True)
@click.pass_context
def make_fixture(ctx: click.Context, directory: Path, size: int, grid_size: int,
                 num_classes: int, num_windows: int, speckle: float):
    """Write a synthetic desk-scale dataset with its own manifest."""
    summary = write_fixture(
        directory, size=size, grid_size=grid_size, num_classes=num_classes,
        num_windows=num_windows, speckle_fraction=speckle, seed=ctx.obj["seed"] or 7,
    )
    click.echo(f"fixture written; manifest at {summary['manifest']}")


if __name__ == "__main__":
    main()
