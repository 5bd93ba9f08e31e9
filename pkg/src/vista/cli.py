"""Command-line entry point: `vista <stage> [flags]` plus `vista run-all`.

Flags always win over the config file; the fully-resolved config is printed
before anything runs and echoed into the manifest.
"""

from __future__ import annotations

import json
import sys

import click

from . import pipeline
from .errors import VistaError
from .pipeline import PipelineConfig, resolve_config, store_lock


def _common_options(fn):
    decorators = [
        click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
                     default=None, help="flat key = value config file, merged under flags"),
        click.option("--assets", "assets_dir", default=None, help="raw corpus directory"),
        click.option("--store", "store_dir", default=None, help="manifest store directory"),
        click.option("--gazetteer", default=None, help="gazetteer vocabulary file"),
        click.option("--synonyms", default=None, help="synonym table for METEOR"),
        click.option("--force", is_flag=True, default=None,
                     help="re-run a completed stage, overwriting its artifacts"),
    ]
    for dec in reversed(decorators):
        fn = dec(fn)
    return fn


def _resolve(config_path, **overrides) -> PipelineConfig:
    config = resolve_config(config_path, **overrides)
    click.echo("resolved config:")
    click.echo(json.dumps(config.to_dict(), indent=2, sort_keys=True))
    return config


def _run(stage: str, config: PipelineConfig) -> None:
    with store_lock(config.store_dir):
        result = pipeline.STAGE_RUNNERS[stage](config)
    click.echo(f"{stage}: {json.dumps(result, sort_keys=True, default=str)}")


def _fail(exc: Exception) -> None:
    click.echo(f"error: {exc}", err=True)
    sys.exit(1)


@click.group()
def main():
    """Driver-attention caption curation and evaluation pipeline."""


@main.command()
@_common_options
def ingest(config_path, **overrides):
    """Validate the raw frame/gaze corpus and build the assets index."""
    try:
        _run("ingest", _resolve(config_path, **overrides))
    except VistaError as exc:
        _fail(exc)


@main.command()
@_common_options
@click.option("--k", type=int, default=None, help="top-k pairs per video")
@click.option("--epsilon", type=float, default=None, help="KL smoothing constant")
@click.option("--bins", type=int, default=None, help="heatmap grid side before scoring")
@click.option("--split", "split_spec", default=None,
              help="train/val/test counts, e.g. 80/20/81")
@click.option("--split-seed", "split_seed", type=int, default=None)
def select(config_path, split_spec, **overrides):
    """Score attention shifts, keep the top-k pairs, assign splits."""
    try:
        if split_spec:
            parts = [int(p) for p in split_spec.split("/")]
            if len(parts) != 3:
                raise VistaError(f"--split wants train/val/test, got {split_spec!r}")
            overrides["split_train"], overrides["split_val"], overrides["split_test"] = parts
        _run("select", _resolve(config_path, **overrides))
    except VistaError as exc:
        _fail(exc)


@main.command()
@_common_options
@click.option("--transport", type=click.Choice(["replay", "http"]), default=None)
@click.option("--replay-dir", "replay_dir", default=None, help="canned responses directory")
def draft(config_path, **overrides):
    """Request caption drafts from the configured VLM endpoint."""
    try:
        _run("draft", _resolve(config_path, **overrides))
    except VistaError as exc:
        _fail(exc)


@main.command()
@_common_options
@click.option("--transport", type=click.Choice(["replay", "http"]), default=None)
@click.option("--replay-dir", "replay_dir", default=None)
def probe(config_path, **overrides):
    """Ask the five observation-grounded questions per sample."""
    try:
        _run("probe", _resolve(config_path, **overrides))
    except VistaError as exc:
        _fail(exc)


@main.command()
@_common_options
@click.option("--references", default=None, help="reference captions JSONL")
@click.option("--probe-references", "probe_references", default=None)
@click.option("--eval-split", "eval_split", default=None,
              type=click.Choice(["all", "train", "val", "test"]))
@click.option("--system-id", "system_id", default=None)
@click.option("--omega", type=float, default=None, help="ParaScore divergence weight")
@click.option("--ablate", "ablations", multiple=True,
              type=click.Choice(["skip_human_refinement", "drop_future_gaze"]),
              help="ablation toggles (repeatable)")
def evaluate(config_path, ablations, **overrides):
    """Score candidate captions against references; write report.json/csv."""
    try:
        for toggle in ablations:
            overrides[toggle] = True
        _run("evaluate", _resolve(config_path, **overrides))
    except VistaError as exc:
        _fail(exc)


@main.command(name="lora-sim")
@_common_options
@click.option("--preset", "lora_preset", type=click.Choice(sorted(pipeline.PRESETS)),
              default=None, help="training preset")
@click.option("--rank", "lora_rank", type=int, default=None, help="override adapter rank")
@click.option("--alpha", "lora_alpha", type=float, default=None, help="override scaling alpha")
def lora_sim(config_path, **overrides):
    """Run the toy adapter trainer and write its trace CSV + JSON summary."""
    try:
        _run("lora-sim", _resolve(config_path, **overrides))
    except VistaError as exc:
        _fail(exc)


@main.command()
@_common_options
@click.option("--host", "serve_host", default=None)
@click.option("--port", "serve_port", type=int, default=None)
@click.option("--allow-any-split-ratings", is_flag=True, default=False)
def serve(config_path, allow_any_split_ratings, **overrides):
    """Serve the human review API (token via VISTA_REVIEW_TOKEN)."""
    try:
        config = _resolve(config_path, **overrides)
        from .service import serve as run_service

        store = pipeline.open_store(config)
        click.echo(f"serving review API on {config.serve_host}:{config.serve_port}")
        run_service(store, host=config.serve_host, port=config.serve_port,
                    allow_any_split_ratings=allow_any_split_ratings)
    except VistaError as exc:
        _fail(exc)


@main.command()
@_common_options
def export(config_path, **overrides):
    """Export approved captions as flat (image, caption) training pairs."""
    try:
        _run("export", _resolve(config_path, **overrides))
    except VistaError as exc:
        _fail(exc)


@main.command(name="run-all")
@_common_options
@click.option("--k", type=int, default=None)
@click.option("--epsilon", type=float, default=None)
@click.option("--bins", type=int, default=None)
@click.option("--split", "split_spec", default=None)
@click.option("--split-seed", "split_seed", type=int, default=None)
@click.option("--transport", type=click.Choice(["replay", "http"]), default=None)
@click.option("--replay-dir", "replay_dir", default=None)
@click.option("--references", default=None)
@click.option("--probe-references", "probe_references", default=None)
@click.option("--refinements", default=None,
              help="scripted refinement edits JSONL (stands in for the human step)")
@click.option("--probe/--no-probe", "probe", default=None)
@click.option("--eval-split", "eval_split", default=None,
              type=click.Choice(["all", "train", "val", "test"]))
@click.option("--system-id", "system_id", default=None)
@click.option("--ablate", "ablations", multiple=True,
              type=click.Choice(["skip_human_refinement", "drop_future_gaze"]))
def run_all(config_path, split_spec, ablations, **overrides):
    """Full pipeline: ingest, select, draft, refine (or skip), evaluate."""
    try:
        if split_spec:
            parts = [int(p) for p in split_spec.split("/")]
            if len(parts) != 3:
                raise VistaError(f"--split wants train/val/test, got {split_spec!r}")
            overrides["split_train"], overrides["split_val"], overrides["split_test"] = parts
        for toggle in ablations:
            overrides[toggle] = True
        config = _resolve(config_path, **overrides)
        with store_lock(config.store_dir):
            results = pipeline.run_all(config)
        click.echo(json.dumps(results, indent=2, sort_keys=True, default=str))
    except VistaError as exc:
        _fail(exc)


if __name__ == "__main__":
    main()
