"""Command-line entry point.

Subcommands: synth, convert-wigesture, train, eval, ablate, plot.
Exit codes: 0 success, 2 config error, 3 data error, 4 runtime error.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click
import numpy as np
import yaml

from .config import METRICS, SCENARIOS, LossConfig, ScenarioConfig
from .data import convert_wigesture as convert_wigesture_fn
from .data.synth import make_domain_specs, write_synthetic_dataset
from .errors import (
    CheckpointError,
    ConfigError,
    CoverageError,
    DataError,
    DimensionError,
    InsufficientSupportError,
    SchemaError,
    SiamfiError,
    UninitializedNormalizerError,
)
from . import evaluation, pipeline, training

RUN_MANIFEST_VERSION = 1

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_RUNTIME = 4


def _exit_code(exc: Exception) -> int:
    if isinstance(exc, (ConfigError, SchemaError)):
        return EXIT_CONFIG
    if isinstance(
        exc, (DataError, DimensionError, InsufficientSupportError, UninitializedNormalizerError)
    ):
        return EXIT_DATA
    return EXIT_RUNTIME


def _handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except SiamfiError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(_exit_code(exc))
        except Exception as exc:  # unexpected runtime failure
            click.echo(f"runtime error: {exc}", err=True)
            sys.exit(EXIT_RUNTIME)

    return wrapper


def _write_run_manifest(out_dir: Path, command: str, seed: int, config_path: str | None) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format_version": RUN_MANIFEST_VERSION,
        "command": command,
        "argv": sys.argv[1:],
        "config_path": config_path,
        "seed": seed,
        "output_directory": str(out_dir),
    }
    with open(out_dir / "run_manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)


def _load_config(config_path: str | None, overrides: dict) -> ScenarioConfig:
    base: dict = {}
    if config_path:
        with open(config_path) as fh:
            doc = yaml.safe_load(fh) or {}
        if not isinstance(doc, dict):
            raise ConfigError(f"config file {config_path} must be a mapping")
        base.update(doc)
    base.update({k: v for k, v in overrides.items() if v is not None})
    loss_keys = {"alpha", "mmd_weight", "kernel_count"}
    loss_over = {k: base.pop(k) for k in list(base) if k in loss_keys}
    loss = base.pop("loss", {}) or {}
    loss.update(loss_over)
    if "alpha" in loss and loss["alpha"] != "auto":
        loss["alpha"] = float(loss["alpha"])
    try:
        return ScenarioConfig.from_dict({**base, "loss": loss})
    except TypeError as exc:
        raise ConfigError(f"bad config field: {exc}") from exc


@click.group()
def main():
    """Cross-domain CSI classification: synthesis, training, evaluation."""


@main.command()
@click.option("--domains", default=2, show_default=True, help="Number of synthetic domains.")
@click.option("--classes", "n_classes", default=4, show_default=True)
@click.option("--per-class", default=50, show_default=True, help="Samples per class per domain.")
@click.option("--seed", default=0, show_default=True)
@click.option("--noise-std", default=0.05, show_default=True)
@click.option("--subcarriers", "-D", "d_sub", default=52, show_default=True)
@click.option("--packets", "-t", "t_len", default=100, show_default=True, help="Packets per sample.")
@click.option("--sample-rate", default=100.0, show_default=True)
@click.option("--out", required=True, type=click.Path())
@_handle_errors
def synth(domains, n_classes, per_class, seed, noise_std, d_sub, t_len, sample_rate, out):
    """Generate a deterministic multi-domain synthetic dataset."""
    if noise_std < 0:
        raise ConfigError(f"--noise-std must be >= 0, got {noise_std}")
    out_dir = Path(out)
    _write_run_manifest(out_dir, "synth", seed, None)
    base_freq = sample_rate / 16.0
    specs = make_domain_specs(
        domains, n_classes, noise_std=noise_std, sample_rate=sample_rate,
        base_freq_hz=base_freq, freq_step_hz=base_freq, base_seed=seed,
    )
    manifest_path = write_synthetic_dataset(specs, per_class, seed, out_dir, D=d_sub, t=t_len)
    click.echo(f"wrote dataset manifest: {manifest_path}")


@main.command("convert-wigesture")
@click.option("--src", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--subcarriers", "-D", "d_sub", default=None, type=int)
@_handle_errors
def convert_wigesture(src, out, d_sub):
    """Best-effort conversion of the public WiGesture CSV layout."""
    manifest_path = convert_wigesture_fn(src, out, D=d_sub)
    click.echo(f"wrote dataset manifest: {manifest_path}")


def _scenario_options(fn):
    options = [
        click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True)),
        click.option("--scenario", type=click.Choice(SCENARIOS), default=None),
        click.option("--metric", type=click.Choice(METRICS), default=None),
        click.option("--k", type=int, default=None, help="Shots per class."),
        click.option("--target-domain", type=int, default=None),
        click.option("--new-class", type=int, default=None),
        click.option("--epochs", type=int, default=None),
        click.option("--batch-size", type=int, default=None),
        click.option("--learning-rate", type=float, default=None),
        click.option("--seed", type=int, default=None),
        click.option("--use-mmd/--no-mmd", "use_mmd", default=None),
        click.option("--use-unlabeled-target", is_flag=True, default=None),
        click.option("--alpha", default=None, help="Positive-pair weight or 'auto'."),
        click.option("--mmd-weight", type=float, default=None),
        click.option("--mmd-kernels", "kernel_count", type=int, default=None),
        click.option("--config", "config_path", type=click.Path(exists=True), default=None),
    ]
    for opt in reversed(options):
        fn = opt(fn)
    return fn


@main.command("train")
@_scenario_options
@click.option("--out", required=True, type=click.Path())
@_handle_errors
def cmd_train(manifest_path, out, config_path, **overrides):
    """Train one scenario run; writes checkpoint, templates, metrics."""
    config = _load_config(config_path, overrides)
    out_dir = Path(out)
    _write_run_manifest(out_dir, "train", config.seed, config_path)
    with open(out_dir / "config.yaml", "w") as fh:
        yaml.safe_dump(config.to_dict(), fh, sort_keys=False)
    manifest, splits, _ = pipeline.prepare_splits(manifest_path, config)
    n_classes = len(manifest.classes)
    state, templates = training.train(config, splits, n_classes)
    training.save_checkpoint(state, out_dir / "checkpoint.pkl")
    templates.save(out_dir / "templates.pkl")
    with open(out_dir / "loss_log.csv", "w") as fh:
        fh.write("step,kind,loss,mmd\n")
        for r in state.loss_log:
            fh.write(f"{r.step},{r.kind},{r.loss:.8f},{r.mmd:.8f}\n")
    report = evaluation.evaluate(
        splits.test, templates, state.model,
        metric=config.resolved_metric, scenario=config.scenario, seed=config.seed,
    )
    report.save(out_dir / "metrics.json")
    click.echo(f"test accuracy: {report.accuracy:.4f}")
    click.echo(f"run directory: {out_dir}")


@main.command("eval")
@click.option("--run", "run_dir", required=True, type=click.Path(exists=True))
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--out", default=None, type=click.Path())
@_handle_errors
def cmd_eval(run_dir, manifest_path, out):
    """Re-evaluate a finished training run on its test split."""
    run_dir = Path(run_dir)
    ckpt = run_dir / "checkpoint.pkl"
    tmpl = run_dir / "templates.pkl"
    for p in (ckpt, tmpl):
        if not p.exists():
            raise CheckpointError(f"missing run artifact: {p}")
    state = training.load_checkpoint(ckpt)
    templates = evaluation.TemplateSet.load(tmpl)
    config = state.config
    _, splits, _ = pipeline.prepare_splits(manifest_path, config)
    try:
        report = evaluation.evaluate(
            splits.test, templates, state.model,
            metric=config.resolved_metric, scenario=config.scenario, seed=config.seed,
        )
    except CoverageError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_RUNTIME)
    out_path = Path(out) if out else run_dir / "metrics.json"
    report.save(out_path)
    click.echo(f"test accuracy: {report.accuracy:.4f}")


@main.command("ablate")
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--grid", "grid_path", required=True, type=click.Path(exists=True),
              help="YAML list of rows: {label, template_method, <config fields>}.")
@click.option("--out", required=True, type=click.Path())
@_handle_errors
def cmd_ablate(manifest_path, grid_path, out):
    """Run an ablation grid and persist the accuracy table."""
    with open(grid_path) as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, list):
        raise ConfigError("grid file must be a YAML list of row mappings")
    out_dir = Path(out)
    _write_run_manifest(out_dir, "ablate", 0, grid_path)
    specs = []
    for i, row in enumerate(doc):
        if not isinstance(row, dict):
            raise ConfigError(f"grid row {i} must be a mapping")
        row = dict(row)
        label = str(row.pop("label", f"row{i}"))
        method = row.pop("template_method", "weight-net")
        config = _load_config(None, row)
        specs.append(evaluation.AblationSpec(label=label, config=config, template_method=method))
    # All rows share one windowing pass; splitting and normalization
    # (training-split statistics only) happen per row.
    manifest, samples = pipeline.windowed_samples(manifest_path)
    rows = evaluation.run_ablation(specs, samples, len(manifest.classes), out_dir / "ablation.csv")
    for r in rows:
        acc = "FAILED" if r.accuracy is None else f"{r.accuracy:.4f}"
        click.echo(f"{r.label}: {acc}")
    click.echo(f"table: {out_dir / 'ablation.csv'}")


@main.command("plot")
@click.option("--table", "table_path", required=True, type=click.Path(exists=True),
              help="Ablation table CSV with a shots column.")
@click.option("--out", required=True, type=click.Path())
@click.option("--indomain-accuracy", type=float, default=None,
              help="Dashed reference line for in-domain accuracy.")
@_handle_errors
def cmd_plot(table_path, out, indomain_accuracy):
    """Render accuracy-vs-shots line charts from an ablation table."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = [r for r in evaluation.read_ablation_table(table_path) if r.accuracy is not None]
    if not rows:
        raise DataError(f"no successful rows in {table_path}")
    series: dict[tuple[str, str], list[tuple[int, float]]] = {}
    for r in rows:
        series.setdefault((r.metric, r.template_method), []).append((r.shots, r.accuracy))
    fig, ax = plt.subplots(figsize=(6, 4))
    for (metric, method), pts in sorted(series.items()):
        pts.sort()
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=f"{metric}/{method}")
    if indomain_accuracy is not None:
        ax.axhline(indomain_accuracy, linestyle="--", color="gray", label="in-domain")
    shots = sorted({r.shots for r in rows})
    ax.set_xticks(shots)
    ax.set_xlabel("shots per class")
    ax.set_ylabel("test accuracy")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out, dpi=140)
    click.echo(f"figure: {out}")


if __name__ == "__main__":
    main()
