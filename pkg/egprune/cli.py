"""
The ``egp`` command line.

```
egp train   --config exp.json --out runs/dense
egp prune   --config exp.json --checkpoint runs/dense/checkpoint.json --out runs/egp
egp reduce  --config exp.json --checkpoint runs/egp/pruned.json --out runs/egp
egp scratch --config exp.json --checkpoint runs/egp/reduced.json --out runs/scratch
egp report  runs/*/*_record.json --out runs/report
egp analyze --config exp.json --checkpoint runs/egp/pruned.json --out runs/analysis
```

Exit codes: 0 on success, 1 when a command fails at run time, 2 on an invalid
config or command line. Output files are only written once a command's
computation has succeeded.
"""

from dataclasses import replace
import functools
import logging
from pathlib import Path
import time
from typing import Any, Callable, Optional, Sequence, TypeVar

import click

from .checkpoint import load_checkpoint, save_checkpoint
from .config import ExperimentConfig, load_config
from .depth_reduce import save_plan
from .egp import sparsity, write_iteration_log_csv
from .entropy import write_entropy_csv, write_layer_summary_csv
from .errors import ConfigError, EGPError
from .network import Network
from .pipeline import (
    Splits,
    entropy_report,
    load_splits,
    model_name,
    run_prune,
    run_reduce,
    run_scratch,
    run_train,
    top1,
)
from .report import (
    ExperimentRecord,
    plot_state_distribution,
    plot_trajectory,
    write_ablation_csv,
    write_results_csv,
    write_state_distribution_csv,
)
from .training import write_history_csv

logger = logging.getLogger(__name__)

F = TypeVar("F", bound=Callable[..., Any])

EXIT_RUNTIME = 1
EXIT_CONFIG = 2


def handle_errors(func: F) -> F:
    """Turn library errors into messages and exit codes."""

    @functools.wraps(func)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        try:
            return func(*args, **kwargs)
        except ConfigError as exc:
            click.echo(f"Config error: {exc}", err=True)
            raise SystemExit(EXIT_CONFIG) from None
        except (EGPError, OSError) as exc:
            click.echo(f"Error: {exc}", err=True)
            raise SystemExit(EXIT_RUNTIME) from None

    return wrapper  # type: ignore[return-value]


def config_option(func: F) -> F:
    return click.option(
        "--config",
        "config_path",
        required=True,
        type=click.Path(exists=True, dir_okay=False, path_type=Path),
        help="Experiment config (JSON).",
    )(func)


def checkpoint_option(func: F) -> F:
    return click.option(
        "--checkpoint",
        "checkpoint_path",
        required=True,
        type=click.Path(exists=True, dir_okay=False, path_type=Path),
        help="Network checkpoint (JSON).",
    )(func)


def out_option(func: F) -> F:
    return click.option(
        "--out",
        "out_dir",
        default=".",
        show_default=True,
        type=click.Path(file_okay=False, path_type=Path),
        help="Output directory.",
    )(func)


def seed_option(func: F) -> F:
    return click.option(
        "--seed",
        type=click.IntRange(min=0),
        default=None,
        help="Override the config seed.",
    )(func)


def split_option(func: F) -> F:
    return click.option(
        "--split",
        type=click.Choice(["train", "test", "holdout"]),
        default=None,
        help="Split for activation statistics (overrides entropy_split).",
    )(func)


def _load(
    config_path: Path, seed: Optional[int], mode: Optional[str] = None, split: Optional[str] = None
) -> ExperimentConfig:
    cfg = load_config(config_path).with_overrides(seed=seed, mode=mode)
    if split is not None:
        cfg = replace(cfg, entropy_split=split)
    return cfg


def _record(cfg: ExperimentConfig, kind: str, net: Network, mode: str) -> ExperimentRecord:
    return ExperimentRecord(
        kind=kind,
        config_snapshot=cfg.raw_text,
        model=net.metadata.get("model", model_name(net)),
        dataset=net.metadata.get("dataset", ""),
        mode=mode,
        seed=cfg.seed,
        topology=net.topology(),
        sparsity_pct=sparsity(net),
        layers_total=len(net.relu_layers()),
    )


def _finish(record: ExperimentRecord, started: float, out_dir: Path, name: str) -> Path:
    record.wall_clock_seconds = round(time.perf_counter() - started, 3)
    return record.save(out_dir / name)


@click.group()
@click.option("-v", "--verbose", count=True, help="Log progress (-v) or details (-vv).")
@click.version_option(package_name="EGPrune")
def cli(verbose: int) -> None:
    """Entropy guided pruning and depth reduction of small ReLU networks."""
    level = logging.WARNING if verbose == 0 else logging.INFO if verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", force=True)


@cli.command("train")
@config_option
@out_option
@seed_option
@handle_errors
def cmd_train(config_path: Path, out_dir: Path, seed: Optional[int]) -> None:
    """Train the configured model from scratch."""
    started = time.perf_counter()
    cfg = _load(config_path, seed)
    net, history, splits = run_train(cfg)
    record = _record(cfg, "train", net, "dense")
    record.top1 = top1(net, splits)
    record.set_entropy_report(entropy_report(cfg, net, splits.entropy))

    out_dir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(net, out_dir / "checkpoint.json")
    write_history_csv(history, out_dir / "train_history.csv")
    _finish(record, started, out_dir, "train_record.json")
    click.echo(f"Trained {record.model}: top-1 {record.top1:.4f} -> {out_dir / 'checkpoint.json'}")


@cli.command("prune")
@config_option
@checkpoint_option
@out_option
@seed_option
@click.option("--mode", type=click.Choice(["egp", "vanilla"]), default=None, help="Pruning mode.")
@handle_errors
def cmd_prune(
    config_path: Path,
    checkpoint_path: Path,
    out_dir: Path,
    seed: Optional[int],
    mode: Optional[str],
) -> None:
    """Iteratively prune a trained checkpoint."""
    started = time.perf_counter()
    cfg = _load(config_path, seed, mode=mode)
    net = load_checkpoint(checkpoint_path)
    pruned, logs, splits = run_prune(cfg, net)
    record = _record(cfg, "prune", pruned, cfg.prune.mode.value)
    for log in logs:
        record.append_iteration(log)
    record.top1 = top1(pruned, splits)
    record.accuracy_before = top1(net, splits)
    record.set_entropy_report(entropy_report(cfg, pruned, splits.entropy))

    out_dir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(pruned, out_dir / "pruned.json")
    write_iteration_log_csv(logs, out_dir / "prune_log.csv")
    _finish(record, started, out_dir, "prune_record.json")
    zero = logs[-1].layers_zero_entropy if logs else 0
    click.echo(
        f"Pruned ({cfg.prune.mode.value}) to {record.sparsity_pct:.4f}% sparsity, "
        f"{zero}/{record.layers_total} zero-entropy layers, top-1 {record.top1:.4f}"
    )


@cli.command("reduce")
@config_option
@checkpoint_option
@out_option
@seed_option
@split_option
@handle_errors
def cmd_reduce(
    config_path: Path,
    checkpoint_path: Path,
    out_dir: Path,
    seed: Optional[int],
    split: Optional[str],
) -> None:
    """Remove zero-entropy neurons and layers, verified on the statistics split."""
    started = time.perf_counter()
    cfg = _load(config_path, seed, split=split)
    net = load_checkpoint(checkpoint_path)
    result, report, splits = run_reduce(cfg, net)
    plan = result.plan

    out_dir.mkdir(parents=True, exist_ok=True)
    if not result.accepted:
        save_plan(plan, out_dir / "fusion_plan.json")
        click.echo(f"Reduction rejected: {result.diagnostic}", err=True)
        raise SystemExit(EXIT_RUNTIME)

    reduced = result.network
    reduced.metadata["source_checkpoint"] = checkpoint_path.name
    record = _record(cfg, "reduce", reduced, net.metadata.get("prune_mode", "dense"))
    record.sparsity_pct = sparsity(net)
    record.layers_total = len(net.relu_layers())
    record.set_entropy_report(report)
    record.set_fusion_plan(plan)
    record.accuracy_before = top1(net, splits)
    record.accuracy_after = top1(reduced, splits)
    record.top1 = record.accuracy_after

    save_checkpoint(reduced, out_dir / "reduced.json")
    save_plan(plan, out_dir / "fusion_plan.json")
    _finish(record, started, out_dir, "reduce_record.json")
    click.echo(
        f"Layers removed: {plan.nonlinear_depth_removed}/{record.layers_total} "
        f"(fused {plan.fused_count}, folded {plan.folded_count}, "
        f"emptied {plan.emptied_count}, "
        f"linearized {plan.layers_linearized_count}); "
        f"top-1 {record.accuracy_before:.4f} -> {record.accuracy_after:.4f}"
    )


@cli.command("scratch")
@config_option
@checkpoint_option
@out_option
@seed_option
@handle_errors
def cmd_scratch(
    config_path: Path, checkpoint_path: Path, out_dir: Path, seed: Optional[int]
) -> None:
    """Train the architecture of a (reduced) checkpoint from a fresh initialization."""
    started = time.perf_counter()
    cfg = _load(config_path, seed)
    topology = load_checkpoint(checkpoint_path).topology()
    net, history, splits = run_scratch(cfg, topology)
    record = _record(cfg, "scratch", net, "scratch")
    record.top1 = top1(net, splits)

    out_dir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(net, out_dir / "scratch.json")
    write_history_csv(history, out_dir / "scratch_history.csv")
    _finish(record, started, out_dir, "scratch_record.json")
    click.echo(f"Trained {record.model} from scratch: top-1 {record.top1:.4f}")


@cli.command("report")
@click.argument(
    "records", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path)
)
@out_option
@handle_errors
def cmd_report(records: Sequence[Path], out_dir: Path) -> None:
    """Build result tables and charts from experiment records."""
    loaded = [ExperimentRecord.load(path) for path in records]
    reduced = [rec for rec in loaded if rec.kind == "reduce"]
    scratch = [rec for rec in loaded if rec.kind == "scratch"]
    if reduced and scratch and reduced[-1].topology != scratch[-1].topology:
        raise EGPError(
            f"Ablation needs matching topologies: {reduced[-1].model} vs {scratch[-1].model}."
        )

    out_dir.mkdir(parents=True, exist_ok=True)
    written = [write_results_csv(loaded, out_dir / "results.csv")]
    if any(rec.entropy_report for rec in loaded):
        written.append(write_state_distribution_csv(loaded, out_dir / "state_distribution.csv"))
        written.append(plot_state_distribution(loaded, out_dir / "state_distribution.svg"))
    if any(rec.iterations for rec in loaded):
        written.append(plot_trajectory(loaded, out_dir / "trajectory.svg"))
    if reduced and scratch:
        written.append(write_ablation_csv(reduced[-1], scratch[-1], out_dir / "ablation.csv"))
    for path in written:
        click.echo(f"Wrote {path}")


@cli.command("analyze")
@config_option
@checkpoint_option
@out_option
@seed_option
@split_option
@handle_errors
def cmd_analyze(
    config_path: Path,
    checkpoint_path: Path,
    out_dir: Path,
    seed: Optional[int],
    split: Optional[str],
) -> None:
    """Entropy report of any checkpoint: per-neuron CSV, per-layer CSV and chart."""
    cfg = _load(config_path, seed, split=split)
    net = load_checkpoint(checkpoint_path)
    splits: Splits = load_splits(cfg)
    report = entropy_report(cfg, net, splits.entropy)
    record = _record(cfg, "analyze", net, net.metadata.get("prune_mode", "dense"))
    record.set_entropy_report(report)

    out_dir.mkdir(parents=True, exist_ok=True)
    write_entropy_csv(report, out_dir / "entropy.csv")
    write_layer_summary_csv(report, out_dir / "layer_summary.csv")
    if record.entropy_report:
        plot_state_distribution([record], out_dir / "state_distribution.svg")
    zero = report.zero_entropy_layers()
    click.echo(f"Zero-entropy layers: {len(zero)}/{record.layers_total} {zero}")


def main() -> None:
    cli(prog_name="egp")


__all__ = ["cli", "main"]
