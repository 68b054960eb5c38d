"""
Frozen-seed reference experiment comparing EGP against global magnitude
pruning on an over-provisioned blob MLP.

The hidden layers after the first carry skip connections. EGP hands most of
a round's budget to its lowest-entropy layer and empties it once the share
exceeds what the layer holds; with a skip connection the emptied layer is a
constant shift that depth reduction folds away, while the plain first layer
is held at ``prune.plain_layer_floor`` weights so the signal path survives.

Both modes start from the same trained checkpoint and prune for the same
number of iterations, so they end at identical sparsity. Each pruned model
is then depth-reduced, and the EGP-reduced topology is retrained from a
fresh initialization for the ablation. The script checks three trends:

- EGP removes at least one hidden layer while magnitude pruning removes none.
- EGP top-1 is within ``--tolerance`` of the magnitude-pruned model.
- The EGP-reduced model is at least as accurate as the same topology trained
  from scratch.

Records and the usual report files are written to ``--out``. The exit code
is 1 when a check fails. The script runs from a source checkout without
installing the package; ``pip install -e .`` works as well.

```
python scripts/reference_experiment.py --out runs/reference -v
```
"""

import json
import logging
from pathlib import Path
import sys
import time
from typing import Dict, List, Optional, Tuple

import click

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from egprune.checkpoint import save_checkpoint  # noqa: E402
from egprune.cli import EXIT_RUNTIME, handle_errors  # noqa: E402
from egprune.config import ExperimentConfig, load_config, parse_config  # noqa: E402
from egprune.depth_reduce import save_plan  # noqa: E402
from egprune.egp import sparsity, write_iteration_log_csv  # noqa: E402
from egprune.network import Network  # noqa: E402
from egprune.pipeline import (  # noqa: E402
    Splits,
    entropy_report,
    load_splits,
    run_prune,
    run_reduce,
    run_scratch,
    run_train,
    top1,
)
from egprune.report import (  # noqa: E402
    ExperimentRecord,
    plot_state_distribution,
    plot_trajectory,
    write_ablation_csv,
    write_results_csv,
    write_state_distribution_csv,
)

logger = logging.getLogger("reference_experiment")

REFERENCE_CONFIG = {
    "seed": 2024,
    "model": {"kind": "mlp", "hidden": [128, 128, 128], "residual": True},
    "data": {"source": "blobs", "n_per_class": 150, "num_classes": 5, "dim": 16, "spread": 1.5},
    "train": {"learning_rate": 0.05, "momentum": 0.9, "batch_size": 32, "epochs": 30},
    "prune": {"zeta": 0.5, "iterations": 6, "plain_layer_floor": 64, "finetune": {"epochs": 8}},
    "reduce": {"rel_tol": 1e-6, "abs_tol": 1e-12},
}


def _record(cfg: ExperimentConfig, kind: str, mode: str, net: Network) -> ExperimentRecord:
    return ExperimentRecord(
        kind=kind,
        config_snapshot=cfg.raw_text,
        model=net.metadata.get("model", ""),
        dataset=net.metadata.get("dataset", ""),
        mode=mode,
        seed=cfg.seed,
        topology=net.topology(),
        sparsity_pct=sparsity(net),
        layers_total=len(net.relu_layers()),
    )


def prune_and_reduce(
    cfg: ExperimentConfig, dense: Network, splits: Splits, out_dir: Path
) -> Tuple[ExperimentRecord, ExperimentRecord, Network]:
    """Prune `dense` in the configured mode, then reduce it; returns both records and the reduced net."""
    mode = cfg.prune.mode.value
    pruned, logs, _ = run_prune(cfg, dense, splits)
    prune_rec = _record(cfg, "prune", mode, pruned)
    for log in logs:
        prune_rec.append_iteration(log)
    prune_rec.accuracy_before = top1(dense, splits)
    prune_rec.top1 = top1(pruned, splits)
    prune_rec.set_entropy_report(entropy_report(cfg, pruned, splits.entropy))

    result, report, _ = run_reduce(cfg, pruned, splits)
    reduced = result.network
    reduce_rec = _record(cfg, "reduce", mode, reduced)
    reduce_rec.sparsity_pct = prune_rec.sparsity_pct
    reduce_rec.layers_total = prune_rec.layers_total
    reduce_rec.set_entropy_report(report)
    if result.accepted:
        reduce_rec.set_fusion_plan(result.plan)
    else:
        logger.warning("%s reduction rejected: %s", mode, result.diagnostic)
    reduce_rec.accuracy_before = prune_rec.top1
    reduce_rec.accuracy_after = top1(reduced, splits)
    reduce_rec.top1 = reduce_rec.accuracy_after

    mode_dir = out_dir / mode
    mode_dir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(pruned, mode_dir / "pruned.json")
    save_checkpoint(reduced, mode_dir / "reduced.json")
    save_plan(result.plan, mode_dir / "fusion_plan.json")
    write_iteration_log_csv(logs, mode_dir / "prune_log.csv")
    prune_rec.save(mode_dir / "prune_record.json")
    reduce_rec.save(mode_dir / "reduce_record.json")
    logger.info(
        "%s: sparsity %.4f%%, zero-entropy layers %s, layers removed %d, top-1 %.4f",
        mode,
        prune_rec.sparsity_pct,
        report.zero_entropy_layers(),
        reduce_rec.layers_removed,
        reduce_rec.top1,
    )
    return prune_rec, reduce_rec, reduced


def evaluate_trends(
    egp: ExperimentRecord,
    vanilla: ExperimentRecord,
    scratch: ExperimentRecord,
    tolerance: float,
) -> Dict[str, bool]:
    """Named pass/fail flags for the three trends the experiment is meant to show."""
    assert egp.top1 is not None and vanilla.top1 is not None and scratch.top1 is not None
    return {
        "egp removes a layer, vanilla none": egp.layers_removed >= 1 and vanilla.layers_removed == 0,
        "egp top-1 close to vanilla": egp.top1 >= vanilla.top1 - tolerance,
        "egp beats from-scratch": egp.top1 >= scratch.top1,
    }


@click.command()
@click.option(
    "--config",
    "config_path",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    default=None,
    help="Experiment config; the built-in reference config when omitted.",
)
@click.option("--out", "out_dir", type=click.Path(file_okay=False, path_type=Path), required=True)
@click.option("--seed", type=click.IntRange(min=0), default=None, help="Override the config seed.")
@click.option(
    "--tolerance",
    type=float,
    default=0.02,
    show_default=True,
    help="Largest top-1 deficit of EGP against vanilla that still passes.",
)
@click.option("-v", "--verbose", count=True)
@handle_errors
def main(
    config_path: Optional[Path], out_dir: Path, seed: Optional[int], tolerance: float, verbose: int
) -> None:
    """Run the EGP vs. magnitude pruning reference experiment."""
    level = logging.WARNING if verbose == 0 else logging.INFO if verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", force=True)

    if config_path is None:
        cfg = parse_config(json.dumps(REFERENCE_CONFIG, indent=2))
    else:
        cfg = load_config(config_path)
    cfg = cfg.with_overrides(seed=seed)
    started = time.perf_counter()

    splits = load_splits(cfg)
    dense, _, _ = run_train(cfg, splits)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(dense, out_dir / "dense.json")
    dense_rec = _record(cfg, "train", "dense", dense)
    dense_rec.top1 = top1(dense, splits)
    dense_rec.set_entropy_report(entropy_report(cfg, dense, splits.entropy))
    dense_rec.save(out_dir / "train_record.json")

    records: List[ExperimentRecord] = [dense_rec]
    reduced_by_mode: Dict[str, ExperimentRecord] = {}
    egp_reduced: Optional[Network] = None
    for mode in ("egp", "vanilla"):
        prune_rec, reduce_rec, reduced = prune_and_reduce(
            cfg.with_overrides(mode=mode), dense, splits, out_dir
        )
        records += [prune_rec, reduce_rec]
        reduced_by_mode[mode] = reduce_rec
        if mode == "egp":
            egp_reduced = reduced
    assert egp_reduced is not None

    scratch_net, _, _ = run_scratch(cfg, egp_reduced.topology(), splits)
    scratch_rec = _record(cfg, "scratch", "scratch", scratch_net)
    scratch_rec.top1 = top1(scratch_net, splits)
    scratch_rec.save(out_dir / "scratch_record.json")
    records.append(scratch_rec)

    report_dir = out_dir / "report"
    report_dir.mkdir(parents=True, exist_ok=True)
    write_results_csv(records, report_dir / "results.csv")
    write_state_distribution_csv(records, report_dir / "state_distribution.csv")
    plot_state_distribution(records, report_dir / "state_distribution.svg")
    plot_trajectory(records, report_dir / "trajectory.svg")
    write_ablation_csv(reduced_by_mode["egp"], scratch_rec, report_dir / "ablation.csv")

    egp, vanilla = reduced_by_mode["egp"], reduced_by_mode["vanilla"]
    click.echo(f"{'mode':<10}{'sparsity':>12}{'removed':>10}{'top-1':>10}")
    for rec in (egp, vanilla):
        click.echo(
            f"{rec.mode:<10}{rec.sparsity_pct:>11.4f}%"
            f"{f'{rec.layers_removed}/{rec.layers_total}':>10}{rec.top1:>10.4f}"
        )
    click.echo(f"{'scratch':<10}{'':>12}{'':>10}{scratch_rec.top1:>10.4f}")
    click.echo(f"dense top-1 {dense_rec.top1:.4f}, {time.perf_counter() - started:.1f}s")

    checks = evaluate_trends(egp, vanilla, scratch_rec, tolerance)
    for name, ok in checks.items():
        click.echo(f"[{'PASS' if ok else 'FAIL'}] {name}")
    if not all(checks.values()):
        raise SystemExit(EXIT_RUNTIME)


if __name__ == "__main__":
    main()
