"""
Experiment records and the reports built from them.

Every command writes an `ExperimentRecord` (JSON). `egp report` turns a set of
records into:

- a results table (model, dataset, sparsity, mode, layers removed, top-1),
- per-layer neuron state counts (mixed / always-OFF / always-ON) as CSV and a
  stacked bar chart,
- a pruned-versus-from-scratch ablation table when both kinds of record are
  present, and
- a chart of sparsity against zero-entropy layers across pruning iterations.

Charts are drawn with matplotlib and saved as SVG with a fixed hash salt and no
date stamp, so the same records always give the same bytes.
"""

import csv
from dataclasses import asdict, dataclass, field, fields
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import matplotlib.pyplot as plt

from .depth_reduce import FusionPlan, plan_to_dict
from .egp import IterationLog
from .entropy import EntropyReport
from .errors import EGPError

logger = logging.getLogger(__name__)

PathType = Union[Path, str]

CHART_STYLE = {
    "font.family": "DejaVu Sans",
    "font.size": 10,
    "axes.titlesize": 12,
    "axes.titleweight": "bold",
    "axes.labelsize": 11,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.fontsize": 9,
    "legend.frameon": False,
    "figure.facecolor": "white",
    "axes.facecolor": "white",
    "svg.fonttype": "none",
    "svg.hashsalt": "egprune",
}

STATE_COLORS = {"mixed": "#9e9e9e", "always_off": "#1f4e79", "always_on": "#e07b00"}


class ReportError(EGPError):
    """Records cannot be combined into the requested report."""


@dataclass
class ExperimentRecord:
    """
    Everything one command run produced, in a JSON-friendly form.

    Iteration rows only ever grow through `append_iteration`. `config_snapshot`
    is the config file text exactly as read.
    """

    kind: str
    config_snapshot: str
    model: str
    dataset: str
    mode: str
    seed: int
    topology: List[Dict[str, Any]] = field(default_factory=list)
    sparsity_pct: float = 0.0
    top1: Optional[float] = None
    iterations: List[Dict[str, Any]] = field(default_factory=list)
    entropy_report: List[Dict[str, Any]] = field(default_factory=list)
    fusion_plan: Optional[Dict[str, Any]] = None
    layers_removed: int = 0
    layers_total: int = 0
    accuracy_before: Optional[float] = None
    accuracy_after: Optional[float] = None
    wall_clock_seconds: float = 0.0

    def append_iteration(self, log: IterationLog) -> None:
        self.iterations.append(log.as_row())

    def set_entropy_report(self, report: EntropyReport) -> None:
        self.entropy_report = report.summary()

    def set_fusion_plan(self, plan: FusionPlan) -> None:
        self.fusion_plan = plan_to_dict(plan)
        self.layers_removed = plan.nonlinear_depth_removed

    @property
    def label(self) -> str:
        return f"{self.model} {self.mode} ({self.kind})"

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: Dict[str, Any]) -> "ExperimentRecord":
        known = {f.name for f in fields(cls)}
        try:
            return cls(**{k: v for k, v in doc.items() if k in known})
        except TypeError as exc:
            raise ReportError(f"Malformed experiment record: {exc}") from exc

    def save(self, path: PathType) -> Path:
        path = Path(path).resolve()
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")
        return path

    @classmethod
    def load(cls, path: PathType) -> "ExperimentRecord":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ReportError(f"Record {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(doc)


def write_results_csv(records: Sequence[ExperimentRecord], path: PathType) -> Path:
    """One row per record: model, dataset, sparsity, mode, layers removed, top-1."""
    path = Path(path).resolve()
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["model", "dataset", "sparsity", "mode", "layers_removed", "layers_total", "top1"]
        )
        for rec in records:
            writer.writerow(
                [
                    rec.model,
                    rec.dataset,
                    f"{rec.sparsity_pct:.4f}",
                    rec.mode,
                    rec.layers_removed,
                    rec.layers_total,
                    "" if rec.top1 is None else f"{rec.top1:.4f}",
                ]
            )
    return path


def state_rows(record: ExperimentRecord) -> List[Dict[str, Any]]:
    """Per-layer stacked state counts of a record's entropy report."""
    return [
        {
            "layer_index": row["layer_index"],
            "n_neurons": row["n_neurons"],
            "mixed": row["n_mixed"],
            "always_off": row["n_always_off"],
            "always_on": row["n_always_on"],
        }
        for row in record.entropy_report
    ]


def write_state_distribution_csv(records: Sequence[ExperimentRecord], path: PathType) -> Path:
    path = Path(path).resolve()
    columns = ["record", "layer_index", "n_neurons", "mixed", "always_off", "always_on"]
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        for k, rec in enumerate(records):
            for row in state_rows(rec):
                writer.writerow({"record": k, **row})
    return path


def _save_svg(fig: Any, path: Path) -> Path:
    fig.savefig(path, format="svg", metadata={"Date": None}, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_state_distribution(records: Sequence[ExperimentRecord], path: PathType) -> Path:
    """
    Stacked bar chart of neuron states per layer, one panel per record.

    Parameters
    ----------
    records : sequence of ExperimentRecord
        Records carrying an entropy report.
    path : str | Path
        Output SVG path.

    Raises
    ------
    ReportError
        If no record carries an entropy report.
    """
    usable = [rec for rec in records if rec.entropy_report]
    if not usable:
        raise ReportError("No record carries an entropy report.")
    path = Path(path).resolve()
    with plt.rc_context(CHART_STYLE):
        fig, axes = plt.subplots(
            1, len(usable), figsize=(4.5 * len(usable), 3.5), squeeze=False
        )
        for ax, rec in zip(axes[0], usable):
            rows = state_rows(rec)
            x = list(range(len(rows)))
            bottom = [0] * len(rows)
            for state, color in STATE_COLORS.items():
                heights = [row[state] for row in rows]
                ax.bar(x, heights, bottom=bottom, color=color, label=state.replace("_", "-"))
                bottom = [b + h for b, h in zip(bottom, heights)]
            ax.set_xticks(x)
            ax.set_xticklabels([str(row["layer_index"]) for row in rows])
            ax.set_xlabel("layer")
            ax.set_ylabel("neurons")
            ax.set_title(rec.label)
        axes[0][0].legend(loc="upper right")
        return _save_svg(fig, path)


def plot_trajectory(records: Sequence[ExperimentRecord], path: PathType) -> Path:
    """
    Sparsity against the number of zero-entropy layers after every iteration.

    Raises
    ------
    ReportError
        If no record carries pruning iterations.
    """
    usable = [rec for rec in records if rec.iterations]
    if not usable:
        raise ReportError("No record carries pruning iterations.")
    path = Path(path).resolve()
    with plt.rc_context(CHART_STYLE):
        fig, ax = plt.subplots(figsize=(5.5, 3.5))
        for rec in usable:
            sparsity = [row["sparsity_pct"] for row in rec.iterations]
            zero = [row["layers_zero_entropy"] for row in rec.iterations]
            ax.plot(sparsity, zero, marker="o", label=rec.label)
        ax.set_xlabel("sparsity (%)")
        ax.set_ylabel("zero-entropy layers")
        ax.yaxis.get_major_locator().set_params(integer=True)
        ax.legend(loc="upper left")
        return _save_svg(fig, path)


def write_ablation_csv(
    reduced: ExperimentRecord, scratch: ExperimentRecord, path: PathType
) -> Path:
    """
    Compare a pruned-and-reduced model with the same topology trained from scratch.

    Raises
    ------
    ReportError
        If the two records describe different topologies.
    """
    if reduced.topology != scratch.topology:
        raise ReportError(
            f"Ablation needs matching topologies: {reduced.model} vs {scratch.model}."
        )
    path = Path(path).resolve()
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "dataset", "variant", "sparsity", "top1"])
        for variant, rec in (("pruned", reduced), ("from_scratch", scratch)):
            writer.writerow(
                [
                    rec.model,
                    rec.dataset,
                    variant,
                    f"{rec.sparsity_pct:.4f}",
                    "" if rec.top1 is None else f"{rec.top1:.4f}",
                ]
            )
    return path


__all__ = [
    "CHART_STYLE",
    "ReportError",
    "ExperimentRecord",
    "write_results_csv",
    "state_rows",
    "write_state_distribution_csv",
    "plot_state_distribution",
    "plot_trajectory",
    "write_ablation_csv",
]
