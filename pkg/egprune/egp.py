"""
EGP - Entropy Guided Iterative Magnitude Pruning

This module implements the iterative pruning loop that routes unstructured
magnitude pruning toward layers whose ReLU neurons have low activation-state
entropy, so that whole layers reach zero entropy and can later be removed.

Every iteration:

1. counts ReLU ON/OFF states over the statistics data,
2. computes the per-layer mean entropy,
3. scores every layer with a pruning irrelevance
   ``I_l = mean_entropy_l * mean(|nonzero weights of l|)`` and the
   complementary relevance ``R_l = sum_j I_j / I_l`` (0 when ``I_l == 0``),
4. takes a global budget ``round(zeta * remaining weights)``,
5. splits it over layers with a max-shifted softmax of ``R``, integerized by
   largest-remainder apportionment; a layer whose share exceeds what it has
   left is pruned completely (down to ``plain_layer_floor`` for layers without
   a skip connection) and the residual is re-split over the others,
6. prunes the smallest-magnitude unmasked weights of each layer,
7. fine-tunes with the masks held fixed.

In vanilla mode steps 3-5 are replaced by global magnitude pruning over all
considered layers, which gives the baseline comparator at identical sparsity.
Only weights of ReLU-activated layers are counted and pruned; biases never are.
"""

import csv
from dataclasses import dataclass, field
from enum import Enum
import logging
import math
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import softmax

from .data import Dataset
from .entropy import EntropyReport, classify_states, collect_stats
from .errors import BudgetError, ConfigError
from .layers import LayerSpec
from .network import Network
from .training import TrainConfig, evaluate, train

logger = logging.getLogger(__name__)

PathType = Union[Path, str]


class PruneMode(str, Enum):
    EGP = "egp"
    VANILLA = "vanilla"


class BudgetBase(str, Enum):
    REMAINING = "remaining"
    INITIAL = "initial"


@dataclass(frozen=True)
class PruneConfig:
    """
    Settings of the iterative pruning loop.

    Parameters
    ----------
    zeta : float
        Fraction of the budget base pruned per iteration, in (0, 1).
    iterations : int
        Number of prune/fine-tune rounds, at least 1.
    finetune : TrainConfig
        Optimizer settings for the fine-tuning between rounds.
    mode : PruneMode, optional
        Entropy guided (default) or vanilla global magnitude pruning.
    budget_base : BudgetBase, optional
        Whether the budget is a fraction of the remaining (default) or the
        initial weight count.
    literal_allocation : bool, optional
        Keep zero-entropy layers in the softmax pool. Default is False, which
        stops pruning layers that already reached zero entropy.
    plain_layer_floor : int, optional
        Unmasked weights the entropy guided allocation always leaves in a
        layer without a skip connection, so that saturating it cannot cut the
        signal path. Default is 0 (a saturated layer is pruned completely).
    """

    zeta: float = 0.5
    iterations: int = 1
    finetune: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=5))
    mode: PruneMode = PruneMode.EGP
    budget_base: BudgetBase = BudgetBase.REMAINING
    literal_allocation: bool = False
    plain_layer_floor: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.zeta < 1.0:
            raise ConfigError("zeta", f"must lie in (0, 1), not {self.zeta}")
        if int(self.iterations) != self.iterations or self.iterations < 1:
            raise ConfigError("iterations", f"must be a positive integer, not {self.iterations}")
        if int(self.plain_layer_floor) != self.plain_layer_floor or self.plain_layer_floor < 0:
            raise ConfigError(
                "plain_layer_floor", f"must be a non-negative integer, not {self.plain_layer_floor}"
            )
        try:
            object.__setattr__(self, "mode", PruneMode(self.mode))
        except ValueError:
            raise ConfigError("mode", f"must be 'egp' or 'vanilla', not {self.mode!r}") from None
        try:
            object.__setattr__(self, "budget_base", BudgetBase(self.budget_base))
        except ValueError:
            raise ConfigError(
                "budget_base", f"must be 'remaining' or 'initial', not {self.budget_base!r}"
            ) from None


@dataclass
class PruneBudget:
    """Global and per-layer counts of weights to prune in one iteration."""

    global_budget: int
    per_layer: Dict[int, int]

    def __post_init__(self) -> None:
        if sum(self.per_layer.values()) != self.global_budget:
            raise BudgetError(
                f"Per-layer budgets sum to {sum(self.per_layer.values())}, "
                f"not {self.global_budget}."
            )


@dataclass(frozen=True)
class LayerRelevance:
    layer_index: int
    mean_entropy: float
    mean_abs_weight: float
    irrelevance: float
    relevance: float


@dataclass
class IterationLog:
    """What one pruning iteration did and where it left the network."""

    iteration: int
    sparsity_pct: float
    accuracy: float
    layers_zero_entropy: int
    global_budget: int
    mean_entropy: Dict[int, float]
    pruned_this_iter: Dict[int, int]
    remaining: Dict[int, int]

    def as_row(self) -> Dict[str, Union[int, float]]:
        row: Dict[str, Union[int, float]] = {
            "iteration": self.iteration,
            "sparsity_pct": self.sparsity_pct,
            "accuracy": self.accuracy,
            "layers_zero_entropy": self.layers_zero_entropy,
        }
        for layer in sorted(self.remaining):
            row[f"mean_entropy_l{layer}"] = self.mean_entropy.get(layer, 0.0)
            row[f"pruned_this_iter_l{layer}"] = self.pruned_this_iter.get(layer, 0)
            row[f"remaining_l{layer}"] = self.remaining[layer]
        return row


def remaining_count(layer: LayerSpec) -> int:
    """Number of unmasked weights of a layer."""
    return 0 if layer.mask is None else int(layer.mask.sum())


def weight_count(net: Network) -> int:
    """Total weights (masked or not) of the considered layers."""
    return sum(int(net.layers[i].mask.size) for i in net.relu_layers())  # type: ignore[union-attr]


def sparsity(net: Network) -> float:
    """Percentage of considered-layer weights that are masked."""
    total = weight_count(net)
    if total == 0:
        return 0.0
    left = sum(remaining_count(net.layers[i]) for i in net.relu_layers())
    return 100.0 * (total - left) / total


def global_budget(net: Network, cfg: PruneConfig, initial_count: Optional[int] = None) -> int:
    """
    Number of weights to prune this iteration, ``round(zeta * base)`` rounding halves up.

    Parameters
    ----------
    net : Network
        Network about to be pruned.
    cfg : PruneConfig
        Supplies ``zeta`` and the budget base.
    initial_count : int, optional
        Weight count before pruning started, used with ``BudgetBase.INITIAL``.
        Defaults to the total considered-layer weight count.

    Raises
    ------
    ValueError
        If the network has no prunable layer.
    BudgetError
        If the budget exceeds the remaining prunable weights.
    """
    layers = net.relu_layers()
    if not layers:
        raise ValueError("The network has no prunable (ReLU) layer.")
    remaining = sum(remaining_count(net.layers[i]) for i in layers)
    if cfg.budget_base is BudgetBase.INITIAL:
        base = weight_count(net) if initial_count is None else initial_count
    else:
        base = remaining
    budget = int(math.floor(cfg.zeta * base + 0.5))
    if budget > remaining:
        raise BudgetError(f"Budget {budget} exceeds the {remaining} remaining prunable weights.")
    return budget


def layer_irrelevance(layer: LayerSpec, mean_entropy: float) -> float:
    """
    Pruning irrelevance: mean entropy times the mean magnitude of the nonzero weights.

    A layer without nonzero weights scores 0.
    """
    if layer.weights is None:
        return 0.0
    nonzero = np.count_nonzero(layer.weights)
    if nonzero == 0:
        return 0.0
    return float(mean_entropy * (np.abs(layer.weights).sum() / nonzero))


def layer_relevance(irrelevances: Sequence[float]) -> List[float]:
    """
    Pruning relevance ``sum_j I_j / I_l``, or 0 where ``I_l == 0``.
    """
    values = np.asarray(irrelevances, dtype=np.float64)
    if values.size == 0:
        raise ValueError("At least one irrelevance value is required.")
    total = values.sum()
    return [float(total / v) if v != 0 else 0.0 for v in values]


def softmax_shares(relevances: Sequence[float]) -> np.ndarray:
    """Max-shifted softmax of the relevances (fractional budget shares)."""
    r = np.asarray(relevances, dtype=np.float64)
    return softmax(r - r.max())


def apportion(total: int, shares: np.ndarray) -> np.ndarray:
    """
    Largest-remainder apportionment of `total` units by `shares`.

    Ties in the fractional remainders go to the lowest index.
    """
    shares = np.asarray(shares, dtype=np.float64)
    quotas = total * shares / shares.sum()
    counts = np.floor(quotas).astype(np.int64)
    remainders = quotas - counts
    left = total - int(counts.sum())
    positions = np.arange(counts.size)
    if left > 0:
        order = np.lexsort((positions, -remainders))
        counts[order[:left]] += 1
    elif left < 0:
        order = np.lexsort((positions, remainders))
        order = order[counts[order] > 0]
        counts[order[:-left]] -= 1
    return counts


def allocate_budgets(
    relevances: Sequence[float],
    remaining_counts: Sequence[int],
    global_budget: int,
    layer_indices: Optional[Sequence[int]] = None,
    eligible: Optional[Sequence[bool]] = None,
) -> PruneBudget:
    """
    Split a global budget over layers by softmax of their relevance.

    Shares are apportioned over the pool of eligible layers. Any layer whose
    integer share exceeds its remaining count receives all of it and leaves
    the pool; the residual is re-split over the pool until it is consumed.

    Parameters
    ----------
    relevances : sequence of float
        Relevance of every layer.
    remaining_counts : sequence of int
        Unmasked weights left in every layer.
    global_budget : int
        Weights to prune this iteration.
    layer_indices : sequence of int, optional
        Keys for the result; defaults to positions ``0..n-1``.
    eligible : sequence of bool, optional
        Layers allowed in the pool; defaults to all. Ineligible layers get 0.

    Returns
    -------
    PruneBudget

    Raises
    ------
    BudgetError
        If the eligible layers cannot absorb the budget.
    """
    n = len(relevances)
    if len(remaining_counts) != n:
        raise ValueError(f"Got {n} relevances but {len(remaining_counts)} remaining counts.")
    keys = list(range(n)) if layer_indices is None else list(layer_indices)
    flags = [True] * n if eligible is None else list(eligible)
    r = np.asarray(relevances, dtype=np.float64)
    capacity = np.asarray(remaining_counts, dtype=np.int64)
    if global_budget < 0:
        raise BudgetError(f"Budget must be non-negative, not {global_budget}.")

    pool = [i for i in range(n) if flags[i]]
    pool_capacity = int(capacity[pool].sum()) if pool else 0
    if global_budget > pool_capacity:
        raise BudgetError(
            f"Budget {global_budget} exceeds the {pool_capacity} weights left in the allocation pool."
        )

    alloc = np.zeros(n, dtype=np.int64)
    residual = global_budget
    round_no = 0
    while residual > 0:
        if not pool:
            raise BudgetError(f"Allocation pool is empty with {residual} weights left to assign.")
        counts = apportion(residual, softmax_shares(r[pool]))
        overflow = [p for p, c in zip(pool, counts) if c > capacity[p] - alloc[p]]
        if not overflow:
            alloc[pool] += counts
            break
        for p in overflow:
            take = int(capacity[p] - alloc[p])
            alloc[p] += take
            residual -= take
            pool.remove(p)
        round_no += 1
        logger.debug(
            "Allocation round %d: layers %s saturated, %d weights left",
            round_no,
            [keys[p] for p in overflow],
            residual,
        )
    return PruneBudget(
        global_budget=global_budget,
        per_layer={keys[i]: int(alloc[i]) for i in range(n)},
    )


def magnitude_prune_layer(layer: LayerSpec, k: int) -> np.ndarray:
    """
    Mask the `k` unmasked weights of smallest magnitude, in place.

    Ties in magnitude go to the lowest flat index.

    Returns
    -------
    np.ndarray
        The updated mask.

    Raises
    ------
    BudgetError
        If `k` exceeds the number of unmasked weights.
    """
    if layer.weights is None or layer.mask is None:
        raise ValueError("Only weighted layers can be pruned.")
    left = remaining_count(layer)
    if not 0 <= k <= left:
        raise BudgetError(f"Cannot prune {k} weights from a layer with {left} left.")
    if k == 0:
        return layer.mask
    flat_mask = layer.mask.ravel().copy()
    candidates = np.flatnonzero(flat_mask)
    magnitudes = np.abs(layer.weights.ravel()[candidates])
    chosen = candidates[np.argsort(magnitudes, kind="stable")[:k]]
    flat_mask[chosen] = 0.0
    layer.mask = flat_mask.reshape(layer.weights.shape)
    layer.weights = layer.weights * layer.mask
    return layer.mask


def global_magnitude_prune(net: Network, k: int) -> Dict[int, int]:
    """
    Mask the `k` smallest-magnitude unmasked weights across all considered layers.

    Ties go to the earlier layer, then to the lower flat index.

    Returns
    -------
    dict
        Weights pruned per layer index.
    """
    layers = net.relu_layers()
    magnitudes, owners, positions = [], [], []
    for i in layers:
        layer = net.layers[i]
        assert layer.weights is not None and layer.mask is not None
        idx = np.flatnonzero(layer.mask.ravel())
        magnitudes.append(np.abs(layer.weights.ravel()[idx]))
        owners.append(np.full(idx.size, i))
        positions.append(idx)
    if not layers:
        raise ValueError("The network has no prunable (ReLU) layer.")
    mags = np.concatenate(magnitudes)
    if k > mags.size:
        raise BudgetError(f"Cannot prune {k} weights, only {mags.size} left.")
    owner = np.concatenate(owners)
    pos = np.concatenate(positions)
    order = np.lexsort((pos, owner, mags))[:k]
    counts = {i: 0 for i in layers}
    for i in layers:
        chosen = pos[order][owner[order] == i]
        counts[i] = int(chosen.size)
        if chosen.size:
            layer = net.layers[i]
            assert layer.weights is not None and layer.mask is not None
            flat_mask = layer.mask.ravel().copy()
            flat_mask[chosen] = 0.0
            layer.mask = flat_mask.reshape(layer.weights.shape)
            layer.weights = layer.weights * layer.mask
    return counts


def layer_relevances(net: Network, report: EntropyReport) -> List[LayerRelevance]:
    """Irrelevance and relevance of every considered layer."""
    layers = net.relu_layers()
    irrelevances, mean_abs = [], []
    for i in layers:
        layer = net.layers[i]
        assert layer.weights is not None
        nonzero = np.count_nonzero(layer.weights)
        mean_abs.append(float(np.abs(layer.weights).sum() / nonzero) if nonzero else 0.0)
        irrelevances.append(layer_irrelevance(layer, report[i].mean_entropy))
    relevances = layer_relevance(irrelevances) if layers else []
    return [
        LayerRelevance(
            layer_index=i,
            mean_entropy=report[i].mean_entropy,
            mean_abs_weight=mean_abs[k],
            irrelevance=irrelevances[k],
            relevance=relevances[k],
        )
        for k, i in enumerate(layers)
    ]


def entropy_guided_budget(
    net: Network,
    report: EntropyReport,
    budget: int,
    literal: bool = False,
    plain_floor: int = 0,
) -> PruneBudget:
    """
    Per-layer allocation of `budget` for one EGP iteration.

    Layers already at zero mean entropy stay out of the pool unless `literal`
    is set, or unless the other layers cannot absorb the budget. Layers
    without a skip connection only offer the weights they hold above
    `plain_floor`.
    """
    scores = layer_relevances(net, report)
    layers = [s.layer_index for s in scores]
    left = [
        remaining_count(net.layers[i])
        if net.layers[i].residual
        else max(remaining_count(net.layers[i]) - plain_floor, 0)
        for i in layers
    ]
    eligible = [literal or s.mean_entropy > 0 for s in scores]
    if sum(c for c, ok in zip(left, eligible) if ok) < budget:
        logger.warning(
            "Layers without zero entropy hold fewer than %d weights; "
            "re-admitting zero-entropy layers for this iteration",
            budget,
        )
        eligible = [True] * len(layers)
    for s in scores:
        logger.debug(
            "layer %d: H=%.4f |w|=%.4g I=%.4g R=%.4g",
            s.layer_index,
            s.mean_entropy,
            s.mean_abs_weight,
            s.irrelevance,
            s.relevance,
        )
    return allocate_budgets(
        [s.relevance for s in scores],
        left,
        budget,
        layer_indices=layers,
        eligible=eligible,
    )


def derive_seed(seed: int, iteration: int) -> int:
    """Independent, reproducible seed for the fine-tuning of one iteration."""
    return int(np.random.SeedSequence([seed, iteration]).generate_state(1)[0])


def egp_iterate(
    net: Network,
    dataset: Dataset,
    cfg: PruneConfig,
    entropy_data: Optional[Dataset] = None,
    eval_data: Optional[Dataset] = None,
    seed: Optional[int] = None,
    dry_run: bool = False,
    workers: int = 1,
) -> Tuple[Network, List[IterationLog]]:
    """
    Run the iterative pruning loop on a copy of `net`.

    Parameters
    ----------
    net : Network
        Trained starting point; left untouched.
    dataset : Dataset
        Fine-tuning data.
    cfg : PruneConfig
        Loop settings; ``cfg.mode`` selects entropy guided or vanilla pruning.
    entropy_data : Dataset, optional
        Data the ON/OFF statistics are gathered on. Defaults to `dataset`.
    eval_data : Dataset, optional
        Data the logged accuracy is measured on. Defaults to `dataset`.
    seed : int, optional
        Base seed for fine-tuning shuffles. Defaults to ``net.rng_seed``.
    dry_run : bool, optional
        Return an untouched copy and an empty log.
    workers : int, optional
        Shards used when gathering statistics.

    Returns
    -------
    tuple
        ``(pruned_network, logs)`` with one `IterationLog` per iteration.
    """
    work = net.copy()
    if dry_run:
        return work, []
    seed = net.rng_seed if seed is None else seed
    stats_data = entropy_data if entropy_data is not None else dataset
    scored = eval_data if eval_data is not None else dataset
    initial = weight_count(work)

    report = classify_states(collect_stats(work, stats_data.images, workers=workers))
    logs: List[IterationLog] = []
    for iteration in range(1, cfg.iterations + 1):
        budget = global_budget(work, cfg, initial_count=initial)
        if cfg.mode is PruneMode.EGP:
            allocation = entropy_guided_budget(
                work, report, budget, cfg.literal_allocation, cfg.plain_layer_floor
            )
            for i, k in allocation.per_layer.items():
                magnitude_prune_layer(work.layers[i], k)
            pruned = allocation.per_layer
        else:
            pruned = global_magnitude_prune(work, budget)

        if cfg.finetune.epochs > 0:
            work, _ = train(work, dataset, cfg.finetune, seed=derive_seed(seed, iteration))

        report = classify_states(collect_stats(work, stats_data.images, workers=workers))
        _, accuracy = evaluate(work, scored)
        log = IterationLog(
            iteration=iteration,
            sparsity_pct=sparsity(work),
            accuracy=accuracy,
            layers_zero_entropy=len(report.zero_entropy_layers()),
            global_budget=budget,
            mean_entropy={e.layer_index: e.mean_entropy for e in report},
            pruned_this_iter=dict(pruned),
            remaining={i: remaining_count(work.layers[i]) for i in work.relu_layers()},
        )
        logs.append(log)
        logger.info(
            "iteration %d/%d (%s): sparsity=%.4f%% acc=%.4f zero-entropy layers=%d",
            iteration,
            cfg.iterations,
            cfg.mode.value,
            log.sparsity_pct,
            log.accuracy,
            log.layers_zero_entropy,
        )
    return work, logs


def write_iteration_log_csv(logs: Sequence[IterationLog], path: PathType) -> Path:
    """Write one row per iteration, with per-layer entropy/pruned/remaining columns."""
    path = Path(path).resolve()
    rows = [log.as_row() for log in logs]
    fields = list(rows[0]) if rows else ["iteration", "sparsity_pct", "accuracy", "layers_zero_entropy"]
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)
    return path


__all__ = [
    "PruneMode",
    "BudgetBase",
    "PruneConfig",
    "PruneBudget",
    "LayerRelevance",
    "IterationLog",
    "remaining_count",
    "weight_count",
    "sparsity",
    "global_budget",
    "layer_irrelevance",
    "layer_relevance",
    "softmax_shares",
    "apportion",
    "allocate_budgets",
    "magnitude_prune_layer",
    "global_magnitude_prune",
    "layer_relevances",
    "entropy_guided_budget",
    "derive_seed",
    "egp_iterate",
    "write_iteration_log_csv",
]
