"""
Activation-state statistics and entropy of ReLU neurons.

A ReLU neuron is ON for a (sample, position) pair when its post-synaptic
potential is strictly positive and OFF otherwise (``z == 0`` counts as OFF).
`ActivationStats` counts ON states per neuron over a dataset; from those
integer counts this module derives:

- the ON frequency ``p_on = on_count / (samples_seen * M_l)``,
- the binary entropy of every neuron in bits,
- the mean entropy of every layer,
- a classification of every neuron as always OFF, always ON or mixed.

Classification works on the integer counts directly, so no floating point
threshold is involved. Statistics from disjoint data shards merge by addition.

Example
-------
```python
from egprune.entropy import classify_states, collect_stats

stats = collect_stats(net, dataset.images, batch_size=256, workers=4)
report = classify_states(stats)
print(report.zero_entropy_layers())
```
"""

from concurrent.futures import ThreadPoolExecutor
import csv
from dataclasses import dataclass
from enum import Enum
import logging
import math
from pathlib import Path
from typing import TYPE_CHECKING, Dict, Iterator, List, Sequence, Union

import numpy as np
from scipy.special import xlogy

from .errors import NoDataObservedError, ShapeError

if TYPE_CHECKING:
    from .network import Network

logger = logging.getLogger(__name__)

PathType = Union[Path, str]

LOG2 = math.log(2.0)


class NeuronState(str, Enum):
    ALWAYS_OFF = "always_off"
    ALWAYS_ON = "always_on"
    MIXED = "mixed"


@dataclass
class LayerStats:
    """
    ON-state counts of one ReLU layer.

    Attributes
    ----------
    layer_index : int
        Position of the layer in the network.
    on_counts : np.ndarray
        Integer ON count per neuron, length N_l.
    positions_per_sample : int
        Spatial positions M_l each neuron is evaluated at per sample.
    samples_seen : int
        Number of samples observed.
    """

    layer_index: int
    on_counts: np.ndarray
    positions_per_sample: int
    samples_seen: int = 0

    @property
    def n_neurons(self) -> int:
        return int(self.on_counts.shape[0])

    @property
    def total(self) -> int:
        """Observed (sample, position) pairs per neuron."""
        return self.samples_seen * self.positions_per_sample


class ActivationStats:
    """
    Shard-local accumulator of ReLU ON-state counts.

    Parameters
    ----------
    layers : sequence of LayerStats
        One entry per ReLU layer, in network order.
    """

    def __init__(self, layers: Sequence[LayerStats]) -> None:
        self.layers: Dict[int, LayerStats] = {s.layer_index: s for s in layers}

    @classmethod
    def for_network(cls, net: "Network") -> "ActivationStats":
        """Create empty counters for every ReLU layer of `net`."""
        return cls(
            [
                LayerStats(
                    layer_index=i,
                    on_counts=np.zeros(net.layers[i].n_neurons, dtype=np.int64),
                    positions_per_sample=net.layers[i].positions_per_sample,
                )
                for i in net.relu_layers()
            ]
        )

    def __getitem__(self, layer_index: int) -> LayerStats:
        return self.layers[layer_index]

    def __iter__(self) -> Iterator[LayerStats]:
        return iter(self.layers[i] for i in sorted(self.layers))

    @property
    def layer_indices(self) -> List[int]:
        return sorted(self.layers)

    def check_compatible(self, net: "Network") -> None:
        """
        Raise `ShapeError` unless the counters match the ReLU layers of `net`.
        """
        relu = net.relu_layers()
        if relu != self.layer_indices:
            raise ShapeError(
                f"Statistics cover layers {self.layer_indices} but the network's ReLU "
                f"layers are {relu}."
            )
        for i in relu:
            layer, stats = net.layers[i], self.layers[i]
            if (
                layer.n_neurons != stats.n_neurons
                or layer.positions_per_sample != stats.positions_per_sample
            ):
                raise ShapeError(
                    f"Layer {i} has {layer.n_neurons} neurons x {layer.positions_per_sample} "
                    f"positions but statistics hold {stats.n_neurons} x "
                    f"{stats.positions_per_sample}."
                )

    def observe(self, layer_index: int, z: np.ndarray) -> None:
        """Count ON states (``z > 0``) in a batch of post-synaptic potentials."""
        stats = self.layers[layer_index]
        on = z > 0
        axes = (0,) if z.ndim == 2 else (0, 2, 3)
        stats.on_counts += on.sum(axis=axes, dtype=np.int64)
        stats.samples_seen += int(z.shape[0])

    def merge(self, other: "ActivationStats") -> "ActivationStats":
        """
        Return the sum of two accumulators.

        Raises
        ------
        ShapeError
            If the two accumulators do not describe the same layer geometry.
        """
        if self.layer_indices != other.layer_indices:
            raise ShapeError(
                f"Cannot merge statistics over layers {self.layer_indices} and "
                f"{other.layer_indices}."
            )
        merged = []
        for a in self:
            b = other[a.layer_index]
            if a.n_neurons != b.n_neurons or a.positions_per_sample != b.positions_per_sample:
                raise ShapeError(f"Layer {a.layer_index} geometry differs between shards.")
            merged.append(
                LayerStats(
                    layer_index=a.layer_index,
                    on_counts=a.on_counts + b.on_counts,
                    positions_per_sample=a.positions_per_sample,
                    samples_seen=a.samples_seen + b.samples_seen,
                )
            )
        return ActivationStats(merged)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ActivationStats) or self.layer_indices != other.layer_indices:
            return False
        return all(
            a.samples_seen == b.samples_seen
            and a.positions_per_sample == b.positions_per_sample
            and np.array_equal(a.on_counts, b.on_counts)
            for a, b in zip(self, other)
        )


@dataclass
class LayerEntropy:
    """Entropy summary of one ReLU layer."""

    layer_index: int
    p_on: np.ndarray
    entropy: np.ndarray
    states: List[NeuronState]
    mean_entropy: float

    @property
    def n_neurons(self) -> int:
        return len(self.states)

    def count(self, state: NeuronState) -> int:
        return sum(1 for s in self.states if s is state)


@dataclass
class EntropyReport:
    """Per-neuron and per-layer entropies keyed by layer index."""

    layers: Dict[int, LayerEntropy]

    def __getitem__(self, layer_index: int) -> LayerEntropy:
        return self.layers[layer_index]

    def __iter__(self) -> Iterator[LayerEntropy]:
        return iter(self.layers[i] for i in sorted(self.layers))

    def zero_entropy_layers(self) -> List[int]:
        return [entry.layer_index for entry in self if entry.mean_entropy == 0.0]

    def summary(self) -> List[Dict[str, Union[int, float]]]:
        """One row per layer: neuron counts by state and mean entropy."""
        return [
            {
                "layer_index": entry.layer_index,
                "n_neurons": entry.n_neurons,
                "n_always_on": entry.count(NeuronState.ALWAYS_ON),
                "n_always_off": entry.count(NeuronState.ALWAYS_OFF),
                "n_mixed": entry.count(NeuronState.MIXED),
                "mean_entropy": entry.mean_entropy,
            }
            for entry in self
        ]


def p_on(stats: ActivationStats, layer: int, neuron: int) -> float:
    """
    ON frequency of one neuron.

    Raises
    ------
    NoDataObservedError
        If the layer has not seen any sample.
    IndexError
        If the neuron does not exist.
    """
    entry = stats[layer]
    if entry.samples_seen == 0:
        raise NoDataObservedError("no data observed")
    if not 0 <= neuron < entry.n_neurons:
        raise IndexError(f"Neuron {neuron} out of range for layer {layer}.")
    return int(entry.on_counts[neuron]) / entry.total


def _binary_entropy(p: np.ndarray) -> np.ndarray:
    h = -(xlogy(p, p) + xlogy(1.0 - p, 1.0 - p)) / LOG2
    return np.clip(h, 0.0, 1.0)


def neuron_entropy(p: float) -> float:
    """
    Binary entropy in bits of an ON frequency, with ``0 * log 0 = 0``.

    Raises
    ------
    ValueError
        If `p` lies outside [0, 1].
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"Invalid p_on: {p}. Must lie in [0, 1].")
    return float(_binary_entropy(np.asarray(p, dtype=np.float64)))


def layer_mean_entropy(entropies: Sequence[float]) -> float:
    """Arithmetic mean of the neuron entropies of one layer."""
    values = np.asarray(entropies, dtype=np.float64)
    if values.size == 0:
        raise ValueError("Cannot average the entropy of an empty layer.")
    return float(values.mean())


def _layer_entropy(entry: LayerStats) -> LayerEntropy:
    if entry.samples_seen == 0:
        raise NoDataObservedError("no data observed")
    total = entry.total
    states = [
        NeuronState.ALWAYS_OFF
        if count == 0
        else NeuronState.ALWAYS_ON
        if count == total
        else NeuronState.MIXED
        for count in entry.on_counts.tolist()
    ]
    probs = entry.on_counts / total
    entropies = _binary_entropy(probs)
    # pin the degenerate states to exact zero from the integer counts
    entropies[[s is not NeuronState.MIXED for s in states]] = 0.0
    return LayerEntropy(
        layer_index=entry.layer_index,
        p_on=probs,
        entropy=entropies,
        states=states,
        mean_entropy=layer_mean_entropy(entropies),
    )


def classify_states(stats: ActivationStats) -> EntropyReport:
    """
    Build the entropy report of every ReLU layer.

    Raises
    ------
    NoDataObservedError
        If no sample was observed.
    """
    return EntropyReport({entry.layer_index: _layer_entropy(entry) for entry in stats})


def collect_stats(
    net: "Network",
    inputs: np.ndarray,
    batch_size: int = 256,
    workers: int = 1,
) -> ActivationStats:
    """
    Accumulate ON-state counts of `net` over `inputs`.

    With ``workers > 1`` the inputs are cut into contiguous shards that run
    concurrently, each into its own accumulator; the results are merged in
    shard order, which gives the same integer counts as a single pass.
    """
    if batch_size < 1:
        raise ValueError(f"`batch_size` must be at least 1, not {batch_size}.")
    n = inputs.shape[0]
    if n == 0:
        raise NoDataObservedError("no data observed")

    def run(start: int, stop: int) -> ActivationStats:
        accum = ActivationStats.for_network(net)
        for lo in range(start, stop, batch_size):
            net.forward_with_states(inputs[lo : min(lo + batch_size, stop)], accum)
        return accum

    n_shards = max(1, min(workers, n))
    bounds = np.linspace(0, n, n_shards + 1).astype(int)
    if n_shards == 1:
        return run(0, n)
    with ThreadPoolExecutor(max_workers=n_shards) as pool:
        shards = list(pool.map(run, bounds[:-1], bounds[1:]))
    merged = shards[0]
    for shard in shards[1:]:
        merged = merged.merge(shard)
    logger.debug("Merged activation statistics from %d shards", n_shards)
    return merged


def write_entropy_csv(report: EntropyReport, path: PathType) -> Path:
    """Write one row per neuron: layer_index, neuron_index, p_on, entropy_bits, state."""
    path = Path(path).resolve()
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["layer_index", "neuron_index", "p_on", "entropy_bits", "state"])
        for entry in report:
            for i, state in enumerate(entry.states):
                writer.writerow(
                    [entry.layer_index, i, repr(float(entry.p_on[i])), repr(float(entry.entropy[i])), state.value]
                )
    return path


def write_layer_summary_csv(report: EntropyReport, path: PathType) -> Path:
    """Write one row per layer with neuron counts by state and the mean entropy."""
    path = Path(path).resolve()
    fields = ["layer_index", "n_neurons", "n_always_on", "n_always_off", "n_mixed", "mean_entropy"]
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for row in report.summary():
            writer.writerow(row)
    return path


__all__ = [
    "NeuronState",
    "LayerStats",
    "ActivationStats",
    "LayerEntropy",
    "EntropyReport",
    "p_on",
    "neuron_entropy",
    "layer_mean_entropy",
    "classify_states",
    "collect_stats",
    "write_entropy_csv",
    "write_layer_summary_csv",
]
