"""
Structural depth reduction from zero-entropy findings.

A neuron that is always OFF on the statistics data contributes exactly zero to
its successor and can be dropped. A layer whose neurons are all always ON acts
as an affine map on that data: a dense layer followed by a dense layer is fused
into it (``W' = W2 @ W1``, ``b' = W2 @ b1 + b2``); any other such layer keeps
its weights and has its ReLU replaced by the identity.

Layers with a skip connection keep their width: an always-OFF neuron has its
row and bias cleared instead of being removed. An all-ON skip layer computes
``(I + W) x + b``; it is fused into a plain dense successor, and when its
remaining rows are all zero it is a constant shift that is folded into the
biases downstream.

The edits are gathered into a `FusionPlan` by `plan_reduction` and executed by
`apply_plan`, which checks the result against the original network on probe
inputs and refuses plans whose logits drift beyond a relative tolerance. Plans
made only of neuron drops must also reproduce the logits to an absolute
tolerance, since removing a dead input changes nothing but summation order.
Equivalence is only ever claimed on the statistics data: an always-ON neuron
may leave its linear region on unseen inputs.

Plans are laid out so that each edit's indices are valid at the moment it is
applied: layers are visited from the output back to the input and neurons of
a layer are dropped in descending order.

Example
-------
```python
from egprune.depth_reduce import plan_reduction, apply_plan
from egprune.entropy import classify_states, collect_stats

report = classify_states(collect_stats(net, data.images))
result = apply_plan(net, plan_reduction(net, report), probes=data.images)
print(result.plan.layers_removed_count, result.network.depth)
```
"""

from dataclasses import asdict, dataclass, field
import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

import numpy as np

from .checkpoint import checkpoint_digest
from .entropy import EntropyReport, NeuronState
from .errors import PlanError, ShapeError
from .layers import LayerSpec, flatten_layer
from .network import Network

logger = logging.getLogger(__name__)

PathType = Union[Path, str]


@dataclass(frozen=True)
class DropNeuron:
    """
    Remove neuron `neuron` of layer `layer` and its input column in the successor.

    With ``collapse=True`` dropping the layer's last neuron removes the layer.
    On a layer with a skip connection the neuron's row and bias are cleared.
    """

    layer: int
    neuron: int
    collapse: bool = False
    op: Literal["drop_neuron"] = "drop_neuron"


@dataclass(frozen=True)
class FuseDense:
    """Compose dense layer `layer` into its dense successor."""

    layer: int
    op: Literal["fuse_dense"] = "fuse_dense"


@dataclass(frozen=True)
class LinearizeActivation:
    """Replace the ReLU of layer `layer` by the identity."""

    layer: int
    op: Literal["linearize_activation"] = "linearize_activation"


@dataclass(frozen=True)
class FoldShift:
    """Remove skip layer `layer`, which adds a constant, by moving it into later biases."""

    layer: int
    op: Literal["fold_shift"] = "fold_shift"


Edit = Union[DropNeuron, FuseDense, LinearizeActivation, FoldShift]


@dataclass(frozen=True)
class Verification:
    """
    Logit differences between a network and its reduction.

    `max_rel_diff` scales each probe's differences by the largest logit
    magnitude of that probe and decides acceptance; `max_elementwise_rel_diff`
    scales every logit by its own magnitude and is reported for inspection.
    """

    max_abs_diff: float
    max_rel_diff: float
    n_probe_inputs: int
    max_elementwise_rel_diff: float = 0.0


@dataclass
class FusionPlan:
    """
    Ordered structural edits for one network.

    Attributes
    ----------
    edits : list
        `DropNeuron`, `FuseDense`, `FoldShift` and `LinearizeActivation`
        edits, in order.
    layers_removed_count : int
        Fused and folded layers plus layers emptied by collapsing drops.
    layers_linearized_count : int
        Layers whose ReLU became the identity; counted toward nonlinear depth
        removed but kept as separate layers.
    verification : Verification, optional
        Filled in by `apply_plan`.
    rejected : bool
        Set when `apply_plan` refused the result.
    """

    edits: List[Edit] = field(default_factory=list)
    layers_removed_count: int = 0
    layers_linearized_count: int = 0
    verification: Optional[Verification] = None
    rejected: bool = False

    def __post_init__(self) -> None:
        removed = self.fused_count + self.folded_count + self.emptied_count
        if self.layers_removed_count != removed:
            raise PlanError(
                f"layers_removed_count is {self.layers_removed_count} but the edits remove "
                f"{removed} layers."
            )
        linearized = sum(1 for e in self.edits if isinstance(e, LinearizeActivation))
        if self.layers_linearized_count != linearized:
            raise PlanError(
                f"layers_linearized_count is {self.layers_linearized_count} but the edits "
                f"linearize {linearized} layers."
            )

    @property
    def fused_count(self) -> int:
        return sum(1 for e in self.edits if isinstance(e, FuseDense))

    @property
    def folded_count(self) -> int:
        return sum(1 for e in self.edits if isinstance(e, FoldShift))

    @property
    def emptied_count(self) -> int:
        return sum(1 for e in self.edits if isinstance(e, DropNeuron) and e.collapse)

    @property
    def nonlinear_depth_removed(self) -> int:
        """Removed and linearized layers together."""
        return self.layers_removed_count + self.layers_linearized_count

    @property
    def is_pure_drop(self) -> bool:
        """True for a non-empty plan that only drops neurons."""
        return bool(self.edits) and all(
            isinstance(e, DropNeuron) and not e.collapse for e in self.edits
        )

    def __len__(self) -> int:
        return len(self.edits)


@dataclass
class ReductionResult:
    """
    Outcome of `apply_plan`.

    `network` is the reduced network when `accepted`, otherwise an unchanged
    copy of the input; `candidate` always holds the edited network.
    """

    network: Network
    candidate: Network
    plan: FusionPlan
    accepted: bool
    diagnostic: str = ""


def _check_layer(net: Network, layer: int) -> LayerSpec:
    if not 0 <= layer < len(net.layers):
        raise PlanError(f"Layer {layer} does not exist (network has {len(net.layers)} layers).")
    return net.layers[layer]


def _select_neurons(layer: LayerSpec, keep: np.ndarray) -> LayerSpec:
    assert layer.weights is not None and layer.bias is not None and layer.mask is not None
    return LayerSpec(
        kind=layer.kind,
        in_shape=layer.in_shape,
        out_shape=(int(keep.sum()), *layer.out_shape[1:]),
        activation=layer.activation,
        weights=layer.weights[keep],
        bias=layer.bias[keep],
        mask=layer.mask[keep],
    )


def _select_inputs(layer: LayerSpec, keep: np.ndarray) -> LayerSpec:
    assert layer.weights is not None and layer.bias is not None and layer.mask is not None
    return LayerSpec(
        kind=layer.kind,
        in_shape=(int(keep.sum()), *layer.in_shape[1:]),
        out_shape=layer.out_shape,
        activation=layer.activation,
        weights=layer.weights[:, keep],
        bias=layer.bias.copy(),
        mask=layer.mask[:, keep],
    )


def _zero_successor(successor: LayerSpec, in_shape: tuple) -> LayerSpec:
    """`successor` rewired to read `in_shape` through all-zero, fully masked weights."""
    assert successor.weights is not None and successor.bias is not None
    if successor.kind == "dense":
        shape: tuple = (successor.out_shape[0], int(np.prod(in_shape)))
    else:
        c, h, w = in_shape
        _, oh, ow = successor.out_shape
        shape = (successor.out_shape[0], c, h - oh + 1, w - ow + 1)
    return LayerSpec(
        kind=successor.kind,
        in_shape=in_shape if successor.kind == "conv2d" else (shape[1],),
        out_shape=successor.out_shape,
        activation=successor.activation,
        weights=np.zeros(shape),
        bias=successor.bias.copy(),
        mask=np.zeros(shape),
    )


def _collapse_layer(net: Network, layer: int) -> Network:
    target = net.layers[layer]
    layers = [spec.copy() for spec in net.layers]
    nxt = layer + 1
    if layers[nxt].kind == "flatten":
        layers[nxt] = flatten_layer(target.in_shape)
        layers[nxt + 1] = _zero_successor(layers[nxt + 1], layers[nxt].out_shape)
    else:
        successor = layers[nxt]
        if successor.kind == "conv2d" and len(target.in_shape) != 3:
            raise PlanError(f"Cannot collapse layer {layer} into convolution {nxt}.")
        if successor.kind == "dense" and len(target.in_shape) != 1:
            raise PlanError(f"Cannot collapse layer {layer} into dense layer {nxt}.")
        layers[nxt] = _zero_successor(successor, target.in_shape)
    del layers[layer]
    logger.debug("Collapsed layer %d; successor now reads %s", layer, target.in_shape)
    return Network(layers, rng_seed=net.rng_seed, metadata=net.metadata)


def _clear_neuron(net: Network, layer: int, neuron: int) -> Network:
    layers = [spec.copy() for spec in net.layers]
    target = layers[layer]
    assert target.weights is not None and target.bias is not None and target.mask is not None
    target.weights[neuron] = 0.0
    target.mask[neuron] = 0.0
    target.bias[neuron] = 0.0
    return Network(layers, rng_seed=net.rng_seed, metadata=net.metadata)


def drop_neuron(net: Network, layer: int, neuron: int, collapse: bool = False) -> Network:
    """
    Remove one neuron and the matching input of the next weighted layer.

    For dense layers the neuron's row of ``W_l`` and the matching column of
    ``W_{l+1}`` go; for convolutions the output channel and the successor's
    input channel go. When a flatten step sits between a convolution and a
    dense layer, the block of dense columns fed by the channel is removed.
    A layer with a skip connection keeps its width; the neuron's row, mask
    row and bias are zeroed instead.

    Parameters
    ----------
    net : Network
        Network to edit; left untouched.
    layer : int
        Index of the weighted layer.
    neuron : int
        Neuron (row or output channel) to drop.
    collapse : bool, optional
        Allow dropping the only remaining neuron. The layer is then removed
        and its successor reads the removed layer's input through all-zero
        weights, keeping its bias. Default is False.

    Returns
    -------
    Network
        The edited network.

    Raises
    ------
    PlanError
        If the layer does not exist, is the output layer or carries no weights,
        if the successor has a skip connection, or if the layer would be
        emptied without `collapse`.
    IndexError
        If `neuron` is out of range.
    """
    target = _check_layer(net, layer)
    if not target.has_weights:
        raise PlanError(f"Layer {layer} is a {target.kind} layer and has no neurons.")
    if layer == len(net.layers) - 1:
        raise PlanError(f"Layer {layer} is the output layer; its neurons are logits.")
    if not 0 <= neuron < target.n_neurons:
        raise IndexError(
            f"Neuron {neuron} is out of range for layer {layer} with {target.n_neurons} neurons."
        )
    if target.residual:
        if collapse:
            raise PlanError(f"Layer {layer} has a skip connection and cannot be collapsed.")
        return _clear_neuron(net, layer, neuron)
    if net.layers[layer + 1].residual:
        raise PlanError(
            f"Layer {layer + 1} has a skip connection; its input width cannot shrink."
        )
    if target.n_neurons == 1:
        if not collapse:
            raise PlanError(
                f"Dropping neuron {neuron} would leave layer {layer} empty; "
                "pass collapse=True to remove the layer."
            )
        return _collapse_layer(net, layer)

    keep = np.arange(target.n_neurons) != neuron
    layers = [spec.copy() for spec in net.layers]
    layers[layer] = _select_neurons(target, keep)
    nxt = layer + 1
    if layers[nxt].kind == "flatten":
        c, h, w = target.out_shape
        layers[nxt] = flatten_layer((c - 1, h, w))
        columns = np.repeat(keep, h * w)
        layers[nxt + 1] = _select_inputs(layers[nxt + 1], columns)
    else:
        layers[nxt] = _select_inputs(layers[nxt], keep)
    return Network(layers, rng_seed=net.rng_seed, metadata=net.metadata)


def fuse_dense(net: Network, layer: int) -> Network:
    """
    Replace dense layer `layer` and its dense successor by their composition.

    The fused layer has ``W' = W_{l+1} @ W_l``, ``b' = W_{l+1} @ b_l + b_{l+1}``,
    the successor's activation and an all-ones mask. When layer `layer` has a
    skip connection, ``I + W_l`` takes the place of ``W_l``.

    Raises
    ------
    PlanError
        If either layer is missing or is not dense, or the successor has a
        skip connection.
    """
    first = _check_layer(net, layer)
    if layer + 1 >= len(net.layers):
        raise PlanError(f"Layer {layer} has no successor to fuse into.")
    second = net.layers[layer + 1]
    if first.kind != "dense" or second.kind != "dense":
        raise PlanError(
            f"fuse_dense needs two dense layers, got {first.kind} -> {second.kind} at {layer}."
        )
    if second.residual:
        raise PlanError(f"Layer {layer + 1} has a skip connection and cannot absorb layer {layer}.")
    assert first.weights is not None and first.bias is not None
    assert second.weights is not None and second.bias is not None
    linear = first.weights + np.eye(first.n_neurons) if first.residual else first.weights
    weights = second.weights @ linear
    fused = LayerSpec(
        kind="dense",
        in_shape=first.in_shape,
        out_shape=second.out_shape,
        activation=second.activation,
        weights=weights,
        bias=second.weights @ first.bias + second.bias,
        mask=np.ones_like(weights),
    )
    layers = [spec.copy() for spec in net.layers]
    layers[layer : layer + 2] = [fused]
    return Network(layers, rng_seed=net.rng_seed, metadata=net.metadata)


def linearize_activation(net: Network, layer: int) -> Network:
    """Switch the activation of ReLU layer `layer` to the identity."""
    target = _check_layer(net, layer)
    if not target.has_weights or target.activation != "relu":
        raise PlanError(f"Layer {layer} is not a ReLU layer.")
    layers = [spec.copy() for spec in net.layers]
    layers[layer].activation = "identity"
    return Network(layers, rng_seed=net.rng_seed, metadata=net.metadata)


def fold_shift(net: Network, layer: int) -> Network:
    """
    Remove a skip layer whose weights are all zero.

    Such a layer outputs ``x + act(b)``. The constant is pushed through the
    following skip layers, whose potentials gain ``W_j c`` while their outputs
    keep carrying ``c``, and is absorbed into the bias of the first layer
    without a skip connection.

    Raises
    ------
    PlanError
        If the layer has no skip connection or still has a nonzero weight.
    """
    target = _check_layer(net, layer)
    if not target.residual:
        raise PlanError(f"Layer {layer} has no skip connection.")
    assert target.weights is not None and target.bias is not None
    if np.any(target.weights != 0):
        raise PlanError(f"Layer {layer} still has nonzero weights; only a constant shift folds.")
    shift = target.activate(target.bias[None, :])[0]
    layers = [spec.copy() for spec in net.layers]
    for successor in layers[layer + 1 :]:
        if successor.kind != "dense":
            raise PlanError(f"Cannot fold the shift of layer {layer} into a {successor.kind} layer.")
        assert successor.weights is not None and successor.bias is not None
        successor.bias = successor.bias + successor.weights @ shift
        if not successor.residual:
            break
    del layers[layer]
    logger.debug("Folded constant shift of layer %d downstream", layer)
    return Network(layers, rng_seed=net.rng_seed, metadata=net.metadata)


def _check_report(net: Network, report: EntropyReport) -> None:
    expected = net.relu_layers()
    got = sorted(entry.layer_index for entry in report)
    if got != expected:
        raise PlanError(f"Report covers layers {got} but the network's ReLU layers are {expected}.")
    for i in expected:
        if report[i].n_neurons != net.layers[i].n_neurons:
            raise PlanError(
                f"Report has {report[i].n_neurons} neurons for layer {i}, "
                f"network has {net.layers[i].n_neurons}."
            )


def plan_reduction(net: Network, report: EntropyReport) -> FusionPlan:
    """
    Derive structural edits from an entropy report of `net`.

    Per ReLU layer, from the last to the first:

    - every always-OFF neuron is dropped, highest index first;
    - when every neuron is always-OFF and the layer can be collapsed into its
      successor, the final drop collapses the layer;
    - when all remaining neurons are always-ON, the layer is fused into a
      dense successor, or linearized otherwise.

    Parameters
    ----------
    net : Network
        Network the report was computed on.
    report : EntropyReport
        States of every ReLU neuron of `net`.

    Returns
    -------
    FusionPlan
        Unverified plan; `apply_plan` executes and checks it.

    Raises
    ------
    PlanError
        If the report does not describe `net`.
    """
    _check_report(net, report)
    edits: List[Edit] = []
    removed = linearized = 0
    for i in reversed(net.relu_layers()):
        states = report[i].states
        off = [k for k, s in enumerate(states) if s is NeuronState.ALWAYS_OFF]
        kept = [s for s in states if s is not NeuronState.ALWAYS_OFF]

        if net.layers[i].residual:
            edit = _plan_skip_layer(net, i, states, edits)
            if isinstance(edit, LinearizeActivation):
                linearized += 1
            elif edit is not None:
                removed += 1
            continue
        if net.layers[i + 1].residual:
            # the skip path pins this layer's width
            if states and all(s is NeuronState.ALWAYS_ON for s in states):
                edits.append(LinearizeActivation(i))
                linearized += 1
            continue

        if not kept:
            if _collapsible(net, i):
                edits.extend(DropNeuron(i, k) for k in reversed(off[1:]))
                edits.append(DropNeuron(i, off[0], collapse=True))
                removed += 1
            else:
                # keep one dead neuron so the layer stays well formed
                edits.extend(DropNeuron(i, k) for k in reversed(off[1:]))
            continue

        edits.extend(DropNeuron(i, k) for k in reversed(off))
        if all(s is NeuronState.ALWAYS_ON for s in kept):
            successor = net.layers[i + 1]
            if net.layers[i].kind == "dense" and successor.kind == "dense":
                edits.append(FuseDense(i))
                removed += 1
            else:
                edits.append(LinearizeActivation(i))
                linearized += 1

    plan = FusionPlan(
        edits=edits, layers_removed_count=removed, layers_linearized_count=linearized
    )
    logger.info(
        "Planned %d edits: %d neurons dropped, %d fused, %d emptied, %d linearized",
        len(edits),
        sum(1 for e in edits if isinstance(e, DropNeuron)),
        plan.fused_count,
        plan.emptied_count,
        linearized,
    )
    return plan


def _plan_skip_layer(
    net: Network, layer: int, states: List[NeuronState], edits: List[Edit]
) -> Optional[Edit]:
    """Append the edits for skip layer `layer`; returns the layer-level edit, if any."""
    off = [k for k, s in enumerate(states) if s is NeuronState.ALWAYS_OFF]
    edits.extend(DropNeuron(layer, k) for k in reversed(off))
    if not all(s in (NeuronState.ALWAYS_ON, NeuronState.ALWAYS_OFF) for s in states):
        return None

    target = net.layers[layer]
    successor = net.layers[layer + 1]
    assert target.weights is not None
    on_rows = [k for k, s in enumerate(states) if s is NeuronState.ALWAYS_ON]
    edit: Edit
    if successor.kind == "dense" and not successor.residual:
        edit = FuseDense(layer)
    elif not np.any(target.weights[on_rows] != 0):
        edit = FoldShift(layer)
    else:
        edit = LinearizeActivation(layer)
    edits.append(edit)
    return edit


def _collapsible(net: Network, layer: int) -> bool:
    target = net.layers[layer]
    successor = net.layers[layer + 1]
    if successor.residual:
        return False
    if successor.kind == "flatten":
        return True
    if successor.kind == "conv2d":
        return len(target.in_shape) == 3
    return len(target.in_shape) == 1


def verify_equivalence(net_a: Network, net_b: Network, probes: np.ndarray) -> Verification:
    """
    Largest absolute and relative logit differences between two networks.

    The relative difference of a probe is its absolute difference divided by
    the largest logit magnitude `net_a` produces for that probe. The
    element-wise relative difference divides each logit's difference by that
    logit's own magnitude, so it is large wherever a near-zero logit moves.

    Raises
    ------
    ShapeError
        If the networks disagree on input or output shape.
    ValueError
        If there are no probes.
    """
    if net_a.input_shape != net_b.input_shape or net_a.num_classes != net_b.num_classes:
        raise ShapeError(
            f"Cannot compare {net_a.input_shape}->{net_a.num_classes} with "
            f"{net_b.input_shape}->{net_b.num_classes}."
        )
    probes = np.asarray(probes, dtype=np.float64)
    if probes.shape[0] == 0:
        raise ValueError("At least one probe input is required.")
    ref = net_a.forward(probes)
    diff = np.abs(ref - net_b.forward(probes))
    tiny = np.finfo(np.float64).tiny
    scale = np.maximum(np.abs(ref).max(axis=1, keepdims=True), tiny)
    return Verification(
        max_abs_diff=float(diff.max()),
        max_rel_diff=float((diff / scale).max()),
        n_probe_inputs=int(probes.shape[0]),
        max_elementwise_rel_diff=float((diff / np.maximum(np.abs(ref), tiny)).max()),
    )


def apply_edit(net: Network, edit: Edit) -> Network:
    if isinstance(edit, DropNeuron):
        return drop_neuron(net, edit.layer, edit.neuron, collapse=edit.collapse)
    if isinstance(edit, FuseDense):
        return fuse_dense(net, edit.layer)
    if isinstance(edit, LinearizeActivation):
        return linearize_activation(net, edit.layer)
    if isinstance(edit, FoldShift):
        return fold_shift(net, edit.layer)
    raise PlanError(f"Unknown edit: {edit!r}")


def apply_plan(
    net: Network,
    plan: FusionPlan,
    probes: np.ndarray,
    rel_tol: float = 1e-6,
    abs_tol: float = 1e-12,
) -> ReductionResult:
    """
    Apply `plan` edit by edit and verify the result on `probes`.

    Parameters
    ----------
    net : Network
        Network the plan was derived for; left untouched.
    plan : FusionPlan
        Edits to apply. Its `verification` and `rejected` fields are filled in.
    probes : np.ndarray
        In-distribution inputs, normally the statistics data.
    rel_tol : float, optional
        Largest accepted relative logit difference. Default is 1e-6.
    abs_tol : float, optional
        Largest accepted absolute logit difference for plans that only drop
        neurons. Default is 1e-12.

    Returns
    -------
    ReductionResult
        The reduced network (or the original when rejected) and a diagnostic.

    Raises
    ------
    PlanError
        If an edit does not fit the network at the point it is applied.
    """
    work = net.copy()
    for step, edit in enumerate(plan.edits):
        try:
            work = apply_edit(work, edit)
        except (PlanError, IndexError, ShapeError) as exc:
            raise PlanError(f"Stale plan: edit {step} ({edit.op}) failed: {exc}") from exc

    check = plan.verification = verify_equivalence(net, work, probes)
    problems = []
    if check.max_rel_diff > rel_tol:
        problems.append(f"max_rel_diff {check.max_rel_diff:.3e} exceeds tolerance {rel_tol:.1e}")
    if plan.is_pure_drop and check.max_abs_diff > abs_tol:
        problems.append(
            f"max_abs_diff {check.max_abs_diff:.3e} exceeds drop-only tolerance {abs_tol:.1e}"
        )
    plan.rejected = bool(problems)
    work.metadata["source_checkpoint_sha256"] = checkpoint_digest(net)
    work.metadata["fusion_plan_sha256"] = plan_digest(plan)

    if plan.rejected:
        diagnostic = f"{'; '.join(problems)} on {check.n_probe_inputs} probes"
        logger.warning("Reduction rejected: %s", diagnostic)
        return ReductionResult(net.copy(), work, plan, accepted=False, diagnostic=diagnostic)

    logger.info(
        "Reduction accepted: depth %d -> %d, max_abs_diff=%.3e max_rel_diff=%.3e "
        "max_elementwise_rel_diff=%.3e",
        net.depth,
        work.depth,
        check.max_abs_diff,
        check.max_rel_diff,
        check.max_elementwise_rel_diff,
    )
    return ReductionResult(work, work, plan, accepted=True)


def plan_to_dict(plan: FusionPlan) -> Dict[str, Any]:
    return {
        "edits": [asdict(edit) for edit in plan.edits],
        "layers_removed_count": plan.layers_removed_count,
        "layers_linearized_count": plan.layers_linearized_count,
        "verification": None if plan.verification is None else asdict(plan.verification),
        "rejected": plan.rejected,
    }


def plan_from_dict(doc: Dict[str, Any]) -> FusionPlan:
    """
    Rebuild a plan from its JSON document.

    Raises
    ------
    PlanError
        On an unknown edit type or a missing field.
    """
    kinds = {
        "drop_neuron": DropNeuron,
        "fuse_dense": FuseDense,
        "linearize_activation": LinearizeActivation,
        "fold_shift": FoldShift,
    }
    try:
        edits: List[Edit] = []
        for entry in doc["edits"]:
            entry = dict(entry)
            op = entry.pop("op")
            if op not in kinds:
                raise PlanError(f"Unknown edit op: {op!r}.")
            edits.append(kinds[op](**entry))
        verification = doc.get("verification")
        return FusionPlan(
            edits=edits,
            layers_removed_count=int(doc["layers_removed_count"]),
            layers_linearized_count=int(doc.get("layers_linearized_count", 0)),
            verification=None if verification is None else Verification(**verification),
            rejected=bool(doc.get("rejected", False)),
        )
    except (KeyError, TypeError) as exc:
        raise PlanError(f"Malformed fusion plan: {exc}") from exc


def plan_digest(plan: FusionPlan) -> str:
    """SHA-256 of the plan's edit list."""
    edits = json.dumps([asdict(edit) for edit in plan.edits], sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(edits.encode("utf-8")).hexdigest()


def save_plan(plan: FusionPlan, path: PathType) -> Path:
    path = Path(path).resolve()
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(plan_to_dict(plan), indent=2) + "\n", encoding="utf-8")
    return path


def load_plan(path: PathType) -> FusionPlan:
    return plan_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


__all__ = [
    "DropNeuron",
    "FuseDense",
    "LinearizeActivation",
    "FoldShift",
    "Edit",
    "Verification",
    "FusionPlan",
    "ReductionResult",
    "drop_neuron",
    "fuse_dense",
    "linearize_activation",
    "fold_shift",
    "plan_reduction",
    "verify_equivalence",
    "apply_edit",
    "apply_plan",
    "plan_to_dict",
    "plan_from_dict",
    "plan_digest",
    "save_plan",
    "load_plan",
]
