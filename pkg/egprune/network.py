"""
Network - A Minimal Deterministic Engine for Sequential ReLU Models

This module defines the `Network` class, an ordered stack of `LayerSpec` objects
with a forward pass, an instrumented forward pass that records ReLU ON/OFF
states into an activation-statistics accumulator, and reverse-mode gradients of
the mean softmax cross-entropy loss.

Features
--------
- Dense, stride-1 valid Conv2d and Flatten layers with ReLU or identity activations,
  and square dense ReLU layers with a skip connection.
- Instrumented forward pass that runs the exact same arithmetic as `forward`.
- Gradients that respect the prune masks (masked coordinates get exactly zero).
- Topology extraction and deterministic He-uniform re-initialization.

Examples
--------
>>> import numpy as np
>>> from egprune import build_mlp
>>> net = build_mlp(input_dim=4, hidden=[8, 8], num_classes=3, seed=0)
>>> logits = net.forward(np.zeros((2, 4)))
>>> logits.shape
(2, 3)
"""

from dataclasses import dataclass
import logging
from typing import Any, Dict, List, Optional, Protocol, Sequence, Tuple

import numpy as np
from scipy.special import log_softmax, softmax

from .errors import ShapeError
from .layers import LayerSpec, conv2d_layer, dense_layer, flatten_layer

logger = logging.getLogger(__name__)


class StateRecorder(Protocol):
    """Anything that can absorb ReLU post-synaptic potentials (see `ActivationStats`)."""

    def check_compatible(self, net: "Network") -> None: ...

    def observe(self, layer_index: int, z: np.ndarray) -> None: ...


@dataclass
class ParamGradient:
    """Gradient of the loss with respect to one layer's weights and bias."""

    weights: np.ndarray
    bias: np.ndarray


Gradients = List[Optional[ParamGradient]]


class Network:
    """
    A sequential network under study.

    Parameters
    ----------
    layers : sequence of LayerSpec
        Layers in evaluation order. The last layer must carry weights and use the
        identity activation (it produces logits).
    rng_seed : int, optional
        Seed the network was initialized from; also the default seed for training.
    metadata : dict of str to str, optional
        Free-form annotations stored with checkpoints.

    Raises
    ------
    ShapeError
        If consecutive layer shapes do not chain, or the final layer is not a
        weighted identity layer.
    """

    def __init__(
        self,
        layers: Sequence[LayerSpec],
        rng_seed: int = 0,
        metadata: Optional[Dict[str, str]] = None,
    ) -> None:
        self.layers: List[LayerSpec] = list(layers)
        self.rng_seed = int(rng_seed)
        self.metadata: Dict[str, str] = dict(metadata or {})
        self.validate()

    def validate(self) -> None:
        """Check the structural invariants of the network."""
        if not self.layers:
            raise ShapeError("A network needs at least one layer.")
        for i in range(len(self.layers) - 1):
            a, b = self.layers[i], self.layers[i + 1]
            if a.out_shape != b.in_shape:
                raise ShapeError(
                    f"Layer {i} outputs {a.out_shape} but layer {i + 1} expects {b.in_shape}."
                )
        last = self.layers[-1]
        if not last.has_weights or last.activation != "identity":
            raise ShapeError("The final layer must be a weighted layer with identity activation.")

    @property
    def input_shape(self) -> Tuple[int, ...]:
        return self.layers[0].in_shape

    @property
    def num_classes(self) -> int:
        return self.layers[-1].out_shape[0]

    @property
    def depth(self) -> int:
        """Number of weighted layers."""
        return sum(1 for layer in self.layers if layer.has_weights)

    def relu_layers(self) -> List[int]:
        """Indices of the ReLU-activated weighted layers (the considered layers)."""
        return [
            i
            for i, layer in enumerate(self.layers)
            if layer.has_weights and layer.activation == "relu"
        ]

    def _check_batch(self, batch: np.ndarray) -> np.ndarray:
        x = np.asarray(batch, dtype=np.float64)
        if x.ndim != len(self.input_shape) + 1 or x.shape[1:] != self.input_shape:
            raise ShapeError(
                f"Batch shape {x.shape} is incompatible with network input shape "
                f"{self.input_shape} (expected (n, {', '.join(map(str, self.input_shape))}))."
            )
        return x

    def _propagate(
        self,
        x: np.ndarray,
        recorder: Optional[StateRecorder] = None,
        keep: bool = False,
    ) -> Tuple[np.ndarray, List[Tuple[np.ndarray, np.ndarray]]]:
        cache: List[Tuple[np.ndarray, np.ndarray]] = []
        for i, layer in enumerate(self.layers):
            z = layer.pre_activation(x)
            if recorder is not None and layer.has_weights and layer.activation == "relu":
                recorder.observe(i, z)
            if keep:
                cache.append((x, z))
            x = layer.output(x, z)
        return x, cache

    def forward(self, batch: np.ndarray) -> np.ndarray:
        """
        Compute logits for a batch.

        Parameters
        ----------
        batch : np.ndarray
            Inputs of shape ``(n, *input_shape)``.

        Returns
        -------
        np.ndarray
            Logits of shape ``(n, num_classes)``.

        Raises
        ------
        ShapeError
            If the batch does not match the network input shape.
        """
        logits, _ = self._propagate(self._check_batch(batch))
        return logits

    def forward_with_states(self, batch: np.ndarray, accum: StateRecorder) -> np.ndarray:
        """
        Compute logits while recording ReLU states into `accum`.

        The logits are bit-identical to `forward`; for every ReLU layer the
        accumulator sees the post-synaptic potential z of every sample.
        """
        x = self._check_batch(batch)
        accum.check_compatible(self)
        logits, _ = self._propagate(x, recorder=accum)
        return logits

    def loss_and_gradients(
        self, batch: np.ndarray, labels: np.ndarray
    ) -> Tuple[float, Gradients]:
        """
        Mean softmax cross-entropy loss and its gradients.

        Parameters
        ----------
        batch : np.ndarray
            Inputs of shape ``(n, *input_shape)``.
        labels : np.ndarray
            Integer class indices in ``[0, num_classes)``.

        Returns
        -------
        tuple
            ``(loss, gradients)`` where gradients holds one `ParamGradient` per
            weighted layer and None for flatten layers.

        Raises
        ------
        ValueError
            If a label is out of range or the label count does not match the batch.
        """
        x = self._check_batch(batch)
        y = np.asarray(labels)
        if y.shape != (x.shape[0],):
            raise ValueError(f"Expected {x.shape[0]} labels, got shape {y.shape}.")
        if y.size and (y.min() < 0 or y.max() >= self.num_classes):
            raise ValueError(
                f"Labels must lie in [0, {self.num_classes}), got range "
                f"[{y.min()}, {y.max()}]."
            )
        y = y.astype(np.int64)
        n = x.shape[0]

        logits, cache = self._propagate(x, keep=True)
        log_probs = log_softmax(logits, axis=1)
        loss = float(-log_probs[np.arange(n), y].mean())

        grad = softmax(logits, axis=1)
        grad[np.arange(n), y] -= 1.0
        grad /= n

        grads: Gradients = [None] * len(self.layers)
        for i in range(len(self.layers) - 1, -1, -1):
            layer_in, z = cache[i]
            grad, grad_w, grad_b = self.layers[i].backward(layer_in, z, grad)
            if grad_w is not None and grad_b is not None:
                grads[i] = ParamGradient(weights=grad_w, bias=grad_b)
        return loss, grads

    def backward(self, batch: np.ndarray, labels: np.ndarray) -> Gradients:
        """Gradients of the mean cross-entropy loss (see `loss_and_gradients`)."""
        _, grads = self.loss_and_gradients(batch, labels)
        return grads

    def copy(self) -> "Network":
        return Network(
            [layer.copy() for layer in self.layers],
            rng_seed=self.rng_seed,
            metadata=dict(self.metadata),
        )

    def topology(self) -> List[Dict[str, Any]]:
        """
        Describe the architecture without any parameter values.

        Returns
        -------
        list of dict
            One entry per layer with ``kind``, ``activation``, ``in_shape``,
            ``out_shape`` and, for weighted layers, ``weight_shape``.
        """
        topo = []
        for layer in self.layers:
            entry: Dict[str, Any] = {
                "kind": layer.kind,
                "activation": layer.activation,
                "in_shape": list(layer.in_shape),
                "out_shape": list(layer.out_shape),
            }
            if layer.weights is not None:
                entry["weight_shape"] = list(layer.weights.shape)
            if layer.residual:
                entry["residual"] = True
            topo.append(entry)
        return topo

    @classmethod
    def from_topology(
        cls,
        topology: Sequence[Dict[str, Any]],
        seed: int,
        metadata: Optional[Dict[str, str]] = None,
    ) -> "Network":
        """
        Build a freshly initialized network with the given architecture.

        Weights are He-uniform draws from ``numpy.random.default_rng(seed)`` in
        layer order; biases start at zero.
        """
        rng = np.random.default_rng(seed)
        layers = []
        for entry in topology:
            kind = entry["kind"]
            in_shape = tuple(entry["in_shape"])
            if kind == "dense":
                layers.append(
                    dense_layer(
                        in_shape[0],
                        entry["out_shape"][0],
                        entry["activation"],
                        rng,
                        residual=bool(entry.get("residual", False)),
                    )
                )
            elif kind == "conv2d":
                kh, kw = entry["weight_shape"][2:]
                layers.append(
                    conv2d_layer(
                        (in_shape[0], in_shape[1], in_shape[2]),
                        entry["out_shape"][0],
                        (kh, kw),
                        entry["activation"],
                        rng,
                    )
                )
            elif kind == "flatten":
                layers.append(flatten_layer(in_shape))
            else:
                raise ValueError(f"Invalid kind: {kind}.")
        return cls(layers, rng_seed=seed, metadata=metadata)

    def __repr__(self) -> str:
        desc = " -> ".join(
            f"{layer.kind}{list(layer.out_shape)}{'+relu' if layer.activation == 'relu' else ''}"
            f"{'+skip' if layer.residual else ''}"
            for layer in self.layers
        )
        return f"<Network({desc}, seed={self.rng_seed})>"


def build_mlp(
    input_dim: int,
    hidden: Sequence[int],
    num_classes: int,
    seed: int = 0,
    residual: bool = False,
) -> Network:
    """
    Build a ReLU multilayer perceptron.

    Parameters
    ----------
    input_dim : int
        Number of input features.
    hidden : sequence of int
        Width of each ReLU hidden layer; may be empty (a linear classifier).
    num_classes : int
        Number of output logits.
    seed : int, optional
        Initialization seed.
    residual : bool, optional
        Give every hidden layer after the first a skip connection when it is
        as wide as its predecessor. Default is False.
    """
    widths = [input_dim, *hidden, num_classes]
    topology: List[Dict[str, Any]] = []
    for i in range(len(widths) - 1):
        entry: Dict[str, Any] = {
            "kind": "dense",
            "activation": "relu" if i < len(widths) - 2 else "identity",
            "in_shape": [widths[i]],
            "out_shape": [widths[i + 1]],
        }
        if residual and 0 < i < len(widths) - 2 and widths[i] == widths[i + 1]:
            entry["residual"] = True
        topology.append(entry)
    return Network.from_topology(topology, seed)


def build_cnn(
    input_shape: Tuple[int, int, int],
    channels: Sequence[int],
    kernel_size: int,
    hidden: Sequence[int],
    num_classes: int,
    seed: int = 0,
) -> Network:
    """
    Build a conv stack followed by a flatten step and a dense ReLU head.

    Parameters
    ----------
    input_shape : tuple of int
        ``(channels, height, width)`` of one sample.
    channels : sequence of int
        Output channels of each ReLU convolution.
    kernel_size : int
        Square kernel extent shared by every convolution.
    hidden : sequence of int
        Widths of the dense ReLU layers after the flatten step.
    num_classes : int
        Number of output logits.
    seed : int, optional
        Initialization seed.
    """
    topology: List[Dict[str, Any]] = []
    shape = list(input_shape)
    for out_ch in channels:
        out_shape = [out_ch, shape[1] - kernel_size + 1, shape[2] - kernel_size + 1]
        if out_shape[1] < 1 or out_shape[2] < 1:
            raise ShapeError(f"Kernel {kernel_size} does not fit feature map {shape}.")
        topology.append(
            {
                "kind": "conv2d",
                "activation": "relu",
                "in_shape": shape,
                "out_shape": out_shape,
                "weight_shape": [out_ch, shape[0], kernel_size, kernel_size],
            }
        )
        shape = out_shape
    flat = int(np.prod(shape))
    topology.append(
        {"kind": "flatten", "activation": "identity", "in_shape": shape, "out_shape": [flat]}
    )
    widths = [flat, *hidden, num_classes]
    for i in range(len(widths) - 1):
        topology.append(
            {
                "kind": "dense",
                "activation": "relu" if i < len(widths) - 2 else "identity",
                "in_shape": [widths[i]],
                "out_shape": [widths[i + 1]],
            }
        )
    return Network.from_topology(topology, seed)


__all__ = ["Network", "ParamGradient", "Gradients", "build_mlp", "build_cnn"]
