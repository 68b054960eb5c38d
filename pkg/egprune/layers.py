"""
This module defines the LayerSpec class, the unit the network engine is built
from. A LayerSpec is either a dense layer, a stride-1 valid 2-D convolution, or
a flatten step, and carries its own weights, bias and binary prune mask.

All arrays are 64-bit floats. Weights are stored as ``out x in`` for dense
layers and ``out_ch x in_ch x kh x kw`` for convolutions, and a mask entry of
zero always pins the matching weight to exactly zero.

A dense layer of equal input and output width may carry a skip
connection (``residual=True``); it then outputs ``x + relu(W x + b)``, so
pruning all of its weights leaves a constant shift instead of cutting the
signal path.
"""

from dataclasses import dataclass
from typing import Literal, Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeError

LayerKind = Literal["dense", "conv2d", "flatten"]
ActivationName = Literal["relu", "identity"]

LAYER_KINDS = ("dense", "conv2d", "flatten")
ACTIVATIONS = ("relu", "identity")


@dataclass
class LayerSpec:
    """
    A single layer of a sequential network.

    Parameters
    ----------
    kind : {'dense', 'conv2d', 'flatten'}
        Layer type.
    in_shape : tuple of int
        Shape of one input sample (no batch dimension).
    out_shape : tuple of int
        Shape of one output sample (no batch dimension).
    activation : {'relu', 'identity'}, optional
        Activation applied to the post-synaptic potential. Default is 'identity'.
    weights : np.ndarray, optional
        Weight tensor; required for dense and conv2d, forbidden for flatten.
    bias : np.ndarray, optional
        Bias vector of length N_l (the neuron count).
    mask : np.ndarray, optional
        Binary prune mask with the shape of `weights`. Defaults to all ones.
    residual : bool, optional
        Add the layer input to its activated output. Only for dense layers
        of equal input and output width. Default is False.

    Raises
    ------
    ValueError
        If `kind` or `activation` is not a supported value.
    ShapeError
        If the parameter shapes disagree with `in_shape`/`out_shape`, or a
        masked weight is nonzero.
    """

    kind: LayerKind
    in_shape: Tuple[int, ...]
    out_shape: Tuple[int, ...]
    activation: ActivationName = "identity"
    weights: Optional[np.ndarray] = None
    bias: Optional[np.ndarray] = None
    mask: Optional[np.ndarray] = None
    residual: bool = False

    def __post_init__(self) -> None:
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"Invalid kind: {self.kind}. Must be one of {LAYER_KINDS}.")
        if self.activation not in ACTIVATIONS:
            raise ValueError(
                f"Invalid activation: {self.activation}. Must be one of {ACTIVATIONS}."
            )
        self.in_shape = tuple(int(s) for s in self.in_shape)
        self.out_shape = tuple(int(s) for s in self.out_shape)

        if self.kind == "flatten":
            if self.weights is not None or self.bias is not None or self.mask is not None:
                raise ShapeError("Flatten layers carry no weights, bias or mask.")
            if self.activation != "identity" or self.residual:
                raise ShapeError("Flatten layers have no activation or skip connection.")
            if int(np.prod(self.in_shape)) != self.out_shape[0] or len(self.out_shape) != 1:
                raise ShapeError(
                    f"Flatten cannot map {self.in_shape} to {self.out_shape}."
                )
            return

        if self.weights is None or self.bias is None:
            raise ShapeError(f"{self.kind} layers need both weights and bias.")
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.mask is None:
            self.mask = np.ones_like(self.weights)
        else:
            self.mask = np.asarray(self.mask, dtype=np.float64)
        self._check_shapes()
        self.residual = bool(self.residual)
        if self.residual and (self.kind != "dense" or self.in_shape != self.out_shape):
            raise ShapeError(
                f"Skip connections need a square dense layer, got {self.kind} "
                f"{self.in_shape} -> {self.out_shape}."
            )

    def _check_shapes(self) -> None:
        assert self.weights is not None and self.bias is not None and self.mask is not None
        if self.kind == "dense":
            expected = (self.out_shape[0], self.in_shape[0])
            if len(self.in_shape) != 1 or len(self.out_shape) != 1:
                raise ShapeError(
                    f"Dense layers map flat vectors, got {self.in_shape} -> {self.out_shape}."
                )
        else:
            if len(self.in_shape) != 3 or len(self.out_shape) != 3 or self.weights.ndim != 4:
                raise ShapeError(
                    f"Conv2d layers map (c, h, w) maps, got {self.in_shape} -> {self.out_shape}."
                )
            out_ch, in_ch, kh, kw = self.weights.shape
            c, h, w = self.in_shape
            expected = (self.out_shape[0], c, kh, kw)
            if self.out_shape != (out_ch, h - kh + 1, w - kw + 1) or in_ch != c:
                raise ShapeError(
                    f"Conv2d kernel {self.weights.shape} cannot map {self.in_shape} "
                    f"to {self.out_shape}."
                )
        if self.weights.shape != expected:
            raise ShapeError(
                f"Weight shape {self.weights.shape} does not match expected {expected}."
            )
        if self.bias.shape != (self.out_shape[0],):
            raise ShapeError(
                f"Bias shape {self.bias.shape} does not match neuron count {self.out_shape[0]}."
            )
        if self.mask.shape != self.weights.shape:
            raise ShapeError(
                f"Mask shape {self.mask.shape} does not match weight shape {self.weights.shape}."
            )
        if not np.all((self.mask == 0) | (self.mask == 1)):
            raise ShapeError("Mask entries must be 0 or 1.")
        if np.any(self.weights[self.mask == 0] != 0):
            raise ShapeError("Masked weights must be exactly zero.")

    @property
    def has_weights(self) -> bool:
        return self.kind != "flatten"

    @property
    def n_neurons(self) -> int:
        """Neuron count N_l: dense rows or conv output channels."""
        return self.out_shape[0]

    @property
    def positions_per_sample(self) -> int:
        """Number of spatial positions M_l per neuron and sample."""
        if self.kind == "conv2d":
            return self.out_shape[1] * self.out_shape[2]
        return 1

    def copy(self) -> "LayerSpec":
        """Return a deep copy of the layer."""
        return LayerSpec(
            kind=self.kind,
            in_shape=self.in_shape,
            out_shape=self.out_shape,
            activation=self.activation,
            weights=None if self.weights is None else self.weights.copy(),
            bias=None if self.bias is None else self.bias.copy(),
            mask=None if self.mask is None else self.mask.copy(),
            residual=self.residual,
        )

    def pre_activation(self, x: np.ndarray) -> np.ndarray:
        """
        Compute the post-synaptic potential z for a batch.

        Parameters
        ----------
        x : np.ndarray
            Batch of inputs with shape ``(n, *in_shape)``.

        Returns
        -------
        np.ndarray
            ``z`` with shape ``(n, *out_shape)``. Flatten returns the reshaped input.
        """
        if self.kind == "flatten":
            return x.reshape(x.shape[0], -1)
        assert self.weights is not None and self.bias is not None
        if self.kind == "dense":
            return x @ self.weights.T + self.bias
        kh, kw = self.weights.shape[2:]
        patches = sliding_window_view(x, (kh, kw), axis=(2, 3))
        z = np.tensordot(patches, self.weights, axes=([1, 4, 5], [1, 2, 3]))
        return z.transpose(0, 3, 1, 2) + self.bias[None, :, None, None]

    def activate(self, z: np.ndarray) -> np.ndarray:
        if self.activation == "relu":
            return np.where(z > 0, z, 0.0)
        return z

    def output(self, x: np.ndarray, z: np.ndarray) -> np.ndarray:
        """Layer output for input `x` with potential `z`, skip connection included."""
        out = self.activate(z)
        return x + out if self.residual else out

    def backward(
        self, x: np.ndarray, z: np.ndarray, grad_out: np.ndarray
    ) -> Tuple[np.ndarray, Optional[np.ndarray], Optional[np.ndarray]]:
        """
        Backpropagate through the layer.

        Parameters
        ----------
        x : np.ndarray
            Input the layer saw in the forward pass.
        z : np.ndarray
            Post-synaptic potential from the forward pass.
        grad_out : np.ndarray
            Gradient of the loss with respect to the layer output.

        Returns
        -------
        tuple
            ``(grad_input, grad_weights, grad_bias)``; the parameter gradients are
            None for flatten layers and zero wherever the mask is zero.
        """
        if self.kind == "flatten":
            return grad_out.reshape(x.shape), None, None
        assert self.weights is not None and self.mask is not None

        dz = grad_out * (z > 0) if self.activation == "relu" else grad_out

        if self.kind == "dense":
            grad_w = dz.T @ x
            grad_b = dz.sum(axis=0)
            grad_x = dz @ self.weights
        else:
            kh, kw = self.weights.shape[2:]
            patches = sliding_window_view(x, (kh, kw), axis=(2, 3))
            grad_w = np.tensordot(dz, patches, axes=([0, 2, 3], [0, 2, 3]))
            grad_b = dz.sum(axis=(0, 2, 3))
            padded = np.pad(dz, ((0, 0), (0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1)))
            windows = sliding_window_view(padded, (kh, kw), axis=(2, 3))
            flipped = self.weights[:, :, ::-1, ::-1]
            grad_x = np.tensordot(windows, flipped, axes=([1, 4, 5], [0, 2, 3]))
            grad_x = grad_x.transpose(0, 3, 1, 2)

        if self.residual:
            grad_x = grad_x + grad_out
        return grad_x, grad_w * self.mask, grad_b

    def __repr__(self) -> str:
        skip = ", residual=True" if self.residual else ""
        return (
            f"<LayerSpec(kind={self.kind!r}, activation={self.activation!r}, "
            f"in_shape={self.in_shape}, out_shape={self.out_shape}{skip})>"
        )


def dense_layer(
    in_features: int,
    out_features: int,
    activation: ActivationName,
    rng: np.random.Generator,
    residual: bool = False,
) -> LayerSpec:
    """Create a dense layer with He-uniform weights and zero bias."""
    bound = np.sqrt(6.0 / in_features)
    weights = rng.uniform(-bound, bound, size=(out_features, in_features))
    return LayerSpec(
        kind="dense",
        in_shape=(in_features,),
        out_shape=(out_features,),
        activation=activation,
        weights=weights,
        bias=np.zeros(out_features),
        residual=residual,
    )


def conv2d_layer(
    in_shape: Tuple[int, int, int],
    out_channels: int,
    kernel_size: Tuple[int, int],
    activation: ActivationName,
    rng: np.random.Generator,
) -> LayerSpec:
    """Create a stride-1, valid-padding convolution with He-uniform weights."""
    c, h, w = in_shape
    kh, kw = kernel_size
    if kh > h or kw > w:
        raise ShapeError(f"Kernel {kernel_size} does not fit input map {in_shape}.")
    bound = np.sqrt(6.0 / (c * kh * kw))
    weights = rng.uniform(-bound, bound, size=(out_channels, c, kh, kw))
    return LayerSpec(
        kind="conv2d",
        in_shape=in_shape,
        out_shape=(out_channels, h - kh + 1, w - kw + 1),
        activation=activation,
        weights=weights,
        bias=np.zeros(out_channels),
    )


def flatten_layer(in_shape: Tuple[int, ...]) -> LayerSpec:
    return LayerSpec(
        kind="flatten",
        in_shape=in_shape,
        out_shape=(int(np.prod(in_shape)),),
    )


__all__ = ["LayerSpec", "dense_layer", "conv2d_layer", "flatten_layer"]
