"""
Masked momentum SGD training for `Network` objects.

Training is single-threaded and a pure function of ``(seed, config, dataset)``:
mini-batch order comes from `batches` seeded per epoch, and the prune masks are
re-applied after every step so pruned weights stay exactly zero.
"""

import csv
from dataclasses import dataclass
import logging
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import log_softmax

from .data import Dataset, batches
from .errors import ConfigError, EmptyDatasetError, NonFiniteGradientError
from .network import Gradients, Network

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    """
    Optimizer settings.

    Parameters
    ----------
    learning_rate : float
        Step size, strictly positive.
    momentum : float
        Heavy-ball coefficient in [0, 1).
    batch_size : int
        Mini-batch size, at least 1.
    epochs : int
        Passes over the data. Zero makes `train` a no-op.
    weight_decay : float, optional
        L2 coefficient added to weight gradients (never to biases). Default is 0.

    Raises
    ------
    ConfigError
        If a field is out of range; the error names the field.
    """

    learning_rate: float = 0.05
    momentum: float = 0.9
    batch_size: int = 32
    epochs: int = 20
    weight_decay: float = 0.0

    def __post_init__(self) -> None:
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate", f"must be positive, not {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum", f"must lie in [0, 1), not {self.momentum}")
        if int(self.batch_size) != self.batch_size or self.batch_size < 1:
            raise ConfigError("batch_size", f"must be a positive integer, not {self.batch_size}")
        if int(self.epochs) != self.epochs or self.epochs < 0:
            raise ConfigError("epochs", f"must be a non-negative integer, not {self.epochs}")
        if not self.weight_decay >= 0:
            raise ConfigError("weight_decay", f"must be non-negative, not {self.weight_decay}")


@dataclass(frozen=True)
class EpochRecord:
    """Loss and accuracy on the training data at the end of an epoch."""

    epoch: int
    loss: float
    accuracy: float


Velocity = List[Optional[Tuple[np.ndarray, np.ndarray]]]


def init_velocity(net: Network) -> Velocity:
    """Zero momentum buffers matching the network's parameters."""
    velocity: Velocity = []
    for layer in net.layers:
        if layer.weights is None or layer.bias is None:
            velocity.append(None)
        else:
            velocity.append((np.zeros_like(layer.weights), np.zeros_like(layer.bias)))
    return velocity


def sgd_step(
    net: Network,
    gradients: Gradients,
    cfg: TrainConfig,
    velocity: Velocity,
) -> Tuple[Network, Velocity]:
    """
    Apply one momentum SGD update in place.

    ``v <- momentum * v + g`` then ``w <- w - learning_rate * v``, after which
    masked weights are forced back to exactly zero.

    Parameters
    ----------
    net : Network
        Network to update.
    gradients : list
        Output of `Network.backward`.
    cfg : TrainConfig
        Optimizer settings.
    velocity : list
        Momentum buffers from `init_velocity` or a previous step.

    Returns
    -------
    tuple
        ``(net, velocity)``, both updated in place.

    Raises
    ------
    NonFiniteGradientError
        If any gradient entry is NaN or Inf; no parameter is modified.
    ShapeError
        If a gradient shape differs from its parameter.
    """
    if len(gradients) != len(net.layers) or len(velocity) != len(net.layers):
        raise ValueError(
            f"Expected {len(net.layers)} gradient/velocity entries, got "
            f"{len(gradients)}/{len(velocity)}."
        )
    for i, grad in enumerate(gradients):
        if grad is None:
            continue
        layer = net.layers[i]
        assert layer.weights is not None and layer.bias is not None
        if grad.weights.shape != layer.weights.shape or grad.bias.shape != layer.bias.shape:
            raise ValueError(f"Gradient shape mismatch at layer {i}.")
        if not np.all(np.isfinite(grad.weights)):
            raise NonFiniteGradientError(i, "weights")
        if not np.all(np.isfinite(grad.bias)):
            raise NonFiniteGradientError(i, "bias")

    for i, grad in enumerate(gradients):
        buffers = velocity[i]
        if grad is None or buffers is None:
            continue
        layer = net.layers[i]
        assert layer.weights is not None and layer.bias is not None and layer.mask is not None
        g_w = grad.weights
        if cfg.weight_decay:
            g_w = g_w + cfg.weight_decay * layer.weights
        v_w = (cfg.momentum * buffers[0] + g_w) * layer.mask
        v_b = cfg.momentum * buffers[1] + grad.bias
        layer.weights = (layer.weights - cfg.learning_rate * v_w) * layer.mask
        layer.bias = layer.bias - cfg.learning_rate * v_b
        velocity[i] = (v_w, v_b)
    return net, velocity


def evaluate(net: Network, dataset: Dataset, batch_size: int = 1024) -> Tuple[float, float]:
    """
    Mean cross-entropy loss and top-1 accuracy of `net` on `dataset`.

    Raises
    ------
    EmptyDatasetError
        If the dataset has no samples.
    """
    if len(dataset) == 0:
        raise EmptyDatasetError("Cannot evaluate on an empty dataset.")
    total_loss = 0.0
    correct = 0
    for x, y in batches(dataset, batch_size, shuffle=False):
        logits = net.forward(x)
        log_probs = log_softmax(logits, axis=1)
        total_loss += float(-log_probs[np.arange(y.size), y].sum())
        correct += int((logits.argmax(axis=1) == y).sum())
    n = len(dataset)
    return total_loss / n, correct / n


def train(
    net: Network,
    dataset: Dataset,
    cfg: TrainConfig,
    seed: Optional[int] = None,
) -> Tuple[Network, List[EpochRecord]]:
    """
    Train a copy of `net` with masked momentum SGD.

    Parameters
    ----------
    net : Network
        Starting point; left untouched.
    dataset : Dataset
        Training data.
    cfg : TrainConfig
        Optimizer settings.
    seed : int, optional
        Shuffling seed. Defaults to ``net.rng_seed``.

    Returns
    -------
    tuple
        ``(trained_network, history)`` with one `EpochRecord` per epoch.

    Raises
    ------
    EmptyDatasetError
        If the dataset has no samples.
    """
    if len(dataset) == 0:
        raise EmptyDatasetError("Cannot train on an empty dataset.")
    seed = net.rng_seed if seed is None else seed
    work = net.copy()
    velocity = init_velocity(work)
    history: List[EpochRecord] = []
    for epoch in range(cfg.epochs):
        for x, y in batches(dataset, cfg.batch_size, seed=seed, shuffle=True, epoch=epoch):
            grads = work.backward(x, y)
            sgd_step(work, grads, cfg, velocity)
        loss, accuracy = evaluate(work, dataset)
        history.append(EpochRecord(epoch=epoch + 1, loss=loss, accuracy=accuracy))
        logger.info("epoch %d/%d loss=%.4f acc=%.4f", epoch + 1, cfg.epochs, loss, accuracy)
    return work, history


def write_history_csv(history: Sequence[EpochRecord], path: Union[Path, str]) -> Path:
    path = Path(path).resolve()
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss", "accuracy"])
        for rec in history:
            writer.writerow([rec.epoch, repr(rec.loss), repr(rec.accuracy)])
    return path


__all__ = [
    "TrainConfig",
    "EpochRecord",
    "Velocity",
    "init_velocity",
    "sgd_step",
    "evaluate",
    "train",
    "write_history_csv",
]
