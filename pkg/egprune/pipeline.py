"""
End-to-end experiment steps shared by the command-line interface and the
reference experiment script.

Each step is a pure function of the experiment config (and, where relevant,
a starting network): it loads or generates the configured splits, builds or
reuses a network, and returns in-memory results. Nothing here writes files.
"""

from dataclasses import dataclass, replace
import logging
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .config import ExperimentConfig
from .data import Dataset, load_idx, make_blobs, split_dataset, standardize
from .depth_reduce import ReductionResult, apply_plan, plan_reduction
from .egp import IterationLog, egp_iterate
from .entropy import EntropyReport, classify_states, collect_stats
from .errors import ConfigError
from .network import Network, build_cnn, build_mlp
from .training import EpochRecord, evaluate, train

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Splits:
    """Train, test and activation-statistics data of one experiment."""

    train: Dataset
    test: Dataset
    entropy: Dataset

    def by_name(self, name: str) -> Dataset:
        if name == "holdout":
            return self.entropy
        if name not in ("train", "test", "entropy"):
            raise ValueError(f"Invalid split: {name}. Must be 'train', 'test' or 'holdout'.")
        return getattr(self, name)


def _as_vectors(dataset: Dataset) -> Dataset:
    return replace(dataset, images=dataset.images.reshape(len(dataset), -1))


def load_splits(cfg: ExperimentConfig) -> Splits:
    """
    Load or generate the configured data and split it.

    Standardization statistics come from the training split only and are
    reused for the test and statistics splits.
    """
    data = cfg.data
    if data.source == "blobs":
        full = make_blobs(
            seed=cfg.seed,
            n_per_class=data.n_per_class,
            num_classes=data.num_classes,
            dim=data.dim,
            spread=data.spread,
            center_box=data.center_box,
        )
        train_set, test_set = split_dataset(full, data.test_fraction, seed=cfg.seed)
    else:
        assert data.train_images is not None and data.train_labels is not None
        train_set = load_idx(cfg.resolve(data.train_images), cfg.resolve(data.train_labels))
        if data.limit is not None:
            train_set = train_set.subset(np.arange(min(data.limit, len(train_set))))
        if data.test_images and data.test_labels:
            test_set = load_idx(
                cfg.resolve(data.test_images),
                cfg.resolve(data.test_labels),
                num_classes=train_set.num_classes,
                split_tag="test",
            )
        else:
            train_set, test_set = split_dataset(train_set, data.test_fraction, seed=cfg.seed)

    holdout: Optional[Dataset] = None
    if cfg.entropy_split == "holdout":
        train_set, holdout = split_dataset(
            train_set, data.entropy_fraction, seed=cfg.seed + 1, tags=("train", "entropy")
        )
    if data.standardize:
        train_set = standardize(train_set)
        mean, std = train_set.metadata["mean"], train_set.metadata["std"]
        test_set = standardize(test_set, mean, std)
        if holdout is not None:
            holdout = standardize(holdout, mean, std)

    if cfg.model.kind == "mlp":
        train_set, test_set = _as_vectors(train_set), _as_vectors(test_set)
        if holdout is not None:
            holdout = _as_vectors(holdout)
    elif len(train_set.sample_shape) != 3:
        raise ConfigError("model.kind", "a cnn needs image data of shape (c, h, w)")

    entropy_set = {"train": train_set, "test": test_set}.get(cfg.entropy_split, holdout)
    assert entropy_set is not None
    logger.info(
        "Splits: train=%d test=%d statistics=%d (%s)",
        len(train_set),
        len(test_set),
        len(entropy_set),
        cfg.entropy_split,
    )
    return Splits(train=train_set, test=test_set, entropy=entropy_set)


def build_model(cfg: ExperimentConfig, sample_shape: Sequence[int], num_classes: int) -> Network:
    """Freshly initialized network for the configured architecture."""
    model = cfg.model
    if model.kind == "mlp":
        net = build_mlp(
            int(np.prod(sample_shape)),
            model.hidden,
            num_classes,
            seed=cfg.seed,
            residual=model.residual,
        )
    else:
        c, h, w = sample_shape
        net = build_cnn(
            (c, h, w), model.channels, model.kernel_size, model.hidden, num_classes, seed=cfg.seed
        )
    net.metadata.update(model=model_name(net), dataset=dataset_name(cfg))
    return net


def model_name(net: Network) -> str:
    """
    Short architecture label, e.g. ``mlp-8-16-16-3`` or ``cnn-1x28x28-c4-c8-32-10``.

    Layers with a skip connection carry an ``r`` suffix (``mlp-8-16-16r-3``).
    """
    parts: List[str] = []
    for layer in net.layers:
        if layer.kind == "conv2d":
            parts.append(f"c{layer.out_shape[0]}")
        elif layer.kind == "dense":
            parts.append(f"{layer.out_shape[0]}{'r' if layer.residual else ''}")
    kind = "cnn" if any(layer.kind == "conv2d" for layer in net.layers) else "mlp"
    return "-".join([kind, "x".join(map(str, net.input_shape)), *parts])


def dataset_name(cfg: ExperimentConfig) -> str:
    if cfg.data.source == "blobs":
        return f"blobs-{cfg.data.num_classes}x{cfg.data.dim}"
    assert cfg.data.train_images is not None
    return f"idx-{cfg.resolve(cfg.data.train_images).name}"


def run_train(
    cfg: ExperimentConfig, splits: Optional[Splits] = None
) -> Tuple[Network, List[EpochRecord], Splits]:
    """Build and train the configured model."""
    splits = splits or load_splits(cfg)
    net = build_model(cfg, splits.train.sample_shape, splits.train.num_classes)
    trained, history = train(net, splits.train, cfg.train, seed=cfg.seed)
    return trained, history, splits


def run_prune(
    cfg: ExperimentConfig, net: Network, splits: Optional[Splits] = None
) -> Tuple[Network, List[IterationLog], Splits]:
    """Run the configured pruning loop on `net`; accuracy is measured on the test split."""
    splits = splits or load_splits(cfg)
    pruned, logs = egp_iterate(
        net,
        splits.train,
        cfg.prune,
        entropy_data=splits.entropy,
        eval_data=splits.test,
        seed=cfg.seed,
        workers=cfg.workers,
    )
    pruned.metadata["prune_mode"] = cfg.prune.mode.value
    return pruned, logs, splits


def entropy_report(cfg: ExperimentConfig, net: Network, dataset: Dataset) -> EntropyReport:
    return classify_states(collect_stats(net, dataset.images, workers=cfg.workers))


def run_reduce(
    cfg: ExperimentConfig, net: Network, splits: Optional[Splits] = None
) -> Tuple[ReductionResult, EntropyReport, Splits]:
    """Plan and apply a depth reduction verified on the statistics split."""
    splits = splits or load_splits(cfg)
    report = entropy_report(cfg, net, splits.entropy)
    plan = plan_reduction(net, report)
    result = apply_plan(
        net,
        plan,
        probes=splits.entropy.images,
        rel_tol=cfg.reduce.rel_tol,
        abs_tol=cfg.reduce.abs_tol,
    )
    return result, report, splits


def run_scratch(
    cfg: ExperimentConfig, topology: Sequence[Dict[str, Any]], splits: Optional[Splits] = None
) -> Tuple[Network, List[EpochRecord], Splits]:
    """Train a freshly initialized network with the given topology for the full schedule."""
    splits = splits or load_splits(cfg)
    net = Network.from_topology(topology, seed=cfg.seed)
    net.metadata.update(model=model_name(net), dataset=dataset_name(cfg), stage="scratch")
    trained, history = train(net, splits.train, cfg.train, seed=cfg.seed)
    return trained, history, splits


def top1(net: Network, splits: Splits) -> float:
    """Top-1 accuracy on the test split."""
    _, accuracy = evaluate(net, splits.test)
    return accuracy


__all__ = [
    "Splits",
    "load_splits",
    "build_model",
    "model_name",
    "dataset_name",
    "run_train",
    "run_prune",
    "entropy_report",
    "run_reduce",
    "run_scratch",
    "top1",
]
