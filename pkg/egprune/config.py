"""
Experiment configuration.

One JSON file describes a whole experiment. Every section is parsed into a
frozen dataclass that validates its own values, and every validation failure
raises `ConfigError` naming the dotted field, e.g. ``prune.zeta``.

```json
{
  "seed": 0,
  "model": {"kind": "mlp", "hidden": [64, 64, 64]},
  "data": {"source": "blobs", "n_per_class": 200, "num_classes": 4,
           "dim": 16, "spread": 1.5, "test_fraction": 0.25},
  "train": {"learning_rate": 0.05, "momentum": 0.9, "batch_size": 32, "epochs": 20},
  "prune": {"zeta": 0.5, "iterations": 6, "mode": "egp", "finetune": {"epochs": 4}},
  "entropy_split": "train",
  "reduce": {"rel_tol": 1e-6}
}
```

IDX paths are resolved relative to the directory holding the config file.
The raw file text is kept on `ExperimentConfig.raw_text` so run records can
store a byte-identical snapshot.
"""

from dataclasses import dataclass, field, fields, replace
import json
import logging
from pathlib import Path
from typing import Any, Dict, Literal, Mapping, Optional, Tuple, Type, TypeVar, Union

from .egp import PruneConfig, PruneMode
from .errors import ConfigError
from .training import TrainConfig

logger = logging.getLogger(__name__)

PathType = Union[Path, str]
EntropySplit = Literal["train", "test", "holdout"]

T = TypeVar("T")


@dataclass(frozen=True)
class ModelConfig:
    """
    Architecture of the network under study.

    ``kind='mlp'`` uses `hidden` only; ``kind='cnn'`` stacks ReLU convolutions
    with `channels` and `kernel_size` before the dense `hidden` layers.
    ``residual=True`` gives an mlp's hidden layers after the first a skip
    connection wherever consecutive widths match.
    """

    kind: Literal["mlp", "cnn"] = "mlp"
    hidden: Tuple[int, ...] = (64, 64)
    channels: Tuple[int, ...] = ()
    kernel_size: int = 3
    residual: bool = False

    def __post_init__(self) -> None:
        if self.kind not in ("mlp", "cnn"):
            raise ConfigError("kind", f"must be 'mlp' or 'cnn', not {self.kind!r}")
        object.__setattr__(self, "hidden", tuple(self.hidden))
        object.__setattr__(self, "channels", tuple(self.channels))
        if any(int(w) != w or w < 1 for w in self.hidden):
            raise ConfigError("hidden", f"widths must be positive integers, got {list(self.hidden)}")
        if any(int(c) != c or c < 1 for c in self.channels):
            raise ConfigError(
                "channels", f"must be positive integers, got {list(self.channels)}"
            )
        if self.kind == "cnn" and not self.channels:
            raise ConfigError("channels", "a cnn needs at least one convolution")
        if self.kind == "mlp" and self.channels:
            raise ConfigError("channels", "only cnn models take convolution channels")
        if not isinstance(self.residual, bool):
            raise ConfigError("residual", f"must be true or false, not {self.residual!r}")
        if self.residual and self.kind != "mlp":
            raise ConfigError("residual", "skip connections are only built for mlp models")
        if int(self.kernel_size) != self.kernel_size or self.kernel_size < 1:
            raise ConfigError("kernel_size", f"must be a positive integer, not {self.kernel_size}")


@dataclass(frozen=True)
class DataConfig:
    """
    Where the samples come from and how they are split.

    ``source='blobs'`` generates a seeded Gaussian cluster problem;
    ``source='idx'`` reads IDX image/label files. A test split is carved out
    of the training data with `test_fraction` unless IDX test files are given.
    `entropy_fraction` carves a hold-out split for activation statistics.
    The blob fields (`n_per_class`, `num_classes`, `dim`, `spread`,
    `center_box`) are ignored for IDX data, whose class count comes from the
    training labels.
    """

    source: Literal["blobs", "idx"] = "blobs"
    n_per_class: int = 200
    num_classes: int = 3
    dim: int = 8
    spread: float = 1.0
    center_box: float = 5.0
    train_images: Optional[str] = None
    train_labels: Optional[str] = None
    test_images: Optional[str] = None
    test_labels: Optional[str] = None
    limit: Optional[int] = None
    test_fraction: float = 0.2
    entropy_fraction: float = 0.2
    standardize: bool = True

    def __post_init__(self) -> None:
        if self.source not in ("blobs", "idx"):
            raise ConfigError("source", f"must be 'blobs' or 'idx', not {self.source!r}")
        if self.source == "idx":
            if not self.train_images or not self.train_labels:
                raise ConfigError("train_images", "idx data needs train_images and train_labels")
            if bool(self.test_images) != bool(self.test_labels):
                raise ConfigError("test_images", "give both test_images and test_labels or neither")
        for name in ("n_per_class", "num_classes", "dim"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ConfigError(name, f"must be a positive integer, not {value}")
        if self.spread < 0:
            raise ConfigError("spread", f"must be non-negative, not {self.spread}")
        if self.limit is not None and self.limit < 1:
            raise ConfigError("limit", f"must be positive, not {self.limit}")
        for name in ("test_fraction", "entropy_fraction"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ConfigError(name, f"must lie in (0, 1), not {value}")


@dataclass(frozen=True)
class ReduceConfig:
    """
    Acceptance tolerances of a depth reduction.

    `rel_tol` bounds the relative logit drift of every plan; `abs_tol` also
    bounds the absolute drift of plans that only drop neurons.
    """

    rel_tol: float = 1e-6
    abs_tol: float = 1e-12

    def __post_init__(self) -> None:
        for name in ("rel_tol", "abs_tol"):
            value = getattr(self, name)
            if not value > 0:
                raise ConfigError(name, f"must be positive, not {value}")


@dataclass(frozen=True)
class ExperimentConfig:
    """
    A complete experiment.

    Attributes
    ----------
    seed : int
        Master seed for data generation, initialization and shuffling.
    model, data, train, prune, reduce
        Section configs.
    entropy_split : {'train', 'test', 'holdout'}
        Split the activation statistics are gathered on.
    workers : int
        Shards used when gathering activation statistics.
    base_dir : Path
        Directory relative IDX paths are resolved against.
    raw_text : str
        The config file exactly as read.
    """

    seed: int = 0
    model: ModelConfig = field(default_factory=ModelConfig)
    data: DataConfig = field(default_factory=DataConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    prune: PruneConfig = field(default_factory=PruneConfig)
    reduce: ReduceConfig = field(default_factory=ReduceConfig)
    entropy_split: EntropySplit = "train"
    workers: int = 1
    base_dir: Path = field(default_factory=Path.cwd)
    raw_text: str = ""

    def __post_init__(self) -> None:
        if int(self.seed) != self.seed or self.seed < 0:
            raise ConfigError("seed", f"must be a non-negative integer, not {self.seed}")
        if self.entropy_split not in ("train", "test", "holdout"):
            raise ConfigError(
                "entropy_split",
                f"must be 'train', 'test' or 'holdout', not {self.entropy_split!r}",
            )
        if int(self.workers) != self.workers or self.workers < 1:
            raise ConfigError("workers", f"must be a positive integer, not {self.workers}")

    def resolve(self, path: str) -> Path:
        """Resolve a config-relative path."""
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p

    def with_overrides(
        self, seed: Optional[int] = None, mode: Optional[Union[PruneMode, str]] = None
    ) -> "ExperimentConfig":
        """Apply command-line overrides; `raw_text` is left as read."""
        cfg = self
        if seed is not None:
            cfg = replace(cfg, seed=seed)
        if mode is not None:
            prune = _build(PruneConfig, "prune", {**_prune_kwargs(cfg.prune), "mode": mode})
            cfg = replace(cfg, prune=prune)
        return cfg


def _build(cls: Type[T], section: str, values: Mapping[str, Any]) -> T:
    known = {f.name for f in fields(cls)}  # type: ignore[arg-type]
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"{section}.{unknown[0]}", "unknown field")
    try:
        return cls(**values)
    except ConfigError as exc:
        raise ConfigError(f"{section}.{exc.field}", exc.message) from None
    except TypeError as exc:
        raise ConfigError(section, str(exc)) from None


def _prune_kwargs(prune: PruneConfig) -> Dict[str, Any]:
    return {f.name: getattr(prune, f.name) for f in fields(prune)}


def _section(doc: Mapping[str, Any], name: str) -> Dict[str, Any]:
    value = doc.get(name, {})
    if not isinstance(value, dict):
        raise ConfigError(name, f"must be an object, not {type(value).__name__}")
    return dict(value)


def parse_config(text: str, base_dir: Optional[PathType] = None) -> ExperimentConfig:
    """
    Parse experiment JSON.

    Parameters
    ----------
    text : str
        The config document.
    base_dir : str | Path, optional
        Directory relative paths are resolved against. Defaults to the
        current working directory.

    Raises
    ------
    ConfigError
        On malformed JSON, unknown fields or out-of-range values.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<root>", f"invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "the config must be a JSON object")
    top = {"seed", "model", "data", "train", "prune", "reduce", "entropy_split", "workers"}
    unknown = sorted(set(doc) - top)
    if unknown:
        raise ConfigError(unknown[0], "unknown field")

    train = _build(TrainConfig, "train", _section(doc, "train"))

    prune_doc = _section(doc, "prune")
    finetune_doc = prune_doc.pop("finetune", {})
    if not isinstance(finetune_doc, dict):
        raise ConfigError("prune.finetune", "must be an object")
    finetune_defaults = {f.name: getattr(train, f.name) for f in fields(train)}
    finetune_defaults["epochs"] = max(1, train.epochs // 4)
    finetune = _build(TrainConfig, "prune.finetune", {**finetune_defaults, **finetune_doc})
    prune = _build(PruneConfig, "prune", {**prune_doc, "finetune": finetune})

    model_doc = _section(doc, "model")
    for key in ("hidden", "channels"):
        if key in model_doc and not isinstance(model_doc[key], list):
            raise ConfigError(f"model.{key}", "must be a list of integers")

    try:
        return ExperimentConfig(
            seed=doc.get("seed", 0),
            model=_build(ModelConfig, "model", model_doc),
            data=_build(DataConfig, "data", _section(doc, "data")),
            train=train,
            prune=prune,
            reduce=_build(ReduceConfig, "reduce", _section(doc, "reduce")),
            entropy_split=doc.get("entropy_split", "train"),
            workers=doc.get("workers", 1),
            base_dir=Path(base_dir) if base_dir is not None else Path.cwd(),
            raw_text=text,
        )
    except TypeError as exc:
        raise ConfigError("<root>", str(exc)) from None


def load_config(path: PathType) -> ExperimentConfig:
    """
    Read and parse an experiment config file.

    Raises
    ------
    ConfigError
        If the file cannot be read or fails validation.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from None
    cfg = parse_config(text, base_dir=path.resolve().parent)
    logger.debug("Loaded config %s (seed=%d, mode=%s)", path, cfg.seed, cfg.prune.mode.value)
    return cfg


__all__ = [
    "ModelConfig",
    "DataConfig",
    "ReduceConfig",
    "ExperimentConfig",
    "parse_config",
    "load_config",
]
