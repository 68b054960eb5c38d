"""
Dataset ingestion and generation.

This module reads big-endian IDX image/label pairs (the MNIST family of files,
optionally gzipped), generates seeded Gaussian blob problems as a desk-scale
stand-in for image benchmarks, and serves deterministic mini-batches.

IDX layout handled here::

    [offset] [type]           [value]
    0000     32 bit integer   0x00000803 (images) / 0x00000801 (labels)
    0004     32 bit integer   number of items
    0008     32 bit integer   rows            (images only)
    0012     32 bit integer   columns         (images only)
    ....     unsigned byte    payload, row-major

Example
-------
```python
from egprune.data import load_idx, batches

train = load_idx("train-images-idx3-ubyte.gz", "train-labels-idx1-ubyte.gz")
for x, y in batches(train, batch_size=64, seed=0, shuffle=True):
    ...
```
"""

from dataclasses import dataclass, field, replace
import gzip
import logging
from pathlib import Path
import struct
from typing import Any, Dict, Iterator, Literal, Optional, Tuple, Union

import numpy as np

from .errors import EmptyDatasetError, IDXFormatError

logger = logging.getLogger(__name__)

PathType = Union[Path, str]
SplitTag = Literal["train", "test", "entropy"]

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True, eq=False)
class Dataset:
    """
    An immutable labelled sample collection.

    Attributes
    ----------
    images : np.ndarray
        Inputs with a leading sample axis, ``(n, c, h, w)`` for images or
        ``(n, dim)`` for feature vectors, as float64.
    labels : np.ndarray
        Integer class index per sample.
    num_classes : int
        Number of classes; every label is below it.
    split_tag : {'train', 'test', 'entropy'}
        Role of the split in an experiment.
    metadata : dict
        Free-form annotations, e.g. standardization mean/std or blob centers.
    """

    images: np.ndarray
    labels: np.ndarray
    num_classes: int
    split_tag: SplitTag = "train"
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        images = np.array(self.images, dtype=np.float64)
        labels = np.array(self.labels, dtype=np.int64)
        if images.shape[0] != labels.shape[0]:
            raise ValueError(
                f"Dataset has {images.shape[0]} samples but {labels.shape[0]} labels."
            )
        if self.num_classes < 1:
            raise ValueError(f"num_classes must be positive, not {self.num_classes}.")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise ValueError(f"Labels must lie in [0, {self.num_classes}).")
        if self.split_tag not in ("train", "test", "entropy"):
            raise ValueError(
                f"Invalid split_tag: {self.split_tag}. Must be 'train', 'test', or 'entropy'."
            )
        images.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "images", images)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def sample_shape(self) -> Tuple[int, ...]:
        return tuple(self.images.shape[1:])

    def subset(self, indices: np.ndarray, split_tag: Optional[SplitTag] = None) -> "Dataset":
        return replace(
            self,
            images=self.images[indices],
            labels=self.labels[indices],
            split_tag=split_tag or self.split_tag,
            metadata=dict(self.metadata),
        )


def _read_bytes(path: PathType) -> bytes:
    path = Path(path)
    if path.suffix == ".gz":
        with gzip.open(path, "rb") as fh:
            return fh.read()
    return path.read_bytes()


def _parse_idx(raw: bytes, expected_magic: int, ndim: int, name: str) -> np.ndarray:
    if len(raw) < 4:
        raise IDXFormatError(f"{name}: truncated header ({len(raw)} bytes).")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise IDXFormatError(
            f"{name}: unsupported IDX type (magic 0x{magic:08x}, expected 0x{expected_magic:08x})."
        )
    header_len = 4 + 4 * ndim
    if len(raw) < header_len:
        raise IDXFormatError(f"{name}: truncated header ({len(raw)} of {header_len} bytes).")
    dims = struct.unpack(">" + "I" * ndim, raw[4:header_len])
    payload_len = int(np.prod(dims))
    payload = raw[header_len:]
    if len(payload) < payload_len:
        raise IDXFormatError(
            f"{name}: truncated payload ({len(payload)} of {payload_len} bytes)."
        )
    if len(payload) > payload_len:
        raise IDXFormatError(
            f"{name}: {len(payload) - payload_len} trailing bytes after payload."
        )
    return np.frombuffer(payload, dtype=np.uint8).reshape(dims)


def load_idx(
    images_path: PathType,
    labels_path: PathType,
    num_classes: Optional[int] = None,
    split_tag: SplitTag = "train",
) -> Dataset:
    """
    Load an IDX image/label file pair.

    Parameters
    ----------
    images_path : str | Path
        IDX3 unsigned-byte image file (``.gz`` is decompressed transparently).
    labels_path : str | Path
        IDX1 unsigned-byte label file.
    num_classes : int, optional
        Number of classes. Defaults to ``max(label) + 1``.
    split_tag : {'train', 'test', 'entropy'}, optional
        Tag for the returned split.

    Returns
    -------
    Dataset
        Images of shape ``(n, 1, rows, cols)`` scaled to [0, 1].

    Raises
    ------
    IDXFormatError
        On a bad magic number, truncated header or payload, or when the image
        and label counts differ.
    """
    images = _parse_idx(_read_bytes(images_path), IDX_IMAGES_MAGIC, 3, str(images_path))
    labels = _parse_idx(_read_bytes(labels_path), IDX_LABELS_MAGIC, 1, str(labels_path))
    if images.shape[0] != labels.shape[0]:
        raise IDXFormatError(
            f"Image count {images.shape[0]} does not match label count {labels.shape[0]}."
        )
    n_classes = num_classes if num_classes is not None else int(labels.max(initial=0)) + 1
    logger.info("Loaded %d IDX images of shape %s", images.shape[0], images.shape[1:])
    return Dataset(
        images=images[:, None, :, :].astype(np.float64) / 255.0,
        labels=labels.astype(np.int64),
        num_classes=n_classes,
        split_tag=split_tag,
    )


def write_idx(images_path: PathType, labels_path: PathType, dataset: Dataset) -> None:
    """
    Write a single-channel image dataset back to an IDX file pair.

    Pixel values are mapped back to bytes with ``rint(x * 255)``, so a dataset
    produced by `load_idx` is written out byte for byte.
    """
    images = dataset.images
    if images.ndim != 4 or images.shape[1] != 1:
        raise IDXFormatError(f"Only (n, 1, h, w) datasets can be written, not {images.shape}.")
    n, _, rows, cols = images.shape
    pixels = np.clip(np.rint(images[:, 0] * 255.0), 0, 255).astype(np.uint8)
    Path(images_path).write_bytes(
        struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols) + pixels.tobytes()
    )
    Path(labels_path).write_bytes(
        struct.pack(">II", IDX_LABELS_MAGIC, n) + dataset.labels.astype(np.uint8).tobytes()
    )


def make_blobs(
    seed: int,
    n_per_class: int,
    num_classes: int,
    dim: int,
    spread: float,
    center_box: float = 5.0,
) -> Dataset:
    """
    Generate isotropic Gaussian clusters around seeded random centers.

    Parameters
    ----------
    seed : int
        Generator seed; the dataset is a pure function of all arguments.
    n_per_class : int
        Samples drawn per class.
    num_classes : int
        Number of clusters/classes.
    dim : int
        Feature dimension.
    spread : float
        Standard deviation of every cluster.
    center_box : float, optional
        Centers are uniform in ``[-center_box, center_box]^dim``. Default is 5.

    Returns
    -------
    Dataset
        Features of shape ``(n_per_class * num_classes, dim)``, class-major
        order; the centers are kept in ``metadata["centers"]``.
    """
    for name, value in (("n_per_class", n_per_class), ("num_classes", num_classes), ("dim", dim)):
        if value < 1:
            raise ValueError(f"`{name}` must be positive, not {value}.")
    if spread < 0:
        raise ValueError(f"`spread` must be non-negative, not {spread}.")
    rng = np.random.default_rng(seed)
    centers = rng.uniform(-center_box, center_box, size=(num_classes, dim))
    labels = np.repeat(np.arange(num_classes), n_per_class)
    noise = rng.standard_normal(size=(labels.size, dim))
    images = centers[labels] + spread * noise
    return Dataset(
        images=images,
        labels=labels,
        num_classes=num_classes,
        metadata={"centers": centers.tolist(), "seed": seed},
    )


def split_dataset(
    dataset: Dataset,
    fraction: float,
    seed: int,
    tags: Tuple[SplitTag, SplitTag] = ("train", "test"),
) -> Tuple[Dataset, Dataset]:
    """
    Randomly split `dataset` in two; the second part receives ``round(fraction * n)`` samples.

    Both parts keep the original sample order.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"`fraction` must lie in (0, 1), not {fraction}.")
    n = len(dataset)
    n_second = int(round(fraction * n))
    order = np.random.default_rng(seed).permutation(n)
    second = np.sort(order[:n_second])
    first = np.sort(order[n_second:])
    if first.size == 0 or second.size == 0:
        raise EmptyDatasetError(f"Splitting {n} samples at {fraction} leaves an empty part.")
    return dataset.subset(first, tags[0]), dataset.subset(second, tags[1])


def standardize(
    dataset: Dataset, mean: Optional[float] = None, std: Optional[float] = None
) -> Dataset:
    """
    Shift and scale by a global mean/std.

    When `mean`/`std` are omitted they are computed from `dataset`; pass the
    training values to normalize other splits identically. The values used are
    stored in ``metadata["mean"]`` and ``metadata["std"]``.
    """
    mu = float(dataset.images.mean()) if mean is None else float(mean)
    sigma = float(dataset.images.std()) if std is None else float(std)
    if sigma == 0.0:
        sigma = 1.0
    metadata = dict(dataset.metadata)
    metadata.update(mean=mu, std=sigma)
    return replace(dataset, images=(dataset.images - mu) / sigma, metadata=metadata)


def batches(
    dataset: Dataset,
    batch_size: int,
    seed: int = 0,
    shuffle: bool = True,
    epoch: int = 0,
) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
    """
    Yield ``(inputs, labels)`` mini-batches.

    The shuffle order is a pure function of ``(seed, epoch)``; the final
    partial batch is included, and every sample appears exactly once.
    """
    if batch_size < 1:
        raise ValueError(f"`batch_size` must be at least 1, not {batch_size}.")
    n = len(dataset)
    if shuffle:
        order = np.random.default_rng([seed, epoch]).permutation(n)
    else:
        order = np.arange(n)
    for start in range(0, n, batch_size):
        idx = order[start : start + batch_size]
        yield dataset.images[idx], dataset.labels[idx]


__all__ = [
    "Dataset",
    "load_idx",
    "write_idx",
    "make_blobs",
    "split_dataset",
    "standardize",
    "batches",
]
