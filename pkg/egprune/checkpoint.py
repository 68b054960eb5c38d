"""
JSON checkpoints for `Network` objects.

A checkpoint is a single JSON document::

    {"format_version": 1, "seed": 0,
     "layers": [{"kind": "dense", "activation": "relu", "in_shape": [4],
                 "out_shape": [8], "weight_shape": [8, 4],
                 "weights": [...], "bias": [...], "mask": [1, 0, ...]}, ...],
     "metadata": {...}}

Arrays are flattened row-major. Floats are written with Python's shortest
round-trip representation, so a reload reproduces every weight bit for bit and
the same network always serializes to the same bytes.
"""

import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np

from .errors import EGPError
from .layers import LayerSpec
from .network import Network

logger = logging.getLogger(__name__)

PathType = Union[Path, str]

FORMAT_VERSION = 1


def network_to_dict(net: Network) -> Dict[str, Any]:
    layers = []
    for layer in net.layers:
        entry: Dict[str, Any] = {
            "kind": layer.kind,
            "activation": layer.activation,
            "in_shape": list(layer.in_shape),
            "out_shape": list(layer.out_shape),
        }
        if layer.weights is not None and layer.bias is not None and layer.mask is not None:
            entry["weight_shape"] = list(layer.weights.shape)
            entry["weights"] = layer.weights.ravel().tolist()
            entry["bias"] = layer.bias.tolist()
            entry["mask"] = layer.mask.ravel().astype(np.int64).tolist()
        if layer.residual:
            entry["residual"] = True
        layers.append(entry)
    return {
        "format_version": FORMAT_VERSION,
        "seed": net.rng_seed,
        "layers": layers,
        "metadata": dict(sorted(net.metadata.items())),
    }


def network_from_dict(doc: Dict[str, Any]) -> Network:
    """
    Rebuild a network from a checkpoint document.

    Raises
    ------
    EGPError
        If the format version is unknown or a required field is missing.
    """
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise EGPError(
            f"Unsupported checkpoint format_version: {version!r}. Expected {FORMAT_VERSION}."
        )
    try:
        layers = []
        for entry in doc["layers"]:
            weights = bias = mask = None
            if entry["kind"] != "flatten":
                shape = tuple(entry["weight_shape"])
                weights = np.asarray(entry["weights"], dtype=np.float64).reshape(shape)
                bias = np.asarray(entry["bias"], dtype=np.float64)
                mask = np.asarray(entry["mask"], dtype=np.float64).reshape(shape)
            layers.append(
                LayerSpec(
                    kind=entry["kind"],
                    activation=entry["activation"],
                    in_shape=tuple(entry["in_shape"]),
                    out_shape=tuple(entry["out_shape"]),
                    weights=weights,
                    bias=bias,
                    mask=mask,
                    residual=bool(entry.get("residual", False)),
                )
            )
        return Network(layers, rng_seed=int(doc["seed"]), metadata=doc.get("metadata", {}))
    except KeyError as exc:
        raise EGPError(f"Checkpoint is missing field {exc.args[0]!r}.") from exc


def dumps_network(net: Network) -> str:
    return json.dumps(network_to_dict(net), separators=(",", ":")) + "\n"


def save_checkpoint(net: Network, path: PathType) -> Path:
    """
    Write `net` to `path` as a JSON checkpoint.

    Returns
    -------
    Path
        The resolved output path.
    """
    path = Path(path).resolve()
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_network(net), encoding="utf-8")
    logger.info("Saved checkpoint %s (%d layers)", path, len(net.layers))
    return path


def load_checkpoint(path: PathType) -> Network:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise EGPError(f"Checkpoint {path} is not valid JSON: {exc}") from exc
    return network_from_dict(doc)


def checkpoint_digest(net: Network) -> str:
    """SHA-256 of the serialized network, used to link derived artifacts to their source."""
    return hashlib.sha256(dumps_network(net).encode("utf-8")).hexdigest()


__all__ = [
    "FORMAT_VERSION",
    "network_to_dict",
    "network_from_dict",
    "dumps_network",
    "save_checkpoint",
    "load_checkpoint",
    "checkpoint_digest",
]
