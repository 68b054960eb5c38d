import json

import numpy as np
import pytest

from egprune.checkpoint import (
    checkpoint_digest,
    dumps_network,
    load_checkpoint,
    network_from_dict,
    network_to_dict,
    save_checkpoint,
)
from egprune.errors import EGPError
from egprune.network import build_cnn, build_mlp


def test_save_and_reload_is_bit_exact(tmp_path):
    net = build_cnn((1, 5, 5), [2], 3, [4], 3, seed=4)
    net.layers[0].bias = np.array([0.1, 1.0 / 3.0])
    net.layers[3].mask[1, :] = 0.0
    net.layers[3].weights[1, :] = 0.0
    net.metadata = {"model": "cnn", "dataset": "blobs-3x8"}

    path = save_checkpoint(net, tmp_path / "nested" / "net.json")
    assert path.exists()
    loaded = load_checkpoint(path)

    assert loaded.topology() == net.topology()
    assert loaded.rng_seed == 4
    assert loaded.metadata == net.metadata
    for a, b in zip(net.layers, loaded.layers):
        if a.has_weights:
            assert np.array_equal(a.weights, b.weights)
            assert np.array_equal(a.bias, b.bias)
            assert np.array_equal(a.mask, b.mask)
    assert dumps_network(loaded) == dumps_network(net)


def test_serialization_is_stable():
    a = build_mlp(3, [4], 2, seed=1)
    b = build_mlp(3, [4], 2, seed=1)
    assert dumps_network(a) == dumps_network(b)
    assert checkpoint_digest(a) == checkpoint_digest(b)
    b.metadata["stage"] = "trained"
    assert checkpoint_digest(a) != checkpoint_digest(b)


def test_masks_are_written_as_integers():
    doc = network_to_dict(build_mlp(2, [2], 2))
    assert doc["format_version"] == 1
    assert set(doc["layers"][0]["mask"]) == {1}
    assert all(isinstance(v, int) for v in doc["layers"][0]["mask"])


def test_unknown_version_is_rejected():
    doc = network_to_dict(build_mlp(2, [2], 2))
    doc["format_version"] = 99
    with pytest.raises(EGPError, match="format_version"):
        network_from_dict(doc)


def test_missing_field_is_reported():
    doc = network_to_dict(build_mlp(2, [2], 2))
    del doc["layers"][1]["bias"]
    with pytest.raises(EGPError, match="missing field 'bias'"):
        network_from_dict(doc)


def test_invalid_json_is_reported(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(EGPError, match="not valid JSON"):
        load_checkpoint(path)


def test_checkpoint_is_plain_json(tmp_path):
    path = save_checkpoint(build_mlp(2, [], 2), tmp_path / "net.json")
    doc = json.loads(path.read_text(encoding="utf-8"))
    assert [layer["kind"] for layer in doc["layers"]] == ["dense"]


def test_skip_connections_survive_a_reload(tmp_path):
    net = build_mlp(3, [4, 4], 2, seed=2, residual=True)
    loaded = load_checkpoint(save_checkpoint(net, tmp_path / "net.json"))
    assert [layer.residual for layer in loaded.layers] == [False, True, False]
    assert "residual" not in network_to_dict(net)["layers"][0]
    x = np.random.default_rng(0).normal(size=(3, 3))
    assert np.array_equal(loaded.forward(x), net.forward(x))
