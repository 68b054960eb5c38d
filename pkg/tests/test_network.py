import numpy as np
import pytest

from egprune.errors import ShapeError
from egprune.layers import LayerSpec
from egprune.network import Network, build_cnn, build_mlp


class KinkRecorder:
    """Collects the smallest |z| seen by any ReLU layer."""

    def __init__(self):
        self.closest = np.inf

    def check_compatible(self, net):
        pass

    def observe(self, layer_index, z):
        self.closest = min(self.closest, float(np.abs(z).min()))


def naive_forward(net, x):
    out = x
    for layer in net.layers:
        if layer.kind == "flatten":
            out = out.reshape(out.shape[0], -1)
            continue
        if layer.kind == "dense":
            z = np.array([[sum(layer.weights[o, i] * s[i] for i in range(s.size)) + layer.bias[o]
                           for o in range(layer.weights.shape[0])] for s in out])
        else:
            n, c, h, w = out.shape
            oc, _, kh, kw = layer.weights.shape
            z = np.zeros((n, oc, h - kh + 1, w - kw + 1))
            for s in range(n):
                for o in range(oc):
                    for i in range(h - kh + 1):
                        for j in range(w - kw + 1):
                            z[s, o, i, j] = (out[s, :, i : i + kh, j : j + kw] * layer.weights[o]).sum() + layer.bias[o]
        activated = np.maximum(z, 0.0) if layer.activation == "relu" else z
        out = out + activated if layer.residual else activated
    return out


def random_net(seed):
    rng = np.random.default_rng(seed)
    if seed % 3 == 0:
        net = build_mlp(3, [int(rng.integers(2, 9)), int(rng.integers(2, 9))], 3, seed=seed)
        x = rng.normal(size=(4, 3))
    elif seed % 3 == 2:
        width = int(rng.integers(2, 7))
        net = build_mlp(3, [width, width, width], 3, seed=seed, residual=True)
        x = rng.normal(size=(4, 3))
    else:
        net = build_cnn((1, 5, 5), [2], 3, [4], 3, seed=seed)
        x = rng.normal(size=(3, 1, 5, 5))
    for layer in net.layers:
        if layer.has_weights:
            layer.bias = rng.normal(scale=0.1, size=layer.bias.shape)
    y = rng.integers(0, 3, size=x.shape[0])
    return net, x, y


def test_build_mlp_structure():
    net = build_mlp(4, [8, 6], 3, seed=0)
    assert net.input_shape == (4,)
    assert net.num_classes == 3
    assert net.depth == 3
    assert net.relu_layers() == [0, 1]
    assert net.layers[-1].activation == "identity"
    assert net.forward(np.zeros((5, 4))).shape == (5, 3)


def test_build_cnn_structure():
    net = build_cnn((1, 6, 6), [2, 3], 3, [5], 4, seed=1)
    kinds = [layer.kind for layer in net.layers]
    assert kinds == ["conv2d", "conv2d", "flatten", "dense", "dense"]
    assert net.layers[2].in_shape == (3, 2, 2)
    assert net.relu_layers() == [0, 1, 3]
    assert net.forward(np.zeros((2, 1, 6, 6))).shape == (2, 4)


def test_zero_hidden_layers_is_a_linear_classifier():
    net = build_mlp(4, [], 2, seed=0)
    assert net.depth == 1
    assert net.relu_layers() == []


def test_batch_shape_mismatch_raises():
    net = build_mlp(4, [3], 2)
    with pytest.raises(ShapeError, match="incompatible with network input shape"):
        net.forward(np.zeros((2, 5)))
    with pytest.raises(ShapeError):
        net.forward(np.zeros(4))


def test_final_layer_must_be_identity():
    layer = LayerSpec(
        kind="dense", in_shape=(2,), out_shape=(2,), activation="relu",
        weights=np.eye(2), bias=np.zeros(2),
    )
    with pytest.raises(ShapeError, match="identity activation"):
        Network([layer])


def test_layers_must_chain():
    a = LayerSpec(kind="dense", in_shape=(2,), out_shape=(3,), activation="relu", weights=np.ones((3, 2)), bias=np.zeros(3))
    b = LayerSpec(kind="dense", in_shape=(4,), out_shape=(1,), weights=np.ones((1, 4)), bias=np.zeros(1))
    with pytest.raises(ShapeError, match="Layer 0 outputs"):
        Network([a, b])


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_forward_matches_naive_loop(seed):
    net, x, _ = random_net(seed)
    assert np.allclose(net.forward(x), naive_forward(net, x), rtol=1e-10, atol=1e-12)


def test_forward_with_states_is_bit_identical():
    net, x, _ = random_net(1)
    recorder = KinkRecorder()
    assert np.array_equal(net.forward(x), net.forward_with_states(x, recorder))
    assert np.isfinite(recorder.closest)


def test_gradients_match_central_differences():
    h = 1e-5
    checked = 0
    seed = 0
    while checked < 50:
        net, x, y = random_net(seed)
        seed += 1
        recorder = KinkRecorder()
        net.forward_with_states(x, recorder)
        # central differences are meaningless across the ReLU kink
        if recorder.closest < 1e-3:
            continue
        n_params = sum(layer.weights.size + layer.bias.size for layer in net.layers if layer.has_weights)
        assert n_params <= 500

        _, grads = net.loss_and_gradients(x, y)
        for i, layer in enumerate(net.layers):
            if not layer.has_weights:
                assert grads[i] is None
                continue
            for name, analytic in (("weights", grads[i].weights), ("bias", grads[i].bias)):
                param = getattr(layer, name)
                numeric = np.zeros_like(param)
                for idx in np.ndindex(param.shape):
                    old = param[idx]
                    param[idx] = old + h
                    up, _ = net.loss_and_gradients(x, y)
                    param[idx] = old - h
                    down, _ = net.loss_and_gradients(x, y)
                    param[idx] = old
                    numeric[idx] = (up - down) / (2 * h)
                np.testing.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-8)
        checked += 1


def test_masked_coordinates_get_zero_gradient():
    net, x, y = random_net(0)
    layer = net.layers[0]
    layer.mask[0, :] = 0.0
    layer.weights = layer.weights * layer.mask
    grads = net.backward(x, y)
    assert np.all(grads[0].weights[0, :] == 0.0)


def test_invalid_labels_raise():
    net = build_mlp(2, [3], 2)
    with pytest.raises(ValueError, match="Labels must lie in"):
        net.loss_and_gradients(np.zeros((2, 2)), np.array([0, 2]))
    with pytest.raises(ValueError, match="Expected 2 labels"):
        net.loss_and_gradients(np.zeros((2, 2)), np.array([0]))


def test_loss_of_uniform_logits_is_log_k():
    net = build_mlp(2, [], 4)
    net.layers[0].weights = np.zeros((4, 2))
    loss, _ = net.loss_and_gradients(np.ones((3, 2)), np.array([0, 1, 2]))
    assert loss == pytest.approx(np.log(4.0))


def test_topology_round_trip_reinitializes_deterministically():
    net = build_cnn((1, 5, 5), [2], 3, [4], 3, seed=7)
    rebuilt = Network.from_topology(net.topology(), seed=7)
    assert rebuilt.topology() == net.topology()
    for a, b in zip(net.layers, rebuilt.layers):
        if a.has_weights:
            assert np.array_equal(a.weights, b.weights)
    other = Network.from_topology(net.topology(), seed=8)
    assert not np.array_equal(other.layers[0].weights, net.layers[0].weights)


def test_copy_is_independent():
    net = build_mlp(2, [3], 2)
    clone = net.copy()
    clone.layers[0].weights[0, 0] = 99.0
    assert net.layers[0].weights[0, 0] != 99.0
    assert "dense" in repr(net)


def test_residual_mlp_skips_matching_widths_only():
    net = build_mlp(4, [6, 6, 5, 5], 3, seed=0, residual=True)
    assert [layer.residual for layer in net.layers] == [False, True, False, True, False]
    rebuilt = Network.from_topology(net.topology(), seed=0)
    assert [layer.residual for layer in rebuilt.layers] == [False, True, False, True, False]
    assert "+skip" in repr(net)


def test_emptied_skip_layer_passes_its_input_through():
    net = build_mlp(3, [4, 4], 2, seed=3, residual=True)
    skip = net.layers[1]
    skip.mask = np.zeros_like(skip.mask)
    skip.weights = np.zeros_like(skip.weights)
    skip.bias = np.array([0.5, -1.0, 0.0, 2.0])
    x = np.random.default_rng(0).normal(size=(5, 3))
    hidden = np.maximum(net.layers[0].pre_activation(x), 0.0)
    expected = (hidden + np.array([0.5, 0.0, 0.0, 2.0])) @ net.layers[2].weights.T + net.layers[2].bias
    assert np.allclose(net.forward(x), expected, rtol=1e-12, atol=1e-12)
