import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from boilnet import nn


def tiny_net():
    # 2 -> 1 -> 1, ELU hidden, identity output
    return nn.Network([nn.Layer([[1.0, 1.0]], [0.0]), nn.Layer([[2.0]], [1.0])])


# ---------------------------------------------------------------- activations

def test_elu_values():
    assert nn.elu(0.0) == 0.0
    assert nn.elu(2.5) == 2.5
    assert nn.elu(-1.0) == pytest.approx(math.exp(-1) - 1, abs=1e-15)
    assert nn.elu(-1.0) == pytest.approx(-0.6321206, abs=1e-7)


def test_elu_derivative_values():
    assert nn.elu_derivative(3.0) == 1.0
    assert nn.elu_derivative(0.0) == 1.0
    assert nn.elu_derivative(-1.0) == pytest.approx(0.3678794, abs=1e-7)


def test_elu_rejects_nonfinite():
    with pytest.raises(ValueError):
        nn.elu(float("nan"))
    with pytest.raises(ValueError):
        nn.elu_derivative(np.array([1.0, np.inf]))
    with pytest.raises(ValueError):
        nn.elu(1.0, alpha=0.0)


@given(st.floats(-50, 50), st.floats(0.1, 5))
def test_elu_bounds_and_derivative(x, alpha):
    y = nn.elu(x, alpha)
    assert y >= -alpha
    # derivative equals elu + alpha on the negative branch
    if x < 0:
        assert nn.elu_derivative(x, alpha) == pytest.approx(y + alpha, rel=1e-12, abs=1e-14)


@given(st.lists(st.floats(-20, 20), min_size=2, max_size=20))
def test_elu_monotone(xs):
    xs = np.sort(np.array(xs))
    assert np.all(np.diff(nn.elu(xs)) >= 0)


def test_elu_continuity_at_zero():
    for eps in (1e-3, 1e-6, 1e-9):
        assert abs(nn.elu(eps) - nn.elu(-eps)) < 2.1 * eps


# ---------------------------------------------------------------- forward

def test_forward_fixture_positive():
    y, cache = nn.forward(tiny_net(), [1.0, 2.0])
    assert cache.zs[0][0, 0] == 3.0
    assert cache.hs[1][0, 0] == 3.0
    assert y[0] == 7.0


def test_forward_fixture_negative():
    y, cache = nn.forward(tiny_net(), [1.0, -2.0])
    assert cache.zs[0][0, 0] == -1.0
    assert cache.hs[1][0, 0] == pytest.approx(-0.6321206, abs=1e-7)
    assert y[0] == pytest.approx(-0.2642411, abs=1e-7)


def test_forward_zero_network():
    net = nn.Network([nn.Layer(np.zeros((3, 5)), np.zeros(3)), nn.Layer(np.zeros((2, 3)), np.zeros(2))])
    y, _ = nn.forward(net, np.arange(5.0))
    assert np.all(y == 0)


def test_forward_dimension_mismatch():
    with pytest.raises(ValueError):
        nn.forward(tiny_net(), [1.0, 2.0, 3.0])


def test_forward_deterministic():
    net = nn.build_network([19, 16, 4], 3)
    x = np.random.default_rng(0).normal(size=(7, 19))
    assert np.array_equal(net.predict(x), net.predict(x))


def test_network_shape_checks():
    with pytest.raises(ValueError):
        nn.Network([nn.Layer(np.zeros((3, 2)), np.zeros(3)), nn.Layer(np.zeros((1, 4)), np.zeros(1))])
    with pytest.raises(ValueError):
        nn.Layer(np.zeros((3, 2)), np.zeros(2))


# ---------------------------------------------------------------- loss / regularization

def test_loss_values():
    assert nn.loss([1, 3], [1, 3], "L2") == 0
    assert nn.loss([1, 3], [1, 3], "L1") == 0
    assert nn.loss([1, 3], [0, 1], "L2") == 2.5
    assert nn.loss([1, 3], [0, 1], "L1") == 1.5
    with pytest.raises(ValueError):
        nn.loss([1, 2], [1])
    with pytest.raises(ValueError):
        nn.loss([], [])


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=8), st.data())
def test_loss_symmetric_nonnegative(a, data):
    b = data.draw(st.lists(st.floats(-1e3, 1e3), min_size=len(a), max_size=len(a)))
    assert nn.loss(a, b) == nn.loss(b, a) >= 0
    assert nn.loss(a, a, "L1") == 0


def test_regularization_values():
    net = nn.Network([nn.Layer([[1.0, 2.0]], [5.0])])
    assert nn.regularization(net, "L2") == 2.5
    net = nn.Network([nn.Layer([[1.0, -2.0]], [5.0])])
    assert nn.regularization(net, "L1") == 3.0
    zero = nn.Network([nn.Layer(np.zeros((2, 2)), [1.0, 1.0])])
    assert nn.regularization(zero, "L2") == 0 == nn.regularization(zero, "L1")


def test_total_objective():
    net = tiny_net()
    cfg0 = nn.LossConfig(lam=0.0)
    assert nn.total_objective(net, [([1.0, 2.0], [7.0])], cfg0) == 0.0
    cfg = nn.LossConfig(lam=1e-4)
    expected = 1e-4 * nn.regularization(net)
    assert nn.total_objective(net, [([1.0, 2.0], [7.0])], cfg) == pytest.approx(expected, rel=1e-15)
    # per-sample losses 2.5 and 0.5 -> mean 1.5
    ident = nn.Network([nn.Layer(np.eye(2), np.zeros(2))], output_activation="identity",
                       hidden_activation="identity")
    batch = [([1.0, 3.0], [0.0, 1.0]), ([1.0, 1.0], [0.0, 1.0])]
    assert nn.total_objective(ident, batch, cfg0) == pytest.approx(1.5, abs=1e-15)
    with pytest.raises(ValueError):
        nn.total_objective(net, [], cfg0)


def test_zero_lambda_equals_mean_loss():
    net = nn.build_network([3, 5, 2], 1)
    rng = np.random.default_rng(2)
    X, Y = rng.normal(size=(6, 3)), rng.normal(size=(6, 2))
    got = nn.total_objective(net, (X, Y), nn.LossConfig(lam=0.0))
    want = np.mean([nn.loss(net.predict(x[None])[0], y) for x, y in zip(X, Y)])
    assert got == pytest.approx(want, rel=1e-14)


# ---------------------------------------------------------------- backward

def test_backward_fixture():
    net = tiny_net()
    cfg = nn.LossConfig(lam=0.0)
    _, cache = nn.forward(net, [1.0, 2.0])
    g = nn.backward(net, cache, [5.0], cfg)
    assert g.biases[1][0] == 4.0
    assert g.weights[1][0, 0] == 12.0
    assert np.array_equal(g.weights[0], [[8.0, 16.0]])
    assert g.biases[0][0] == 8.0


def test_backward_exact_fit_zero():
    net = tiny_net()
    _, cache = nn.forward(net, [1.0, 2.0])
    g = nn.backward(net, cache, [7.0], nn.LossConfig(lam=0.0))
    assert np.all(g.flat() == 0)


def test_backward_regularization_only():
    net = tiny_net()
    lam = 0.01
    _, cache = nn.forward(net, [1.0, 2.0])
    g = nn.backward(net, cache, [7.0], nn.LossConfig(lam=lam))
    for gw, layer in zip(g.weights, net.layers):
        assert np.allclose(gw, lam * layer.weights, rtol=0, atol=1e-15)
    assert all(np.all(gb == 0) for gb in g.biases)
    g1 = nn.backward(net, cache, [7.0], nn.LossConfig(lam=lam, regularizer="L1"))
    assert np.allclose(g1.weights[0], lam * np.sign(net.layers[0].weights))


def test_backward_shapes():
    net = nn.build_network([5, 7, 3, 2], 0)
    _, cache = nn.forward_batch(net, np.ones((4, 5)))
    g = nn.backward_batch(net, cache, np.zeros((4, 2)), nn.LossConfig())
    assert [w.shape for w in g.weights] == [l.shape for l in net.layers]
    assert [b.shape for b in g.biases] == [l.biases.shape for l in net.layers]


def test_backward_batch_is_mean_of_samples():
    net = nn.build_network([4, 6, 2], 5)
    rng = np.random.default_rng(1)
    X, Y = rng.normal(size=(5, 4)), rng.normal(size=(5, 2))
    cfg = nn.LossConfig(lam=0.0)
    _, cache = nn.forward_batch(net, X)
    batch = nn.backward_batch(net, cache, Y, cfg).flat()
    singles = [nn.backward(net, nn.forward(net, x)[1], y, cfg).flat() for x, y in zip(X, Y)]
    assert np.allclose(batch, np.mean(singles, axis=0), rtol=1e-12, atol=1e-15)


# ---------------------------------------------------------------- gradient check

@pytest.mark.parametrize("norm", ["L2", "L1"])
@pytest.mark.parametrize("lam", [0.0, 1e-4, 1e-2])
def test_gradient_check_19_32_32_4(lam, norm):
    rng = np.random.default_rng(7)
    net = nn.build_network([19, 32, 32, 4], rng)
    x, y = rng.normal(size=19), rng.normal(size=4)
    err = nn.gradient_check(net, x, y, nn.LossConfig(norm=norm, lam=lam))
    assert err <= 1e-6


def test_gradient_check_zero_net():
    net = nn.Network([nn.Layer(np.zeros((3, 2)), np.zeros(3)), nn.Layer(np.zeros((1, 3)), np.zeros(1))])
    assert nn.gradient_check(net, [0.0, 0.0], [0.0], nn.LossConfig(lam=0.0)) == 0.0


def test_gradient_check_detects_sign_flip():
    rng = np.random.default_rng(3)
    net = nn.build_network([6, 8, 3], rng)
    x, y = rng.normal(size=6), rng.normal(size=3)

    def broken(net, cache, Y, cfg):
        g = nn.backward_batch(net, cache, Y, cfg)
        g.weights[0] = -g.weights[0]
        return g

    assert nn.gradient_check(net, x, y, nn.LossConfig(), backward_fn=broken) > 1e-2


def test_gradient_check_direct_method_agrees_roughly():
    rng = np.random.default_rng(4)
    net = nn.build_network([3, 4, 2], rng)
    x, y = rng.normal(size=3), rng.normal(size=2)
    assert nn.gradient_check(net, x, y, nn.LossConfig(), method="direct") < 1e-4


@settings(max_examples=15, deadline=None)
@given(st.lists(st.integers(1, 12), min_size=1, max_size=4), st.integers(0, 2**31),
       st.sampled_from([0.0, 1e-4, 1e-2]))
def test_gradient_check_random_architectures(hidden, seed, lam):
    rng = np.random.default_rng(seed)
    sizes = [int(rng.integers(1, 6))] + hidden + [int(rng.integers(1, 4))]
    net = nn.build_network(sizes, rng)
    for l in net.layers:
        l.biases[:] = rng.normal(scale=0.5, size=l.biases.shape)
    x, y = rng.normal(size=sizes[0]), rng.normal(size=sizes[-1])
    assert nn.gradient_check(net, x, y, nn.LossConfig(lam=lam)) <= 1e-6


# ---------------------------------------------------------------- init / serialization

def test_xavier_bounds_and_determinism():
    a = nn.xavier_init((4, 2), np.random.default_rng(11))
    b = nn.xavier_init((4, 2), np.random.default_rng(11))
    assert np.all(np.abs(a.weights) <= 1.0)
    assert np.array_equal(a.weights, b.weights)
    assert np.all(a.biases == 0)
    with pytest.raises(ValueError):
        nn.xavier_init((0, 3), np.random.default_rng(0))


def test_xavier_variance():
    w = nn.xavier_init((64, 64), np.random.default_rng(0)).weights
    assert abs(w.var() - 1 / 64) <= 0.25 / 64


def test_json_round_trip_bit_exact(tmp_path):
    net = nn.build_network([19, 8, 4], 9)
    net.feature_stats = {"mean": [0.5] * 19, "std": [2.0] * 19}
    path = tmp_path / "m.json"
    nn.save_network(net, path)
    doc = json.loads(path.read_text())
    assert set(doc) == {"alpha", "output_activation", "layers", "feature_stats", "target_stats"}
    assert set(doc["layers"][0]) == {"rows", "cols", "weights", "biases"}
    back = nn.load_network(path)
    X = np.random.default_rng(0).normal(size=(50, 19))
    assert np.array_equal(net.predict(X), back.predict(X))
    assert back.feature_stats == net.feature_stats


def test_json_rejects_bad_layer():
    d = nn.network_to_dict(tiny_net())
    d["layers"][0]["rows"] = 2
    with pytest.raises(ValueError):
        nn.network_from_dict(d)
