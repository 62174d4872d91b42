import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from boilnet import nn, optim
from boilnet.featext import Dataset


def one_param_net(theta):
    # single identity layer whose parameters are [w1, w2] and bias 0
    return nn.Network([nn.Layer([theta], [0.0])], hidden_activation="identity")


def grads_of(gw, gb=(0.0,)):
    return nn.Gradients([np.array([gw], dtype=float)], [np.array(gb, dtype=float)])


def test_sgd_step_example():
    out = optim.sgd_step(one_param_net([1.0, 2.0]), grads_of([0.5, -1.0]), 0.1)
    assert np.allclose(out.layers[0].weights, [[0.95, 2.1]], rtol=0, atol=1e-15)


def test_sgd_zero_gradient_fixed_point():
    net = nn.build_network([3, 4, 2], 0)
    zero = nn.Gradients([np.zeros_like(l.weights) for l in net.layers],
                        [np.zeros_like(l.biases) for l in net.layers])
    out = optim.sgd_step(net, zero, 0.3)
    assert all(np.array_equal(a.weights, b.weights) for a, b in zip(net.layers, out.layers))


def test_sgd_rejects_bad_input():
    with pytest.raises(ValueError):
        optim.sgd_step(one_param_net([1.0, 2.0]), grads_of([0.5, -1.0]), 0.0)
    with pytest.raises(ValueError):
        optim.sgd_step(one_param_net([1.0, 2.0]), grads_of([0.5, -1.0, 3.0]), 0.1)


def test_adam_first_step_example():
    net = nn.Network([nn.Layer([[1.0]], [0.0])])
    state = optim.AdamState.zeros_like(net)
    out, st1 = optim.adam_step(net, grads_of([0.5]), state, 0.001)
    assert st1.t == 1 and state.t == 0
    assert st1.m[0][0, 0] == pytest.approx(0.05)
    assert st1.v[0][0, 0] == pytest.approx(0.00025)
    step = out.layers[0].weights[0, 0] - 1.0
    assert step == pytest.approx(-0.001 * 0.5 / (0.5 + 1e-8), rel=1e-12)
    assert net.layers[0].weights[0, 0] == 1.0   # input untouched


def test_adam_zero_gradient():
    net = nn.build_network([2, 3, 1], 0)
    zero = nn.Gradients([np.zeros_like(l.weights) for l in net.layers],
                        [np.zeros_like(l.biases) for l in net.layers])
    out, st1 = optim.adam_step(net, zero, optim.AdamState.zeros_like(net), 0.01)
    assert all(np.array_equal(a.weights, b.weights) for a, b in zip(net.layers, out.layers))
    assert all(np.all(m == 0) for m in st1.m) and all(np.all(v == 0) for v in st1.v)


@given(st.floats(-1e3, 1e3).filter(lambda g: abs(g) > 1e-3), st.floats(1e-5, 1.0))
def test_adam_first_step_bounded(g, eps):
    net = nn.Network([nn.Layer([[0.0]], [0.0])])
    out, _ = optim.adam_step(net, grads_of([g]), optim.AdamState.zeros_like(net), eps)
    assert abs(out.layers[0].weights[0, 0]) <= eps * (1 + 1e-9)


def test_adam_rejects_bad_hyperparameters():
    net = nn.Network([nn.Layer([[0.0]], [0.0])])
    st0 = optim.AdamState.zeros_like(net, beta1=1.0)
    with pytest.raises(ValueError):
        optim.adam_step(net, grads_of([1.0]), st0, 0.1)


def test_adam_kernels_agree():
    from boilnet import kernels
    if kernels.compiled_kernels is None:
        pytest.skip("compiled extension not built")
    rng = np.random.default_rng(0)
    args = [rng.normal(size=50) for _ in range(2)]
    res = []
    for k in (kernels.compiled_kernels, kernels.python_kernels):
        theta, g = args[0].copy(), args[1].copy()
        m, v = np.zeros(50), np.zeros(50)
        for t in range(1, 4):
            k.adam_update(theta, g, m, v, 1e-2, 0.9, 0.999, 1e-8, 1 - 0.9 ** t, 1 - 0.999 ** t)
        res.append(theta)
    assert np.allclose(res[0], res[1], rtol=1e-14, atol=1e-15)


def test_minibatches_partition():
    rng = np.random.default_rng(0)
    b = optim.minibatches(10, 3, rng)
    assert [len(x) for x in b] == [3, 3, 3, 1]
    assert sorted(np.concatenate(b).tolist()) == list(range(10))
    one = optim.minibatches(10, 10, np.random.default_rng(1))
    assert len(one) == 1 and sorted(one[0]) == list(range(10))


def test_minibatches_deterministic_and_errors():
    a = optim.minibatches(20, 6, np.random.default_rng(5))
    b = optim.minibatches(20, 6, np.random.default_rng(5))
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    for bs in (0, 21):
        with pytest.raises(ValueError):
            optim.minibatches(20, bs, np.random.default_rng(0))


@given(st.integers(1, 200), st.data())
def test_minibatches_cover_once(n, data):
    bs = data.draw(st.integers(1, n))
    batches = optim.minibatches(n, bs, np.random.default_rng(n))
    flat = np.concatenate(batches)
    assert len(flat) == n and len(set(flat.tolist())) == n


def test_train_config_validation():
    with pytest.raises(ValueError):
        optim.TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        optim.TrainConfig(optimizer="rmsprop")


def linear_task(n=500, seed=0):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(3, 5))
    X = rng.normal(size=(n, 5))
    return Dataset(X, X @ A.T)


def test_train_converges_on_linear_target():
    data = linear_task()
    net = nn.build_network([5, 16, 3], np.random.default_rng(0))
    cfg = optim.TrainConfig(epochs=200, batch_size=100, learning_rate=1e-3,
                            loss=nn.LossConfig(lam=0.0), seed=0)
    _, hist = optim.train(net, data, None, cfg)
    assert len(hist) == 200
    assert hist.train_objective[-1] < 0.01 * hist.train_objective[0]


def test_train_deterministic():
    data = linear_task(120)
    cfg = optim.TrainConfig(epochs=5, batch_size=32, seed=3)
    a, _ = optim.train(nn.build_network([5, 8, 3], 1), data, None, cfg)
    b, _ = optim.train(nn.build_network([5, 8, 3], 1), data, None, cfg)
    assert all(np.array_equal(x.weights, y.weights) for x, y in zip(a.layers, b.layers))


def test_full_batch_sgd_descends_on_quadratic():
    data = linear_task(64, 2)
    net = nn.Network([nn.Layer(np.zeros((3, 5)), np.zeros(3))], hidden_activation="identity")
    cfg = optim.TrainConfig(epochs=30, batch_size=64, optimizer="sgd", learning_rate=0.05,
                            loss=nn.LossConfig(lam=0.0), shuffle=False)
    _, hist = optim.train(net, data, None, cfg)
    assert np.all(np.diff(hist.train_objective) <= 1e-15)


def test_train_reports_divergence():
    data = linear_task(64, 1)
    data.Y *= 1e150
    cfg = optim.TrainConfig(epochs=50, batch_size=64, optimizer="sgd", learning_rate=10.0,
                            loss=nn.LossConfig(lam=0.0))
    with np.errstate(all="ignore"), pytest.raises(optim.TrainingDiverged) as info:
        optim.train(nn.build_network([5, 4, 3], 0), data, None, cfg)
    assert "epoch" in str(info.value) and "batch" in str(info.value)


def test_train_dimension_mismatch():
    data = linear_task(20)
    with pytest.raises(ValueError):
        optim.train(nn.build_network([4, 3, 3], 0), data, None, optim.TrainConfig(epochs=1, batch_size=5))


def test_history_csv(tmp_path):
    data = linear_task(40)
    hist = optim.train(nn.build_network([5, 4, 3], 0), data, data,
                       optim.TrainConfig(epochs=3, batch_size=40))[1]
    hist.test_rmse = [np.array([1.0, 2.0, 3.0, 4.0])] * 3
    hist.write_csv(tmp_path / "h.csv")
    rows = list(csv.reader(open(tmp_path / "h.csv")))
    assert rows[0] == optim.HISTORY_COLUMNS
    assert len(rows) == 4
    # q_evap, q_single, alpha_wall, t_sup -> alpha_wall, T_sup, q_evap, q_single
    assert [float(v) for v in rows[1][2:6]] == [3.0, 4.0, 1.0, 2.0]


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 1000))
def test_adam_state_shapes_match(seed):
    net = nn.build_network([3, 5, 2], seed)
    s = optim.AdamState.zeros_like(net)
    assert [m.shape for m in s.m] == [p.shape for p in nn.parameter_views(net)]


def test_regularization_ab_on_overfit_task():
    from boilnet import experiment
    tr, te = experiment.overfit_task(0)
    free = experiment.overfit_run(tr, te, 0.0)
    reg = experiment.overfit_run(tr, te, 1e-4)
    assert free.train_loss < reg.train_loss
    assert reg.test_rmse < free.test_rmse
