"""Dense feedforward network with ELU hidden units, trained from scratch.

Storage convention: layer ``k`` holds ``weights`` of shape ``(out, in)`` and
``biases`` of shape ``(out,)``. Batched passes carry samples along rows, so
``z = h_prev @ W.T + b``.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from boilnet import kernels

ACTIVATIONS = ("elu", "identity")


def _check_finite(x):
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite input")


def elu(x, alpha=1.0):
    """x for x >= 0, alpha*(exp(x) - 1) otherwise. Works on scalars and arrays."""
    if alpha <= 0:
        raise ValueError("alpha must be > 0")
    x = np.asarray(x, dtype=np.float64)
    _check_finite(x)
    out = np.where(x >= 0.0, x, alpha * np.expm1(np.minimum(x, 0.0)))
    return float(out) if out.ndim == 0 else out


def elu_derivative(x, alpha=1.0):
    if alpha <= 0:
        raise ValueError("alpha must be > 0")
    x = np.asarray(x, dtype=np.float64)
    _check_finite(x)
    out = np.where(x >= 0.0, 1.0, alpha * np.exp(np.minimum(x, 0.0)))
    return float(out) if out.ndim == 0 else out


@dataclass
class Layer:
    weights: np.ndarray
    biases: np.ndarray

    def __post_init__(self):
        self.weights = np.array(self.weights, dtype=np.float64, ndmin=2)
        self.biases = np.array(self.biases, dtype=np.float64, ndmin=1)
        if self.weights.ndim != 2 or self.biases.shape != (self.weights.shape[0],):
            raise ValueError(
                f"bias shape {self.biases.shape} incompatible with weights {self.weights.shape}")

    @property
    def shape(self):
        return self.weights.shape


@dataclass
class Network:
    layers: list
    alpha: float = 1.0
    hidden_activation: str = "elu"
    output_activation: str = "identity"
    feature_stats: Optional[dict] = None
    target_stats: Optional[dict] = None

    def __post_init__(self):
        if not self.layers:
            raise ValueError("network needs at least one layer")
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")
        for act in (self.hidden_activation, self.output_activation):
            if act not in ACTIVATIONS:
                raise ValueError(f"unknown activation {act!r}")
        for k in range(1, len(self.layers)):
            if self.layers[k].shape[1] != self.layers[k - 1].shape[0]:
                raise ValueError(
                    f"layer {k} expects {self.layers[k].shape[1]} inputs, "
                    f"previous layer gives {self.layers[k - 1].shape[0]}")

    @property
    def n_inputs(self):
        return self.layers[0].shape[1]

    @property
    def n_outputs(self):
        return self.layers[-1].shape[0]

    @property
    def sizes(self):
        return [self.n_inputs] + [layer.shape[0] for layer in self.layers]

    def copy(self):
        return copy.deepcopy(self)

    def is_finite(self):
        return all(np.all(np.isfinite(l.weights)) and np.all(np.isfinite(l.biases))
                   for l in self.layers)

    def predict(self, X):
        """Batched prediction, rows are samples."""
        return forward_batch(self, X)[0]


@dataclass
class ForwardCache:
    zs: list      # pre-activations per layer
    hs: list      # hs[0] is the input, hs[k] = g(zs[k-1])
    dgs: list = field(default_factory=list)   # g'(z) per layer


@dataclass
class Gradients:
    weights: list
    biases: list

    def flat(self):
        return np.concatenate([np.concatenate([w.ravel(), b.ravel()])
                               for w, b in zip(self.weights, self.biases)])


@dataclass
class LossConfig:
    norm: str = "L2"
    lam: float = 1e-4
    regularizer: str = "L2"

    def __post_init__(self):
        if self.norm not in ("L1", "L2") or self.regularizer not in ("L1", "L2"):
            raise ValueError("norm and regularizer must be 'L1' or 'L2'")
        if not self.lam >= 0:
            raise ValueError("lambda must be >= 0")


def build_network(sizes, rng=None, alpha=1.0, output_activation="identity"):
    """Xavier-initialized network for layer widths ``sizes`` (input first)."""
    rng = np.random.default_rng(rng)
    layers = [xavier_init((sizes[k + 1], sizes[k]), rng) for k in range(len(sizes) - 1)]
    return Network(layers, alpha=alpha, output_activation=output_activation)


def xavier_init(shape, rng):
    """Glorot uniform weights in +-sqrt(6/(in+out)), zero biases."""
    n_out, n_in = shape
    if n_out < 1 or n_in < 1:
        raise ValueError(f"invalid layer shape {shape}")
    rng = np.random.default_rng(rng)
    bound = math.sqrt(6.0 / (n_in + n_out))
    return Layer(rng.uniform(-bound, bound, size=(n_out, n_in)), np.zeros(n_out))


def _activate(z, bias, act, alpha):
    """Add bias in place and return (h, g'(z))."""
    if act == "elu":
        h = np.empty_like(z)
        dg = np.empty_like(z)
        kernels.bias_elu(z, bias, alpha, h, dg)
        return h, dg
    z += bias
    return z, None


def forward_batch(net, X):
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != net.n_inputs:
        raise ValueError(f"expected input width {net.n_inputs}, got shape {X.shape}")
    cache = ForwardCache(zs=[], hs=[X], dgs=[])
    h = X
    last = len(net.layers) - 1
    for k, layer in enumerate(net.layers):
        z = h @ layer.weights.T
        act = net.output_activation if k == last else net.hidden_activation
        h, dg = _activate(z, layer.biases, act, net.alpha)
        cache.zs.append(z)
        cache.hs.append(h)
        cache.dgs.append(dg)
    return h, cache


def forward(net, x):
    """Single-sample forward pass; returns (y_hat, cache)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("forward expects a single feature vector")
    _check_finite(x)
    y, cache = forward_batch(net, x[None, :])
    return y[0], cache


def loss(y_hat, y, norm="L2"):
    y_hat = np.asarray(y_hat, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if y_hat.shape != y.shape or y.size == 0:
        raise ValueError(f"loss needs equal nonempty shapes, got {y_hat.shape} and {y.shape}")
    r = y_hat - y
    if norm == "L1":
        return float(np.mean(np.abs(r)))
    if norm == "L2":
        return float(np.mean(r * r))
    raise ValueError(f"unknown norm {norm!r}")


def _loss_rows(Y_hat, Y, norm):
    r = Y_hat - Y
    return np.mean(np.abs(r) if norm == "L1" else r * r, axis=1)


def regularization(net, kind="L2"):
    """Weight penalty; biases are never regularized."""
    if kind == "L2":
        return 0.5 * sum(float(np.sum(l.weights * l.weights)) for l in net.layers)
    if kind == "L1":
        return sum(float(np.sum(np.abs(l.weights))) for l in net.layers)
    raise ValueError(f"unknown regularizer {kind!r}")


def total_objective(net, batch, cfg):
    """Mean data loss over ``batch`` plus lambda * regularization.

    ``batch`` is either a list of ``(x, y)`` pairs or an ``(X, Y)`` tuple of
    2-D arrays.
    """
    X, Y = _as_arrays(batch)
    Y_hat, _ = forward_batch(net, X)
    if Y_hat.shape != Y.shape:
        raise ValueError("target width does not match network output")
    data = float(np.mean(_loss_rows(Y_hat, Y, cfg.norm)))
    if cfg.lam == 0:
        return data
    return data + cfg.lam * regularization(net, cfg.regularizer)


def _as_arrays(batch):
    if isinstance(batch, tuple) and len(batch) == 2 and np.ndim(batch[0]) == 2:
        X, Y = batch
    else:
        if len(batch) == 0:
            raise ValueError("empty batch")
        X = np.array([np.asarray(x, dtype=np.float64) for x, _ in batch])
        Y = np.array([np.asarray(y, dtype=np.float64) for _, y in batch])
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.shape[0] == 0:
        raise ValueError("empty batch")
    return X, Y


def loss_gradient(Y_hat, Y, norm):
    """d loss / d y_hat per row. L1 uses subgradient 0 at zero residual."""
    r = Y_hat - Y
    m = Y.shape[-1]
    if norm == "L1":
        return np.sign(r) / m
    return 2.0 * r / m


def backward_batch(net, cache, Y, cfg):
    """Gradients of the batch-mean objective (mean over rows)."""
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[None, :]
    if len(cache.zs) != len(net.layers) or Y.shape != cache.hs[-1].shape:
        raise ValueError("cache does not match network/targets")
    n = Y.shape[0]
    grad = loss_gradient(cache.hs[-1], Y, cfg.norm) / n
    gw = [None] * len(net.layers)
    gb = [None] * len(net.layers)
    for k in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[k]
        if cache.dgs[k] is not None:
            grad = grad * cache.dgs[k]
        gb[k] = grad.sum(axis=0)
        gw[k] = grad.T @ cache.hs[k]
        if cfg.lam:
            if cfg.regularizer == "L2":
                gw[k] += cfg.lam * layer.weights
            else:
                gw[k] += cfg.lam * np.sign(layer.weights)
        if k:
            grad = grad @ layer.weights
    return Gradients(gw, gb)


def backward(net, cache, y, cfg):
    """Backpropagation for a single sample cached by :func:`forward`."""
    return backward_batch(net, cache, y, cfg)


def parameter_views(net):
    """Flat list of parameter arrays in layer order (W1, b1, W2, b2, ...)."""
    out = []
    for layer in net.layers:
        out.extend((layer.weights, layer.biases))
    return out


def _act_delta(z, dz, act, alpha):
    """g(z + dz) - g(z) without cancellation."""
    if act == "identity":
        return dz
    zn = z + dz
    both_neg = (z < 0.0) & (zn < 0.0)
    both_pos = (z >= 0.0) & (zn >= 0.0)
    out = np.where(both_pos, dz, 0.0)
    out = np.where(both_neg, alpha * np.exp(np.minimum(z, 0.0)) * np.expm1(dz), out)
    mixed = ~(both_neg | both_pos)
    if np.any(mixed):
        gz = np.where(z >= 0, z, alpha * np.expm1(np.minimum(z, 0.0)))
        gzn = np.where(zn >= 0, zn, alpha * np.expm1(np.minimum(zn, 0.0)))
        out = np.where(mixed, gzn - gz, out)
    return out


def _objective_delta(net, cache, Y, cfg, k, index, step, is_bias):
    """J(theta + step*e) - J(theta) for one parameter, by forward propagation
    of the perturbation itself (no derivatives involved)."""
    last = len(net.layers) - 1
    n = Y.shape[0]
    i = index[0]
    dz = np.zeros_like(cache.zs[k])
    dz[:, i] = step if is_bias else step * cache.hs[k][:, index[1]]
    for m in range(k, last + 1):
        act = net.output_activation if m == last else net.hidden_activation
        dh = _act_delta(cache.zs[m], dz, act, net.alpha)
        if m < last:
            dz = dh @ net.layers[m + 1].weights.T
    r = cache.hs[-1] - Y
    if cfg.norm == "L2":
        ddata = dh * (2.0 * r + dh)
    else:
        ddata = np.abs(r + dh) - np.abs(r)
    delta = float(np.sum(ddata)) / (n * Y.shape[1])
    if cfg.lam and not is_bias:
        w = net.layers[k].weights[index]
        if cfg.regularizer == "L2":
            delta += cfg.lam * (w * step + 0.5 * step * step)
        else:
            delta += cfg.lam * (abs(w + step) - abs(w))
    return delta


def gradient_check(net, x, y, cfg, h=1e-5,
                   backward_fn: Optional[Callable] = None, method="delta"):
    """Max relative error between backprop and central finite differences.

    ``method="delta"`` evaluates J(theta+h) - J(theta-h) by pushing the
    exact parameter perturbation through the network, which removes the
    cancellation error of subtracting two full objective values.
    ``method="direct"`` subtracts two full evaluations of the objective.
    """
    if h <= 0:
        raise ValueError("h must be > 0")
    backward_fn = backward_fn or backward_batch
    X = np.atleast_2d(np.asarray(x, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    _, cache = forward_batch(net, X)
    analytic = backward_fn(net, cache, Y, cfg)
    if method == "delta":
        # the identity output layer aliases z and h; keep an independent copy
        cache = ForwardCache([z.copy() for z in cache.zs], cache.hs, cache.dgs)
    work = net.copy()
    worst = 0.0
    for k, layer in enumerate(work.layers):
        for is_bias, p, g in ((False, layer.weights, analytic.weights[k]),
                              (True, layer.biases, analytic.biases[k])):
            g = np.asarray(g)
            for index in np.ndindex(p.shape):
                if method == "delta":
                    jp = _objective_delta(net, cache, Y, cfg, k, index, h, is_bias)
                    jm = _objective_delta(net, cache, Y, cfg, k, index, -h, is_bias)
                else:
                    orig = p[index]
                    p[index] = orig + h
                    jp = total_objective(work, (X, Y), cfg)
                    p[index] = orig - h
                    jm = total_objective(work, (X, Y), cfg)
                    p[index] = orig
                num = (jp - jm) / (2.0 * h)
                a = float(g[index])
                err = abs(a - num) / max(abs(a), abs(num), 1e-12)
                worst = max(worst, err)
    return worst


def network_to_dict(net):
    return {
        "alpha": net.alpha,
        "output_activation": net.output_activation,
        "layers": [
            {
                "rows": int(l.shape[0]),
                "cols": int(l.shape[1]),
                "weights": [float(v) for v in l.weights.ravel(order="C")],
                "biases": [float(v) for v in l.biases],
            }
            for l in net.layers
        ],
        "feature_stats": net.feature_stats,
        "target_stats": net.target_stats,
    }


def network_from_dict(d):
    layers = []
    for i, ld in enumerate(d["layers"]):
        w = np.asarray(ld["weights"], dtype=np.float64)
        if w.size != ld["rows"] * ld["cols"]:
            raise ValueError(f"layer {i}: weight count does not match rows*cols")
        layers.append(Layer(w.reshape(ld["rows"], ld["cols"]), ld["biases"]))
    return Network(layers, alpha=float(d.get("alpha", 1.0)),
                   output_activation=d.get("output_activation", "identity"),
                   feature_stats=d.get("feature_stats"),
                   target_stats=d.get("target_stats"))


def save_network(net, path):
    # repr-precision floats keep the round trip bit-exact
    with open(path, "w") as fh:
        json.dump(network_to_dict(net), fh)


def load_network(path):
    with open(path) as fh:
        return network_from_dict(json.load(fh))
