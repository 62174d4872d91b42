"""SGD and Adam updates, mini-batching, and the epoch training loop."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from boilnet import kernels
from boilnet.nn import (Gradients, LossConfig, Network, backward_batch,
                        forward_batch, parameter_views, regularization)

log = logging.getLogger(__name__)

HISTORY_COLUMNS = ["epoch", "train_objective", "rmse_alpha_wall", "rmse_T_sup",
                   "rmse_q_evap", "rmse_q_single", "seconds"]
# target column (q_evap, q_single, alpha_wall, t_sup) feeding each rmse_* column above
_HISTORY_TARGET_INDEX = [2, 3, 0, 1]


class TrainingDiverged(FloatingPointError):
    def __init__(self, epoch, batch, value):
        super().__init__(f"non-finite objective {value} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


@dataclass
class AdamState:
    m: list
    v: list
    beta1: float = 0.9
    beta2: float = 0.999
    delta: float = 1e-8
    t: int = 0

    @classmethod
    def zeros_like(cls, net, beta1=0.9, beta2=0.999, delta=1e-8):
        params = parameter_views(net)
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params],
                   beta1, beta2, delta, 0)

    def copy(self):
        return AdamState([a.copy() for a in self.m], [a.copy() for a in self.v],
                         self.beta1, self.beta2, self.delta, self.t)


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 256
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    delta: float = 1e-8
    loss: LossConfig = field(default_factory=LossConfig)
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if not self.learning_rate > 0:
            raise ValueError("learning rate must be > 0")
        if isinstance(self.loss, dict):
            self.loss = LossConfig(**self.loss)


@dataclass
class TrainHistory:
    train_objective: list = field(default_factory=list)
    test_rmse: list = field(default_factory=list)
    seconds: list = field(default_factory=list)

    def __len__(self):
        return len(self.train_objective)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(HISTORY_COLUMNS)
            for e, obj in enumerate(self.train_objective):
                rm = self.test_rmse[e] if e < len(self.test_rmse) and self.test_rmse[e] is not None else None
                if rm is not None and len(rm) == 4:
                    cols = [f"{rm[i]:.17g}" for i in _HISTORY_TARGET_INDEX]
                else:
                    cols = [""] * 4
                w.writerow([e + 1, f"{obj:.17g}", *cols, f"{self.seconds[e]:.6f}"])


def _check_shapes(net, grads):
    params = parameter_views(net)
    g = [a for pair in zip(grads.weights, grads.biases) for a in pair]
    if len(params) != len(g) or any(p.shape != np.shape(q) for p, q in zip(params, g)):
        raise ValueError("gradient shapes do not match network")
    return params, g


def sgd_step(net, grads, epsilon):
    """Return a copy of ``net`` moved by -epsilon * grads."""
    if not epsilon > 0:
        raise ValueError("learning rate must be > 0")
    out = net.copy()
    params, g = _check_shapes(out, grads)
    for p, q in zip(params, g):
        p -= epsilon * np.asarray(q)
    return out


def _adam_inplace(params, g, state, epsilon):
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for p, q, m, v in zip(params, g, state.m, state.v):
        # reshape of a non-contiguous array copies and the update would be lost
        if not (p.flags.c_contiguous and m.flags.c_contiguous and v.flags.c_contiguous):
            raise ValueError("Adam needs C-contiguous parameter and moment buffers")
        kernels.adam_update(p.reshape(-1), np.ascontiguousarray(q, dtype=np.float64).reshape(-1),
                            m.reshape(-1), v.reshape(-1), epsilon, state.beta1,
                            state.beta2, state.delta, bc1, bc2)


def adam_step(net, grads, state, epsilon):
    """One Adam update; returns new (network, state), inputs are untouched."""
    if not epsilon > 0:
        raise ValueError("learning rate must be > 0")
    if not (0 <= state.beta1 < 1 and 0 <= state.beta2 < 1 and state.delta > 0):
        raise ValueError("invalid Adam hyperparameters")
    out = net.copy()
    params, g = _check_shapes(out, grads)
    if [m.shape for m in state.m] != [p.shape for p in params]:
        raise ValueError("Adam state does not match network")
    new_state = state.copy()
    _adam_inplace(params, g, new_state, epsilon)
    return out, new_state


def minibatches(n, batch_size, rng, shuffle=True):
    """Index batches covering 0..n-1 exactly once; last batch may be short."""
    if not 1 <= batch_size <= n:
        raise ValueError(f"batch_size must be in [1, {n}], got {batch_size}")
    order = np.random.default_rng(rng).permutation(n) if shuffle else np.arange(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def evaluate_rmse(net, data):
    """Per-target RMSE in physical units (denormalized when stats are attached)."""
    pred = net.predict(data.X)
    truth = data.Y
    if getattr(data, "normalized", False):
        s = data.stats
        pred = pred * s.y_std + s.y_mean
        truth = truth * s.y_std + s.y_mean
    return np.sqrt(np.mean((pred - truth) ** 2, axis=0))


def train(net, train_data, test_data, cfg):
    """Train a copy of ``net``; returns (trained network, history).

    Each mini-batch contributes one optimizer step using the batch-mean
    gradient. Raises :class:`TrainingDiverged` on a non-finite objective.
    """
    X, Y = train_data.X, train_data.Y
    if X.shape[1] != net.n_inputs or Y.shape[1] != net.n_outputs:
        raise ValueError(f"network {net.sizes} does not fit data widths "
                         f"{X.shape[1]} -> {Y.shape[1]}")
    if not 1 <= cfg.batch_size <= X.shape[0]:
        raise ValueError(f"batch_size must be in [1, {X.shape[0]}]")
    net = net.copy()
    params = parameter_views(net)
    state = AdamState.zeros_like(net, cfg.beta1, cfg.beta2, cfg.delta)
    rng = np.random.default_rng(cfg.seed)
    lcfg = cfg.loss
    hist = TrainHistory()
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        total = 0.0
        batches = minibatches(X.shape[0], cfg.batch_size, rng, cfg.shuffle)
        for b, idx in enumerate(batches, start=1):
            xb, yb = X[idx], Y[idx]
            y_hat, cache = forward_batch(net, xb)
            r = y_hat - yb
            data_loss = float(np.mean(np.abs(r) if lcfg.norm == "L1" else r * r))
            obj = data_loss + (lcfg.lam * regularization(net, lcfg.regularizer) if lcfg.lam else 0.0)
            if not np.isfinite(obj):
                raise TrainingDiverged(epoch, b, obj)
            total += obj * len(idx)
            grads = backward_batch(net, cache, yb, lcfg)
            g = [a for pair in zip(grads.weights, grads.biases) for a in pair]
            if cfg.optimizer == "adam":
                _adam_inplace(params, g, state, cfg.learning_rate)
            else:
                for p, q in zip(params, g):
                    p -= cfg.learning_rate * q
        hist.train_objective.append(total / X.shape[0])
        hist.test_rmse.append(evaluate_rmse(net, test_data) if test_data is not None else None)
        hist.seconds.append(time.perf_counter() - t0)
        if not net.is_finite():
            raise TrainingDiverged(epoch, len(batches), float("nan"))
        log.debug("epoch %d objective %.6g", epoch, hist.train_objective[-1])
    return net, hist
