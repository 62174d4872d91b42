"""Evaluation protocol: leave-one-heat-flux-out splits, per-QoI RMSE, 2-sigma
residual statistics, histograms, prediction maps, an LHS hyperparameter
sweep and a linear least-squares baseline."""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from boilnet import nn
from boilnet.featext import (NormStats, TARGET_NAMES, apply_normalization, concat,
                             fit_normalization)
from boilnet.optim import TrainConfig, TrainingDiverged, evaluate_rmse, train

# report column order: alpha_wall, T_sup, q_evap, q_single
SUMMARY_ORDER = [2, 3, 0, 1]
SUMMARY_HEADER = ["case", "alpha_wall", "T_sup [K]", "q_Evap [W/m^2]", "q_Single [W/m^2]"]


@dataclass
class CaseSplit:
    case_id: int
    train_labels: tuple
    test_label: float
    kind: str   # "interpolation" or "extrapolation"


def make_splits(labels):
    """Each label is the test case once; ends of the range are extrapolation."""
    labels = [float(l) for l in labels]
    if len(labels) != 4 or len(set(labels)) != 4:
        raise ValueError(f"need exactly 4 distinct case labels, got {labels}")
    ordered = sorted(labels)
    out = []
    for i, test in enumerate(ordered):
        kind = "extrapolation" if test in (ordered[0], ordered[-1]) else "interpolation"
        out.append(CaseSplit(i + 1, tuple(l for l in ordered if l != test), test, kind))
    return out


def split_data(datasets, split):
    """Raw per-case datasets -> (normalized train, normalized test, stats).

    Statistics come from the three training cases only.
    """
    by_label = {d.case_label: d for d in datasets}
    missing = [l for l in (*split.train_labels, split.test_label) if l not in by_label]
    if missing:
        raise ValueError(f"no dataset for case label(s) {missing}")
    train_raw = concat([by_label[l] for l in split.train_labels])
    test_raw = by_label[split.test_label]
    stats = fit_normalization(train_raw)
    test = apply_normalization(test_raw, stats)
    test.grid_shape = test_raw.grid_shape
    return apply_normalization(train_raw, stats), test, stats


def rmse_per_qoi(pred, truth):
    pred = np.atleast_2d(np.asarray(pred, dtype=np.float64))
    truth = np.atleast_2d(np.asarray(truth, dtype=np.float64))
    if pred.shape != truth.shape or pred.shape[0] < 1:
        raise ValueError(f"shape mismatch: {pred.shape} vs {truth.shape}")
    return np.sqrt(np.mean((pred - truth) ** 2, axis=0))


@dataclass
class TwoSigma:
    sigma: float
    coverage: float        # |r - mean(r)| <= 2 sigma
    coverage_zero: float   # |r| <= 2 sigma
    mean: float


def two_sigma_stats(pred, truth):
    """Population sigma of the residuals and the fraction inside +-2 sigma."""
    r = np.asarray(pred, dtype=np.float64).ravel() - np.asarray(truth, dtype=np.float64).ravel()
    if r.size < 2:
        raise ValueError("need at least 2 residuals")
    mu = float(r.mean())
    sigma = float(r.std())
    if sigma == 0.0:
        return TwoSigma(0.0, 1.0, 1.0 if mu == 0 else 0.0, mu)
    # a tiny slack keeps residuals that sit exactly on the band inside it
    band = 2.0 * sigma * (1 + 1e-12)
    return TwoSigma(sigma, float(np.mean(np.abs(r - mu) <= band)),
                    float(np.mean(np.abs(r) <= band)), mu)


@dataclass
class Histogram:
    edges: np.ndarray
    counts: np.ndarray
    underflow: int = 0
    overflow: int = 0

    @property
    def total(self):
        return int(self.counts.sum()) + self.underflow + self.overflow


def histogram(values, n_bins=40, range=None):
    """Uniform bins, [lo, hi) except the last which is closed.

    Without ``range`` the observed min/max is used (widened by 0.5 on both
    sides if all values are equal, or [0, 1] for empty input).
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    if range is None:
        if v.size == 0:
            lo, hi = 0.0, 1.0
        else:
            lo, hi = float(v.min()), float(v.max())
            if lo == hi:
                lo, hi = lo - 0.5, hi + 0.5
    else:
        lo, hi = (float(r) for r in range)
    if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
        raise ValueError(f"invalid histogram range ({lo}, {hi})")
    edges = np.linspace(lo, hi, n_bins + 1)
    inside = v[(v >= lo) & (v <= hi)]
    idx = np.floor((inside - lo) / (hi - lo) * n_bins).astype(np.int64)
    idx = np.clip(idx, 0, n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    return Histogram(edges, counts, int(np.sum(v < lo)), int(np.sum(v > hi)))


def surface_map(pred, truth, grid_shape, names=TARGET_NAMES):
    """Per-QoI (pred, truth, pred - truth) grids in extraction order.

    Rows of the test set run over i, then j (then t); only single-frame
    grids map to a 2-D matrix.
    """
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if grid_shape is None:
        raise ValueError("test set has no grid shape")
    shape = tuple(int(g) for g in grid_shape)
    if len(shape) == 3:
        if shape[2] != 1:
            raise ValueError(f"maps need a single averaged frame, grid is {shape}")
        shape = shape[:2]
    if len(shape) != 2 or shape[0] * shape[1] != pred.shape[0] or pred.shape != truth.shape:
        raise ValueError(f"{pred.shape[0]} samples do not form grid {grid_shape}")
    maps = {}
    for q, name in enumerate(names):
        p = pred[:, q].reshape(shape)
        t = truth[:, q].reshape(shape)
        maps[name] = (p, t, p - t)
    return maps


def write_maps(maps, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    for name, grids in maps.items():
        for tag, g in zip(("pred", "truth", "err"), grids):
            np.savetxt(os.path.join(out_dir, f"maps_{name}_{tag}.csv"), g,
                       delimiter=",", fmt="%.17g")


# ---------------------------------------------------------------- baseline

def fit_linear(train, jitter=1e-8):
    """Least squares with intercept via ridge-jittered normal equations."""
    A = np.hstack([train.X, np.ones((train.X.shape[0], 1))])
    G = A.T @ A + jitter * np.eye(A.shape[1])
    if not np.all(np.isfinite(G)) or np.linalg.cond(G) > 1e14:
        raise np.linalg.LinAlgError("normal equations are singular beyond jitter rescue")
    return np.linalg.solve(G, A.T @ train.Y)


def predict_linear(W, X):
    return np.hstack([X, np.ones((X.shape[0], 1))]) @ W


def baseline_linear(train, test):
    """Per-QoI test RMSE of the linear fit, in physical units."""
    W = fit_linear(train)
    pred = predict_linear(W, test.X)
    truth = test.Y
    if test.normalized:
        pred = pred * test.stats.y_std + test.stats.y_mean
        truth = test.physical_targets()
    return rmse_per_qoi(pred, truth)


# ---------------------------------------------------------------- reports

def attach_stats(net, stats):
    net.feature_stats, net.target_stats = stats.to_dicts()
    return net


def predict_physical(net, X):
    """Predictions in physical units from raw features, using the stats stored on the model."""
    if net.feature_stats is None or net.target_stats is None:
        raise ValueError("model carries no normalization statistics")
    st = NormStats.from_dicts(net.feature_stats, net.target_stats)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != len(st.x_mean):
        raise ValueError(f"model expects {len(st.x_mean)} features, data has {np.shape(X)[-1]}")
    return net.predict((X - st.x_mean) / st.x_std) * st.y_std + st.y_mean


@dataclass
class EvalReport:
    rmse: np.ndarray
    sigma: np.ndarray
    coverage: np.ndarray
    coverage_zero: np.ndarray
    histograms: dict
    maps: dict = None
    baseline_rmse: np.ndarray = None
    n_samples: int = 0
    case: str = ""
    kind: str = ""
    extra: dict = field(default_factory=dict)

    def to_json(self):
        def per_qoi(a):
            return None if a is None else {n: float(v) for n, v in zip(TARGET_NAMES, a)}
        out = {
            "case": self.case,
            "kind": self.kind,
            "n_samples": self.n_samples,
            "rmse": per_qoi(self.rmse),
            "sigma": per_qoi(self.sigma),
            "coverage_mean_centered": per_qoi(self.coverage),
            "coverage_zero_centered": per_qoi(self.coverage_zero),
            "baseline_rmse": per_qoi(self.baseline_rmse),
        }
        if self.baseline_rmse is not None:
            out["rmse_ratio_to_baseline"] = per_qoi(self.rmse / np.where(self.baseline_rmse > 0,
                                                                        self.baseline_rmse, np.inf))
        out.update(self.extra)
        return out


def evaluate(pred, truth, grid_shape=None, baseline_rmse=None, case="", kind="", n_bins=40):
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    rmse = rmse_per_qoi(pred, truth)
    stats = [two_sigma_stats(pred[:, q], truth[:, q]) for q in range(pred.shape[1])]
    hists = {}
    for q, name in enumerate(TARGET_NAMES):
        both = np.concatenate([pred[:, q], truth[:, q]])
        rng = (float(both.min()), float(both.max()))
        if rng[0] == rng[1]:
            rng = (rng[0] - 0.5, rng[1] + 0.5)
        hists[name] = {"truth": histogram(truth[:, q], n_bins, rng),
                       "pred": histogram(pred[:, q], n_bins, rng)}
    maps = surface_map(pred, truth, grid_shape) if grid_shape is not None else None
    return EvalReport(rmse, np.array([s.sigma for s in stats]),
                      np.array([s.coverage for s in stats]),
                      np.array([s.coverage_zero for s in stats]),
                      hists, maps, None if baseline_rmse is None else np.asarray(baseline_rmse),
                      pred.shape[0], case, kind)


def write_report(report, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        json.dump(report.to_json(), fh, indent=2)
    with open(os.path.join(out_dir, "histograms.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["qoi", "series", "bin", "lo", "hi", "count", "underflow", "overflow"])
        for name, series in report.histograms.items():
            for tag, h in series.items():
                for b, c in enumerate(h.counts):
                    w.writerow([name, tag, b, f"{h.edges[b]:.17g}", f"{h.edges[b + 1]:.17g}",
                                int(c), h.underflow, h.overflow])
    if report.maps is not None:
        write_maps(report.maps, out_dir)


def summary_row(report, label=None):
    vals = [report.rmse[i] for i in SUMMARY_ORDER]
    return [label or report.case, f"{vals[0]:.3g}", f"{vals[1]:.3g}", f"{vals[2]:.3g}", f"{vals[3]:.3g}"]


def write_summary_table(reports, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_HEADER)
        for r in reports:
            w.writerow(summary_row(r))


def format_summary_table(reports):
    rows = [SUMMARY_HEADER] + [summary_row(r) for r in reports]
    widths = [max(len(r[c]) for r in rows) for c in range(len(SUMMARY_HEADER))]
    return "\n".join("  ".join(c.ljust(wd) for c, wd in zip(r, widths)) for r in rows)


# ---------------------------------------------------------------- LHS sweep

@dataclass
class LhsDim:
    name: str
    kind: str                 # "float", "int" or "choice"
    low: float = None
    high: float = None
    log: bool = False
    values: tuple = None      # for kind == "choice"

    def __post_init__(self):
        if self.kind == "choice":
            if not self.values:
                raise ValueError(f"{self.name}: choice dimension needs values")
            self.values = tuple(self.values)
        elif self.kind in ("float", "int"):
            if self.low is None or self.high is None or not self.low < self.high:
                raise ValueError(f"{self.name}: need low < high")
            if self.log and self.low <= 0:
                raise ValueError(f"{self.name}: log range must be positive")
        else:
            raise ValueError(f"{self.name}: unknown kind {self.kind!r}")

    def _to_value(self, u):
        if self.log:
            return math.exp(math.log(self.low) + u * (math.log(self.high) - math.log(self.low)))
        return self.low + u * (self.high - self.low)

    def stratum_bounds(self, n):
        """Value-space edges of the n equal-probability strata."""
        if self.kind == "choice":
            return [math.ceil(k * len(self.values) / n) for k in range(n + 1)]
        return [self._to_value(k / n) for k in range(n + 1)]

    def stratum_of(self, value, n):
        """Index of the stratum holding ``value`` (used to verify a plan)."""
        if self.kind == "choice":
            i = self.values.index(value)
            b = self.stratum_bounds(n)
            return next(k for k in range(n) if b[k] <= i < b[k + 1])
        b = self.stratum_bounds(n)
        for k in range(n):
            if value < b[k + 1] or k == n - 1:
                return k


@dataclass
class LhsPlan:
    dims: list
    n_samples: int = 8
    seed: int = 0
    anchors: list = field(default_factory=list)   # fixed settings run after the LHS rows

    def __post_init__(self):
        self.dims = [LhsDim(**d) if isinstance(d, dict) else d for d in self.dims]
        if self.n_samples < 2:
            raise ValueError("n_samples must be >= 2")
        names = [d.name for d in self.dims]
        if len(set(names)) != len(names):
            raise ValueError("duplicate dimension names")


def default_plan(n_samples=8, seed=0, anchors=()):
    return LhsPlan([LhsDim("learning_rate", "float", 1e-4, 1.0, log=True),
                    LhsDim("units", "int", 8, 256, log=True),
                    LhsDim("batch_size", "int", 32, 2048, log=True)],
                   n_samples, seed, list(anchors))


def lhs_sample(plan):
    """Latin hypercube: one sample per stratum in every dimension.

    Each dimension draws a seeded permutation of its strata and a uniform
    jitter inside each stratum. Integer dimensions take a random integer
    from those inside the stratum; choice dimensions a random level from the
    stratum's block of levels.
    """
    n = plan.n_samples
    rng = np.random.default_rng(plan.seed)
    columns = {}
    for d in plan.dims:
        perm = rng.permutation(n)
        jitter = rng.uniform(size=n)
        if d.kind == "float":
            columns[d.name] = [d._to_value((p + j) / n) for p, j in zip(perm, jitter)]
        elif d.kind == "int":
            b = d.stratum_bounds(n)
            col = []
            for p, j in zip(perm, jitter):
                lo = math.ceil(b[p])
                hi = math.floor(b[p + 1]) if p == n - 1 else math.ceil(b[p + 1]) - 1
                if hi < lo:
                    raise ValueError(f"{d.name}: {n} samples exceed the distinct integer levels")
                col.append(int(lo + min(int(j * (hi - lo + 1)), hi - lo)))
            columns[d.name] = col
        else:
            if n > len(d.values):
                raise ValueError(f"{d.name}: {n} samples exceed {len(d.values)} levels")
            b = d.stratum_bounds(n)
            columns[d.name] = [d.values[b[p] + min(int(j * (b[p + 1] - b[p])), b[p + 1] - b[p] - 1)]
                               for p, j in zip(perm, jitter)]
    return [{name: columns[name][i] for name in columns} for i in range(n)]


SWEEP_COLUMNS = ["rank", "index", "source", "learning_rate", "units", "batch_size",
                 "mean_rmse", "rmse_alpha_wall", "rmse_T_sup", "rmse_q_evap", "rmse_q_single",
                 "diverged"]


@dataclass
class SweepRow:
    index: int
    source: str
    setting: dict
    rmse: np.ndarray          # physical units, TARGET_NAMES order
    mean_rmse: float          # mean over QoIs of RMSE / training target std
    diverged: bool


def run_setting(setting, train_data, test_data, epochs, hidden_layers=3, seed=0, lam=1e-4):
    units = int(setting["units"])
    batch = min(int(setting["batch_size"]), len(train_data))
    sizes = [train_data.X.shape[1]] + [units] * hidden_layers + [train_data.Y.shape[1]]
    net = nn.build_network(sizes, np.random.default_rng(seed))
    cfg = TrainConfig(epochs=epochs, batch_size=batch, learning_rate=float(setting["learning_rate"]),
                      loss=nn.LossConfig(lam=lam), seed=seed)
    with np.errstate(over="ignore", invalid="ignore"):
        net, _ = train(net, train_data, None, cfg)
        rmse = evaluate_rmse(net, test_data)
    if not np.all(np.isfinite(rmse)):
        raise TrainingDiverged(epochs, 0, float("nan"))
    return rmse


def run_sweep(plan_or_settings, train_data, test_data, epochs=20, hidden_layers=3, seed=0, lam=1e-4):
    """Train one network per setting; rows come back sorted by mean RMSE.

    ``mean_rmse`` averages the four per-QoI test RMSEs after scaling each
    by its training-target std, so QoIs in different units weigh equally.
    Divergent runs are kept with ``diverged`` set and an infinite RMSE.
    """
    if isinstance(plan_or_settings, LhsPlan):
        settings = [(s, "lhs") for s in lhs_sample(plan_or_settings)]
        settings += [(dict(a), "anchor") for a in plan_or_settings.anchors]
    else:
        settings = [(dict(s), "fixed") for s in plan_or_settings]
    scale = train_data.stats.y_std if train_data.normalized else np.ones(train_data.Y.shape[1])
    rows = []
    for i, (s, src) in enumerate(settings):
        try:
            rmse = run_setting(s, train_data, test_data, epochs, hidden_layers, seed, lam)
            rows.append(SweepRow(i, src, s, rmse, float(np.mean(rmse / scale)), False))
        except TrainingDiverged:
            rows.append(SweepRow(i, src, s, np.full(4, np.inf), math.inf, True))
    rows.sort(key=lambda r: (r.mean_rmse, r.index))
    return rows


def write_sweep(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_COLUMNS)
        for rank, r in enumerate(rows, start=1):
            rm = [f"{r.rmse[i]:.17g}" for i in SUMMARY_ORDER]
            w.writerow([rank, r.index, r.source, f"{float(r.setting['learning_rate']):.17g}",
                        int(r.setting["units"]), int(r.setting["batch_size"]),
                        f"{r.mean_rmse:.17g}", *rm, int(r.diverged)])


def overfit_task(seed=0, n=10, noise=0.03):
    """Ten jittered points of sin(pi x) with additive noise, plus a clean
    201-point test grid on [-1, 1]."""
    from boilnet.featext import Dataset
    rng = np.random.default_rng(seed)
    xtr = np.linspace(-1.0, 1.0, n) + rng.uniform(-0.05, 0.05, n)
    xte = np.linspace(-1.0, 1.0, 201)
    ytr = np.sin(np.pi * xtr) + noise * rng.standard_normal(n)
    return (Dataset(xtr[:, None], ytr[:, None]),
            Dataset(xte[:, None], np.sin(np.pi * xte)[:, None]))


@dataclass
class OverfitResult:
    lam: float
    train_loss: float
    train_rmse: float
    test_rmse: float

    @property
    def gap(self):
        return self.test_rmse - self.train_rmse


def overfit_run(train_data, test_data, lam, width=256, depth=2, epochs=3000,
                learning_rate=3e-3, seed=0):
    """Full-batch Adam on a wide net; returns train loss and both RMSEs."""
    net = nn.build_network([train_data.X.shape[1]] + [width] * depth + [train_data.Y.shape[1]],
                           np.random.default_rng(seed))
    cfg = TrainConfig(epochs=epochs, batch_size=len(train_data), learning_rate=learning_rate,
                      loss=nn.LossConfig(lam=lam), seed=seed)
    net, _ = train(net, train_data, None, cfg)
    loss = nn.total_objective(net, (train_data.X, train_data.Y), nn.LossConfig(lam=0.0))
    return OverfitResult(lam, loss, float(evaluate_rmse(net, train_data)[0]),
                         float(evaluate_rmse(net, test_data)[0]))
