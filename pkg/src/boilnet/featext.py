"""Near-wall input features and boiling targets from averaged fields."""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from boilnet.fieldavg import Field4D

FEATURE_NAMES = [
    "dp_dx", "dp_dy", "dp_dz",
    "d_rho_uu_dx", "d_rho_uv_dx", "d_rho_uw_dx",
    "d_rho_uv_dy", "d_rho_vv_dy", "d_rho_vw_dy",
    "d_rho_uw_dz", "d_rho_vw_dz", "d_rho_ww_dz",
    "d_rho_hu_dx", "d_rho_hv_dy", "d_rho_hw_dz",
    "mu_t", "q_total", "n_site", "t_act",
]
TARGET_NAMES = ["q_evap", "q_single", "alpha_wall", "t_sup"]
CSV_COLUMNS = FEATURE_NAMES + TARGET_NAMES + ["case_label"]

# (name, product factors, derivative axis); order follows FEATURE_NAMES[3:15]
CONVECTION_TERMS = [
    ("d_rho_uu_dx", ("u", "u"), 0),
    ("d_rho_uv_dx", ("u", "v"), 0),
    ("d_rho_uw_dx", ("u", "w"), 0),
    ("d_rho_uv_dy", ("u", "v"), 1),
    ("d_rho_vv_dy", ("v", "v"), 1),
    ("d_rho_vw_dy", ("v", "w"), 1),
    ("d_rho_uw_dz", ("u", "w"), 2),
    ("d_rho_vw_dz", ("v", "w"), 2),
    ("d_rho_ww_dz", ("w", "w"), 2),
    ("d_rho_hu_dx", ("h", "u"), 0),
    ("d_rho_hv_dy", ("h", "v"), 1),
    ("d_rho_hw_dz", ("h", "w"), 2),
]

_AXES = {"x": 0, "y": 1, "z": 2, 0: 0, 1: 1, 2: 2}


def central_gradient(field, axis):
    """d/dx_axis with central differences inside, one-sided at the ends.

    The spacing is the field's own ``dx`` (the coarse spacing after
    averaging). Every time slice is differentiated independently.
    """
    ax = _AXES[axis]
    if field.dims[ax] < 3:
        raise ValueError(f"{field.name}: need >= 3 cells along axis {axis}, got {field.dims[ax]}")
    d = np.gradient(field.values, field.dx, axis=ax, edge_order=1)
    return Field4D(d, field.dx, field.dt, f"d{field.name}_d{'xyz'[ax]}")


def phase_mix(f_liquid, f_vapor, alpha):
    """Void-fraction weighted mixture alpha*f_vapor + (1 - alpha)*f_liquid."""
    a = np.asarray(alpha, dtype=np.float64)
    if np.any(a < 0.0) or np.any(a > 1.0):
        raise ValueError("alpha must lie in [0, 1]")
    out = a * np.asarray(f_vapor, dtype=np.float64) + (1.0 - a) * np.asarray(f_liquid, dtype=np.float64)
    return float(out) if np.ndim(out) == 0 else out


def build_convection_terms(rho, u, v, w, h):
    """The 12 momentum/energy convection features, keyed by feature name.

    Products are formed from the averaged variables (<rho><u_i><u_j>), then
    differentiated along the axis each feature names.
    """
    fields = {"u": u, "v": v, "w": w, "h": h}
    shape = rho.dims
    for f in (u, v, w, h):
        if f.dims != shape or f.dx != rho.dx:
            raise ValueError(f"grid mismatch between {rho.name!r} and {f.name!r}")
    out = {}
    for name, (a, b), ax in CONVECTION_TERMS:
        prod = rho.values * fields[a].values * fields[b].values
        out[name] = central_gradient(Field4D(prod, rho.dx, rho.dt, name), ax)
        out[name].name = name
    return out


@dataclass
class NormStats:
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: np.ndarray
    y_std: np.ndarray

    def to_dicts(self):
        feat = {"names": list(FEATURE_NAMES) if len(self.x_mean) == len(FEATURE_NAMES) else None,
                "mean": [float(v) for v in self.x_mean], "std": [float(v) for v in self.x_std]}
        targ = {"names": list(TARGET_NAMES) if len(self.y_mean) == len(TARGET_NAMES) else None,
                "mean": [float(v) for v in self.y_mean], "std": [float(v) for v in self.y_std]}
        return feat, targ

    @classmethod
    def from_dicts(cls, feat, targ):
        return cls(np.asarray(feat["mean"], float), np.asarray(feat["std"], float),
                   np.asarray(targ["mean"], float), np.asarray(targ["std"], float))


@dataclass
class Dataset:
    X: np.ndarray
    Y: np.ndarray
    labels: np.ndarray = None
    normalized: bool = False
    stats: Optional[NormStats] = None
    grid_shape: Optional[tuple] = None   # (nx, ny, nt) when rows come from one surface grid

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.Y = np.asarray(self.Y, dtype=np.float64)
        if self.X.ndim != 2 or self.Y.ndim != 2 or self.X.shape[0] != self.Y.shape[0]:
            raise ValueError(f"inconsistent dataset shapes {self.X.shape}, {self.Y.shape}")
        if self.X.shape[0] == 0:
            raise ValueError("dataset is empty")
        if self.labels is None:
            self.labels = np.zeros(self.X.shape[0])
        self.labels = np.asarray(self.labels, dtype=np.float64)
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.Y))):
            raise ValueError("dataset contains non-finite values")

    def __len__(self):
        return self.X.shape[0]

    @property
    def case_label(self):
        u = np.unique(self.labels)
        return float(u[0]) if u.size == 1 else None

    def physical_targets(self):
        if self.normalized:
            return self.Y * self.stats.y_std + self.stats.y_mean
        return self.Y


def concat(datasets):
    if any(d.normalized for d in datasets):
        raise ValueError("concatenate raw datasets, then normalize")
    return Dataset(np.vstack([d.X for d in datasets]), np.vstack([d.Y for d in datasets]),
                   np.concatenate([d.labels for d in datasets]))


def extract_near_wall(volume, surface, case_label=0.0, region=None):
    """Pair wall-adjacent volume features with co-located surface targets.

    ``volume`` maps names ``p, rho, u, v, w, h, mu_t, alpha`` to averaged
    :class:`Field4D`; ``surface`` maps ``q_evap, q_single, t_sup, q_total,
    n_site, t_act`` to averaged :class:`SurfaceSeries`. Features come from
    the first averaged layer above the wall (z index 0). ``region`` is an
    optional ``(i0, i1, j0, j1)`` crop of the surface grid. Rows are ordered
    over i, then j, then t.
    """
    p = volume["p"]
    nx, ny, _, nt = p.dims
    for name, f in volume.items():
        if (f.dims[0], f.dims[1], f.dims[3]) != (nx, ny, nt):
            raise ValueError(f"volume field {name!r} has dims {f.dims}, expected ({nx}, {ny}, *, {nt})")
    for name, s in surface.items():
        if s.dims != (nx, ny, nt):
            raise ValueError(f"surface series {name!r} has dims {s.dims}, expected {(nx, ny, nt)}")

    cols = {}
    for ax, name in enumerate(("dp_dx", "dp_dy", "dp_dz")):
        cols[name] = central_gradient(p, ax).values[:, :, 0, :]
    conv = build_convection_terms(volume["rho"], volume["u"], volume["v"], volume["w"], volume["h"])
    for name, f in conv.items():
        cols[name] = f.values[:, :, 0, :]
    cols["mu_t"] = volume["mu_t"].values[:, :, 0, :]
    for name in ("q_total", "n_site", "t_act"):
        cols[name] = surface[name].values
    targets = {
        "q_evap": surface["q_evap"].values,
        "q_single": surface["q_single"].values,
        "alpha_wall": volume["alpha"].values[:, :, 0, :],
        "t_sup": surface["t_sup"].values,
    }
    if region is not None:
        i0, i1, j0, j1 = region
        cols = {k: v[i0:i1, j0:j1] for k, v in cols.items()}
        targets = {k: v[i0:i1, j0:j1] for k, v in targets.items()}
    grid = cols["q_total"].shape
    X = np.stack([cols[n].reshape(-1) for n in FEATURE_NAMES], axis=1)
    Y = np.stack([targets[n].reshape(-1) for n in TARGET_NAMES], axis=1)
    return Dataset(X, Y, np.full(X.shape[0], float(case_label)), grid_shape=tuple(grid))


def fit_normalization(train):
    """Population mean/std per column of a raw training set."""
    if train.normalized:
        raise ValueError("fit normalization on raw (physical) data")
    if len(train) == 0:
        raise ValueError("empty training set")

    def stats(a):
        mean = a.mean(axis=0)
        std = a.std(axis=0)
        # relative guard: a constant column keeps a rounding-level std
        scale = np.maximum(1.0, np.abs(a).max(axis=0))
        std = np.where(std < 1e-12 * scale, 1.0, std)
        return mean, std

    xm, xs = stats(train.X)
    ym, ys = stats(train.Y)
    return NormStats(xm, xs, ym, ys)


def apply_normalization(data, stats, direction="forward"):
    if stats is None:
        raise ValueError("normalization statistics are required")
    if data.X.shape[1] != len(stats.x_mean) or data.Y.shape[1] != len(stats.y_mean):
        raise ValueError("normalization statistics do not match dataset width")
    if direction == "forward":
        if data.normalized:
            raise ValueError("dataset is already normalized")
        return replace(data, X=(data.X - stats.x_mean) / stats.x_std,
                       Y=(data.Y - stats.y_mean) / stats.y_std,
                       normalized=True, stats=stats)
    if direction == "inverse":
        if not data.normalized:
            raise ValueError("dataset is not normalized")
        return replace(data, X=data.X * stats.x_std + stats.x_mean,
                       Y=data.Y * stats.y_std + stats.y_mean,
                       normalized=False, stats=None)
    raise ValueError(f"unknown direction {direction!r}")


def write_dataset_csv(path, data):
    if data.normalized:
        raise ValueError("write raw (physical) datasets only")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for x, y, lab in zip(data.X, data.Y, data.labels):
            w.writerow([f"{v:.17g}" for v in x] + [f"{v:.17g}" for v in y] + [f"{lab:.17g}"])


def read_dataset_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [c.strip() for c in next(reader)]
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        for i, expected in enumerate(CSV_COLUMNS):
            got = header[i] if i < len(header) else "<missing>"
            if got != expected:
                raise ValueError(f"{path}: bad column {i + 1}: expected {expected!r}, got {got!r}")
        if len(header) != len(CSV_COLUMNS):
            raise ValueError(f"{path}: unexpected extra column {header[len(CSV_COLUMNS)]!r}")
        rows = [r for r in reader if r]
    arr = np.array(rows, dtype=np.float64)
    nf, nt = len(FEATURE_NAMES), len(TARGET_NAMES)
    return Dataset(arr[:, :nf], arr[:, nf:nf + nt], arr[:, nf + nt])


def average_case(volume, surface, spec, convention="liquid"):
    """Average raw fields and derive the void fraction from the color function."""
    from boilnet.fieldavg import average4d, average_surface, void_fraction

    avg_vol = {n: average4d(f, spec) for n, f in volume.items()}
    if "phi" in avg_vol:
        avg_vol["alpha"] = void_fraction(avg_vol["phi"], convention)
    avg_surf = {n: average_surface(s, spec) for n, s in surface.items()}
    return avg_vol, avg_surf


def dataset_from_fields(volume, surface, spec, case_label, convention="liquid", region=None):
    """Raw fine-grid fields of one case -> near-wall Dataset."""
    avg_vol, avg_surf = average_case(volume, surface, spec, convention)
    return extract_near_wall(avg_vol, avg_surf, case_label, region)
