"""Eulerian space-time averaging of fine-grid fields.

A field is stored as an array indexed ``values[ix, iy, iz, it]``. Averaging
tiles the domain with disjoint boxes of ``k`` cells per spatial axis
(``k = l/dx``, odd) and ``kt = tau/dt`` frames, and reports one value per
box: the mean over the centred spatial box and the trailing time window
that ends at the box's last frame. Cells left over at the high end of an
axis do not fill a whole box and are dropped.
"""

from dataclasses import dataclass

import numpy as np

from boilnet import kernels

_REL_TOL = 1e-9


@dataclass
class Field4D:
    values: np.ndarray
    dx: float
    dt: float
    name: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 4 or min(self.values.shape) < 1:
            raise ValueError(f"{self.name or 'field'}: expected 4-D array, got shape {self.values.shape}")
        if not (self.dx > 0 and self.dt > 0):
            raise ValueError(f"{self.name or 'field'}: dx and dt must be positive")
        if not np.all(np.isfinite(self.values)):
            raise ValueError(f"{self.name or 'field'}: non-finite values")

    @property
    def dims(self):
        return self.values.shape


@dataclass
class SurfaceSeries:
    values: np.ndarray
    dx: float
    dt: float
    name: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 3 or min(self.values.shape) < 1:
            raise ValueError(f"{self.name or 'series'}: expected 3-D array, got shape {self.values.shape}")
        if not (self.dx > 0 and self.dt > 0):
            raise ValueError(f"{self.name or 'series'}: dx and dt must be positive")
        if not np.all(np.isfinite(self.values)):
            raise ValueError(f"{self.name or 'series'}: non-finite values")

    @property
    def dims(self):
        return self.values.shape

    def as_field(self):
        return Field4D(self.values[:, :, None, :], self.dx, self.dt, self.name)


@dataclass
class AvgSpec:
    l: float = 0.25e-3
    tau: float = 0.1

    def __post_init__(self):
        if not (self.l > 0 and self.tau > 0):
            raise ValueError("averaging length and time scales must be positive")


def window_sizes(spec, dx, dt):
    """Cells per spatial box and frames per time window for a grid."""
    ratio = spec.l / dx
    k = int(round(ratio))
    if k < 1 or abs(ratio - k) > _REL_TOL * ratio or k % 2 == 0:
        raise ValueError(
            f"averaging length {spec.l:g} m must be an odd multiple of dx={dx:g} m "
            f"(got {ratio:.6g} cells)")
    tratio = spec.tau / dt
    kt = int(round(tratio))
    if kt < 1 or abs(tratio - kt) > _REL_TOL * tratio:
        raise ValueError(
            f"averaging time {spec.tau:g} s must be a whole number of steps dt={dt:g} s "
            f"(got {tratio:.6g})")
    return k, kt


def _check_fits(shape, windows, name):
    for n, w, axis in zip(shape, windows, "xyzt"):
        if w > n:
            raise ValueError(f"{name}: {axis} window of {w} cells exceeds domain of {n}")


def average4d(field, spec):
    """Block-mean coarsening of a :class:`Field4D`."""
    k, kt = window_sizes(spec, field.dx, field.dt)
    windows = (k, k, k if field.dims[2] > 1 else 1, kt)
    _check_fits(field.dims, windows, field.name)
    out = kernels.block_mean(field.values, *windows)
    return Field4D(out, field.dx * k, field.dt * kt, field.name)


def box_kernel(windows):
    """Normalized uniform kernel with the given per-axis widths."""
    g = np.ones(windows, dtype=np.float64)
    return g / g.size


def average4d_conv(field, spec, kernel=None):
    """Same result as :func:`average4d`, computed as a discrete convolution.

    The full (valid-mode) convolution of the field with the kernel is formed
    and then sampled at the box positions. ``kernel`` defaults to the
    normalized box; any kernel with the same shape as the window is
    accepted and is flipped as a true convolution requires.
    """
    k, kt = window_sizes(spec, field.dx, field.dt)
    windows = (k, k, k if field.dims[2] > 1 else 1, kt)
    _check_fits(field.dims, windows, field.name)
    g = box_kernel(windows) if kernel is None else np.asarray(kernel, dtype=np.float64)
    if g.shape != windows:
        raise ValueError(f"kernel shape {g.shape} does not match window {windows}")
    f = field.values
    valid = tuple(n - w + 1 for n, w in zip(f.shape, windows))
    conv = np.zeros(valid)
    gf = g[::-1, ::-1, ::-1, ::-1]
    for off in np.ndindex(windows):
        sl = tuple(slice(o, o + v) for o, v in zip(off, valid))
        conv += gf[off] * f[sl]
    nblocks = tuple(n // w for n, w in zip(f.shape, windows))
    pick = tuple(slice(0, nb * w, w) for nb, w in zip(nblocks, windows))
    return Field4D(conv[pick], field.dx * k, field.dt * kt, field.name)


def average_surface(series, spec):
    """Box mean over (x, y, t) for a quantity that lives on the heated wall."""
    k, kt = window_sizes(spec, series.dx, series.dt)
    windows = (k, k, 1, kt)
    _check_fits(series.as_field().dims, windows, series.name)
    out = kernels.block_mean(series.values[:, :, None, :], *windows)
    return SurfaceSeries(out[:, :, 0, :], series.dx * k, series.dt * kt, series.name)


def void_fraction(color, convention="liquid"):
    """Void fraction from an averaged color function.

    ``convention="liquid"`` reads phi = 1 as liquid, so alpha = 1 - <phi>.
    """
    phi = color.values
    if np.any(phi < -1e-9) or np.any(phi > 1 + 1e-9):
        raise ValueError("color function outside [0, 1]; field is corrupt")
    phi = np.clip(phi, 0.0, 1.0)
    if convention == "liquid":
        alpha = 1.0 - phi
    elif convention == "vapor":
        alpha = phi.copy()
    else:
        raise ValueError(f"unknown convention {convention!r}")
    return Field4D(alpha, color.dx, color.dt, "alpha")
