"""Seeded synthetic pool-boiling cases.

Stands in for interface-tracking simulation output. The fields are not
physical solutions; they are built so that the wall quantities follow a
fixed, documented closure of the local surface state, which makes the
learning problem checkable.

Surface state (fine grid, per case):

* nucleation sites placed uniformly at random over the averaging cells
  (at cell centres), each with an activation temperature drawn from
  ``t_act_range``;
* ``n_site``: Gaussian kernel density of sites, ``sum_s K_s / (2 pi r0^2)``
  with ``K_s = exp(-r_s^2 / (2 r0^2))`` [1/m^2];
* ``t_act``: kernel-weighted activation temperature of nearby sites, relaxing
  to the middle of ``t_act_range`` far from all sites [K];
* ``q_total``: the applied heat flux, uniform [W/m^2].

Closure (``noise_sigma = 0``)::

    spf      = 1 - 0.45 * (1 - exp(-n_site / n_ref)),   n_ref = 1 / (2 pi r0^2)
    t_sup    = c1 * q_total**0.25 * spf
    q_evap   = min(c2 * n_site * max(t_sup - t_act, 0)**3, q_total)
    q_single = q_total - q_evap

The cubic superheat term is a deliberate nonlinearity, not a physical
claim. The cap at ``q_total`` keeps both heat-flux components non-negative.
With noise, each of the three closure outputs is multiplied by
``1 + noise_sigma * eta`` per cell and frame, with ``eta`` standard normal
truncated to [-3, 3].

Volume fields: active sites (``t_sup > t_act`` at the site) grow a vapor
bubble of radius ``r_max * (1 - exp(-dT / 4 K))`` whose centre bobs
between 0.7 and 1.0 radii above the wall at a rate proportional to the
superheat excess; the color function is 1 in
liquid and 0 in vapor. Velocity, pressure and turbulent viscosity carry
site-driven plumes plus smooth random bumps; density and enthalpy are
phase mixtures.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from boilnet.featext import phase_mix
from boilnet.fieldavg import AvgSpec, Field4D, SurfaceSeries, window_sizes
from boilnet.fieldio import read_blfd, read_surface_blfd, write_blfd

DEFAULT_HEAT_FLUXES = (600e3, 800e3, 1000e3, 1200e3)
VOLUME_FIELDS = ("phi", "p", "u", "v", "w", "rho", "h", "mu_t")
SURFACE_FIELDS = ("q_evap", "q_single", "t_sup", "n_site", "t_act", "q_total")

RHO_L, RHO_V = 958.4, 0.598          # kg/m^3, water at 1 atm
H_L, H_V = 419.0e3, 2676.0e3         # J/kg
CP_L = 4216.0                        # J/(kg K)
P_SAT = 101325.0
G = 9.81


@dataclass
class GenConfig:
    q_total: float = 1000e3
    grid: tuple = (150, 150, 9, 4)
    dx: float = 0.25e-3 / 3
    dt: float = 0.025
    n_sites: int | None = None         # None: sites_per_mw * q_total / 1e6
    sites_per_mw: float = 60.0
    t_act_range: tuple = (4.0, 12.0)
    noise_sigma: float = 0.05
    seed: int = 0
    layout_seed: int | None = None     # None: same as seed
    c1: float = 0.55                   # K (m^2/W)^0.25
    c2: float = 4e-3                   # W K^-3
    site_radius: float = 0.5e-3        # r0, kernel width of n_site / t_act maps
    bubble_radius: float = 0.5e-3
    avg: AvgSpec = field(default_factory=AvgSpec)

    def __post_init__(self):
        self.grid = tuple(int(g) for g in self.grid)
        self.t_act_range = tuple(float(t) for t in self.t_act_range)
        if isinstance(self.avg, dict):
            self.avg = AvgSpec(**self.avg)
        if self.q_total < 0:
            raise ValueError("q_total must be >= 0")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if len(self.grid) != 4 or min(self.grid) < 1:
            raise ValueError(f"grid must be 4 positive dims, got {self.grid}")
        lo, hi = self.t_act_range
        if not lo <= hi:
            raise ValueError("t_act_range must be (low, high)")

    @property
    def site_count(self):
        if self.n_sites is not None:
            return int(self.n_sites)
        return int(round(self.sites_per_mw * self.q_total / 1e6))


@dataclass
class CaseBundle:
    volume: dict
    surface: dict
    meta: dict


def _truncated_normal(rng, shape, bound=3.0):
    eta = rng.standard_normal(shape)
    bad = np.abs(eta) > bound
    while bad.any():
        eta[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(eta) > bound
    return eta


def closure(q_total, n_site, t_act, c1, c2, site_radius):
    """Noise-free wall quantities from the local surface state."""
    n_ref = 1.0 / (2.0 * math.pi * site_radius ** 2)
    spf = 1.0 - 0.45 * (1.0 - np.exp(-n_site / n_ref))
    t_sup = c1 * np.power(q_total, 0.25) * spf
    q_evap = np.minimum(c2 * n_site * np.maximum(t_sup - t_act, 0.0) ** 3, q_total)
    q_single = q_total - q_evap
    return t_sup, q_evap, q_single


def _layout(cfg, rng, lx, ly):
    n = cfg.site_count
    # uniform over averaging cells, placed at the cell centre so the
    # coarse n_site map resolves every site
    c = cfg.avg.l
    xs = (np.floor(rng.uniform(0.0, lx, n) / c) + 0.5) * c
    ys = (np.floor(rng.uniform(0.0, ly, n) / c) + 0.5) * c
    tact = rng.uniform(cfg.t_act_range[0], cfg.t_act_range[1], n)
    phase = rng.uniform(0.0, 1.0, n)
    return xs, ys, tact, phase


def _smooth_bumps(rng, xc, yc, zc, tc, extent, n_bumps=8):
    """Sum of random Gaussian blobs with random temporal phase, unit scale."""
    lx, ly, lz = extent
    out = np.zeros((xc.size, yc.size, zc.size, tc.size))
    for _ in range(n_bumps):
        cx, cy, cz = rng.uniform(0, lx), rng.uniform(0, ly), rng.uniform(0, lz)
        width = rng.uniform(1.0e-3, 2.5e-3)
        amp = rng.standard_normal()
        freq, ph = rng.uniform(1.0, 5.0), rng.uniform(0, 2 * math.pi)
        gx = np.exp(-((xc - cx) ** 2) / (2 * width ** 2))
        gy = np.exp(-((yc - cy) ** 2) / (2 * width ** 2))
        gz = np.exp(-((zc - cz) ** 2) / (2 * width ** 2))
        gt = np.cos(2 * math.pi * freq * tc + ph)
        out += amp * gx[:, None, None, None] * gy[None, :, None, None] \
            * gz[None, None, :, None] * gt[None, None, None, :]
    return out


def generate_case(cfg):
    """Build one synthetic case; deterministic in (seed, layout_seed)."""
    nx, ny, nz, nt = cfg.grid
    k, kt = window_sizes(cfg.avg, cfg.dx, cfg.dt)
    if nx < k or ny < k or nz < k or nt < kt:
        raise ValueError(f"grid {cfg.grid} is smaller than the averaging window ({k} cells, {kt} frames)")
    layout_seed = cfg.seed if cfg.layout_seed is None else cfg.layout_seed
    rng_layout = np.random.default_rng([layout_seed, 0])
    rng_fields = np.random.default_rng([cfg.seed, 1])
    rng_noise = np.random.default_rng([cfg.seed, 2])

    dx = cfg.dx
    xc = (np.arange(nx) + 0.5) * dx
    yc = (np.arange(ny) + 0.5) * dx
    zc = (np.arange(nz) + 0.5) * dx
    tc = (np.arange(nt) + 1) * cfg.dt
    lx, ly, lz = nx * dx, ny * dx, nz * dx
    xs, ys, tact_s, phase_s = _layout(cfg, rng_layout, lx, ly)

    # surface state
    r0 = cfg.site_radius
    ksum = np.zeros((nx, ny))
    ktsum = np.zeros((nx, ny))
    for x0, y0, ta in zip(xs, ys, tact_s):
        kern = np.exp(-((xc[:, None] - x0) ** 2 + (yc[None, :] - y0) ** 2) / (2 * r0 ** 2))
        ksum += kern
        ktsum += kern * ta
    w0 = 0.05
    t_mid = 0.5 * sum(cfg.t_act_range)
    n_site = ksum / (2 * math.pi * r0 ** 2)
    t_act = (ktsum + w0 * t_mid) / (ksum + w0)
    q_map = np.full((nx, ny), float(cfg.q_total))
    t_sup0, q_evap0, q_single0 = closure(q_map, n_site, t_act, cfg.c1, cfg.c2, r0)

    def noisy(a):
        a = np.repeat(a[:, :, None], nt, axis=2)
        if cfg.noise_sigma == 0:
            return a
        return a * (1.0 + cfg.noise_sigma * _truncated_normal(rng_noise, a.shape))

    t_sup = noisy(t_sup0)
    q_evap = noisy(q_evap0)
    q_single = noisy(q_single0)

    # site activity from the noise-free superheat at each site
    ix = np.clip((xs / dx).astype(int), 0, nx - 1)
    iy = np.clip((ys / dx).astype(int), 0, ny - 1)
    excess = np.maximum(t_sup0[ix, iy] - tact_s, 0.0)
    act = 1.0 - np.exp(-excess / 4.0)            # 0 for inactive sites
    radius = cfg.bubble_radius * act
    freq = 5.0 * excess / 4.0

    # color function: vapor bubbles bobbing above active sites
    phi = np.ones((nx, ny, nz, nt))
    for s in np.flatnonzero(radius > 0.5 * dx):
        R = radius[s]
        i0, i1 = np.searchsorted(xc, xs[s] - R), np.searchsorted(xc, xs[s] + R)
        j0, j1 = np.searchsorted(yc, ys[s] - R), np.searchsorted(yc, ys[s] + R)
        dxy2 = (xc[i0:i1, None] - xs[s]) ** 2 + (yc[None, j0:j1] - ys[s]) ** 2
        for t in range(nt):
            zc_b = R * (0.7 + 0.3 * ((freq[s] * tc[t] + phase_s[s]) % 1.0))
            d2 = dxy2[:, :, None] + (zc[None, None, :] - zc_b) ** 2
            inside = d2 <= R * R
            phi[i0:i1, j0:j1, :, t][inside] = 0.0
    alpha = 1.0 - phi

    # site-driven plumes
    rp = 0.6e-3
    plume = np.zeros((nx, ny))
    px = np.zeros((nx, ny))
    py = np.zeros((nx, ny))
    for s in np.flatnonzero(act > 0):
        gx = xc[:, None] - xs[s]
        gy = yc[None, :] - ys[s]
        gs = act[s] * np.exp(-(gx ** 2 + gy ** 2) / (2 * rp ** 2))
        plume += gs
        px += gs * gx / rp
        py += gs * gy / rp
    zw = np.exp(-zc / 0.2e-3)
    zrise = 1.0 - zw
    ext = (lx, ly, lz)
    w = 0.05 * plume[:, :, None, None] * zrise[None, None, :, None] \
        + 0.01 * _smooth_bumps(rng_fields, xc, yc, zc, tc, ext)
    u = -0.02 * px[:, :, None, None] * zw[None, None, :, None] \
        + 0.01 * _smooth_bumps(rng_fields, xc, yc, zc, tc, ext)
    v = -0.02 * py[:, :, None, None] * zw[None, None, :, None] \
        + 0.01 * _smooth_bumps(rng_fields, xc, yc, zc, tc, ext)
    p = P_SAT + RHO_L * G * (lz - zc)[None, None, :, None] \
        - 5.0 * plume[:, :, None, None] * zw[None, None, :, None] \
        + 0.5 * _smooth_bumps(rng_fields, xc, yc, zc, tc, ext)
    mu_t = 1e-4 * (1.0 + 2.0 * plume[:, :, None, None] * zw[None, None, :, None]) \
        * np.exp(0.1 * _smooth_bumps(rng_fields, xc, yc, zc, tc, ext))
    rho = phase_mix(RHO_L, RHO_V, alpha)
    h_liq = H_L + CP_L * t_sup0[:, :, None, None] * np.exp(-zc / 0.3e-3)[None, None, :, None]
    h = phase_mix(h_liq, H_V, alpha)

    vol_vals = {"phi": phi, "p": p, "u": u, "v": v, "w": w, "rho": rho, "h": h, "mu_t": mu_t}
    volume = {n: Field4D(vol_vals[n], dx, cfg.dt, n) for n in VOLUME_FIELDS}
    surf_vals = {
        "q_evap": q_evap, "q_single": q_single, "t_sup": t_sup,
        "n_site": np.repeat(n_site[:, :, None], nt, axis=2),
        "t_act": np.repeat(t_act[:, :, None], nt, axis=2),
        "q_total": np.repeat(q_map[:, :, None], nt, axis=2),
    }
    surface = {n: SurfaceSeries(surf_vals[n], dx, cfg.dt, n) for n in SURFACE_FIELDS}
    meta = {
        "q_total": float(cfg.q_total),
        "seed": int(cfg.seed),
        "layout_seed": int(layout_seed),
        "constants": {"c1": cfg.c1, "c2": cfg.c2, "site_radius": cfg.site_radius},
        "noise_sigma": float(cfg.noise_sigma),
        "n_sites": int(xs.size),
        "n_active": int(np.count_nonzero(act > 0)),
    }
    return CaseBundle(volume, surface, meta)


def generate_suite(q_list=DEFAULT_HEAT_FLUXES, base_seed=0, **overrides):
    """One case per heat flux, seeded ``base_seed + index``."""
    q_list = [float(q) for q in q_list]
    if len(set(q_list)) != len(q_list):
        raise ValueError(f"duplicate heat flux values in {q_list}")
    return [generate_case(GenConfig(q_total=q, seed=base_seed + i, **overrides))
            for i, q in enumerate(q_list)]


def case_dirname(q_total):
    return f"case_{int(round(q_total))}"


def write_case(bundle, directory):
    os.makedirs(directory, exist_ok=True)
    files = []
    for name, f in list(bundle.volume.items()) + list(bundle.surface.items()):
        fname = f"{name}.blfd"
        write_blfd(os.path.join(directory, fname), f)
        files.append(fname)
    manifest = dict(bundle.meta, fields=files,
                    volume_fields=list(bundle.volume), surface_fields=list(bundle.surface))
    with open(os.path.join(directory, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return manifest


def read_case(directory):
    with open(os.path.join(directory, "manifest.json")) as fh:
        manifest = json.load(fh)
    volume = {n: read_blfd(os.path.join(directory, f"{n}.blfd"))
              for n in manifest["volume_fields"]}
    surface = {n: read_surface_blfd(os.path.join(directory, f"{n}.blfd"))
               for n in manifest["surface_fields"]}
    meta = {k: v for k, v in manifest.items()
            if k not in ("fields", "volume_fields", "surface_fields")}
    return CaseBundle(volume, surface, meta)


def config_to_dict(cfg):
    d = asdict(cfg)
    d["grid"] = list(cfg.grid)
    d["t_act_range"] = list(cfg.t_act_range)
    return d
