"""Wave fields on the surface in angular-mode representation.

A field u(r, theta) = sum_m uhat_m(r) e^{i m theta} / sqrt(2 pi) is stored
through its symmetrized radial amplitudes v_m = w^{1/2} uhat_m on a periodic
radial grid r in [-R, R), one row per angular mode m in a finite window.
In this representation the surface L^2 norm is the plain discrete l^2 norm

    ||u||^2 = sum_m int |v_m|^2 dr,

and the conjugated radial operator acts mode by mode (modes never couple).

Phase-space diagnostics use normalized coherent states

    g_z:  v_m(r) = N exp(-(r - r_0)^2 / 2h) exp(i xi_r (r - r_0) / h)
                   exp(-h (m - xi_theta/h)^2 / 2) exp(-i m theta_0),

whose mutual overlaps satisfy |<g_z, g_w>| = exp(-d(z, w)^2 / 4h) with d the
chart distance (theta wrapped).  Husimi masses of regions are
(2 pi h)^{-2} int_region |<g_z, u>|^2 dz, evaluated either by Monte Carlo
over a union of covering boxes (with multiplicity correction, unbiased) or
by deterministic tensor grids on the same boxes.
"""

from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.fft import next_fast_len

from quasibeam.geometry import PhasePoint

log = logging.getLogger(__name__)

__all__ = [
    "ModeGrid",
    "WaveField",
    "coherent_state",
    "husimi_overlaps",
    "husimi_mass",
    "husimi_total",
    "husimi_slice",
    "BallRegion",
    "BoxRegion",
    "TubeRegion",
    "write_husimi_csv",
]


class ModeGrid:
    """Radial grid plus angular mode window at a fixed Planck parameter h.

    The radial axis is periodic, r in [-r_max, r_max) with n_r points; the
    mode window is the inclusive integer range [m_lo, m_hi].
    """

    def __init__(self, geom, h, n_r, r_max, m_lo, m_hi):
        if m_hi < m_lo:
            raise ValueError("empty mode window")
        self.geom = geom
        self.h = float(h)
        self.n_r = int(n_r)
        self.r_max = float(r_max)
        self.m_lo = int(m_lo)
        self.m_hi = int(m_hi)
        self.r = -self.r_max + 2.0 * self.r_max * np.arange(self.n_r) / self.n_r
        self.dr = 2.0 * self.r_max / self.n_r
        self.k = 2.0 * np.pi * np.fft.fftfreq(self.n_r, d=self.dr)
        self.modes = np.arange(self.m_lo, self.m_hi + 1)
        self.w_r = geom.w(self.r)
        self.q_r = geom.q(self.r)
        self.c_r = geom.c(self.r)

    @classmethod
    def auto(cls, geom, h, xi_theta=1.0, r_margin=6.0, oversample=2.2, xi_band=1.8):
        """Size the grid for fields with radial frequencies up to xi_band.

        n_r keeps the grid Nyquist frequency at oversample * xi_band; the
        mode window is centered at xi_theta / h with halfwidth 5.2 / sqrt(h),
        which keeps coherent-state mode tails below 1e-10 in squared mass.
        """
        r_max = geom.profile.r0 + r_margin
        n_min = int(np.ceil(oversample * xi_band * 2.0 * r_max / (np.pi * h)))
        n_r = next_fast_len(n_min, real=False)
        m_c = int(round(xi_theta / h))
        half = int(np.ceil(5.2 / np.sqrt(h)))
        return cls(geom, h, n_r, r_max, m_c - half, m_c + half)

    @property
    def n_modes(self):
        return self.m_hi - self.m_lo + 1

    def xi_r(self):
        """Radial frequency values h*k in FFT order."""
        return self.h * self.k

    def key(self):
        return (self.geom.profile, self.h, self.n_r, self.r_max, self.m_lo, self.m_hi)

    def compatible(self, other):
        return self.key() == other.key()


class WaveField:
    """Mode-space field: data[m - m_lo, :] = v_m(r), symmetrized amplitudes."""

    def __init__(self, grid: ModeGrid, data=None):
        self.grid = grid
        if data is None:
            data = np.zeros((grid.n_modes, grid.n_r), dtype=complex)
        data = np.asarray(data, dtype=complex)
        if data.shape != (grid.n_modes, grid.n_r):
            raise ValueError(
                f"field shape {data.shape} does not match grid "
                f"({grid.n_modes}, {grid.n_r})"
            )
        self.data = data

    def copy(self):
        return WaveField(self.grid, self.data.copy())

    def norm(self):
        return float(np.sqrt(np.sum(np.abs(self.data) ** 2) * self.grid.dr))

    def inner(self, other):
        """<self, other> with the physics convention (conjugate first slot)."""
        self._check(other)
        return complex(np.sum(np.conj(self.data) * other.data) * self.grid.dr)

    def _check(self, other):
        if not self.grid.compatible(other.grid):
            raise ValueError("fields live on incompatible grids")

    def __add__(self, other):
        self._check(other)
        return WaveField(self.grid, self.data + other.data)

    def __sub__(self, other):
        self._check(other)
        return WaveField(self.grid, self.data - other.data)

    def __mul__(self, scalar):
        return WaveField(self.grid, self.data * scalar)

    __rmul__ = __mul__

    def physical_modes(self):
        """Unsymmetrized radial amplitudes uhat_m = v_m / sqrt(w)."""
        return self.data / np.sqrt(self.grid.w_r)[None, :]

    def to_physical_grid(self, n_theta=None):
        """Field values u(theta_j, r_i) on a uniform angular grid.

        n_theta defaults to the smallest FFT-friendly size that resolves the
        mode window exactly (band-limited reconstruction).
        """
        g = self.grid
        if n_theta is None:
            n_theta = next_fast_len(2 * max(abs(g.m_lo), abs(g.m_hi)) + 2)
        theta = 2.0 * np.pi * np.arange(n_theta) / n_theta
        phases = np.exp(1j * theta[:, None] * g.modes[None, :])
        return phases @ self.physical_modes() / np.sqrt(2.0 * np.pi), theta

    def norm_physical(self, n_theta=None):
        """Norm via the surface measure w dr dtheta on the physical grid.

        Cross-checks the mode-space norm; the two agree to round-off for
        band-limited fields.
        """
        vals, theta = self.to_physical_grid(n_theta)
        dtheta = theta[1] - theta[0]
        dens = np.sum(np.abs(vals) ** 2, axis=0) * dtheta
        return float(np.sqrt(np.sum(dens * self.grid.w_r) * self.grid.dr))

    def mode_masses(self):
        return np.sum(np.abs(self.data) ** 2, axis=1) * self.grid.dr

    def radial_density(self):
        return np.sum(np.abs(self.data) ** 2, axis=0)

    def window_tail_fraction(self, edge=2):
        """Mass fraction in the outermost `edge` modes on each side."""
        mm = self.mode_masses()
        total = float(np.sum(mm))
        if total == 0.0:
            return 0.0
        return float((np.sum(mm[:edge]) + np.sum(mm[-edge:])) / total)

    def multiply_radial(self, values):
        """Pointwise radial multiplier; values has shape (n_r,)."""
        return WaveField(self.grid, self.data * np.asarray(values)[None, :])

    def multiply_mode(self, values):
        """Pointwise mode multiplier; values has shape (n_modes,)."""
        return WaveField(self.grid, self.data * np.asarray(values)[:, None])

    def multiply_xi(self, values):
        """Radial Fourier multiplier; values sampled on grid.xi_r() order."""
        spec = np.fft.fft(self.data, axis=1)
        return WaveField(self.grid, np.fft.ifft(spec * np.asarray(values)[None, :], axis=1))

    def sandwich_axis(self, kind):
        """Coordinate values and multiplier hook for a sandwich factor kind."""
        g = self.grid
        if kind == "position":
            return g.r, self.multiply_radial
        if kind == "frequency":
            return g.xi_r(), self.multiply_xi
        if kind == "mode":
            return g.h * g.modes, self.multiply_mode
        raise ValueError(f"unknown sandwich factor kind {kind!r}")

    def random_like(self, rng):
        """Unit-norm field with iid complex Gaussian entries (test probe)."""
        data = rng.standard_normal(self.data.shape) + 1j * rng.standard_normal(self.data.shape)
        out = WaveField(self.grid, data)
        return (1.0 / out.norm()) * out

    def save(self, path):
        """Write data to <path>.npy plus a JSON sidecar <path>.json."""
        path = Path(path)
        np.save(path.with_suffix(".npy"), self.data)
        g = self.grid
        meta = {
            "format": "quasibeam-field-1",
            "h": g.h,
            "n_r": g.n_r,
            "r_max": g.r_max,
            "m_lo": g.m_lo,
            "m_hi": g.m_hi,
            "representation": "symmetrized",
            "norm": self.norm(),
            "profile": dataclasses.asdict(g.geom.profile),
        }
        with open(path.with_suffix(".json"), "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @staticmethod
    def load(path, geom):
        path = Path(path)
        with open(path.with_suffix(".json")) as fh:
            meta = json.load(fh)
        stored = meta["profile"]
        current = dataclasses.asdict(geom.profile)
        current["interior"] = list(current["interior"])
        stored["interior"] = list(stored["interior"])
        stored["knots"] = [list(k) for k in stored["knots"]]
        current["knots"] = [list(k) for k in current["knots"]]
        if stored != current:
            raise ValueError("stored field was built on a different profile")
        grid = ModeGrid(geom, meta["h"], meta["n_r"], meta["r_max"], meta["m_lo"], meta["m_hi"])
        data = np.load(path.with_suffix(".npy"))
        fld = WaveField(grid, data)
        if abs(fld.norm() - meta["norm"]) > 1e-9 * max(1.0, meta["norm"]):
            raise ValueError("stored field norm does not match sidecar")
        return fld


def _as_points(centers):
    if isinstance(centers, PhasePoint):
        return centers.as_array()[None, :]
    if isinstance(centers, np.ndarray):
        return np.atleast_2d(np.asarray(centers, dtype=float))
    rows = [c.as_array() if isinstance(c, PhasePoint) else np.asarray(c, dtype=float) for c in centers]
    return np.atleast_2d(np.asarray(rows, dtype=float))


def _coherent_parts(grid: ModeGrid, centers):
    """Radial and mode factors of normalized coherent states at `centers`.

    Returns (radial (Z, n_r), mode (Z, n_modes)); the product over the two
    factors is unit-norm in the discrete field norm.
    """
    z = _as_points(centers)
    h = grid.h
    R = grid.r_max
    dr_wrapped = np.mod(grid.r[None, :] - z[:, 0:1] + R, 2.0 * R) - R
    radial = np.exp(-(dr_wrapped**2) / (2.0 * h) + 1j * z[:, 2:3] * dr_wrapped / h)
    mode = np.exp(
        -h * (grid.modes[None, :] - z[:, 3:4] / h) ** 2 / 2.0
        - 1j * grid.modes[None, :] * z[:, 1:2]
    )
    rad_norm = np.sqrt(np.sum(np.abs(radial) ** 2, axis=1) * grid.dr)
    mode_norm = np.sqrt(np.sum(np.abs(mode) ** 2, axis=1))
    radial /= rad_norm[:, None]
    mode /= mode_norm[:, None]
    return radial, mode


def coherent_state(grid: ModeGrid, center):
    """Unit-norm coherent state centered at the phase point `center`.

    Raises ValueError when the radial Gaussian leaves more than 1e-10 of its
    mass within sqrt(h) of the periodic seam at r = +-r_max.
    """
    radial, mode = _coherent_parts(grid, center)
    band = np.abs(grid.r) >= grid.r_max - max(np.sqrt(grid.h), 2.0 * grid.dr)
    tail = float(np.sum(np.abs(radial[0][band]) ** 2) * grid.dr)
    if tail > 1e-10:
        raise ValueError(
            f"coherent state center too close to the radial boundary "
            f"(seam mass {tail:.2e})"
        )
    return WaveField(grid, mode[0][:, None] * radial[0][None, :])


def husimi_overlaps(field: WaveField, centers):
    """<g_z, u> for a batch of phase-space centers z; shape (Z,)."""
    radial, mode = _coherent_parts(field.grid, centers)
    # A[m, z] = sum_r conj(radial_z(r)) v_m(r) dr
    A = field.data @ np.conj(radial).T * field.grid.dr
    return np.einsum("zm,mz->z", np.conj(mode), A)


def _husimi_density(field, points):
    return np.abs(husimi_overlaps(field, points)) ** 2 / (2.0 * np.pi * field.grid.h) ** 2


@dataclass(frozen=True)
class BallRegion:
    """Chart-metric ball around a phase point (theta compared mod 2 pi)."""

    center: tuple
    radius: float

    def __post_init__(self):
        c = self.center
        if isinstance(c, PhasePoint):
            c = c.as_array()
        object.__setattr__(self, "center", tuple(float(v) for v in c))

    def boxes(self):
        c = np.asarray(self.center, dtype=float)
        lo = c - self.radius
        hi = c + self.radius
        return np.stack([lo, hi])[None, :, :]  # (1, 2, 4)

    def indicator(self, points):
        d = points - np.asarray(self.center)[None, :]
        d[:, 1] = np.mod(d[:, 1] + np.pi, 2.0 * np.pi) - np.pi
        return np.sum(d**2, axis=1) <= self.radius**2


@dataclass(frozen=True)
class BoxRegion:
    """Product box around a phase point (theta compared mod 2 pi).

    half_sides are the per-coordinate half widths; the box is inscribed in
    the chart ball of radius 2 max(half_sides), so its mass lower-bounds the
    ball mass while staying small enough for tensor-grid quadrature.
    """

    center: tuple
    half_sides: tuple

    def __post_init__(self):
        c = self.center
        if isinstance(c, PhasePoint):
            c = c.as_array()
        object.__setattr__(self, "center", tuple(float(v) for v in c))
        hs = self.half_sides
        if np.isscalar(hs):
            hs = (hs,) * 4
        hs = tuple(float(v) for v in hs)
        if len(hs) != 4 or any(v <= 0 for v in hs):
            raise ValueError("half_sides needs four positive entries")
        object.__setattr__(self, "half_sides", hs)

    def boxes(self):
        c = np.asarray(self.center, dtype=float)
        hs = np.asarray(self.half_sides, dtype=float)
        return np.stack([c - hs, c + hs])[None, :, :]

    def indicator(self, points):
        d = points - np.asarray(self.center)[None, :]
        d[:, 1] = np.mod(d[:, 1] + np.pi, 2.0 * np.pi) - np.pi
        return np.all(np.abs(d) <= np.asarray(self.half_sides)[None, :], axis=1)


@dataclass(frozen=True)
class TubeRegion:
    """Union of chart balls of radius rho(t) around gamma(t), t in [t_lo, t_hi].

    radius may be a float or a callable of t.  The polyline discretization
    step dt_poly only affects the covering boxes and the nearest-time lookup.
    """

    gamma: object
    t_lo: float
    t_hi: float
    radius: object
    dt_poly: float = 0.01

    def _polyline(self):
        n = max(2, int(np.ceil((self.t_hi - self.t_lo) / self.dt_poly)) + 1)
        ts = np.linspace(self.t_lo, self.t_hi, n)
        pts = self.gamma.state(ts)
        rho = (
            np.asarray([self.radius(t) for t in ts])
            if callable(self.radius)
            else np.full(n, float(self.radius))
        )
        return ts, pts, rho

    def boxes(self):
        """Covering boxes: polyline chunks inflated by the local radius."""
        ts, pts, rho = self._polyline()
        # chunk length ~ the local ball size so boxes hug the tube
        boxes = []
        i = 0
        n = ts.size
        while i < n - 1:
            j = i
            extent = 0.0
            while j < n - 1 and extent < 1.2 * rho[i]:
                j += 1
                extent = float(np.max(np.linalg.norm(pts[i : j + 1] - pts[i], axis=1)))
            chunk = pts[i : j + 1]
            pad = float(np.max(rho[i : j + 1]))
            lo = np.min(chunk, axis=0) - pad
            hi = np.max(chunk, axis=0) + pad
            boxes.append(np.stack([lo, hi]))
            i = j
        return np.asarray(boxes)

    def indicator(self, points):
        ts, pts, rho = self._polyline()
        d = points[:, None, :] - pts[None, :, :]
        d[:, :, 1] = np.mod(d[:, :, 1] + np.pi, 2.0 * np.pi) - np.pi
        dist2 = np.sum(d**2, axis=2)
        nearest = np.argmin(dist2, axis=1)
        sel = np.arange(points.shape[0])
        return dist2[sel, nearest] <= rho[nearest] ** 2


def _region_samples_mc(region, n_samples, rng):
    boxes = region.boxes()
    vols = np.prod(boxes[:, 1, :] - boxes[:, 0, :], axis=1)
    total = float(np.sum(vols))
    pts_all, wts_all = [], []
    for b, vol in zip(boxes, vols):
        ni = max(16, int(round(n_samples * vol / total)))
        pts = rng.uniform(b[0], b[1], size=(ni, 4))
        wts = np.full(ni, vol / ni)
        pts_all.append(pts)
        wts_all.append(wts)
    pts = np.concatenate(pts_all)
    wts = np.concatenate(wts_all)
    inside = region.indicator(pts)
    mult = _box_multiplicity(boxes, pts)
    return pts, wts * inside / mult


def _region_samples_grid(region, per_axis):
    boxes = region.boxes()
    pts_all, wts_all = [], []
    for b in boxes:
        axes = [
            b[0, k] + (b[1, k] - b[0, k]) * (np.arange(per_axis) + 0.5) / per_axis
            for k in range(4)
        ]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 4)
        cell = np.prod((b[1] - b[0]) / per_axis)
        pts_all.append(mesh)
        wts_all.append(np.full(mesh.shape[0], cell))
    pts = np.concatenate(pts_all)
    wts = np.concatenate(wts_all)
    inside = region.indicator(pts)
    mult = _box_multiplicity(boxes, pts)
    return pts, wts * inside / mult


def _box_multiplicity(boxes, pts):
    lo = boxes[:, 0, :]
    hi = boxes[:, 1, :]
    inside = np.all(
        (pts[:, None, :] >= lo[None, :, :]) & (pts[:, None, :] <= hi[None, :, :]), axis=2
    )
    return np.maximum(np.sum(inside, axis=1), 1)


def husimi_mass(field: WaveField, region, n_samples=10000, rng=None, method="mc", per_axis=5):
    """Husimi mass fraction of a phase-space region.

    Returns (fraction, stderr_fraction).  method "mc" uses stratified
    unbiased samples over the covering boxes; "grid" uses midpoint tensor
    grids on the same boxes (stderr 0).  The fraction is normalized by
    ||u||^2, so values land in [0, 1] up to frame-identity error.
    """
    if method == "mc":
        rng = np.random.default_rng(rng)
        pts, wts = _region_samples_mc(region, n_samples, rng)
    elif method == "grid":
        pts, wts = _region_samples_grid(region, per_axis)
    else:
        raise ValueError(f"unknown husimi method {method!r}")
    dens = np.empty(pts.shape[0])
    block = 8192
    for i in range(0, pts.shape[0], block):
        dens[i : i + block] = _husimi_density(field, pts[i : i + block])
    total = field.norm() ** 2
    vals = wts * dens
    est = float(np.sum(vals)) / total
    if method == "grid":
        return est, 0.0
    n = vals.size
    var = float(np.var(vals)) * n
    return est, float(np.sqrt(var / n) / total * np.sqrt(n))


def husimi_total(field: WaveField, n_pos=80, n_mom=80, n_xi_theta=64, xi_band=2.2):
    """Whole-phase-space Husimi integral over ||u||^2; should be close to 1.

    The theta_0 integral is done exactly by mode orthogonality, so the
    quadrature runs over (r_0, xi_r, xi_theta) only.
    """
    g = field.grid
    h = g.h
    r0 = np.linspace(-g.r_max, g.r_max, n_pos, endpoint=False)
    xi = np.linspace(-xi_band, xi_band, n_mom)
    xth_lo = h * g.m_lo - 5.0 * np.sqrt(h)
    xth_hi = h * g.m_hi + 5.0 * np.sqrt(h)
    xth = np.linspace(xth_lo, xth_hi, n_xi_theta)
    dr0 = r0[1] - r0[0]
    dxi = xi[1] - xi[0]
    dxt = xth[1] - xth[0]

    R0, XI = np.meshgrid(r0, xi, indexing="ij")
    dr_wrapped = np.mod(g.r[None, :] - R0.ravel()[:, None] + g.r_max, 2.0 * g.r_max) - g.r_max
    radial = np.exp(
        -(dr_wrapped**2) / (2.0 * h) + 1j * XI.ravel()[:, None] * dr_wrapped / h
    )
    rad_norm2 = np.sum(np.abs(radial) ** 2, axis=1) * g.dr
    B = field.data @ np.conj(radial).T * g.dr  # (n_modes, Z)
    B2 = np.abs(B) ** 2 / rad_norm2[None, :]

    cm2 = np.exp(-h * (g.modes[None, :] - xth[:, None] / h) ** 2)  # (n_xth, n_modes)
    cm2 /= np.sum(cm2, axis=1)[:, None]
    mode_weight = np.sum(cm2, axis=0) * dxt  # integral of cm^2/S_m over xi_theta

    total = 2.0 * np.pi * float(mode_weight @ np.sum(B2, axis=1) * dr0 * dxi)
    return total / (2.0 * np.pi * h) ** 2 / field.norm() ** 2


def husimi_slice(field: WaveField, r0_grid, xi_grid, theta0=0.0, xi_theta=None):
    """Husimi density on an (r_0, xi_r) grid at fixed theta_0 and xi_theta."""
    if xi_theta is None:
        xi_theta = field.grid.h * 0.5 * (field.grid.m_lo + field.grid.m_hi)
    R0, XI = np.meshgrid(r0_grid, xi_grid, indexing="ij")
    pts = np.column_stack(
        [R0.ravel(), np.full(R0.size, theta0), XI.ravel(), np.full(R0.size, xi_theta)]
    )
    dens = np.empty(pts.shape[0])
    block = 8192
    for i in range(0, pts.shape[0], block):
        dens[i : i + block] = _husimi_density(field, pts[i : i + block])
    return dens.reshape(R0.shape)


def write_husimi_csv(field: WaveField, path, r0_grid, xi_grid, theta0=0.0, xi_theta=None):
    """Delimited Husimi slice: columns r, xi_r, density."""
    dens = husimi_slice(field, r0_grid, xi_grid, theta0=theta0, xi_theta=xi_theta)
    import csv

    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["r", "xi_r", "density"])
        for i, rv in enumerate(r0_grid):
            for j, xv in enumerate(xi_grid):
                wr.writerow(
                    [format(rv, ".17g"), format(xv, ".17g"), format(dens[i, j], ".17g")]
                )
    log.info("wrote husimi slice to %s", path)
