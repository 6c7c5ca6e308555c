"""Gaussian beam chain along the escaping geodesic.

Three layers build on each other.  ``model_beam`` realizes the closed-form
envelope/source pair for the flat transport generator h D_{x1} - omega^2 and
checks its exact shift identity, semiclassical Fourier transform, and window
localization on the grid.  ``short_beam`` seeds a coherent state at
gamma(-(beta/2) log(1/h)) and time-smears it through the propagator's exact
eigenbasis filters, producing a pair (u0, f0) that satisfies

    (P_h - omega^2) u0 = h (U(t0) f0 - f0)

to spectral accuracy.  ``long_beam`` iterates the cutoff step
u_{j+1} = chi U(t0) u_j (and its backward mirror) to amplify the beam by
e^{2 sqrt(E) nu t0} per step, assembling u = h^{sqrt(E) beta nu} sum_j u_j
together with the endpoint sources f_+ and f_-.

Localization diagnostics evaluate Husimi mass on tubes around the orbit via
a dense phase-space lattice whose quadrature bias cancels in the
inside/total ratio (``HusimiLattice``), and window lower bounds via the
cutoff sandwich calculus.  All report objects carry measured numbers only;
thresholds live with the callers.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from quasibeam.bumps import mollifier, mollifier_ft, ramp, ramp_ft, window
from quasibeam.calculus import (
    Factor,
    FlatField,
    GridResolutionError,
    SandwichSymbol,
    apply_sandwich,
)
from quasibeam.field import WaveField, _coherent_parts, coherent_state
from quasibeam.geometry import ModelGeometry
from quasibeam.propagate import Params, apply_p, apply_p_transport

log = logging.getLogger(__name__)

__all__ = [
    "ModelBeam",
    "model_beam",
    "HusimiLattice",
    "husimi_lattice",
    "trajectory_window",
    "ShortBeam",
    "short_beam",
    "ChainRow",
    "BeamBundle",
    "long_beam",
    "chi_profile",
    "LocalizationRow",
    "LocalizationReport",
    "localization_report",
    "WitnessReport",
    "witness_lower_bound",
]


def _scrub(obj):
    """Make a report structure JSON-serializable (numpy scalars -> python)."""
    if isinstance(obj, dict):
        return {str(k): _scrub(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_scrub(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return [_scrub(v) for v in obj.tolist()]
    return obj


# ---------------------------------------------------------------------------
# Flat model beam: transport generator, closed forms on the grid.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelBeam:
    """Closed-form beam pair for h D_{x1} - omega^2 with its grid checks.

    All residuals are relative; ``witness_value`` is the absolute norm
    ``||Op(b_u) u||`` for the window pinned to the envelope plateau.
    """

    h: float
    t0: float
    n: int
    u: FlatField
    f: FlatField
    u_norm: float
    f_norm: float
    identity_residual: float
    peak_error: float
    ft_error: float
    reproduce_u: float
    witness_value: float
    reproduce_f: float

    def as_dict(self):
        return _scrub(
            {
                "h": self.h,
                "t0": self.t0,
                "n": self.n,
                "u_norm": self.u_norm,
                "f_norm": self.f_norm,
                "identity_residual": self.identity_residual,
                "peak_error": self.peak_error,
                "ft_error": self.ft_error,
                "reproduce_u": self.reproduce_u,
                "witness_value": self.witness_value,
                "reproduce_f": self.reproduce_f,
            }
        )


def _flat_band_tail(u: FlatField, frac=0.85):
    """Spectral mass fraction beyond ``frac`` of the Nyquist band, per axis."""
    spec = np.fft.fft2(u.data)
    p = np.abs(spec) ** 2
    total = float(np.sum(p))
    k1 = u.mgeom.wavenumbers(0)
    k2 = u.mgeom.wavenumbers(1)
    out1 = float(np.sum(p[:, np.abs(k1) >= frac * np.max(np.abs(k1))])) / total
    out2 = float(np.sum(p[np.abs(k2) >= frac * np.max(np.abs(k2)), :])) / total
    return out1, out2


def _model_symbols(h, t0, energy, n, rho, xi2_spacing):
    """Reproducing and witness windows adapted to the model beam.

    Position pads must dominate the x-width h / (scale * roll) of the
    frequency multiplier's kernel, otherwise the ordered product smears the
    envelope past its own plateau and the reproduction error saturates.
    The transverse window must both contain the Gaussian's sqrt(h)-band
    (n = 2) and stay resolved on the discrete xi_2 axis.
    """
    content = 8.0 * np.sqrt(h) if n == 2 else 0.0
    mode_scale = max(content, 0.3, 4.0 * xi2_spacing) + 0.1
    common = (
        Factor("frequency", energy, 1.2, 0.6),
        Factor("mode", 0.0, mode_scale, 0.5),
    )
    a_u = SandwichSymbol(
        (Factor("position", 0.0, 2.0 * t0 / 3.0 + 0.8, 0.4),) + common, h=h, rho=rho
    )
    b_u = SandwichSymbol(
        (Factor("position", 0.0, t0 / 3.0, 0.4),) + common, h=h, rho=rho
    )
    a_f = SandwichSymbol(
        (Factor("position", -t0 / 2.0, t0 / 6.0 + 0.8, 0.5),)
        + (Factor("frequency", energy, 1.5, 0.6), common[1]),
        h=h,
        rho=rho,
    )
    return a_u, b_u, a_f


def model_beam(h, t0, params: Params, n=2, mgeom=None):
    """Build the flat-model pair (u, f) and verify its exact identities.

    u(x) = h^{-(n-1)/4} phi(x1) e^{i omega^2 x1 / h} G(x2) with G the unit
    transverse Gaussian for n = 2 and G = 1 for n = 1; f carries the
    mollifier psi(x1 + t0) in place of phi, times i.  The pair satisfies

        (h D_{x1} - omega^2) u = h (e^{i t0 omega^2 / h} f(x1 - t0) - f)

    identically, so the reported residual is pure discretization.  The
    shifted copy is evaluated in closed form (psi is shifted analytically),
    never by grid interpolation.

    Raises GridResolutionError when the field's spectral tail indicates the
    grid cannot represent the oscillation e^{i omega^2 x1 / h}.
    """
    if abs(params.h - h) > 1e-12:
        raise ValueError(f"params h = {params.h} does not match h = {h}")
    if n not in (1, 2):
        raise ValueError(f"model dimension must be 1 or 2, got {n}")
    if mgeom is None:
        # dx1 must resolve the mollifier's support-edge structure, whose
        # aliasing dominates the identity residual long before the carrier
        # oscillation omega^2 / h runs out of points
        mgeom = ModelGeometry(half_length=(max(4.0, 2.5 * t0), 2.0), size=(4096, 128))
    omega_sq = params.omega_sq
    x1 = mgeom.axis(0)
    x2 = mgeom.axis(1)
    amp = h ** (-(n - 1) / 4.0)
    gauss = np.exp(-(x2**2) / (2.0 * h)) if n == 2 else np.ones_like(x2)
    phase = np.exp(1j * omega_sq * x1 / h)
    lo, hi = t0 / 3.0, 2.0 * t0 / 3.0

    u = FlatField(mgeom, h, gauss[:, None] * (amp * ramp(x1, t0) * phase)[None, :])
    f = FlatField(
        mgeom, h, gauss[:, None] * (1j * amp * mollifier(x1 + t0, lo, hi) * phase)[None, :]
    )
    # exact translate: psi(x1 - t0 + t0) = psi(x1), phase shifted analytically
    f_shift = FlatField(
        mgeom,
        h,
        gauss[:, None]
        * (1j * amp * mollifier(x1, lo, hi) * np.exp(1j * omega_sq * (x1 - t0) / h))[None, :],
    )

    tail1, tail2 = _flat_band_tail(u)
    if max(tail1, tail2) > 1e-10:
        raise GridResolutionError(
            f"model grid does not resolve the beam (band tails {tail1:.2e}, "
            f"{tail2:.2e}); refine the grid"
        )

    lhs = apply_p_transport(u, params)
    rhs = (f_shift * np.exp(1j * t0 * omega_sq / h) - f) * h
    identity_residual = (lhs - rhs).norm() / rhs.norm()

    i1 = int(np.argmin(np.abs(x1)))
    i2 = int(np.argmin(np.abs(x2)))
    peak_error = abs(u.data[i2, i1] - amp) / amp

    ft_error = _model_ft_error(u, params, t0, n)

    xi2_spacing = h * np.pi / mgeom.half_length[1]
    a_u, b_u, a_f = _model_symbols(h, t0, params.energy, n, params.rho,
                                   xi2_spacing)
    reproduce_u = (apply_sandwich(a_u, u) - u).norm() / u.norm()
    witness_value = apply_sandwich(b_u, u).norm()
    reproduce_f = (apply_sandwich(a_f, f) - f).norm() / f.norm()

    return ModelBeam(
        h=h,
        t0=t0,
        n=n,
        u=u,
        f=f,
        u_norm=u.norm(),
        f_norm=f.norm(),
        identity_residual=float(identity_residual),
        peak_error=float(peak_error),
        ft_error=float(ft_error),
        reproduce_u=float(reproduce_u),
        witness_value=float(witness_value),
        reproduce_f=float(reproduce_f),
    )


def _model_ft_error(u: FlatField, params: Params, t0, n):
    """Relative L2 error of the semiclassical FT against its closed form.

    F_h u (xi) = (2 pi h)^{-1/2} h^{-(n-1)/4} phihat((xi1 - omega^2)/h)
                 e^{-xi2^2 / (2h)}   (transverse factor absent for n = 1,
    where the check runs on the x2 = 0 slice instead).
    """
    h = u.h
    mg = u.mgeom
    k1 = mg.wavenumbers(0)
    omega_sq = params.omega_sq
    amp = h ** (-(n - 1) / 4.0)
    phihat = ramp_ft((h * k1 - omega_sq) / h, t0)
    if n == 1:
        i2 = int(np.argmin(np.abs(mg.axis(1))))
        row = u.data[i2, :]
        dx1 = mg.axis(0)[1] - mg.axis(0)[0]
        L1 = mg.half_length[0]
        fnum = dx1 / np.sqrt(2.0 * np.pi * h) * np.exp(1j * k1 * L1) * np.fft.fft(row)
        target = (2.0 * np.pi * h) ** (-0.5) * phihat
    else:
        k2 = mg.wavenumbers(1)
        dx1 = mg.axis(0)[1] - mg.axis(0)[0]
        dx2 = mg.axis(1)[1] - mg.axis(1)[0]
        L1, L2 = mg.half_length
        fnum = (
            dx1
            * dx2
            / (2.0 * np.pi * h)
            * np.exp(1j * k2 * L2)[:, None]
            * np.exp(1j * k1 * L1)[None, :]
            * np.fft.fft2(u.data)
        )
        target = (
            (2.0 * np.pi * h) ** (-0.5)
            * amp
            * np.exp(-(k2 * h) ** 2 / (2.0 * h))[:, None]
            * phihat[None, :]
        )
    num = np.linalg.norm(fnum - target)
    den = np.linalg.norm(target)
    return num / den


# ---------------------------------------------------------------------------
# Husimi lattice: dense phase-space quadrature with ratio-cancelling bias.
# ---------------------------------------------------------------------------


@dataclass
class HusimiLattice:
    """Husimi density of one field sampled on a dense phase-space lattice.

    Mass fractions are inside/total ratios over the same lattice, so the
    midpoint-rule bias at the density peaks cancels; the lattice spacing
    only has to resolve the sqrt(h)-scale variation of the density.  Points
    below ``dens_floor`` times the theoretical peak are dropped from the
    candidate list (counted as outside); their total contribution is far
    below any reported digit.

    coverage = total * cell / ||u||^2 measures how close the discrete frame
    is to a resolution of the identity on this lattice (diagnostic only;
    fractions do not depend on it).
    """

    h: float
    spacing: float
    cell: float
    total: float
    coverage: float
    n_points: int
    points: np.ndarray
    dens: np.ndarray

    def mass(self, region):
        """Husimi mass fraction of ``region`` (any object with indicator)."""
        if self.points.size == 0:
            return 0.0
        inside = self.dens[region.indicator(self.points)].sum()
        return float(inside / self.total)

    def tube_distances(self, gamma, t_lo, t_hi, dt_poly=0.01):
        """Chart distance from every candidate point to the orbit section."""
        n = max(2, int(np.ceil((t_hi - t_lo) / dt_poly)) + 1)
        poly = gamma.state(np.linspace(t_lo, t_hi, n))
        m = self.points.shape[0]
        d2min = np.full(m, np.inf)
        block = 65536
        for i in range(0, m, block):
            pts = self.points[i : i + block]
            d2 = np.zeros((pts.shape[0], n))
            for k in range(4):
                diff = pts[:, k : k + 1] - poly[None, :, k]
                if k == 1:
                    diff = np.mod(diff + np.pi, 2.0 * np.pi) - np.pi
                d2 += diff**2
            d2min[i : i + block] = d2.min(axis=1)
        return np.sqrt(d2min)

    def tube_profile(self, gamma, t_lo, t_hi, radii, dt_poly=0.01):
        """Mass fractions of constant-radius tubes, sharing one distance pass."""
        dist = self.tube_distances(gamma, t_lo, t_hi, dt_poly=dt_poly)
        radii = np.atleast_1d(np.asarray(radii, dtype=float))
        return np.array(
            [float(self.dens[dist <= r].sum() / self.total) for r in radii]
        )


def husimi_lattice(field: WaveField, spacing=None, dens_floor=1e-13, xi_band=2.2):
    """Evaluate the Husimi density of ``field`` on a tensor lattice.

    The coherent frame factorizes into a radial factor depending on
    (r0, xi_r) and a mode factor A_m(xi_theta) e^{-i m theta0}, so the
    overlap on the tensor lattice is one contraction per xi_theta slice;
    the full 4-d density never needs per-point state construction.
    """
    g = field.grid
    h = g.h
    if spacing is None:
        spacing = 0.45 * np.sqrt(h)
    n_r0 = int(np.ceil(2.0 * g.r_max / spacing))
    r0 = -g.r_max + 2.0 * g.r_max * np.arange(n_r0) / n_r0
    n_th = int(np.ceil(2.0 * np.pi / spacing))
    th0 = -np.pi + 2.0 * np.pi * np.arange(n_th) / n_th
    n_xi = int(np.ceil(2.0 * xi_band / spacing)) + 1
    xi = np.linspace(-xi_band, xi_band, n_xi)
    xth_lo = h * g.m_lo - 5.0 * np.sqrt(h)
    xth_hi = h * g.m_hi + 5.0 * np.sqrt(h)
    n_xth = int(np.ceil((xth_hi - xth_lo) / spacing)) + 1
    xth = np.linspace(xth_lo, xth_hi, n_xth)
    cell = (
        (r0[1] - r0[0]) * (th0[1] - th0[0]) * (xi[1] - xi[0]) * (xth[1] - xth[0])
    )

    # mode factor per xi_theta (real, normalized) and theta phases
    modes = g.modes
    mode_fac = np.exp(-h * (modes[None, :] - xth[:, None] / h) ** 2 / 2.0)
    mode_fac /= np.sqrt(np.sum(mode_fac**2, axis=1))[:, None]
    phases = np.exp(1j * modes[None, :] * th0[:, None])  # (n_th, n_modes)

    norm_sq = field.norm() ** 2
    scale = 1.0 / (2.0 * np.pi * h) ** 2
    floor_abs = dens_floor * norm_sq * scale

    pairs_r0, pairs_xi = np.meshgrid(r0, xi, indexing="ij")
    pairs_r0 = pairs_r0.ravel()
    pairs_xi = pairs_xi.ravel()
    n_pairs = pairs_r0.size

    total = 0.0
    cand_pts = []
    cand_dens = []
    chunk = max(256, int(5.0e7 / (8.0 * n_th * n_xth)))
    for i0 in range(0, n_pairs, chunk):
        sl = slice(i0, min(i0 + chunk, n_pairs))
        rr = pairs_r0[sl]
        xx = pairs_xi[sl]
        dr_wrapped = np.mod(g.r[None, :] - rr[:, None] + g.r_max, 2.0 * g.r_max) - g.r_max
        radial = np.exp(-(dr_wrapped**2) / (2.0 * h) + 1j * xx[:, None] * dr_wrapped / h)
        rad_norm = np.sqrt(np.sum(np.abs(radial) ** 2, axis=1) * g.dr)
        B = (field.data @ np.conj(radial).T) * (g.dr / rad_norm[None, :])
        nc = rr.size
        dens = np.empty((n_th, n_xth, nc))
        for ix in range(n_xth):
            t_slice = (phases * mode_fac[ix][None, :]) @ B  # (n_th, nc)
            dens[:, ix, :] = np.abs(t_slice) ** 2
        dens *= scale
        total += float(dens.sum())
        it, ix, ic = np.nonzero(dens > floor_abs)
        if it.size:
            pts = np.stack(
                [rr[ic], th0[it], xx[ic], xth[ix]], axis=1
            )
            cand_pts.append(pts)
            cand_dens.append(dens[it, ix, ic])

    points = np.concatenate(cand_pts) if cand_pts else np.zeros((0, 4))
    dens = np.concatenate(cand_dens) if cand_dens else np.zeros(0)
    coverage = total * cell / norm_sq
    return HusimiLattice(
        h=h,
        spacing=float(spacing),
        cell=float(cell),
        total=total,
        coverage=float(coverage),
        n_points=int(n_pairs * n_th * n_xth),
        points=points,
        dens=dens,
    )


# ---------------------------------------------------------------------------
# Windows pinned to orbit sections.
# ---------------------------------------------------------------------------


def trajectory_window(gamma, t_lo, t_hi, h, pad_pos=0.25, pad_freq=0.2,
                      pad_mode=0.3, roll=0.5, rho=0.35, samples=129):
    """Product window whose plateau covers the orbit section gamma([t_lo, t_hi]).

    The position factor spans the radial range of the section, the frequency
    factor its xi_r range, the mode factor its (conserved) xi_theta value;
    each plateau is padded outward by the corresponding pad.
    """
    pts = gamma.state(np.linspace(t_lo, t_hi, samples))
    r_lo, r_hi = float(pts[:, 0].min()), float(pts[:, 0].max())
    x_lo, x_hi = float(pts[:, 2].min()), float(pts[:, 2].max())
    m_c = float(pts[:, 3].mean())
    factors = (
        Factor("position", (r_lo + r_hi) / 2.0, (r_hi - r_lo) / 2.0 + pad_pos, roll),
        Factor("frequency", (x_lo + x_hi) / 2.0, (x_hi - x_lo) / 2.0 + pad_freq, roll),
        Factor("mode", m_c, pad_mode, roll),
    )
    return SandwichSymbol(factors, h=h, rho=rho)


# ---------------------------------------------------------------------------
# Short beam: filtered coherent seed.
# ---------------------------------------------------------------------------


@dataclass
class ShortBeam:
    """Seed pair (u0, f0) at the orbit base point with its diagnostics.

    u0 is normalized to unit norm; ``scale`` records the constant applied to
    both fields after filtering (the identity is homogeneous, so the
    rescaling is free).  ``identity_residual`` is relative to ||u0|| = 1.
    """

    u0: WaveField
    f0: WaveField
    frame: object
    base_time: float
    base_point: tuple
    t0: float
    kappa: float
    scale: float
    panels: int
    refined: bool
    identity_residual: float
    u0_norm: float
    f0_norm: float
    tube_radius: float
    tube_mass_u0: float
    tube_mass_f0: float
    lattice_coverage: float
    witness_value: float

    def as_dict(self):
        return _scrub(
            {
                "base_time": self.base_time,
                "base_point": list(self.base_point),
                "t0": self.t0,
                "kappa": self.kappa,
                "scale": self.scale,
                "panels": self.panels,
                "refined": self.refined,
                "identity_residual": self.identity_residual,
                "u0_norm": self.u0_norm,
                "f0_norm": self.f0_norm,
                "tube_radius": self.tube_radius,
                "tube_mass_u0": self.tube_mass_u0,
                "tube_mass_f0": self.tube_mass_f0,
                "lattice_coverage": self.lattice_coverage,
                "witness_value": self.witness_value,
            }
        )


def _seed_pair(prop, g, t0, panels):
    """Filtered (u0, f0) from seed g, normalized so ||f0|| = 1.

    The defining identity is homogeneous, so one common rescale is free.
    Pinning the f side keeps ||f_minus|| = h^{2 sqrt(E) beta nu} exact up to
    cutoff losses; pinning the u side instead would let the t0-dependent
    amplitude of the ramp filter (ramp_ft(0) = t0, and t0 varies while the
    step count saturates at small n0) leak a log(1/h) drift into the decay
    exponent.  ||u0|| then stays within a fixed band rather than at 1.
    """
    kappa = prop.params.h ** -0.25
    u_raw = prop.spectral_filter(g, lambda tau: ramp_ft(tau, t0, n=panels))
    f_raw = prop.spectral_filter(
        g, lambda tau: 1j * mollifier_ft(tau, t0 / 3.0, 2.0 * t0 / 3.0, n=panels)
    )
    scale = 1.0 / (kappa * f_raw.norm())
    u0 = u_raw * (kappa * scale)
    f0 = f_raw * (kappa * scale)
    return u0, f0, kappa, scale


def short_beam(geom, gamma, prop, budget=1e-6, panels=2048, tube_constant=10.0,
               compute_masses=True, spacing=None):
    """Seed the beam at gamma(-(beta/2) log(1/h)) by time-smearing filters.

    The ramp/mollifier Fourier transforms applied as eigenbasis filters
    realize the time integrals int phi(t) U(t) g dt and int psi(t) U(t) g dt
    in closed form; their built-in identity
    i tau phihat(tau) = (e^{i t0 tau} - 1) psihat(tau) makes

        (P_h - omega^2) u0 - h (U(t0) f0 - f0)

    vanish up to the filters' quadrature error.  When the residual (relative
    to ||u0||) exceeds ``budget`` the filter quadrature is refined once
    (doubled panels), then a hard error is raised.
    """
    if geom.profile != prop.geom.profile:
        raise ValueError("geometry does not match the propagator's surface")
    params = prop.params
    h = params.h
    t0 = params.t0
    base_time = -params.t_total
    z = np.asarray(gamma.state(base_time), dtype=float)
    g = coherent_state(prop.grid, z)

    def build(n_panels):
        u0, f0, kappa, scale = _seed_pair(prop, g, t0, n_panels)
        res = (apply_p(u0, params) - (prop.evolve(f0, t0) - f0) * h).norm()
        return u0, f0, kappa, scale, res / u0.norm()

    u0, f0, kappa, scale, residual = build(panels)
    refined = False
    if residual > budget:
        log.warning(
            "short-beam identity residual %.3e above budget %.1e; refining "
            "filter quadrature to %d panels", residual, budget, 2 * panels,
        )
        panels *= 2
        refined = True
        u0, f0, kappa, scale, residual = build(panels)
        if residual > budget:
            raise RuntimeError(
                f"short-beam identity residual {residual:.3e} exceeds budget "
                f"{budget:g} after refinement"
            )

    tube_radius = tube_constant * h**params.rho
    mass_u = mass_f = coverage = float("nan")
    if compute_masses:
        lat_u = husimi_lattice(u0, spacing=spacing)
        dist_u = lat_u.tube_distances(
            gamma, base_time - 2.0 * t0 / 3.0, base_time + 2.0 * t0 / 3.0
        )
        mass_u = float(lat_u.dens[dist_u <= tube_radius].sum() / lat_u.total)
        coverage = lat_u.coverage
        lat_f = husimi_lattice(f0, spacing=spacing)
        dist_f = lat_f.tube_distances(
            gamma, base_time + t0 / 3.0, base_time + 2.0 * t0 / 3.0
        )
        mass_f = float(lat_f.dens[dist_f <= tube_radius].sum() / lat_f.total)

    b_u = trajectory_window(
        gamma, base_time - t0 / 3.0, base_time + t0 / 3.0, h=h, rho=params.rho
    )
    witness = apply_sandwich(b_u, u0).norm()

    return ShortBeam(
        u0=u0,
        f0=f0,
        frame=gamma,
        base_time=float(base_time),
        base_point=tuple(float(v) for v in z),
        t0=float(t0),
        kappa=float(kappa),
        scale=float(scale),
        panels=panels,
        refined=refined,
        identity_residual=float(residual),
        u0_norm=float(u0.norm()),
        f0_norm=float(f0.norm()),
        tube_radius=float(tube_radius),
        tube_mass_u0=mass_u,
        tube_mass_f0=mass_f,
        lattice_coverage=coverage,
        witness_value=float(witness),
    )


# ---------------------------------------------------------------------------
# Long beam: the cutoff chain and its assembly.
# ---------------------------------------------------------------------------


def chi_profile(grid, plateau=5.4, roll=0.5):
    """Radial cutoff values on the grid: 1 on |r| <= plateau, 0 beyond +roll."""
    return window(grid.r, -plateau, plateau, roll)


@dataclass(frozen=True)
class ChainRow:
    """Per-step diagnostics of the chain at index j."""

    j: int
    u_norm: float
    f_norm: float
    residual: float
    growth_error: float
    trunc_u: float
    trunc_f: float

    def as_dict(self):
        return _scrub(self.__dict__)


@dataclass
class BeamBundle:
    """The chain {u_j, f_j}, its assembly, and per-step diagnostics.

    ``u`` is the prefactor-weighted sum over j in [-n0, n0]; ``f_plus`` and
    ``f_minus`` are the prefactor-weighted endpoint sources f_{n0+1} and
    f_{-n0}.  ``rows[j]`` records norms, the step identity residual
    ||(P - omega^2) u_j - h (f_{j+1} - f_j)||, the relative deviation of
    ||U(t0) u_j|| from the exact e^{2 sqrt(E) nu t0} growth, and the mass
    fractions (squared-norm ratios) removed by the cutoff at each step.
    """

    params: Params
    frame: object
    seed: ShortBeam
    chi: np.ndarray
    chi_plateau: float
    chi_roll: float
    u_fields: dict
    f_fields: dict
    u: WaveField
    f_plus: WaveField
    f_minus: WaveField
    prefactor: float
    rows: list
    u_norm: float
    f_plus_norm: float
    f_minus_norm: float
    sum_bound: float
    outside_mass: float
    prefactor_identity: float

    def as_dict(self):
        return _scrub(
            {
                "h": self.params.h,
                "t0": self.params.t0,
                "n0": self.params.n0,
                "prefactor": self.prefactor,
                "prefactor_identity": self.prefactor_identity,
                "chi_plateau": self.chi_plateau,
                "chi_roll": self.chi_roll,
                "u_norm": self.u_norm,
                "f_plus_norm": self.f_plus_norm,
                "f_minus_norm": self.f_minus_norm,
                "sum_bound": self.sum_bound,
                "outside_mass": self.outside_mass,
                "rows": [row.as_dict() for row in self.rows],
                "seed": self.seed.as_dict(),
            }
        )

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.as_dict(), fh, indent=2)

    def save_fields(self, directory):
        """Dump the assembled fields (u, f_plus, f_minus) as .npy + sidecar."""
        from pathlib import Path

        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        self.u.save(directory / "u.npy")
        self.f_plus.save(directory / "f_plus.npy")
        self.f_minus.save(directory / "f_minus.npy")


def long_beam(prop, sb: ShortBeam, chi_plateau=5.4, chi_roll=0.5, margin=0.25,
              trunc_budget=1e-8):
    """Iterate the cutoff step in both directions and assemble the beam.

    Forward: u_{j+1} = chi U(t0) u_j; backward: u_{j-1} = chi U(-t0) u_j;
    the source chain f_j runs identically from f_0 and one step further
    forward, to f_{n0+1}, which becomes f_plus.  The cutoff plateau must
    cover the orbit through time 2 t0 plus ``margin`` (configuration error
    otherwise), and the mass it removes at any step must stay below
    ``trunc_budget`` (misconfigured t0 or cutoff otherwise).
    """
    params = prop.params
    grid = prop.grid
    n0 = params.n0
    t0 = params.t0
    gamma = sb.frame
    r_fwd = float(gamma.state(2.0 * t0)[0])
    if chi_plateau < r_fwd + margin:
        raise ValueError(
            f"cutoff plateau {chi_plateau} does not cover the orbit radius "
            f"{r_fwd:.3f} at time 2 t0 plus margin {margin}"
        )
    chi = chi_profile(grid, chi_plateau, chi_roll)
    growth = np.exp(2.0 * np.sqrt(params.energy) * params.nu * t0)

    u_fields = {0: sb.u0}
    f_fields = {0: sb.f0}
    trunc_u = {}
    trunc_f = {}
    growth_err = {}

    def step(fields, trunc, j, direction):
        src = fields[j]
        stepped = prop.evolve(src, direction * t0)
        loss = (stepped.multiply_radial(1.0 - chi).norm() / stepped.norm()) ** 2
        if loss > trunc_budget:
            raise ValueError(
                f"cutoff mass loss {loss:.3e} at step j={j} "
                f"(direction {direction:+d}) exceeds budget {trunc_budget:g}; "
                f"widen the cutoff or shorten t0"
            )
        trunc[j + direction] = float(loss)
        fields[j + direction] = stepped.multiply_radial(chi)
        return stepped

    for j in range(0, n0):
        stepped = step(u_fields, trunc_u, j, +1)
        growth_err[j + 1] = abs(
            stepped.norm() - growth * u_fields[j].norm()
        ) / (growth * u_fields[j].norm())
    for j in range(0, n0 + 1):
        step(f_fields, trunc_f, j, +1)
    for j in range(0, -n0, -1):
        step(u_fields, trunc_u, j, -1)
        step(f_fields, trunc_f, j, -1)

    prefactor = params.prefactor
    measured_mod, _ = params.phase_modulus()
    u = u_fields[-n0] * prefactor
    for j in range(-n0 + 1, n0 + 1):
        u = u + u_fields[j] * prefactor
    f_plus = f_fields[n0 + 1] * prefactor
    f_minus = f_fields[-n0] * prefactor

    h = params.h
    rows = []
    for j in range(-n0, n0 + 1):
        res = (
            apply_p(u_fields[j], params) - (f_fields[j + 1] - f_fields[j]) * h
        ).norm()
        rows.append(
            ChainRow(
                j=j,
                u_norm=float(u_fields[j].norm()),
                f_norm=float(f_fields[j].norm()),
                residual=float(res),
                growth_error=float(growth_err.get(j, float("nan"))),
                trunc_u=trunc_u.get(j, float("nan")),
                trunc_f=trunc_f.get(j, float("nan")),
            )
        )

    sum_bound = float(
        sum(prefactor * u_fields[j].norm() for j in range(-n0, n0 + 1))
    )
    edge = chi_plateau + chi_roll
    outside = np.abs(u.data[:, np.abs(grid.r) > edge]) ** 2
    outside_mass = float(np.sum(outside) * grid.dr / u.norm() ** 2)

    return BeamBundle(
        params=params,
        frame=gamma,
        seed=sb,
        chi=chi,
        chi_plateau=float(chi_plateau),
        chi_roll=float(chi_roll),
        u_fields=u_fields,
        f_fields=f_fields,
        u=u,
        f_plus=f_plus,
        f_minus=f_minus,
        prefactor=float(prefactor),
        rows=rows,
        u_norm=float(u.norm()),
        f_plus_norm=float(f_plus.norm()),
        f_minus_norm=float(f_minus.norm()),
        sum_bound=sum_bound,
        outside_mass=outside_mass,
        prefactor_identity=float(abs(measured_mod * prefactor - 1.0)),
    )


# ---------------------------------------------------------------------------
# Localization: tube masses and growth-floor windows per chain index.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LocalizationRow:
    """Tube mass and window floor for one chain field."""

    j: int
    kind: str
    radius: float
    mass: float
    smallest_c: float
    floor_value: float
    floor_ratio: float
    coverage: float

    def as_dict(self):
        return _scrub(self.__dict__)


@dataclass
class LocalizationReport:
    """Per-j localization of the chain in exponentially inflated tubes.

    Tube radius at index j is C e^{|j| lambda t0} h^rho around the orbit
    section carrying the field; ``smallest_c`` is the least C putting
    ``mass_threshold`` of the Husimi mass inside.  ``floor_ratio`` divides
    the window norm ||Op(b_j) u_j|| by ||u_j||; since ||u_j|| tracks the
    exact growth e^{2 sqrt(E) nu t0 j} ||u_0|| up to cutoff losses, the
    ratio is the scale-free growth-floor constant.  ``shrink_exponent``
    = rho - lambda beta / 2 is the decay rate of the widest tube radius as
    h -> 0 (positive means the tubes still shrink).
    """

    h: float
    tube_constant: float
    lam: float
    mass_threshold: float
    rows: list
    shrink_exponent: float
    widest_radius: float

    def as_dict(self):
        return _scrub(
            {
                "h": self.h,
                "tube_constant": self.tube_constant,
                "lambda": self.lam,
                "mass_threshold": self.mass_threshold,
                "shrink_exponent": self.shrink_exponent,
                "widest_radius": self.widest_radius,
                "rows": [row.as_dict() for row in self.rows],
            }
        )

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.as_dict(), fh, indent=2)


def localization_report(bundle: BeamBundle, lam=1.05, tube_constant=20.0,
                        mass_threshold=0.99, spacing=None):
    """Husimi tube masses and window floors for every chain index.

    u_j rows cover |j| <= n0 with tubes over orbit times
    (j - n0) t0 + [-2 t0 / 3, 2 t0 / 3]; f_j rows cover j in [-n0, n0 + 1]
    with tubes over (j - n0) t0 + [t0 / 3, 2 t0 / 3].  The smallest-C search
    shares one lattice distance pass per field.
    """
    params = bundle.params
    h = params.h
    t0 = params.t0
    n0 = params.n0
    gamma = bundle.frame
    c_grid = np.geomspace(0.25, tube_constant, 48)
    rows = []

    def tube_row(fld, j, kind, t_lo, t_hi, floor_value):
        radius_unit = np.exp(abs(j) * lam * t0) * h**params.rho
        lat = husimi_lattice(fld, spacing=spacing)
        masses = lat.tube_profile(gamma, t_lo, t_hi, c_grid * radius_unit)
        mass = float(
            lat.tube_profile(gamma, t_lo, t_hi, [tube_constant * radius_unit])[0]
        )
        above = np.nonzero(masses >= mass_threshold)[0]
        smallest = float(c_grid[above[0]]) if above.size else float("inf")
        rows.append(
            LocalizationRow(
                j=j,
                kind=kind,
                radius=float(tube_constant * radius_unit),
                mass=mass,
                smallest_c=smallest,
                floor_value=floor_value,
                floor_ratio=(
                    floor_value / fld.norm()
                    if not np.isnan(floor_value)
                    else float("nan")
                ),
                coverage=lat.coverage,
            )
        )

    for j in range(-n0, n0 + 1):
        tj = (j - n0) * t0
        b_j = trajectory_window(
            gamma, tj - t0 / 3.0, tj + t0 / 3.0, h=h, rho=params.rho
        )
        floor_value = float(apply_sandwich(b_j, bundle.u_fields[j]).norm())
        tube_row(
            bundle.u_fields[j], j, "u", tj - 2.0 * t0 / 3.0, tj + 2.0 * t0 / 3.0,
            floor_value,
        )
    for j in range(-n0, n0 + 2):
        tj = (j - n0) * t0
        tube_row(
            bundle.f_fields[j], j, "f", tj + t0 / 3.0, tj + 2.0 * t0 / 3.0,
            float("nan"),
        )

    widest = tube_constant * np.exp(n0 * lam * t0) * h**params.rho
    return LocalizationReport(
        h=h,
        tube_constant=tube_constant,
        lam=lam,
        mass_threshold=mass_threshold,
        rows=rows,
        shrink_exponent=float(params.rho - lam * params.beta / 2.0),
        widest_radius=float(widest),
    )


# ---------------------------------------------------------------------------
# Witness: window lower bound at the chain head.
# ---------------------------------------------------------------------------


@dataclass
class WitnessReport:
    """Lower-bound window at the head section gamma([-t0/4, t0/4]).

    ``value`` = ||Op(b) u|| for the assembled beam.  ``cross_terms[j]`` are
    the same window applied to the prefactor-weighted u_j for j < n0; the
    head section is separated from those chain cores, so the cross terms
    are pure Gaussian-tail spillover and shrink with h.  ``enlarged_value``
    re-evaluates with the plateau widened 10% inside the same support.
    """

    value: float
    cross_terms: dict
    enlarged_value: float
    enlargement_change: float
    separation_margin: float
    core_overlap_max: float
    support_box: dict

    def as_dict(self):
        return _scrub(
            {
                "value": self.value,
                "cross_terms": self.cross_terms,
                "enlarged_value": self.enlarged_value,
                "enlargement_change": self.enlargement_change,
                "separation_margin": self.separation_margin,
                "core_overlap_max": self.core_overlap_max,
                "support_box": self.support_box,
            }
        )


_WITNESS_FACTORS = (
    ("position", 1.35, 0.35, 0.35),
    ("frequency", 0.70, 0.25, 0.35),
    ("mode", 1.0, 0.2, 0.5),
)


def _witness_symbol(h, rho, enlarge=0.0):
    """Head window; ``enlarge`` widens the plateau inside a fixed support.

    The mode window must span at least a few steps of the discrete xi_theta
    axis (spacing h), so its width adapts at coarse h.
    """
    factors = []
    for kind, center, scale, roll in _WITNESS_FACTORS:
        if kind == "mode":
            scale = max(scale, 3.5 * h)
        if enlarge:
            grown = scale * (1.0 + enlarge)
            roll = (scale * (1.0 + roll)) / grown - 1.0
            scale = grown
        factors.append(Factor(kind, center, scale, roll))
    return SandwichSymbol(tuple(factors), h=h, rho=rho)


def _box_distance(box, pts):
    """Euclidean distance from phase points to a product box in its axes."""
    d2 = np.zeros(pts.shape[0])
    slots = {"position": 0, "frequency": 2, "mode": 3}
    for kind, (lo, hi) in box.items():
        v = pts[:, slots[kind]]
        d2 += np.maximum(np.maximum(lo - v, v - hi), 0.0) ** 2
    return np.sqrt(d2)


def witness_lower_bound(bundle: BeamBundle, enlarge=0.1, core_tol=1e-12):
    """Window lower bound ||Op(b) u|| at the head of the chain.

    The window's plateau sits over the radial/frequency range of the head
    quarter-section and its support is anchored away from the earlier chain
    sections (one-sided in r), so the support never meets the other section
    cores.  A configuration error is raised when any earlier core point
    carries a nonzero symbol value.
    """
    params = bundle.params
    t0 = params.t0
    n0 = params.n0
    gamma = bundle.frame
    b = _witness_symbol(params.h, params.rho)

    worst_overlap = 0.0
    margin = np.inf
    box = b.support_box()
    for j in range(-n0, n0):
        tj = (j - n0) * t0
        core = gamma.state(
            np.linspace(tj - 2.0 * t0 / 3.0, tj + 2.0 * t0 / 3.0, 201)
        )
        vals = b.values(core)
        worst_overlap = max(worst_overlap, float(np.max(vals)))
        margin = min(margin, float(np.min(_box_distance(box, core))))
    if worst_overlap > core_tol:
        raise ValueError(
            f"witness window overlaps an earlier chain core (symbol value "
            f"{worst_overlap:.3e}); tighten the window"
        )

    value = apply_sandwich(b, bundle.u).norm()
    cross = {}
    for j in range(-n0, n0):
        cross[j] = float(
            apply_sandwich(b, bundle.u_fields[j] * bundle.prefactor).norm()
        )
    b_wide = _witness_symbol(params.h, params.rho, enlarge=enlarge)
    enlarged = apply_sandwich(b_wide, bundle.u).norm()

    return WitnessReport(
        value=float(value),
        cross_terms=cross,
        enlarged_value=float(enlarged),
        enlargement_change=float(abs(enlarged - value) / value),
        separation_margin=float(margin),
        core_overlap_max=worst_overlap,
        support_box={k: list(v) for k, v in box.items()},
    )
