"""Warped-product surface with a hyperbolic neck, and the flat model space.

The surface is R_r x S^1_theta with metric dr^2 + dtheta^2 / c(r), where
c(r) = 1 - (r a(r))^2 and a is an even C^4 profile:

* |r| <= 1:        even polynomial  alpha + c2 r^2 + c4 r^4,
* 1 <= |r| <= r0:  degree-9 spline bridge matching value and four
                   derivatives at both ends (C^4 overall),
* |r| >= r0:       a(r) = sqrt(r^2 - 1) / r^2, which makes the two ends
                   exactly Euclidean: c = 1/r^2, so the induced surface is
                   a plane in polar coordinates there.

alpha = a(0) is the neck curvature parameter; the circle r = 0 carries a
closed geodesic whose linearized Poincare map has expansion rate 2*alpha.
The geodesic-flow Hamiltonian on the cotangent bundle is

    p(r, theta, xi_r, xi_theta) = xi_r^2 + c(r) xi_theta^2.

Radial Schroedinger reductions use w = c^{-1/2} (the half-density weight)
and the conjugation potential q = (w^{1/2})'' / w^{1/2}
= (5/16)(c'/c)^2 - (1/4) c''/c, which equals -1/(4 r^2) on the ends.
"""

from __future__ import annotations

import csv
import dataclasses
import logging
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PPoly, make_interp_spline

log = logging.getLogger(__name__)

__all__ = [
    "ProfileSpec",
    "ProfileError",
    "ProfileReport",
    "PhasePoint",
    "SurfaceGeometry",
    "ModelGeometry",
    "validate_profile",
    "export_profile_table",
]


class ProfileError(ValueError):
    """Raised when a profile violates a hard admissibility condition."""


@dataclass(frozen=True)
class ProfileSpec:
    """Parameters of the even neck profile a(r).

    Parameters
    ----------
    alpha : float
        Neck value a(0) >= 0.  alpha = 0 is the degenerate-equator case.
    r0 : float
        Radius beyond which the exact Euclidean-end profile
        sqrt(r^2 - 1)/r^2 is used.  Must exceed 1.
    interior : (float, float)
        Coefficients (c2, c4) of the even interior polynomial
        alpha + c2 r^2 + c4 r^4 on |r| <= 1.
    knots : tuple of (radius, value) pairs
        Optional interior control points for the bridge on (1, r0).
    """

    alpha: float = 0.5
    r0: float = 1.5
    interior: tuple[float, float] = (0.0, 0.0)
    knots: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        if self.alpha < 0.0:
            raise ProfileError(f"alpha must be >= 0, got {self.alpha}")
        if self.r0 <= 1.0:
            raise ProfileError(f"r0 must exceed 1, got {self.r0}")
        for rk, _ in self.knots:
            if not 1.0 < rk < self.r0:
                raise ProfileError(f"bridge knot radius {rk} outside (1, {self.r0})")

    def interior_jet(self):
        """Value and first four derivatives of the interior polynomial at r = 1."""
        c2, c4 = self.interior
        return (
            self.alpha + c2 + c4,
            2.0 * c2 + 4.0 * c4,
            2.0 * c2 + 12.0 * c4,
            24.0 * c4,
            24.0 * c4,
        )


def _end_jet(r):
    """Value and four derivatives of g(r) = sqrt(r^2 - 1)/r^2 (scalar or array)."""
    s = np.sqrt(r * r - 1.0)
    s1 = r / s
    s2 = -1.0 / s**3
    s3 = 3.0 * r / s**5
    s4 = 3.0 / s**5 - 15.0 * r * r / s**7
    u = r**-2.0
    u1 = -2.0 * r**-3.0
    u2 = 6.0 * r**-4.0
    u3 = -24.0 * r**-5.0
    u4 = 120.0 * r**-6.0
    return (
        s * u,
        s1 * u + s * u1,
        s2 * u + 2.0 * s1 * u1 + s * u2,
        s3 * u + 3.0 * s2 * u1 + 3.0 * s1 * u2 + s * u3,
        s4 * u + 4.0 * s3 * u1 + 6.0 * s2 * u2 + 4.0 * s1 * u3 + s * u4,
    )


@dataclass(frozen=True)
class PhasePoint:
    """A point (r, theta, xi_r, xi_theta) in the cotangent bundle chart."""

    r: float
    theta: float
    xi_r: float
    xi_theta: float

    def as_array(self):
        return np.array([self.r, self.theta, self.xi_r, self.xi_theta])

    @staticmethod
    def from_array(z):
        z = np.asarray(z, dtype=float)
        return PhasePoint(z[0], z[1], z[2], z[3])


class SurfaceGeometry:
    """Evaluator for the profile a, warp factor c, weight w and potential q.

    All evaluators accept scalars or arrays and are even in r (derivatives
    pick up the appropriate sign for r < 0).
    """

    def __init__(self, profile: ProfileSpec | None = None):
        self.profile = profile if profile is not None else ProfileSpec()
        p = self.profile
        xs = [1.0] + [rk for rk, _ in p.knots] + [p.r0]
        ys = [p.interior_jet()[0]] + [ak for _, ak in p.knots] + [_end_jet(p.r0)[0]]
        bc = (
            [(i, p.interior_jet()[i]) for i in range(1, 5)],
            [(i, _end_jet(p.r0)[i]) for i in range(1, 5)],
        )
        bridge = make_interp_spline(xs, ys, k=9, bc_type=bc)
        self._bridge = [bridge] + [bridge.derivative(i) for i in range(1, 5)]
        self._ppoly_cache = None

    def bridge_ppoly(self):
        """Power-basis pieces of the bridge and its first two derivatives.

        Returns (breaks, c0, c1, c2) where ck are PPoly coefficient arrays
        (highest power first) for a, a', a'' on the bridge interval; used by
        the compiled flow kernels.
        """
        if self._ppoly_cache is None:
            p0 = PPoly.from_spline(self._bridge[0])
            p1 = p0.derivative()
            p2 = p1.derivative()
            live = np.nonzero(np.diff(p0.x) > 0.0)[0]
            breaks = np.append(p0.x[live], p0.x[live[-1] + 1])
            self._ppoly_cache = tuple(
                np.ascontiguousarray(arr)
                for arr in (breaks, p0.c[:, live], p1.c[:, live], p2.c[:, live])
            )
        return self._ppoly_cache

    # -- profile ---------------------------------------------------------

    def a(self, r, deriv=0):
        """Profile a(r) or its deriv-th radial derivative (deriv <= 4)."""
        if not 0 <= deriv <= 4:
            raise ValueError(f"profile derivatives available up to order 4, got {deriv}")
        r = np.asarray(r, dtype=float)
        x = np.abs(r)
        p = self.profile
        out = np.empty_like(x)

        inner = x <= 1.0
        c2, c4 = p.interior
        xi = x[inner]
        if deriv == 0:
            out[inner] = p.alpha + c2 * xi**2 + c4 * xi**4
        elif deriv == 1:
            out[inner] = 2.0 * c2 * xi + 4.0 * c4 * xi**3
        elif deriv == 2:
            out[inner] = 2.0 * c2 + 12.0 * c4 * xi**2
        elif deriv == 3:
            out[inner] = 24.0 * c4 * xi
        else:
            out[inner] = 24.0 * c4

        mid = (x > 1.0) & (x < p.r0)
        out[mid] = self._bridge[deriv](x[mid])

        outer = x >= p.r0
        out[outer] = _end_jet(x[outer])[deriv]

        if deriv % 2 == 1:
            out = np.where(r < 0.0, -out, out)
        return out if out.ndim else float(out)

    # -- warp factor and derived scalars ----------------------------------

    def c(self, r, deriv=0):
        """Warp factor c = 1 - (r a)^2, or its first or second derivative.

        On the Euclidean ends the exact closed forms 1/r^2, -2/r^3, 6/r^4
        are used to avoid cancellation at large radius.
        """
        if not 0 <= deriv <= 2:
            raise ValueError(f"warp-factor derivatives available up to order 2, got {deriv}")
        r = np.asarray(r, dtype=float)
        x = np.abs(r)
        outer = x >= self.profile.r0
        a0 = self.a(r, 0)
        b = r * a0
        if deriv == 0:
            val = 1.0 - b * b
            exact = np.zeros_like(val)
            exact[outer] = x[outer] ** -2.0
        elif deriv == 1:
            b1 = a0 + r * self.a(r, 1)
            val = -2.0 * b * b1
            exact = np.zeros_like(val)
            exact[outer] = -2.0 * np.sign(r[outer]) * x[outer] ** -3.0
        else:
            b1 = a0 + r * self.a(r, 1)
            b2 = 2.0 * self.a(r, 1) + r * self.a(r, 2)
            val = -2.0 * (b1 * b1 + b * b2)
            exact = np.zeros_like(val)
            exact[outer] = 6.0 * x[outer] ** -4.0
        out = np.where(outer, exact, val)
        return out if out.ndim else float(out)

    def w(self, r):
        """Half-density weight w = c^{-1/2}; equals |r| on the ends."""
        return self.c(r) ** -0.5

    def q(self, r):
        """Conjugation potential q = (w^{1/2})''/w^{1/2}; -1/(4 r^2) on the ends."""
        c0 = self.c(r, 0)
        c1 = self.c(r, 1)
        c2 = self.c(r, 2)
        return 0.3125 * (c1 / c0) ** 2 - 0.25 * c2 / c0

    # -- Hamiltonian flow ingredients -------------------------------------

    def symbol_p(self, r, xi_r, xi_theta):
        """Geodesic Hamiltonian p = xi_r^2 + c(r) xi_theta^2."""
        return np.asarray(xi_r) ** 2 + self.c(r) * np.asarray(xi_theta) ** 2

    def hamilton_rhs(self, state):
        """Hamilton vector field of p at state[..., (r, theta, xi_r, xi_theta)]."""
        state = np.asarray(state, dtype=float)
        r = state[..., 0]
        xi_r = state[..., 2]
        xi_theta = state[..., 3]
        out = np.empty_like(state)
        out[..., 0] = 2.0 * xi_r
        out[..., 1] = 2.0 * self.c(r) * xi_theta
        out[..., 2] = -self.c(r, 1) * xi_theta**2
        out[..., 3] = 0.0
        return out

    def variational_matrix(self, r, xi_theta):
        """Jacobian of the Hamilton field, J Hess p, at (r, *, *, xi_theta).

        Returns an array of shape r.shape + (4, 4) acting on tangent
        displacements (dr, dtheta, dxi_r, dxi_theta).
        """
        r = np.asarray(r, dtype=float)
        xi_theta = np.broadcast_to(np.asarray(xi_theta, dtype=float), r.shape)
        c0 = self.c(r, 0)
        c1 = self.c(r, 1)
        c2 = self.c(r, 2)
        A = np.zeros(r.shape + (4, 4))
        A[..., 0, 2] = 2.0
        A[..., 1, 0] = 2.0 * c1 * xi_theta
        A[..., 1, 3] = 2.0 * c0
        A[..., 2, 0] = -c2 * xi_theta**2
        A[..., 2, 3] = -2.0 * c1 * xi_theta
        return A


def validate_profile(profile: ProfileSpec, n_samples=6001, r_max=None):
    """Check admissibility of a profile and return a ProfileReport.

    Hard violations (|r a(r)| >= 1 anywhere, or a(r) <= 0 for some r > 0
    with a non-degenerate neck, or a junction discontinuity) raise
    ProfileError naming the first offending radius.  alpha = 0 passes with
    the degenerate_equator flag set provided a > 0 away from r = 0.
    """
    geom = SurfaceGeometry(profile)
    if r_max is None:
        r_max = profile.r0 + 6.0
    r = np.linspace(0.0, r_max, n_samples)
    av = geom.a(r)
    ra = r * av

    bad = np.nonzero(np.abs(ra) >= 1.0)[0]
    if bad.size:
        raise ProfileError(
            f"|r a(r)| >= 1 first violated at r = {r[bad[0]]:.6f} "
            f"(value {ra[bad[0]]:.6f}); the warp factor degenerates there"
        )

    interior_r = r[r > 1e-9]
    interior_a = av[r > 1e-9]
    neg = np.nonzero(interior_a <= 0.0)[0]
    if neg.size:
        raise ProfileError(
            f"profile must be positive for r > 0; first violation at "
            f"r = {interior_r[neg[0]]:.6f} (value {interior_a[neg[0]]:.3e})"
        )

    jumps = {}
    for rj in (1.0, profile.r0):
        jumps[rj] = _junction_jump(geom, rj)
        if jumps[rj] > 1e-5:
            raise ProfileError(
                f"profile is not C^4 at the junction r = {rj}: relative "
                f"fourth-derivative jump {jumps[rj]:.3e}"
            )

    even_err = float(np.max(np.abs(geom.a(-r) - av)))
    if even_err > 0.0:
        raise ProfileError(f"profile is not even: max asymmetry {even_err:.3e}")

    return ProfileReport(
        profile=profile,
        degenerate_equator=(profile.alpha == 0.0),
        max_ra=float(np.max(np.abs(ra))),
        min_a_interior=float(np.min(interior_a)),
        junction_jumps={str(k): float(v) for k, v in jumps.items()},
        r_max=float(r_max),
    )


def _junction_jump(geom, rj, eps=1e-12):
    """Largest relative one-sided mismatch of derivatives 0..4 of a at rj.

    The profile is piecewise analytic, so C^4 regularity is exactly the
    statement that the one-sided limits of a, a', ..., a'''' agree at the
    junction; eps only needs to clear float spacing.
    """
    worst = 0.0
    for k in range(5):
        left = geom.a(rj - eps, k)
        right = geom.a(rj + eps, k)
        scale = max(abs(left), abs(right), 1.0)
        worst = max(worst, abs(left - right) / scale)
    return worst


@dataclass(frozen=True)
class ProfileReport:
    profile: ProfileSpec
    degenerate_equator: bool
    max_ra: float
    min_a_interior: float
    junction_jumps: dict
    r_max: float

    @property
    def ok(self):
        return True

    def as_dict(self):
        d = dataclasses.asdict(self)
        d["profile"] = dataclasses.asdict(self.profile)
        d["ok"] = self.ok
        return d


@dataclass(frozen=True)
class ModelGeometry:
    """Flat periodic model space for the transport operator h D_x1.

    dim = 1 drops the transverse axis.  Axis 1 carries the propagation
    coordinate x1, axis 2 the transverse coordinate.
    """

    dim: int = 2
    half_length: tuple[float, float] = (8.0, 2.0)
    size: tuple[int, int] = (2048, 256)

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"model dimension must be 1 or 2, got {self.dim}")

    def axis(self, i):
        """Grid points of axis i (0-based), periodic convention [-L, L)."""
        L = self.half_length[i]
        n = self.size[i]
        return -L + 2.0 * L * np.arange(n) / n

    def wavenumbers(self, i):
        """Angular wavenumbers of axis i matching numpy fft ordering."""
        L = self.half_length[i]
        n = self.size[i]
        return 2.0 * np.pi * np.fft.fftfreq(n, d=2.0 * L / n)

    def symbol_p(self, xi1):
        """Model Hamiltonian symbol: p(x, xi) = xi1 (pure transport)."""
        return np.asarray(xi1, dtype=float)


def export_profile_table(geom: SurfaceGeometry, path, r_max=None, n=1501):
    """Write a delimited profile table with columns r, a, a_prime, w."""
    if r_max is None:
        r_max = geom.profile.r0 + 6.0
    r = np.linspace(-r_max, r_max, n)
    rows = zip(r, geom.a(r), geom.a(r, 1), geom.w(r))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["r", "a", "a_prime", "w"])
        for row in rows:
            writer.writerow([format(v, ".17g") for v in row])
    log.info("wrote profile table to %s", path)
