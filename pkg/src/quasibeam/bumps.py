"""Smooth compactly supported windows and their Fourier transforms.

Every cutoff in the package is built from the standard C-infinity kernel
B(x) = exp(-1/x) for x > 0.  Provided here:

* ``smoothstep``     monotone 0 -> 1 transition on [0, 1],
* ``window``         plateau cutoff, 1 on [lo, hi], 0 outside [lo - roll, hi + roll],
* ``mollifier``      unit-mass bump supported on (lo, hi),
* ``mollifier_cdf``  its antiderivative (0 at lo, 1 at hi),
* ``ramp``           the telescoping window phi with phi'(t) = psi(t + t0) - psi(t),
* ``mollifier_ft``   Fourier transform of the mollifier at complex frequencies,
* ``ramp_ft``        Fourier transform of the ramp.

The transforms are trapezoid sums over the support; the bump vanishes to all
orders at the endpoints, so the error decays faster than any power of the node
count.  Complex frequencies with moderate imaginary part are fine, the
integrand only picks up a factor exp(|Im tau| * support length).
"""

from __future__ import annotations

import functools

import numpy as np
from scipy.integrate import cumulative_simpson, quad
from scipy.interpolate import CubicSpline

__all__ = [
    "smoothstep",
    "window",
    "mollifier",
    "mollifier_cdf",
    "ramp",
    "mollifier_ft",
    "ramp_ft",
]


def _kernel(x):
    """exp(-1/x) for x > 0, zero otherwise (elementwise)."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0.0
    with np.errstate(over="ignore"):
        out[pos] = np.exp(-1.0 / x[pos])
    return out


def smoothstep(x):
    """C-infinity step: 0 for x <= 0, 1 for x >= 1, strictly rising between.

    Satisfies smoothstep(x) + smoothstep(1 - x) = 1 exactly.
    """
    x = np.asarray(x, dtype=float)
    a = _kernel(x)
    b = _kernel(1.0 - x)
    with np.errstate(invalid="ignore"):
        s = np.where(a + b > 0.0, a / (a + b), 0.0)
    return np.where(x >= 1.0, 1.0, np.where(x <= 0.0, 0.0, s))


def window(x, lo, hi, roll):
    """Plateau cutoff: 1 on [lo, hi], 0 outside [lo - roll, hi + roll].

    All values lie in [0, 1]; the rise and fall are rescaled smoothsteps, so
    the window is C-infinity in x.
    """
    if hi < lo:
        raise ValueError(f"window needs lo <= hi, got [{lo}, {hi}]")
    if roll <= 0.0:
        raise ValueError(f"window rolloff must be positive, got {roll}")
    x = np.asarray(x, dtype=float)
    return smoothstep((x - lo + roll) / roll) * smoothstep((hi + roll - x) / roll)


@functools.lru_cache(maxsize=1)
def _bump_mass():
    val, _ = quad(lambda x: np.exp(-1.0 / (x * (1.0 - x))), 0.0, 1.0)
    return val


def mollifier(t, lo, hi):
    """Unit-mass C-infinity bump supported on (lo, hi)."""
    if hi <= lo:
        raise ValueError(f"mollifier needs lo < hi, got ({lo}, {hi})")
    t = np.asarray(t, dtype=float)
    x = (t - lo) / (hi - lo)
    return _kernel(x) * _kernel(1.0 - x) / (_bump_mass() * (hi - lo))


@functools.lru_cache(maxsize=1)
def _cdf_table():
    x = np.linspace(0.0, 1.0, 16385)
    y = _kernel(x) * _kernel(1.0 - x)
    c = cumulative_simpson(y, x=x, initial=0.0)
    c /= c[-1]
    return CubicSpline(x, c)

def mollifier_cdf(t, lo, hi):
    """Antiderivative of ``mollifier``: 0 for t <= lo, 1 for t >= hi."""
    t = np.asarray(t, dtype=float)
    x = np.clip((t - lo) / (hi - lo), 0.0, 1.0)
    return _cdf_table()(x)


def ramp(t, t0):
    """Telescoping window phi: 1 on [-t0/3, t0/3], supported in (-2 t0/3, 2 t0/3).

    Defined by phi(t) = Psi(t + t0) - Psi(t) where Psi is the antiderivative
    of the unit-mass mollifier psi on (t0/3, 2 t0/3), so that
    phi'(t) = psi(t + t0) - psi(t) identically.
    """
    lo, hi = t0 / 3.0, 2.0 * t0 / 3.0
    return mollifier_cdf(np.asarray(t) + t0, lo, hi) - mollifier_cdf(t, lo, hi)


def _support_nodes(lo, hi, n):
    t = np.linspace(lo, hi, n + 1)
    w = np.full(n + 1, (hi - lo) / n)
    w[0] *= 0.5
    w[-1] *= 0.5
    return t, w


def mollifier_ft(tau, lo, hi, n=2048):
    """int psi(t) exp(-i t tau) dt for the unit-mass mollifier on (lo, hi).

    Parameters
    ----------
    tau : array_like, real or complex
        Frequencies; moderate imaginary parts are allowed.
    n : int
        Trapezoid panels on the support (superalgebraic accuracy).
    """
    tau = np.asarray(tau)
    shape = tau.shape
    tau_flat = tau.ravel().astype(complex)
    t, w = _support_nodes(lo, hi, n)
    amp = mollifier(t, lo, hi) * w
    out = np.empty(tau_flat.size, dtype=complex)
    block = 1024
    for i in range(0, tau_flat.size, block):
        tb = tau_flat[i : i + block]
        out[i : i + block] = amp @ np.exp(-1j * np.outer(t, tb))
    return out.reshape(shape)


def ramp_ft(tau, t0, n=2048):
    """Fourier transform of ``ramp``: (exp(i t0 tau) - 1) psihat(tau) / (i tau).

    The removable singularity at tau = 0 is handled by a series; ramp_ft(0)
    equals t0 times the mollifier mass, i.e. t0.
    """
    tau = np.asarray(tau)
    shape = tau.shape
    tau_flat = tau.ravel().astype(complex)
    psihat = mollifier_ft(tau_flat, t0 / 3.0, 2.0 * t0 / 3.0, n=n)
    z = 1j * t0 * tau_flat
    small = np.abs(z) < 1e-6
    factor = np.empty_like(tau_flat)
    with np.errstate(invalid="ignore", divide="ignore"):
        factor[~small] = (np.exp(z[~small]) - 1.0) / (1j * tau_flat[~small])
    zs = z[small]
    factor[small] = t0 * (1.0 + zs / 2.0 + zs * zs / 6.0 + zs * zs * zs / 24.0)
    return (factor * psihat).reshape(shape)
