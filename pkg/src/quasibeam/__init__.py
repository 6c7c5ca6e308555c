"""Gaussian-beam quasimodes on a hyperbolic-neck surface of revolution.

A numerical laboratory for the resolvent-growth mechanism driven by a single
trapped hyperbolic geodesic: explicit warped-product geometry, geodesic and
variational flow, per-angular-mode wave fields, propagator-built beam chains,
an absorbing-boundary outgoing tail, and direct resolvent-norm cross checks.
"""

__version__ = "0.1.0"
