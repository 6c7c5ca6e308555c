from __future__ import annotations

import numpy as np
import pytest

from quasibeam.geometry import (
    ModelGeometry,
    PhasePoint,
    ProfileError,
    ProfileSpec,
    SurfaceGeometry,
    export_profile_table,
    validate_profile,
)

# Frozen oracle jet of sqrt(r^2-1)/r^2 at r = 1.7, computed symbolically
# (sympy.diff of the closed form, evaluated to double precision).
END_JET_17 = (
    0.475699899130364,
    -0.13176872400436468,
    -0.15233096158290538,
    1.1705571168079774,
    -6.2807305232106225,
)


def test_profile_point_values(geom):
    assert geom.a(0.0) == 0.5
    assert abs(geom.a(2.0) - np.sqrt(3.0) / 4.0) < 1e-15
    assert geom.w(2.0) == 2.0
    assert abs(geom.c(2.0) - 0.25) < 1e-16


def test_end_jet_matches_symbolic_oracle(geom):
    for k, expect in enumerate(END_JET_17):
        assert abs(geom.a(1.7, k) - expect) < 1e-13


def test_profile_even_symmetry(geom, rng):
    r = rng.uniform(0.0, 7.0, 300)
    np.testing.assert_array_equal(geom.a(-r), geom.a(r))
    np.testing.assert_array_equal(geom.a(-r, 1), -geom.a(r, 1))
    np.testing.assert_array_equal(geom.a(-r, 2), geom.a(r, 2))


@pytest.mark.parametrize("deriv", [1, 2, 3, 4])
def test_profile_derivatives_consistent(geom, rng, deriv):
    # central differences of the previous order, away from the junctions
    pools = [rng.uniform(0.05, 0.93, 40), rng.uniform(1.07, 1.43, 40), rng.uniform(1.57, 6.0, 40)]
    r = np.concatenate(pools)
    d = 1e-5
    fd = (geom.a(r + d, deriv - 1) - geom.a(r - d, deriv - 1)) / (2 * d)
    np.testing.assert_allclose(fd, geom.a(r, deriv), rtol=5e-7, atol=5e-6)


def test_bridge_is_c4_at_junctions(geom):
    report = validate_profile(geom.profile)
    for rj, jump in report.junction_jumps.items():
        assert jump < 1e-6, f"fourth-derivative jump {jump} at r = {rj}"


def test_warp_factor_exact_on_ends(geom):
    r = np.linspace(1.5, 7.5, 61)
    np.testing.assert_allclose(geom.c(r), 1.0 / r**2, rtol=1e-15)
    np.testing.assert_allclose(geom.c(r, 1), -2.0 / r**3, rtol=1e-15)
    np.testing.assert_allclose(geom.c(r, 2), 6.0 / r**4, rtol=1e-15)
    np.testing.assert_allclose(geom.w(r), r, rtol=1e-15)
    np.testing.assert_allclose(geom.q(r), -0.25 / r**2, rtol=1e-13)
    # signed first derivative on the negative end
    np.testing.assert_allclose(geom.c(-r, 1), 2.0 / r**3, rtol=1e-15)


def test_warp_factor_derivative_chain(geom, rng):
    r = np.concatenate([rng.uniform(-1.4, 1.4, 60), rng.uniform(1.55, 6.0, 30)])
    d = 1e-5
    fd1 = (geom.c(r + d) - geom.c(r - d)) / (2 * d)
    np.testing.assert_allclose(fd1, geom.c(r, 1), rtol=1e-6, atol=1e-8)
    fd2 = (geom.c(r + d, 1) - geom.c(r - d, 1)) / (2 * d)
    np.testing.assert_allclose(fd2, geom.c(r, 2), rtol=1e-6, atol=1e-7)


def test_q_matches_direct_weight_derivative(geom, rng):
    # oracle: q = (w^{1/2})''/w^{1/2} by five-point central differences
    r = rng.uniform(-2.5, 2.5, 50)
    d = 1e-3
    f = lambda x: geom.w(x) ** 0.5
    second = (-f(r + 2 * d) + 16 * f(r + d) - 30 * f(r) + 16 * f(r - d) - f(r - 2 * d)) / (
        12 * d * d
    )
    np.testing.assert_allclose(second / f(r), geom.q(r), rtol=2e-8, atol=2e-8)


def test_symbol_is_one_on_escaping_ray(geom):
    # along xi_r = r a(r), xi_theta = 1 the symbol collapses to exactly 1
    r = np.linspace(0.0, 6.0, 200)
    p = geom.symbol_p(r, r * geom.a(r), 1.0)
    np.testing.assert_allclose(p, 1.0, atol=5e-16)


def test_trapped_circle_is_invariant(geom):
    rhs = geom.hamilton_rhs(np.array([0.0, 0.3, 0.0, 1.0]))
    np.testing.assert_array_equal(rhs, [0.0, 2.0, 0.0, 0.0])


def test_variational_matrix_matches_fd_jacobian(geom, rng):
    states = np.column_stack(
        [
            rng.uniform(-2.0, 2.0, 25),
            rng.uniform(0.0, 6.28, 25),
            rng.uniform(-1.0, 1.0, 25),
            rng.uniform(0.5, 1.5, 25),
        ]
    )
    A = geom.variational_matrix(states[:, 0], states[:, 3])
    d = 1e-6
    for k in range(4):
        e = np.zeros(4)
        e[k] = d
        col = (geom.hamilton_rhs(states + e) - geom.hamilton_rhs(states - e)) / (2 * d)
        np.testing.assert_allclose(col, A[:, :, k], rtol=2e-6, atol=2e-6)


def test_variational_matrix_neck_block(geom):
    # at the trapped circle the (r, xi_r) block is [[0, 2], [2 alpha^2, 0]]
    A = geom.variational_matrix(np.array(0.0), np.array(1.0))
    np.testing.assert_allclose(A[0, 2], 2.0)
    np.testing.assert_allclose(A[2, 0], 2.0 * 0.5**2, atol=1e-15)
    assert A[3].tolist() == [0.0, 0.0, 0.0, 0.0]
    eigs = np.linalg.eigvals(A[np.ix_([0, 2], [0, 2])])
    np.testing.assert_allclose(sorted(eigs.real), [-1.0, 1.0], atol=1e-14)


def test_validate_rejects_degenerate_warp():
    with pytest.raises(ProfileError, match=r"\|r a\(r\)\| >= 1"):
        validate_profile(ProfileSpec(alpha=1.1))


def test_validate_rejects_negative_profile():
    with pytest.raises(ProfileError, match="positive"):
        validate_profile(ProfileSpec(alpha=0.5, interior=(-0.6, 0.0)))


def test_validate_flags_degenerate_equator():
    report = validate_profile(ProfileSpec(alpha=0.0, interior=(0.3, 0.0)))
    assert report.degenerate_equator
    assert report.ok
    assert report.max_ra < 1.0


def test_validate_default_profile(geom):
    report = validate_profile(geom.profile)
    assert not report.degenerate_equator
    assert report.ok
    assert 0.7 < report.max_ra < 1.0
    assert report.min_a_interior > 0.0
    d = report.as_dict()
    assert d["profile"]["alpha"] == 0.5


def test_interior_polynomial_coefficients():
    g = SurfaceGeometry(ProfileSpec(alpha=0.75, interior=(-0.2, 0.05)))
    r = np.linspace(0.0, 1.0, 11)
    np.testing.assert_allclose(g.a(r), 0.75 - 0.2 * r**2 + 0.05 * r**4, rtol=1e-15)
    np.testing.assert_allclose(g.a(r, 1), -0.4 * r + 0.2 * r**3, atol=1e-15)


def test_bridge_with_interior_knot():
    spec = ProfileSpec(alpha=0.5, knots=((1.25, 0.52),))
    g = SurfaceGeometry(spec)
    assert abs(g.a(1.25) - 0.52) < 1e-12
    report = validate_profile(spec)
    assert report.ok


def test_knot_outside_bridge_rejected():
    with pytest.raises(ProfileError, match="knot"):
        ProfileSpec(alpha=0.5, knots=((1.7, 0.5),))


def test_export_profile_table_bytes_stable(geom, tmp_path):
    p1 = tmp_path / "profile1.csv"
    p2 = tmp_path / "profile2.csv"
    export_profile_table(geom, p1, r_max=3.0, n=101)
    export_profile_table(geom, p2, r_max=3.0, n=101)
    assert p1.read_bytes() == p2.read_bytes()
    lines = p1.read_text().strip().splitlines()
    assert lines[0] == "r,a,a_prime,w"
    assert len(lines) == 102
    mid = lines[51].split(",")
    assert abs(float(mid[0])) < 1e-12
    assert float(mid[1]) == 0.5


def test_phase_point_roundtrip():
    z = PhasePoint(1.0, 0.25, -0.3, 1.0)
    assert PhasePoint.from_array(z.as_array()) == z


def test_model_geometry_axes():
    m = ModelGeometry()
    x1 = m.axis(0)
    assert x1.size == 2048
    assert x1[0] == -8.0
    assert abs(x1[1] - x1[0] - 16.0 / 2048) < 1e-15
    k1 = m.wavenumbers(0)
    assert k1[0] == 0.0
    assert abs(k1[1] - 2 * np.pi / 16.0) < 1e-15
    assert m.symbol_p(0.7) == 0.7
    with pytest.raises(ValueError):
        ModelGeometry(dim=3)
