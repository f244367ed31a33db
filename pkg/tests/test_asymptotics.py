import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.stats import ortho_group

from robin_limit.asymptotics import (
    ClusterError,
    GramError,
    InsufficientGridError,
    build_cluster,
    eigenfunction_residuals,
    fit_rate,
    gram_diag,
    omega_rho,
    predict_and_compare,
    robin_derivative_check,
)
from robin_limit.exact1d import dirichlet_mode_1d, robin_eigen_1d
from robin_limit.fem import dirichlet_eigs, robin_eigs, variational_flux
from robin_limit.separable import (
    disk_boundary_flux_sq,
    disk_spectrum,
    rect_boundary_gram,
    rect_dirichlet_spectrum,
    rect_robin_spectrum,
)
from robin_limit.torsion import Exact1DBackend, FemBackend

PI2 = math.pi**2
GRID = [1e2, 3e2, 1e3, 3e3, 1e4]


def _1d_tables(count=5):
    dir_ = [k * k * PI2 for k in range(1, count + 1)]
    rob = {a: [robin_eigen_1d(k, a).lam for k in range(1, count + 1)] for a in GRID}
    return dir_, rob


# --- clusters --------------------------------------------------------------


def test_cluster_1d_ground_state():
    d, r = _1d_tables()
    cl = build_cluster(d, r, 1)
    assert cl.m == 1
    assert cl.gamma == pytest.approx(0.5 * (4 * PI2 - PI2))
    assert cl.threshold == GRID[0]
    cl3 = build_cluster(d, r, 3)
    assert cl3.gamma == pytest.approx(0.5 * min(9 - 4, 16 - 9) * PI2)


def test_cluster_square_double():
    sp = rect_dirichlet_spectrum(1, 1, 6)
    cl = build_cluster([m.lam for m in sp], {}, 2)
    assert cl.m == 2 and cl.lambda_n == pytest.approx(5 * PI2)


def test_cluster_rectangle_pair():
    sp = rect_dirichlet_spectrum(1, 2, 10)
    n = next(k for k, m in enumerate(sp, 1) if abs(m.lam - 5 * PI2) < 1e-9)
    cl = build_cluster([m.lam for m in sp], {}, n)
    assert cl.m == 2
    assert [(sp[k].n, sp[k].m) for k in range(n - 1, n + 1)] == [(1, 4), (2, 2)]


def test_cluster_errors():
    sp = [m.lam for m in rect_dirichlet_spectrum(1, 1, 4)]
    with pytest.raises(ClusterError, match="first index"):
        build_cluster(sp, {}, 3)
    with pytest.raises(ClusterError, match="extend"):
        build_cluster(sp[:3], {}, 2)
    with pytest.raises(ClusterError):
        build_cluster(sp, {1.0: [1.0]}, 2)


def test_cluster_fem_tolerance(coarse_square_sys):
    d = dirichlet_eigs(coarse_square_sys, 6).values
    h = coarse_square_sys.mesh.h
    assert build_cluster(d, {}, 2, mult_tol=10 * h * h).m == 2


# --- Gram form -------------------------------------------------------------


def test_gram_1d():
    gd = gram_diag([dirichlet_mode_1d(1).trace_derivative])
    assert gd.mu[0] == pytest.approx(4 * PI2)


def test_gram_rectangle_pair():
    sp = rect_dirichlet_spectrum(1, 2, 10)
    pair = [m for m in sp if abs(m.lam - 5 * PI2) < 1e-9]
    G = np.array([[rect_boundary_gram(a, b) for b in pair] for a in pair])
    assert G[0, 1] == 0.0
    gd = gram_diag(G, "gram")
    np.testing.assert_allclose(gd.mu, [18 * PI2, 12 * PI2])
    # (2,2) carries the larger mu: the rotation swaps the input order
    assert abs(gd.rotation[1, 0]) == pytest.approx(1.0)


def test_gram_square_pair_equal():
    sp = rect_dirichlet_spectrum(1, 1, 3)[1:]
    G = np.array([[rect_boundary_gram(a, b) for b in sp] for a in sp])
    gd = gram_diag(G, "gram")
    assert gd.mu[0] == pytest.approx(gd.mu[1])


@settings(max_examples=40, deadline=None)
@given(m=st.integers(1, 5), seed=st.integers(0, 10**6))
def test_gram_rotation_properties(m, seed):
    rng = np.random.default_rng(seed)
    nb = 12
    fields = [rng.standard_normal(nb) for _ in range(m)]
    w = rng.uniform(0.5, 2.0, nb)
    gd = gram_diag(fields, w)
    R = gd.rotation
    assert np.abs(R.T @ R - np.eye(m)).max() < 1e-12
    D = R.T @ gd.gram @ R
    off = D - np.diag(np.diag(D))
    assert np.abs(off).max() <= 1e-10 * np.abs(D).max()
    assert np.all(np.diff(gd.mu) <= 0)
    rot = gd.rotate(fields)
    for i in range(m):
        assert np.sum(w * rot[i] ** 2) == pytest.approx(gd.mu[i], rel=1e-10)


def test_gram_rejects_dependent_fluxes():
    f = np.array([1.0, 2.0, 3.0])
    with pytest.raises(GramError):
        gram_diag([f, 2 * f])


# --- rate fits -------------------------------------------------------------


def test_fit_rate_exact_power_laws():
    a = np.geomspace(10, 1e4, 5)
    f = fit_rate(a, 3.0 / a)
    assert f.slope == pytest.approx(-1.0) and f.r2 == pytest.approx(1.0)
    assert fit_rate(a, 7.0 / a**2).slope == pytest.approx(-2.0)


def test_fit_rate_excludes_zeros_and_needs_points():
    a = [1, 2, 3, 4, 5]
    f = fit_rate(a, [1, 0.5, 0.0, 0.25, 0.2], min_points=4)
    assert f.used == 4 and f.exact == 1
    with pytest.raises(InsufficientGridError):
        fit_rate([1, 2, 3], [1, 2, 3])
    with pytest.raises(ValueError):
        fit_rate([1, 2, 3, 4], [1, -1, 1, 1])


@settings(max_examples=40, deadline=None)
@given(p=st.floats(-4, 1), c=st.floats(1e-3, 1e3))
def test_fit_rate_recovers_exponent(p, c):
    a = np.geomspace(5, 5e4, 6)
    assert fit_rate(a, c * a**p).slope == pytest.approx(p, abs=1e-9)


# --- expansion -------------------------------------------------------------


def test_expansion_1d_slope_minus_two():
    d, r = _1d_tables()
    for n in (1, 2, 3):
        cl = build_cluster(d, r, n)
        fl = [dirichlet_mode_1d(n).trace_derivative]
        rep = predict_and_compare(cl, gram_diag(fl))
        assert rep.slopes[1].slope == pytest.approx(-2.0, abs=0.05)
        for row in rep.rows:
            # second-order term of the three-term expansion (third order is ~n^2/alpha relative)
            assert row.residual == pytest.approx(-12 * n * n * PI2 / row.alpha**2, rel=0.1)
            assert row.observed > 0


def test_expansion_rectangle_splitting():
    sp = rect_dirichlet_spectrum(1, 2, 10)
    n = next(k for k, m in enumerate(sp, 1) if abs(m.lam - 5 * PI2) < 1e-9)
    table = {a: [m.lam for m in rect_robin_spectrum(1, 2, a, 10)] for a in GRID}
    cl = build_cluster([m.lam for m in sp], table, n)
    pair = sp[n - 1 : n + 1]
    gd = gram_diag(np.array([[rect_boundary_gram(a, b) for b in pair] for a in pair]), "gram")
    rep = predict_and_compare(cl, gd)
    # predicted values lam_n - mu_i/alpha are nondecreasing in i
    for a in GRID:
        rows = [r for r in rep.rows if r.alpha == a]
        assert rows[0].predicted >= rows[1].predicted
        vals = cl.robin_by_alpha[a]
        assert a * (vals[1] - vals[0]) == pytest.approx(6 * PI2, rel=0.02 if a >= 1e3 else 0.5)
    assert rep.worst_slope < -1.5


def test_expansion_disk_double_pair_coincide():
    d = disk_spectrum(1.0, None, 8)
    table = {a: [m.lam for m in disk_spectrum(1.0, a, 8)] for a in GRID}
    cl = build_cluster([m.lam for m in d], table, 2)
    assert cl.m == 2
    mu = disk_boundary_flux_sq(1.0, 1, 1)
    rep = predict_and_compare(cl, gram_diag(np.diag([mu, mu]), "gram"))
    b1, b2 = rep.branch(1), rep.branch(2)
    for r1, r2 in zip(b1, b2):
        assert r1.residual == pytest.approx(r2.residual, rel=1e-9, abs=1e-14)


def test_expansion_needs_grid():
    d, r = _1d_tables()
    cl = build_cluster(d, {a: r[a] for a in GRID[:3]}, 1)
    with pytest.raises(InsufficientGridError):
        predict_and_compare(cl, gram_diag([dirichlet_mode_1d(1).trace_derivative]))


def test_strict_domination_and_decreasing_deficit():
    d, r = _1d_tables()
    for n in (1, 2, 3, 4):
        deficits = [d[n - 1] - r[a][n - 1] for a in GRID]
        assert all(x > 0 for x in deficits)
        assert np.all(np.diff(deficits) < 0)


# --- omega and rho ---------------------------------------------------------


@pytest.mark.parametrize("alpha", [3.0, 50.0, 1e3])
def test_omega_rho_1d_exact(alpha):
    E1 = Exact1DBackend()
    om, rh = omega_rho([dirichlet_mode_1d(1).trace_derivative], E1, alpha)
    assert om == pytest.approx(2 * PI2 / alpha**2, rel=1e-12)
    assert rh == pytest.approx(0.0, abs=1e-12)
    _, rh2 = omega_rho([dirichlet_mode_1d(2).trace_derivative], E1, alpha)
    assert rh2 == pytest.approx(32 * PI2 / (alpha * (alpha + 2)), rel=1e-10)


def test_omega_rho_rotation_invariant(coarse_square_sys):
    s = coarse_square_sys
    b = FemBackend(s)
    d = dirichlet_eigs(s, 3)
    fl = [variational_flux(s, d.vectors[:, k], d.values[k]) for k in (1, 2)]
    Q = ortho_group.rvs(2, random_state=1)
    rot = [Q[0, 0] * fl[0] + Q[1, 0] * fl[1], Q[0, 1] * fl[0] + Q[1, 1] * fl[1]]
    a = 0.8
    np.testing.assert_allclose(omega_rho(fl, b, a), omega_rho(rot, b, a), rtol=1e-10)


def test_alpha_omega_rho_decrease_1d():
    E1 = Exact1DBackend()
    fl = [dirichlet_mode_1d(2).trace_derivative]
    vals = [tuple(a * v for v in omega_rho(fl, E1, a)) for a in (5, 10, 20, 40, 80)]
    assert all(x[0] > y[0] and x[1] > y[1] for x, y in zip(vals, vals[1:]))


# --- eigenfunction residuals (FEM) -----------------------------------------


def _square_r2_exact(alpha):
    """Exact ||phi - psi||^2_{H_alpha} for the unit-square ground state.

    With phi Dirichlet and psi Robin (both products of 1D modes),
    ||phi - psi||^2 = lam + lam^alpha - 2 lam^alpha (phi, psi).
    """
    m, d = robin_eigen_1d(1, alpha), dirichlet_mode_1d(1)
    c = quad(lambda x: m(x) * d(x), 0, 1, epsabs=1e-14)[0]
    return 2 * PI2 + 2 * m.lam - 4 * m.lam * c * c


def _square_residuals(sys, alpha):
    b = FemBackend(sys)
    d = dirichlet_eigs(sys, 1)
    g = variational_flux(sys, d.vectors[:, 0], d.values[0])
    r = robin_eigs(sys, alpha, 2)
    return b, d, g, r, eigenfunction_residuals(b, d.vectors[:, :1], [g], r.vectors[:, :1], alpha)[0]


def test_eigen_residual_matches_exact_product_oracle(square_sys):
    for a in (1.0, 2.0):
        er = _square_residuals(square_sys, a)[-1]
        assert er.r2 == pytest.approx(_square_r2_exact(a), rel=0.02)
        assert er.proj_norm > 0.8


@pytest.mark.xfail(
    strict=True,
    reason="at alpha = 0.05/h = 1 the exact continuum ratio alpha*r2/int(d_nu phi)^2 is about 0.23, "
    "so a 5% window around 1 cannot hold; the limit is only approached for alpha >> 10",
)
def test_eigen_residual_ratio_at_alpha_point05_over_h(square_sys):
    a = 0.05 / square_sys.mesh.h
    er = _square_residuals(square_sys, a)[-1]
    assert er.r2_ratio == pytest.approx(1.0, rel=0.05)


@pytest.mark.xfail(
    strict=True,
    reason="alpha*r1 levels off instead of vanishing: grad(phi - psi) is of exact order 1/alpha "
    "while the torsion corrector only supplies part of it (see the decisions ledger)",
)
def test_eigen_residual_alpha_r1_decreases(square_sys):
    vals = [a * _square_residuals(square_sys, a)[-1].r1 for a in (1.0, 2.0, 4.0, 8.0)]
    assert all(x > y for x, y in zip(vals, vals[1:]))


def test_eigen_residual_rejects_wrong_cluster(square_sys):
    b, d, g, r, _ = _square_residuals(square_sys, 1.0)
    with pytest.raises(ClusterError, match="1/2"):
        eigenfunction_residuals(b, d.vectors[:, :1], [g], r.vectors[:, 1:2], 1.0)


def test_robin_derivative_identity(coarse_square_sys):
    fd, bm = robin_derivative_check(coarse_square_sys, 3.0, 1, 0.01)
    assert fd == pytest.approx(bm, rel=1e-4)
    with pytest.raises(ValueError):
        robin_derivative_check(coarse_square_sys, 1.0, 1, 2.0)
