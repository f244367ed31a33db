import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from robin_limit.exact1d import (
    RootFindingError,
    dirichlet_mode_1d,
    expansion_1d,
    robin_eigen_1d,
    secular,
    torsion_1d,
)

PI2 = math.pi**2

# frozen from a 30-digit mpmath root of (a^2 - s^2) sin s + 2 a s cos s
ORACLE = [
    (1, 1.0, 1.7070529755509225),
    (1, 10.0, 6.9046781811170939),
    (2, 10.0, 28.167696523334286),
    (3, 100.0, 85.386682476375676),
    (1, 1e4, 9.8656577434954516),
]


@pytest.mark.parametrize("n,alpha,lam", ORACLE)
def test_robin_eigenvalue_oracle(n, alpha, lam):
    m = robin_eigen_1d(n, alpha)
    assert m.lam == pytest.approx(lam, rel=1e-13)
    assert abs(secular(m.lam, alpha)) < 1e-8 * max(alpha * alpha, m.lam)


def test_independent_mpmath_root():
    mp.mp.dps = 25
    a = 37.0
    f = lambda s: (a * a - s * s) * mp.sin(s) + 2 * a * s * mp.cos(s)
    s = mp.findroot(f, (2 * mp.pi + mp.mpf("1e-9"), 3 * mp.pi - mp.mpf("1e-9")), solver="anderson")
    assert robin_eigen_1d(3, a).lam == pytest.approx(float(s * s), rel=1e-13)


def test_dirichlet_modes():
    m = dirichlet_mode_1d(3)
    assert m.lam == pytest.approx(9 * PI2)
    assert m.boundary_flux_sq == pytest.approx(4 * 9 * PI2)
    assert m.trace_derivative[0] == pytest.approx(-math.sqrt(2) * 3 * math.pi)
    assert m.trace_derivative[1] == pytest.approx(-math.sqrt(2) * 3 * math.pi)
    assert quad(lambda x: m(x) ** 2, 0, 1)[0] == pytest.approx(1.0)


def test_expansion_coefficients():
    base, first, second = expansion_1d(2, 100.0)
    assert base == pytest.approx(4 * PI2)
    assert first == pytest.approx(4 * PI2 * 0.96)
    assert second == pytest.approx(4 * PI2 * (0.96 + 12e-4))


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 6), alpha=st.floats(0.05, 1e6))
def test_robin_eigenvalue_brackets_and_monotone(n, alpha):
    lam = robin_eigen_1d(n, alpha).lam
    assert (n - 1) ** 2 * PI2 < lam < n * n * PI2
    assert robin_eigen_1d(n, alpha * 1.5).lam > lam


@settings(max_examples=20, deadline=None)
@given(n=st.integers(1, 4), alpha=st.floats(0.5, 200.0))
def test_robin_mode_normalised_and_satisfies_bc(n, alpha):
    m = robin_eigen_1d(n, alpha)
    assert quad(lambda x: m(x) ** 2, 0, 1, epsabs=1e-13)[0] == pytest.approx(1.0, abs=1e-9)
    d = dirichlet_mode_1d(n)
    assert quad(lambda x: m(x) * d(x), 0, 1)[0] > 0
    eps = 1e-6
    left = -(m(eps) - m(-eps)) / (2 * eps)
    right = (m(1 + eps) - m(1 - eps)) / (2 * eps)
    assert left + alpha * m(0.0) == pytest.approx(0.0, abs=1e-5 * (1 + alpha))
    assert right + alpha * m(1.0) == pytest.approx(0.0, abs=1e-5 * (1 + alpha))
    assert m.trace[0] == pytest.approx(float(m(0.0)))


def test_scaling_law_for_other_lengths():
    l, a = 2.0, 7.0
    m = robin_eigen_1d(2, a, length=l)
    assert m.lam == pytest.approx(robin_eigen_1d(2, a * l).lam / l**2, rel=1e-14)
    assert quad(lambda x: m(x) ** 2, 0, l)[0] == pytest.approx(1.0)


def test_argument_errors():
    with pytest.raises(ValueError):
        robin_eigen_1d(0, 1.0)
    with pytest.raises(ValueError):
        robin_eigen_1d(1, -1.0)
    with pytest.raises(ValueError):
        robin_eigen_1d(1, 1.0, tol=1e-16)
    # the pole inset leaves no sign change once the deficit is below the inset
    with pytest.raises(RootFindingError, match="sign change"):
        robin_eigen_1d(1, 1e10)


def test_torsion_closed_forms():
    t = torsion_1d(2.0, (1.0, -1.0))
    assert t.T == pytest.approx(0.5)
    c = torsion_1d(3.0, (2.0, 2.0))
    assert (c.a, c.b) == pytest.approx((2 / 3, 0.0))
    assert c.T == pytest.approx(8 / 3)


@settings(max_examples=50, deadline=None)
@given(alpha=st.floats(0.01, 1e4), f0=st.floats(-5, 5), f1=st.floats(-5, 5))
def test_torsion_identity_and_bc(alpha, f0, f1):
    t = torsion_1d(alpha, (f0, f1))
    u0, u1 = t.trace
    assert -t.b + alpha * u0 == pytest.approx(f0, abs=1e-9 * (1 + abs(f0) + abs(f1)))
    assert t.b + alpha * u1 == pytest.approx(f1, abs=1e-9 * (1 + abs(f0) + abs(f1)))
    assert t.grad_energy + t.boundary_energy == pytest.approx(t.T, rel=1e-10, abs=1e-14)
    assert t.T >= -1e-15
    assert t.l2_sq == pytest.approx(quad(lambda x: (t.a + t.b * x) ** 2, 0, 1)[0], rel=1e-10, abs=1e-14)
