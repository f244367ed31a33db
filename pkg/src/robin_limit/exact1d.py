"""Closed-form one-dimensional data on (0, 1).

Everything here is exact up to root-finding precision and serves as the
highest-precision oracle of the toolkit: Dirichlet modes, Robin eigenvalues
from the secular equation, the three-term large-``alpha`` expansion, and the
torsion problem, whose minimiser is affine in 1D.

Outward normal derivatives follow one convention throughout: at ``x = 0``
the outward derivative is ``-d/dx``, at ``x = 1`` it is ``+d/dx``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

from ._roots import RootFindingError, bracketed_root

__all__ = [
    "Mode1D",
    "Torsion1D",
    "secular",
    "robin_eigen_1d",
    "dirichlet_mode_1d",
    "expansion_1d",
    "torsion_1d",
    "RootFindingError",
]

PI = math.pi


@dataclass(frozen=True)
class Mode1D:
    """An L2-normalised eigenmode on (0, length).

    ``trace_derivative`` holds the outward normal derivative at the two
    endpoints; ``trace`` the boundary values of the eigenfunction.
    """

    n: int
    lam: float
    alpha: Optional[float]
    trace_derivative: Tuple[float, float]
    trace: Tuple[float, float] = (0.0, 0.0)
    length: float = 1.0
    residual: float = 0.0

    def __call__(self, x):
        """Evaluate the eigenfunction (vectorised over numpy arrays)."""
        import numpy as np

        x = np.asarray(x, dtype=float) / self.length
        s = math.sqrt(self.lam) * self.length
        scale = 1.0 / math.sqrt(self.length)
        if self.alpha is None:
            return scale * math.sqrt(2.0) * np.sin(self.n * PI * x)
        return scale * _robin_shape(self.n, s, x)

    @property
    def boundary_flux_sq(self) -> float:
        """Sum of squared outward derivatives over both endpoints."""
        return self.trace_derivative[0] ** 2 + self.trace_derivative[1] ** 2


def _robin_shape(n, s, x):
    """Robin mode on (0, 1) of frequency ``s``, signed like sqrt(2) sin(n pi x)."""
    import numpy as np

    if n % 2:
        norm = math.sqrt(0.5 + math.sin(s) / (2.0 * s))
        sign = -1.0 if (n // 2) % 2 else 1.0
        return sign * np.cos(s * (x - 0.5)) / norm
    norm = math.sqrt(0.5 - math.sin(s) / (2.0 * s))
    sign = -1.0 if (n // 2) % 2 else 1.0
    return sign * np.sin(s * (x - 0.5)) / norm


def secular(lam: float, alpha: float) -> float:
    """``alpha**2 + 2 alpha sqrt(lam) cot(sqrt(lam)) - lam``; zero at Robin eigenvalues of (0, 1)."""
    s = math.sqrt(lam)
    return alpha * alpha + 2.0 * alpha * s * math.cos(s) / math.sin(s) - lam


def robin_eigen_1d(n: int, alpha: float, tol: float = 1e-14, length: float = 1.0) -> Mode1D:
    """n-th Robin eigenvalue of -u'' on (0, length) with ``u_nu + alpha u = 0``.

    The root is bracketed in ``((n-1)^2 pi^2, n^2 pi^2)`` with an inset of
    ``1e-9 n^2 pi^2`` that keeps clear of the cotangent poles.  Other lengths
    use the scaling ``lam_(0,l)^alpha = lam_(0,1)^(alpha l) / l^2``.

    Raises
    ------
    RootFindingError
        If the secular function does not change sign on the bracket or the
        iteration does not converge.
    """
    if n < 1:
        raise ValueError("mode index n must be >= 1")
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if tol < 1e-14:
        raise ValueError("tol must be >= 1e-14")
    if length != 1.0:
        base = robin_eigen_1d(n, alpha * length, tol)
        a = 1.0 / math.sqrt(length)
        return Mode1D(
            n,
            base.lam / length**2,
            alpha,
            (base.trace_derivative[0] * a / length, base.trace_derivative[1] * a / length),
            (base.trace[0] * a, base.trace[1] * a),
            length,
            base.residual,
        )

    eps = 1e-9 * n * n * PI * PI
    lo, hi = (n - 1) ** 2 * PI**2 + eps, n * n * PI**2 - eps
    f_lo, f_hi = secular(lo, alpha), secular(hi, alpha)
    if not (f_lo > 0 > f_hi):
        raise RootFindingError(
            f"secular equation has no sign change on [{lo!r}, {hi!r}] "
            f"(values {f_lo!r}, {f_hi!r}) for n={n}, alpha={alpha!r}"
        )

    # sin(s) * secular: same roots inside the bracket, no poles
    def g(s):
        return (alpha * alpha - s * s) * math.sin(s) + 2.0 * alpha * s * math.cos(s)

    def dg(s):
        return (alpha * alpha - s * s + 2.0 * alpha) * math.cos(s) - (2.0 * s + 2.0 * alpha * s) * math.sin(s)

    s = bracketed_root(g, dg, math.sqrt(lo), math.sqrt(hi), width=1e-8, rtol=max(tol, 1e-15))
    lam = s * s
    res = secular(lam, alpha)
    phi = _robin_shape(n, s, 0.0), _robin_shape(n, s, 1.0)
    phi = (float(phi[0]), float(phi[1]))
    return Mode1D(n, lam, alpha, (-alpha * phi[0], -alpha * phi[1]), phi, 1.0, res)


def dirichlet_mode_1d(n: int, length: float = 1.0) -> Mode1D:
    """Dirichlet mode ``sqrt(2/l) sin(n pi x / l)`` with eigenvalue ``(n pi / l)^2``."""
    if n < 1:
        raise ValueError("mode index n must be >= 1")
    k = n * PI / length
    amp = math.sqrt(2.0 / length) * k
    return Mode1D(n, k * k, None, (-amp, amp * (-1.0) ** n), (0.0, 0.0), length)


def expansion_1d(n: int, alpha: float) -> Tuple[float, float, float]:
    """Partial sums ``n^2 pi^2 (1, 1 - 4/alpha, 1 - 4/alpha + 12/alpha^2)``."""
    base = n * n * PI * PI
    first = base - 4.0 * base / alpha
    return base, first, first + 12.0 * base / alpha**2


@dataclass(frozen=True)
class Torsion1D:
    """Minimiser ``U(x) = a + b x`` of the 1D torsion problem on (0, 1)."""

    alpha: float
    f: Tuple[float, float]
    a: float
    b: float
    T: float

    @property
    def trace(self) -> Tuple[float, float]:
        return (self.a, self.a + self.b)

    @property
    def grad_energy(self) -> float:
        return self.b * self.b

    @property
    def boundary_energy(self) -> float:
        u0, u1 = self.trace
        return self.alpha * (u0 * u0 + u1 * u1)

    @property
    def l2_sq(self) -> float:
        return self.a * self.a + self.a * self.b + self.b * self.b / 3.0


def torsion_1d(alpha: float, f: Tuple[float, float]) -> Torsion1D:
    """Solve ``U'' = 0``, ``-U'(0) + alpha U(0) = f0``, ``U'(1) + alpha U(1) = f1``.

    The 2x2 system has determinant ``alpha (alpha + 2)`` and is solved in
    closed form.  ``T = f0 U(0) + f1 U(1)``.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    f0, f1 = float(f[0]), float(f[1])
    b = (f1 - f0) / (alpha + 2.0)
    a = (f0 + b) / alpha
    T = f0 * a + f1 * (a + b)
    return Torsion1D(alpha, (f0, f1), a, b, T)
