"""Separable reference spectra: rectangles (tensor 1D modes) and disks (Bessel).

Rectangle Robin modes are products ``X_n(x) Y_m(y)`` of 1D Robin modes on
(0, l) and (0, L).  Each factor satisfies ``u_nu + alpha u = 0`` at its two
endpoints, and on a side ``x = 0`` or ``x = l`` the outward derivative only
acts on ``X``, so the product satisfies the Robin condition on all four sides.
Its eigenvalue is the sum of the two 1D eigenvalues.

Disk modes are ``J_k(sqrt(lam) r) cos(k theta)`` (and ``sin``) with
``sqrt(lam) R`` a zero of ``J_k`` (Dirichlet) or of
``x J_k'(x) + alpha R J_k(x)`` (Robin).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional

import numpy as np
from scipy import special

from ._roots import RootFindingError, bracketed_root
from .exact1d import robin_eigen_1d

__all__ = [
    "RectMode",
    "DiskMode",
    "rect_dirichlet_spectrum",
    "rect_robin_spectrum",
    "rect_boundary_gram",
    "rect_mode_values",
    "bessel_j",
    "bessel_zero",
    "disk_spectrum",
    "disk_boundary_flux_sq",
]

PI = math.pi


@dataclass(frozen=True)
class RectMode:
    n: int
    m: int
    lam: float
    alpha: Optional[float]
    l: float
    L: float

    @property
    def label(self):
        return (self.n, self.m)


@dataclass(frozen=True)
class DiskMode:
    k: int
    s: int
    lam: float
    alpha: Optional[float]
    R: float
    multiplicity: int
    branch: int = 0  # 0: cos(k theta), 1: sin(k theta)


def _sort_with_ties(items, value, label, rtol=1e-12):
    """Sort by ``value``; values equal to ``rtol`` are ordered by ``label``."""
    items = sorted(items, key=value)
    out, group = [], []
    for it in items:
        if group and abs(value(it) - value(group[0])) > rtol * max(1.0, abs(value(group[0]))):
            out += sorted(group, key=label)
            group = []
        group.append(it)
    return out + sorted(group, key=label)


def _box_spectrum(count, xval, yval):
    """First ``count`` sums ``xval(n) + yval(m)`` over n, m >= 1 (both increasing).

    The index box grows until the cheapest excluded candidate exceeds the
    largest included value, so no eigenvalue can be missed.
    """
    N = M = max(2, math.isqrt(count) + 1)
    while True:
        cand = [(xval(n) + yval(m), n, m) for n in range(1, N + 1) for m in range(1, M + 1)]
        cand.sort()
        top = cand[count - 1][0]
        ex_n = xval(N + 1) + yval(1)
        ex_m = xval(1) + yval(M + 1)
        grow = False
        if ex_n <= top * (1 + 1e-12):
            N *= 2
            grow = True
        if ex_m <= top * (1 + 1e-12):
            M *= 2
            grow = True
        if not grow:
            return [c for c in cand if c[0] <= top * (1 + 1e-12)]


def rect_dirichlet_spectrum(l: float, L: float, count: int) -> List[RectMode]:
    """First ``count`` Dirichlet eigenvalues ``(n pi/l)^2 + (m pi/L)^2``, ascending.

    Degenerate eigenvalues are listed together in lexicographic ``(n, m)`` order.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    cand = _box_spectrum(count, lambda n: (n * PI / l) ** 2, lambda m: (m * PI / L) ** 2)
    modes = [RectMode(n, m, lam, None, l, L) for lam, n, m in cand]
    return _sort_with_ties(modes, lambda md: md.lam, lambda md: (md.n, md.m))[:count]


def rect_robin_spectrum(l: float, L: float, alpha: float, count: int) -> List[RectMode]:
    """First ``count`` Robin eigenvalues of the rectangle via the 1D scaling law."""
    if count < 1:
        raise ValueError("count must be >= 1")

    @lru_cache(maxsize=None)
    def xval(n):
        return robin_eigen_1d(n, alpha, length=l).lam

    @lru_cache(maxsize=None)
    def yval(m):
        return robin_eigen_1d(m, alpha, length=L).lam

    cand = _box_spectrum(count, xval, yval)
    modes = [RectMode(n, m, lam, alpha, l, L) for lam, n, m in cand]
    return _sort_with_ties(modes, lambda md: md.lam, lambda md: (md.n, md.m))[:count]


def rect_robin_eigenvalue(l: float, L: float, alpha: float, n: int, m: int) -> float:
    """Robin eigenvalue of the tensor mode with labels ``(n, m)``."""
    return robin_eigen_1d(n, alpha, length=l).lam + robin_eigen_1d(m, alpha, length=L).lam


def rect_boundary_gram(a: RectMode, b: RectMode) -> float:
    """Closed form of the boundary integral of ``d_nu phi_a * d_nu phi_b``.

    For L2-normalised Dirichlet modes of one rectangle this is::

        delta(m, j) (2 n i pi^2 / l^3) (1 + (-1)^(n+i))
      + delta(n, i) (2 m j pi^2 / L^3) (1 + (-1)^(m+j))

    so the diagonal is ``4 pi^2 (n^2/l^3 + m^2/L^3)`` and pairs with ``n != i``
    and ``m != j`` are orthogonal.
    """
    if a.alpha is not None or b.alpha is not None:
        raise ValueError("boundary Gram integrals are defined for Dirichlet modes")
    if (a.l, a.L) != (b.l, b.L):
        raise ValueError(f"modes live on different rectangles: {(a.l, a.L)} vs {(b.l, b.L)}")
    l, L = a.l, a.L
    n, m, i, j = a.n, a.m, b.n, b.m
    val = 0.0
    if m == j:
        val += 2.0 * n * i * PI**2 / l**3 * (1 + (-1) ** (n + i))
    if n == i:
        val += 2.0 * m * j * PI**2 / L**3 * (1 + (-1) ** (m + j))
    return val


def rect_mode_values(mode: RectMode, x, y):
    """Evaluate the L2-normalised mode at points; Robin modes use 1D Robin factors."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if mode.alpha is None:
        c = 2.0 / math.sqrt(mode.l * mode.L)
        return c * np.sin(mode.n * PI * x / mode.l) * np.sin(mode.m * PI * y / mode.L)
    X = robin_eigen_1d(mode.n, mode.alpha, length=mode.l)
    Y = robin_eigen_1d(mode.m, mode.alpha, length=mode.L)
    return X(x) * Y(y)


# ---------------------------------------------------------------------------
# Bessel functions and the disk
# ---------------------------------------------------------------------------


def bessel_j(k: int, x: float):
    """``(J_k(x), J_k'(x))`` for ``0 <= k <= 20`` and ``0 <= x <= 200``."""
    if not (isinstance(k, (int, np.integer)) and 0 <= k <= 20):
        raise ValueError(f"order k={k!r} outside supported range 0..20")
    if not (0.0 <= x <= 200.0):
        raise ValueError(f"argument x={x!r} outside supported range [0, 200]")
    jk = float(special.jv(k, x))
    if k == 0:
        dj = -float(special.jv(1, x))
    else:
        dj = 0.5 * float(special.jv(k - 1, x) - special.jv(k + 1, x))
    return jk, dj


def _mcmahon(k: int, s: int) -> float:
    beta = (s + 0.5 * k - 0.25) * PI
    mu = 4.0 * k * k
    b8 = 8.0 * beta
    return beta - (mu - 1) / b8 - 4 * (mu - 1) * (7 * mu - 31) / (3 * b8**3)


@lru_cache(maxsize=None)
def bessel_zero(k: int, s: int) -> float:
    """s-th positive zero ``j_{k,s}`` of ``J_k``.

    Zeros are bracketed by a sign scan (spacing of consecutive zeros exceeds
    pi), then polished by Newton from McMahon's asymptotic guess whenever the
    guess falls inside the bracket.
    """
    if s < 1:
        raise ValueError("zero index s must be >= 1")
    step = 0.25
    x = float(k) if k > 0 else 0.0
    fx = bessel_j(k, x)[0] if k > 0 else 1.0
    found = 0
    while True:
        xn = x + step
        fn = bessel_j(k, xn)[0]
        if fx == 0.0:
            fx = fn
            x = xn
            continue
        if (fn > 0) != (fx > 0):
            found += 1
            if found == s:
                break
        x, fx = xn, fn
    a, b = x, xn

    def f(t):
        return bessel_j(k, t)[0]

    def df(t):
        return bessel_j(k, t)[1]

    guess = _mcmahon(k, s)
    if a < guess < b:
        try:
            t = guess
            for _ in range(50):
                j, dj = bessel_j(k, t)
                t_new = t - j / dj
                if not a < t_new < b:
                    break
                if abs(t_new - t) <= 1e-15 * t:
                    return t_new
                t = t_new
        except (ValueError, ZeroDivisionError):
            pass
    return bracketed_root(f, df, a, b, width=1e-10)


def _disk_robin_root(k: int, s: int, alphaR: float) -> float:
    """Root of ``x J_k'(x) + alphaR J_k(x)`` between ``j_{k,s-1}`` and ``j_{k,s}``."""
    hi = bessel_zero(k, s)
    lo = bessel_zero(k, s - 1) if s > 1 else float(k)

    def g(x):
        j, dj = bessel_j(k, x)
        return x * dj + alphaR * j

    def dg(x):
        j, dj = bessel_j(k, x)
        if x == 0.0:
            return (1.0 + alphaR) * dj
        ddj = -dj / x - (1.0 - k * k / (x * x)) * j
        return dj + x * ddj + alphaR * dj

    try:
        return bracketed_root(g, dg, lo, hi, width=1e-10)
    except RootFindingError as exc:
        raise RootFindingError(f"disk Robin root (k={k}, s={s}, alpha R={alphaR!r}): {exc}") from None


def disk_spectrum(R: float, alpha: Optional[float], count: int) -> List[DiskMode]:
    """First ``count`` Dirichlet (``alpha=None``) or Robin eigenvalues of the disk.

    Modes with ``k >= 1`` are double and appear twice (``branch`` 0 and 1).
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if alpha is not None and not alpha > 0:
        raise ValueError("alpha must be positive")

    @lru_cache(maxsize=None)
    def x_of(k, s):
        if alpha is None:
            return bessel_zero(k, s)
        return _disk_robin_root(k, s, alpha * R)

    # enumerate (k, s) boxes; eigenvalues increase in both k and s
    K, S = 2, 2
    while True:
        cand = []
        for k in range(K + 1):
            for s in range(1, S + 1):
                lam = (x_of(k, s) / R) ** 2
                cand += [(lam, k, s, b) for b in ((0,) if k == 0 else (0, 1))]
        cand.sort()
        top = cand[min(count, len(cand)) - 1][0]
        grow = False
        if len(cand) < count or (x_of(K + 1, 1) / R) ** 2 <= top * (1 + 1e-12):
            if K >= 20:
                raise ValueError("disk spectrum needs Bessel orders beyond 20")
            K = min(20, 2 * K)
            grow = True
        if (x_of(0, S + 1) / R) ** 2 <= top * (1 + 1e-12):
            S *= 2
            grow = True
        if not grow:
            break
    modes = [DiskMode(k, s, lam, alpha, R, 1 if k == 0 else 2, b) for lam, k, s, b in cand]
    return _sort_with_ties(modes, lambda md: md.lam, lambda md: (md.k, md.s, md.branch))[:count]


def disk_boundary_flux_sq(R: float, k: int, s: int, nquad: int = 64) -> float:
    """Boundary integral of ``(d_nu phi)^2`` for the L2-normalised Dirichlet mode (k, s).

    The normalisation ``int_0^R J_k(j r / R)^2 r dr`` is computed by
    Gauss-Legendre quadrature rather than the closed form, so the result can
    be checked independently against the Rellich identity
    ``R * int (d_nu phi)^2 = 2 lam``.
    """
    j = bessel_zero(k, s)
    t, w = np.polynomial.legendre.leggauss(nquad)
    r = 0.5 * R * (t + 1.0)
    radial = 0.5 * R * np.sum(w * special.jv(k, j * r / R) ** 2 * r)
    angular = 2.0 * PI if k == 0 else PI  # int cos^2(k theta) over the circle
    c2 = 1.0 / (radial * angular)
    dphi = (j / R) * bessel_j(k, j)[1]
    return c2 * dphi**2 * R * angular
