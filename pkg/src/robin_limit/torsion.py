"""Boundary torsional rigidity ``T_alpha(boundary, f)`` and its minimiser.

``T_alpha(f) = -2 inf_u { 1/2 int |grad u|^2 + alpha/2 int_b u^2 - int_b f u }``.
The minimiser ``U`` is harmonic with ``d_nu U + alpha U = f`` on the boundary,
and ``T = int |grad U|^2 + alpha int_b U^2 = int_b f U``.

Two backends share one small interface:

* :class:`Exact1DBackend` -- the interval (0, 1); the boundary is two points
  with counting measure and every harmonic function is affine;
* :class:`FemBackend` -- a P1 system; boundary data are nodal values on the
  boundary loop and the load is assembled with the same edge mass matrix as
  the Robin term, which makes the energy identities hold exactly at the
  discrete level.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Tuple, Union

import numpy as np
from scipy.sparse import linalg as spla

from .exact1d import Torsion1D, torsion_1d
from .fem import FemSystem, variational_flux

__all__ = [
    "TorsionResult",
    "HarmonicExtension",
    "Exact1DBackend",
    "FemBackend",
    "torsion_solve",
    "torsion_max_form",
    "BoundCheck",
    "BoundReport",
    "check_bounds",
    "monotonicity_check",
    "extension_gap",
    "random_boundary_data",
    "AlphaWindowWarning",
]


class AlphaWindowWarning(UserWarning):
    """alpha exceeds the range in which the mesh resolves the Robin penalty."""


@dataclass(frozen=True, eq=False)
class TorsionResult:
    alpha: float
    T: float
    U: Union[np.ndarray, Torsion1D]
    grad_energy: float
    boundary_energy: float
    load: float
    trace_alphaU: np.ndarray
    in_window: bool = True

    @property
    def identity_residual(self) -> float:
        """Relative mismatch of ``grad + boundary energy = int f U``."""
        scale = max(abs(self.load), 1e-300)
        return abs(self.grad_energy + self.boundary_energy - self.load) / scale


@dataclass(frozen=True, eq=False)
class HarmonicExtension:
    U_f: Union[np.ndarray, Tuple[float, float]]
    dirichlet_energy: float
    flux: Optional[np.ndarray]


# ---------------------------------------------------------------------------
# backends
# ---------------------------------------------------------------------------


class Exact1DBackend:
    """Interval (0, 1): fields are affine pairs ``(a, b)`` meaning ``a + b x``."""

    perimeter = 2.0
    h = 0.0

    def boundary_inner(self, f, g) -> float:
        return float(f[0] * g[0] + f[1] * g[1])

    def trace(self, u) -> np.ndarray:
        a, b = _affine(u)
        return np.array([a, a + b])

    def grad_energy(self, u) -> float:
        return _affine(u)[1] ** 2

    def l2_inner(self, u, v) -> float:
        a1, b1 = _affine(u)
        a2, b2 = _affine(v)
        return a1 * a2 + 0.5 * (a1 * b2 + a2 * b1) + b1 * b2 / 3.0

    def constant(self):
        return (1.0, 0.0)

    def solve(self, alpha: float, f) -> TorsionResult:
        sol = torsion_1d(alpha, (f[0], f[1]))
        return TorsionResult(
            alpha,
            sol.T,
            sol,
            sol.grad_energy,
            sol.boundary_energy,
            sol.T,
            alpha * np.array(sol.trace),
        )

    def harmonic_extension(self, f) -> HarmonicExtension:
        slope = float(f[1] - f[0])
        return HarmonicExtension((float(f[0]), slope), slope * slope, np.array([-slope, slope]))

    def combine(self, coeffs, fields):
        a = sum(c * _affine(u)[0] for c, u in zip(coeffs, fields))
        b = sum(c * _affine(u)[1] for c, u in zip(coeffs, fields))
        return (a, b)


def _affine(u) -> Tuple[float, float]:
    if isinstance(u, Torsion1D):
        return u.a, u.b
    return float(u[0]), float(u[1])


class FemBackend:
    """P1 backend; one sparse factorisation of ``K + alpha B`` per alpha."""

    def __init__(self, system: FemSystem, window: float = 0.1):
        self.sys = system
        self.window = window
        self._lu = {}
        self._harm = None

    @property
    def perimeter(self) -> float:
        return self.sys.perimeter

    @property
    def h(self) -> float:
        return self.sys.mesh.h

    def boundary_inner(self, f, g) -> float:
        return self.sys.boundary_inner(f, g)

    def trace(self, u) -> np.ndarray:
        return self.sys.trace(u)

    def grad_energy(self, u) -> float:
        return self.sys.energy(u)

    def l2_inner(self, u, v) -> float:
        return self.sys.l2_inner(u, v)

    def constant(self):
        return np.ones(self.sys.n)

    def combine(self, coeffs, fields):
        return sum(c * np.asarray(u) for c, u in zip(coeffs, fields))

    def in_window(self, alpha: float) -> bool:
        return alpha <= self.window / self.h

    def _factor(self, alpha):
        lu = self._lu.get(alpha)
        if lu is None:
            A = (self.sys.K + alpha * self.sys.B).tocsc()
            lu = self._lu[alpha] = spla.splu(A)
        return lu

    def load(self, f) -> np.ndarray:
        """Assembled boundary load ``int_b f v`` for every hat function ``v``."""
        out = np.zeros(self.sys.n)
        out[self.sys.boundary_nodes] = self.sys.Bbb @ np.asarray(f, dtype=float)
        return out

    def solve(self, alpha: float, f) -> TorsionResult:
        f = np.asarray(f, dtype=float)
        ok = self.in_window(alpha)
        if not ok:
            warnings.warn(
                f"alpha={alpha:g} exceeds {self.window}/h={self.window / self.h:g}; "
                "boundary layer not mesh-resolved",
                AlphaWindowWarning,
                stacklevel=2,
            )
        U = self._factor(alpha).solve(self.load(f))
        tr = self.sys.trace(U)
        grad = self.sys.energy(U)
        bnd = alpha * self.sys.boundary_inner(tr, tr)
        load = self.sys.boundary_inner(f, tr)
        return TorsionResult(alpha, load, U, grad, bnd, load, alpha * tr, ok)

    def solve_many(self, alpha: float, fs) -> np.ndarray:
        """Minimisers for several data at once (columns), same factorisation."""
        F = np.column_stack([self.load(f) for f in fs])
        return self._factor(alpha).solve(F)

    def harmonic_extension(self, f) -> HarmonicExtension:
        """Discrete harmonic function with boundary trace ``f`` (node elimination)."""
        s = self.sys
        if self._harm is None:
            inner = s.mesh.interior_nodes()
            Kii = s.K[inner][:, inner].tocsc()
            Kib = s.K[inner][:, s.boundary_nodes]
            self._harm = (inner, spla.splu(Kii), Kib)
        inner, lu, Kib = self._harm
        f = np.asarray(f, dtype=float)
        U = np.zeros(s.n)
        U[s.boundary_nodes] = f
        if len(inner):
            U[inner] = lu.solve(-(Kib @ f))
        flux = variational_flux(s, U, 0.0, rhs_mode="harmonic")
        return HarmonicExtension(U, s.energy(U), flux)


Backend = Union[Exact1DBackend, FemBackend]


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


def torsion_solve(backend: Backend, alpha: float, f) -> TorsionResult:
    """Minimiser and value of the (alpha, f) boundary torsion problem."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    return backend.solve(alpha, f)


def torsion_max_form(backend: Backend, alpha: float, f, trial) -> float:
    """``(int_b f u)^2 / (int |grad u|^2 + alpha int_b u^2)`` for a trial ``u``.

    Never exceeds ``T_alpha(f)``; equality at the minimiser.
    """
    tr = backend.trace(trial)
    den = backend.grad_energy(trial) + alpha * backend.boundary_inner(tr, tr)
    if den <= 0.0:
        raise ValueError("trial function must be nonzero")
    return backend.boundary_inner(f, tr) ** 2 / den


@dataclass(frozen=True)
class BoundCheck:
    """``lhs <= rhs`` with allowance ``tol``; ``slack = rhs - lhs``."""

    name: str
    lhs: float
    rhs: float
    tol: float

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs

    @property
    def ok(self) -> bool:
        return self.slack >= -self.tol


@dataclass
class BoundReport:
    alpha: float
    checks: List[BoundCheck] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    def __getitem__(self, name: str) -> BoundCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def check_bounds(backend: Backend, alpha: float, f, tol: float = 1e-8, flux_slack: Optional[float] = None) -> BoundReport:
    """Evaluate the two-sided bounds on ``alpha T_alpha(f)`` and the trace estimates.

    Checks (each as ``lhs <= rhs``):

    ``th1_lower``  ``(int f)^2 / |b|  <=  alpha T``
    ``th1_upper``  ``alpha T  <=  ||f||^2``
    ``th2_lower``  ``alpha ||f||^4 / (||grad U_f||^2 + alpha ||f||^2)  <=  alpha T``
    ``th4``        ``||alpha U - f||^2  <=  2 ||f|| ||grad U_f|| / sqrt(alpha)``
    ``rate``       ``||alpha U - f||  <=  ||d_nu U_f|| / alpha``

    ``U_f`` is the harmonic extension of ``f``.  The first four use the
    relative tolerance ``tol``; the rate check, whose right side involves a
    recovered flux, gets ``flux_slack`` (default ``h``) on top.
    """
    f = np.asarray(f, dtype=float)
    res = torsion_solve(backend, alpha, f)
    aT = alpha * res.T
    f2 = backend.boundary_inner(f, f)
    fsum = backend.boundary_inner(f, backend.trace(backend.constant()))
    ext = backend.harmonic_extension(f)
    dU = ext.dirichlet_energy
    diff = res.trace_alphaU - f
    d2 = backend.boundary_inner(diff, diff)
    scale = max(f2, 1e-300)
    checks = [
        BoundCheck("th1_lower", fsum**2 / backend.perimeter, aT, tol * scale),
        BoundCheck("th1_upper", aT, f2, tol * scale),
        BoundCheck("th2_lower", alpha * f2**2 / (dU + alpha * f2), aT, tol * scale),
        BoundCheck("th4", d2, 2.0 * math.sqrt(f2 * dU) / math.sqrt(alpha), tol * scale),
    ]
    if ext.flux is not None:
        slack = backend.h if flux_slack is None else flux_slack
        flux_norm = math.sqrt(max(backend.boundary_inner(ext.flux, ext.flux), 0.0))
        checks.append(BoundCheck("rate", math.sqrt(d2), flux_norm / alpha, tol * math.sqrt(scale) + slack * flux_norm / alpha))
    return BoundReport(alpha, checks)


def monotonicity_check(backend: Backend, alpha: float, f, dalpha: float) -> Tuple[float, float]:
    """Central difference of ``alpha -> alpha T_alpha(f)`` and ``int |grad U_alpha|^2``."""
    if not alpha - dalpha > 0:
        raise ValueError("need alpha - dalpha > 0")
    up = torsion_solve(backend, alpha + dalpha, f)
    dn = torsion_solve(backend, alpha - dalpha, f)
    fd = ((alpha + dalpha) * up.T - (alpha - dalpha) * dn.T) / (2.0 * dalpha)
    return fd, torsion_solve(backend, alpha, f).grad_energy


def extension_gap(backend: Backend, alpha: float, f) -> float:
    """``||alpha U_alpha - U_f||`` in the full H1 norm (gradient plus L2 parts)."""
    res = torsion_solve(backend, alpha, f)
    ext = backend.harmonic_extension(f)
    if isinstance(backend, Exact1DBackend):
        d = (alpha * res.U.a - ext.U_f[0], alpha * res.U.b - ext.U_f[1])
    else:
        d = alpha * res.U - ext.U_f
    return math.sqrt(backend.grad_energy(d) + backend.l2_inner(d, d))


def random_boundary_data(n: int, count: int = 1, seed: int = 42) -> np.ndarray:
    """``count`` rows of uniform values in [-1, 1] from a seeded PCG64 stream."""
    rng = np.random.default_rng(seed)
    return rng.uniform(-1.0, 1.0, size=(count, n))
