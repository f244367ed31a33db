"""Large-alpha asymptotics of Robin eigenvalues around a Dirichlet eigenvalue.

A Dirichlet eigenvalue ``lam_n`` of multiplicity ``m`` attracts ``m`` Robin
eigenvalues.  To first order

    lam_n - lam^alpha_{n+i-1}  ~  mu_{n,i} / alpha,

where ``mu_{n,1} >= ... >= mu_{n,m}`` are the eigenvalues of the boundary
Gram matrix ``G_ij = int_b d_nu phi_i d_nu phi_j`` on the eigenspace.  This
module groups eigenvalues into clusters, diagonalises ``G``, compares
observed deficits with ``mu / alpha``, evaluates the remainder functionals
``omega`` and ``rho`` through torsion solves, measures eigenfunction
residuals, and fits power-law rates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg as la

from .fem import FemSystem, h_alpha_norm, l2_project, robin_eigs
from .torsion import Exact1DBackend, FemBackend

__all__ = [
    "ClusterError",
    "GramError",
    "InsufficientGridError",
    "Cluster",
    "GramDiag",
    "RateFit",
    "ExpansionRow",
    "ExpansionReport",
    "EigenResidual",
    "build_cluster",
    "gram_diag",
    "predict_and_compare",
    "omega_rho",
    "eigenfunction_residuals",
    "robin_derivative_check",
    "fit_rate",
]


class ClusterError(ValueError):
    pass


class GramError(ValueError):
    pass


class InsufficientGridError(ValueError):
    pass


# ---------------------------------------------------------------------------
# clusters
# ---------------------------------------------------------------------------


@dataclass
class Cluster:
    """Robin eigenvalues attached to one Dirichlet eigenvalue.

    ``n`` is 1-based.  ``robin_by_alpha[alpha]`` holds the ``m`` Robin values
    with indices ``n .. n+m-1`` in ascending order.  ``threshold`` is the
    smallest tabulated alpha from which on every attached value lies within
    ``gamma`` of ``lambda_n`` (``None`` if that never happens on the table).
    """

    n: int
    m: int
    lambda_n: float
    gamma: float
    dirichlet_basis: object = None
    robin_by_alpha: Dict[float, np.ndarray] = field(default_factory=dict)
    threshold: Optional[float] = None

    @property
    def alphas(self) -> List[float]:
        return sorted(self.robin_by_alpha)


def build_cluster(
    dirichlet: Sequence[float],
    robin_by_alpha: Mapping[float, Sequence[float]],
    n: int,
    mult_tol: float = 1e-9,
    basis=None,
) -> Cluster:
    """Detect the multiplicity of ``lambda_n`` and attach Robin values.

    The multiplicity is the longest run with ``|lam_{n+j} - lam_n| <=
    mult_tol * lam_n``.  The cluster gap is half the distance to the nearest
    other Dirichlet eigenvalue (only the upper neighbour when ``n = 1``).
    """
    lam = np.asarray(dirichlet, dtype=float)
    if n < 1 or n > len(lam):
        raise ClusterError(f"index n={n} outside the Dirichlet spectrum of length {len(lam)}")
    ln = lam[n - 1]
    tol = mult_tol * abs(ln)
    if n > 1 and abs(ln - lam[n - 2]) <= tol:
        raise ClusterError(f"lambda_{n} repeats lambda_{n - 1}; start the cluster at its first index")
    m = 1
    while n - 1 + m < len(lam) and abs(lam[n - 1 + m] - ln) <= tol:
        m += 1
    if n - 1 + m >= len(lam):
        raise ClusterError(f"spectrum must extend past index {n + m - 1} to bound the cluster")
    upper = lam[n - 1 + m] - lam[n - 2 + m]
    gamma = 0.5 * (upper if n == 1 else min(ln - lam[n - 2], upper))
    if not gamma > tol:
        raise ClusterError(f"cluster at n={n} not separated at mult_tol={mult_tol:g}")

    table: Dict[float, np.ndarray] = {}
    for a, vals in robin_by_alpha.items():
        vals = np.asarray(vals, dtype=float)
        if len(vals) < n + m - 1:
            raise ClusterError(f"Robin spectrum at alpha={a:g} has {len(vals)} values, need {n + m - 1}")
        table[float(a)] = np.sort(vals[n - 1 : n - 1 + m])

    threshold = None
    for a in sorted(table, reverse=True):
        if np.all(np.abs(table[a] - ln) < gamma):
            threshold = a
        else:
            break
    return Cluster(n, m, float(ln), float(gamma), basis, table, threshold)


# ---------------------------------------------------------------------------
# boundary Gram form
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GramDiag:
    """``gram`` in the input basis; ``rotation[:, i]`` are the coefficients of
    the i-th diagonalising basis vector, whose Gram value is ``mu[i]``."""

    gram: np.ndarray
    mu: np.ndarray
    rotation: np.ndarray

    def rotate(self, fields):
        """Apply the rotation to a stack of fields (columns of an array, or a list)."""
        if isinstance(fields, np.ndarray) and fields.ndim == 2:
            return fields @ self.rotation
        return [sum(self.rotation[j, i] * np.asarray(fields[j]) for j in range(len(fields))) for i in range(len(self.mu))]


Quadrature = Union[np.ndarray, Sequence[float], Callable[[np.ndarray, np.ndarray], float], None]


def _inner(quad: Quadrature):
    if quad is None:
        return lambda f, g: float(np.dot(f, g))
    if callable(quad):
        return quad
    if hasattr(quad, "shape") and len(quad.shape) == 2:
        return lambda f, g: float(np.asarray(f) @ (quad @ np.asarray(g)))
    w = np.asarray(quad, dtype=float)
    return lambda f, g: float(np.sum(w * np.asarray(f) * np.asarray(g)))


def gram_diag(normal_derivatives, quad: Quadrature = None, rtol: float = 1e-10) -> GramDiag:
    """Diagonalise ``G_ij = int_b g_i g_j`` for boundary fields ``g_i``.

    ``quad`` is a boundary mass matrix, a vector of weights, a callable inner
    product, or ``None`` for counting measure.  A symmetric Gram matrix is
    also accepted directly via ``quad="gram"``.

    Raises
    ------
    GramError
        If the smallest eigenvalue is not positive beyond ``rtol`` times the
        largest, which means the fluxes are (numerically) linearly dependent.
    """
    if isinstance(quad, str) and quad == "gram":
        G = np.asarray(normal_derivatives, dtype=float)
    else:
        ip = _inner(quad)
        fs = [np.asarray(g, dtype=float) for g in normal_derivatives]
        m = len(fs)
        G = np.empty((m, m))
        for i in range(m):
            for j in range(i, m):
                G[i, j] = G[j, i] = ip(fs[i], fs[j])
    G = 0.5 * (G + G.T)
    w, V = la.eigh(G)
    order = np.argsort(-w, kind="stable")
    w, V = w[order], V[:, order]
    if not w[-1] > rtol * max(abs(w[0]), 1e-300):
        raise GramError(f"boundary Gram matrix not positive definite (eigenvalues {w.tolist()})")
    # deterministic orientation: largest component of each column positive
    for i in range(V.shape[1]):
        if V[np.argmax(np.abs(V[:, i])), i] < 0:
            V[:, i] = -V[:, i]
    return GramDiag(G, w, V)


# ---------------------------------------------------------------------------
# rates and expansion reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r2: float
    used: int
    exact: int = 0


def fit_rate(alphas: Sequence[float], errors: Sequence[float], min_points: int = 4) -> RateFit:
    """Least-squares line through ``(log alpha, log error)``.

    Zero errors count as exact and are skipped; at least ``min_points``
    positive errors are required.
    """
    a = np.asarray(alphas, dtype=float)
    e = np.asarray(errors, dtype=float)
    if a.shape != e.shape:
        raise ValueError("alphas and errors differ in length")
    if np.any(e < 0) or np.any(~np.isfinite(e)):
        raise ValueError("errors must be finite and non-negative")
    if np.any(a <= 0):
        raise ValueError("alphas must be positive")
    keep = e > 0
    used = int(keep.sum())
    if used < min_points:
        raise InsufficientGridError(f"{used} usable points, need {min_points}")
    x, y = np.log(a[keep]), np.log(e[keep])
    slope, intercept = np.polyfit(x, y, 1)
    fit = slope * x + intercept
    ss_res = float(np.sum((y - fit) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return RateFit(float(slope), float(intercept), r2, used, int((~keep).sum()))


@dataclass(frozen=True)
class ExpansionRow:
    n: int
    i: int
    alpha: float
    observed: float
    predicted: float

    @property
    def residual(self) -> float:
        return self.observed - self.predicted


@dataclass
class ExpansionReport:
    rows: List[ExpansionRow]
    slopes: Dict[int, RateFit]
    omega: Dict[float, float] = field(default_factory=dict)
    rho: Dict[float, float] = field(default_factory=dict)

    def branch(self, i: int) -> List[ExpansionRow]:
        return [r for r in self.rows if r.i == i]

    @property
    def worst_slope(self) -> float:
        """Largest (slowest) slope over the branches: the uniform-in-i rate."""
        return max(f.slope for f in self.slopes.values())


def predict_and_compare(cluster: Cluster, gd: GramDiag, min_points: int = 4) -> ExpansionReport:
    """Observed deficits against ``mu_i / alpha``, with a residual slope per branch.

    Pairing: the largest ``mu`` goes with the lowest Robin value.  Only alphas
    at or above the cluster threshold enter the fit.
    """
    if len(gd.mu) != cluster.m:
        raise ValueError(f"Gram has {len(gd.mu)} eigenvalues, cluster multiplicity is {cluster.m}")
    if cluster.threshold is None:
        raise InsufficientGridError("no tabulated alpha lies past the attachment threshold")
    alphas = [a for a in cluster.alphas if a >= cluster.threshold]
    if len(alphas) < min_points:
        raise InsufficientGridError(f"{len(alphas)} alphas past the threshold, need {min_points}")
    rows = []
    for a in alphas:
        vals = cluster.robin_by_alpha[a]
        for i in range(cluster.m):
            rows.append(ExpansionRow(cluster.n, i + 1, a, cluster.lambda_n - vals[i], gd.mu[i] / a))
    slopes = {}
    for i in range(1, cluster.m + 1):
        br = [r for r in rows if r.i == i]
        slopes[i] = fit_rate([r.alpha for r in br], [abs(r.residual) for r in br], min_points)
    return ExpansionReport(rows, slopes)


# ---------------------------------------------------------------------------
# remainder functionals
# ---------------------------------------------------------------------------


def omega_rho(fluxes, backend: Union[Exact1DBackend, FemBackend], alpha: float) -> Tuple[float, float]:
    """``omega`` = top eigenvalue of ``W``, ``rho`` = top singular value of ``R``.

    ``W_ij = int U_i U_j`` and ``R_ij = int_b (U_j - g_j / alpha) g_i`` where
    ``U_j`` solves the torsion problem with datum ``g_j``, the normal
    derivative of the j-th L2-orthonormal basis function.  Both are
    invariant under orthogonal changes of the basis.
    """
    m = len(fluxes)
    if isinstance(backend, FemBackend):
        cols = backend.solve_many(alpha, fluxes)
        Us = [cols[:, j] for j in range(m)]
    else:
        Us = [backend.solve(alpha, g).U for g in fluxes]
    W = np.empty((m, m))
    R = np.empty((m, m))
    for i in range(m):
        for j in range(m):
            W[i, j] = backend.l2_inner(Us[i], Us[j])
            d = backend.trace(Us[j]) - np.asarray(fluxes[j], dtype=float) / alpha
            R[i, j] = backend.boundary_inner(d, fluxes[i])
    omega = float(la.eigvalsh(0.5 * (W + W.T))[-1])
    rho = float(la.svdvals(R)[0])
    return omega, rho


# ---------------------------------------------------------------------------
# eigenfunction residuals (FEM)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EigenResidual:
    """Residuals of one Dirichlet basis function against the Robin cluster.

    ``r1 = ||phi - psi - U||_{H_alpha}`` and ``r2 = ||phi - psi||^2_{H_alpha}``
    with ``psi`` the normalised projection of ``phi`` on the Robin cluster and
    ``U`` the torsion minimiser with datum ``d_nu phi``.  ``flux_sq`` is
    ``int_b (d_nu phi)^2``; ``boundary_sq`` is ``int_b psi^2``.
    """

    i: int
    alpha: float
    r1: float
    r2: float
    flux_sq: float
    boundary_sq: float
    proj_norm: float

    @property
    def r2_ratio(self) -> float:
        """``alpha r2 / int (d_nu phi)^2``; tends to 1."""
        return self.alpha * self.r2 / self.flux_sq

    @property
    def boundary_ratio(self) -> float:
        """``alpha^2 int psi^2 / int (d_nu phi)^2``; tends to 1."""
        return self.alpha**2 * self.boundary_sq / self.flux_sq


def eigenfunction_residuals(
    backend: FemBackend,
    basis: np.ndarray,
    fluxes: Sequence[np.ndarray],
    robin_vectors: np.ndarray,
    alpha: float,
) -> List[EigenResidual]:
    """Residual report for each column of ``basis`` (ideally Gram-diagonal).

    ``robin_vectors`` holds the M-orthonormal Robin eigenvectors of the
    cluster as columns.

    Raises
    ------
    ClusterError
        If a projection has L2 norm below 1/2, meaning the Robin vectors do
        not belong to this cluster.
    """
    s: FemSystem = backend.sys
    basis = np.asarray(basis)
    if basis.ndim == 1:
        basis = basis[:, None]
    out = []
    for i in range(basis.shape[1]):
        phi = basis[:, i]
        p = l2_project(robin_vectors, phi, s.M)
        pn = math.sqrt(max(s.l2_inner(p, p), 0.0))
        if pn < 0.5:
            raise ClusterError(f"projection norm {pn:.3f} < 1/2 for basis vector {i + 1} at alpha={alpha:g}")
        psi = p / pn
        g = np.asarray(fluxes[i], dtype=float)
        U = backend.solve(alpha, g).U
        r1 = h_alpha_norm(s, alpha, phi - psi - U)
        r2 = h_alpha_norm(s, alpha, phi - psi) ** 2
        tr = s.trace(psi)
        out.append(EigenResidual(i + 1, alpha, r1, r2, s.boundary_inner(g, g), s.boundary_inner(tr, tr), pn))
    return out


def robin_derivative_check(system: FemSystem, alpha: float, index: int, dalpha: float) -> Tuple[float, float]:
    """Central difference of ``alpha -> lam^alpha_index`` and ``int_b phi^2``.

    The derivative of a simple Robin eigenvalue with respect to ``alpha``
    equals the boundary mass of its L2-normalised eigenfunction.
    """
    if not alpha - dalpha > 0:
        raise ValueError("need alpha - dalpha > 0")
    k = index
    up = robin_eigs(system, alpha + dalpha, k).values[k - 1]
    dn = robin_eigs(system, alpha - dalpha, k).values[k - 1]
    phi = robin_eigs(system, alpha, k).vectors[:, k - 1]
    return (up - dn) / (2.0 * dalpha), float(phi @ (system.B @ phi))
