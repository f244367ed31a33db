"""P1 finite elements for the Robin and Dirichlet Laplacian.

The weak Robin eigenproblem ``(K + alpha B) u = lam M u`` is assembled from

* ``K`` -- stiffness, ``int grad u . grad v``;
* ``M`` -- volume mass, ``int u v``;
* ``B`` -- boundary mass, ``int_{boundary} u v``, assembled edge by edge with
  ``(h_e / 6) [[2, 1], [1, 2]]``.

All element integrals are exact for affine elements.  Eigenproblems are
solved densely (LAPACK ``eigh`` on the Cholesky-reduced pencil), capped at
:data:`DENSE_CAP` unknowns.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, List, Sequence, Union

import numpy as np
import scipy.linalg as la
from scipy import sparse
from scipy.sparse import linalg as spla

from .geometry import TriMesh

__all__ = [
    "DENSE_CAP",
    "FemError",
    "FemSystem",
    "EigenPair",
    "Spectrum",
    "assemble",
    "element_stiffness",
    "element_mass",
    "robin_eigs",
    "neumann_eigs",
    "dirichlet_eigs",
    "variational_flux",
    "h_alpha_norm",
    "l2_project",
    "export_coo",
]

DENSE_CAP = 6000


class FemError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class FemSystem:
    """Assembled P1 matrices on one mesh.

    ``boundary_nodes`` lists the boundary nodes in loop order; boundary fields
    (arrays of length ``len(boundary_nodes)``) are indexed the same way, and
    ``boundary_index[v]`` is the position of node ``v`` in that list (``-1``
    for interior nodes).
    """

    mesh: TriMesh
    K: sparse.csr_matrix
    M: sparse.csr_matrix
    B: sparse.csr_matrix
    boundary_nodes: np.ndarray
    boundary_index: np.ndarray

    @property
    def n(self) -> int:
        return self.K.shape[0]

    @property
    def Bbb(self) -> sparse.csr_matrix:
        """Boundary mass restricted to boundary nodes (loop order)."""
        bn = self.boundary_nodes
        return self.B[bn][:, bn]

    @property
    def perimeter(self) -> float:
        return float(self.mesh.edge_lengths().sum())

    @property
    def area(self) -> float:
        return float(self.mesh.areas().sum())

    def trace(self, u: np.ndarray) -> np.ndarray:
        return np.asarray(u)[self.boundary_nodes]

    def extend(self, g: np.ndarray) -> np.ndarray:
        """Nodal vector equal to ``g`` on the boundary and zero inside."""
        out = np.zeros(self.n)
        out[self.boundary_nodes] = g
        return out

    def boundary_inner(self, f: np.ndarray, g: np.ndarray) -> float:
        return float(f @ (self.Bbb @ g))

    def l2_inner(self, u: np.ndarray, v: np.ndarray) -> float:
        return float(u @ (self.M @ v))

    def energy(self, u: np.ndarray) -> float:
        return float(u @ (self.K @ u))


def element_stiffness(p: np.ndarray) -> np.ndarray:
    """Stiffness matrices of triangles ``p`` with shape (T, 3, 2) -> (T, 3, 3)."""
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    area = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    # gradients of barycentric coordinates are rotated opposite edges / (2 area)
    e = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
    return np.einsum("tik,tjk->tij", e, e) / (4.0 * area)[:, None, None]


def element_mass(p: np.ndarray) -> np.ndarray:
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    area = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    ref = (np.ones((3, 3)) + np.eye(3)) / 12.0
    return area[:, None, None] * ref


def assemble(mesh: TriMesh) -> FemSystem:
    """Assemble stiffness, mass and boundary-mass matrices on ``mesh``."""
    t = mesh.triangles
    p = mesh.nodes[t]
    area = mesh.areas()
    if np.any(area < 1e-14 * area.mean()):
        k = int(np.argmin(area))
        raise FemError(f"degenerate triangle {k}: area {area[k]:.3e}")
    n = mesh.n_nodes
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    K = sparse.coo_matrix((element_stiffness(p).ravel(), (rows, cols)), shape=(n, n)).tocsr()
    M = sparse.coo_matrix((element_mass(p).ravel(), (rows, cols)), shape=(n, n)).tocsr()

    e = mesh.boundary_edges
    h = mesh.edge_lengths()
    loc = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
    brows = np.repeat(e, 2, axis=1).ravel()
    bcols = np.tile(e, (1, 2)).ravel()
    bvals = (h[:, None, None] * loc).ravel()
    B = sparse.coo_matrix((bvals, (brows, bcols)), shape=(n, n)).tocsr()

    bn = mesh.boundary_loop()
    index = np.full(n, -1, dtype=np.int64)
    index[bn] = np.arange(len(bn))
    # symmetrise away round-off from the summation order
    K = ((K + K.T) * 0.5).tocsr()
    M = ((M + M.T) * 0.5).tocsr()
    return FemSystem(mesh, K, M, B, bn, index)


# ---------------------------------------------------------------------------
# eigenproblems
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EigenPair:
    index: int
    value: float
    vector: np.ndarray


class Spectrum(Sequence[EigenPair]):
    """Ascending eigenvalues with M-orthonormal eigenvectors as columns."""

    def __init__(self, values: np.ndarray, vectors: np.ndarray):
        self.values = values
        self.vectors = vectors

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return Spectrum(self.values[i], self.vectors[:, i])
        return EigenPair(int(i) + 1 if i >= 0 else len(self) + i + 1, float(self.values[i]), self.vectors[:, i])

    def __iter__(self) -> Iterator[EigenPair]:
        for i in range(len(self)):
            yield self[i]


def _fix_signs(vecs: np.ndarray, M) -> np.ndarray:
    # deterministic sign: positive mean, else positive first significant entry
    mean = np.asarray(M @ np.ones(vecs.shape[0])) @ vecs
    for j in range(vecs.shape[1]):
        v = vecs[:, j]
        s = mean[j]
        if abs(s) < 1e-10 * np.abs(v).max():
            s = v[np.argmax(np.abs(v) > 1e-6 * np.abs(v).max())]
        if s < 0:
            vecs[:, j] = -v
    return vecs


def _dense_eigs(A, M, k: int) -> Spectrum:
    n = A.shape[0]
    if n > DENSE_CAP:
        raise FemError(f"system dimension {n} exceeds the dense eigensolver cap {DENSE_CAP}")
    if not 1 <= k <= n:
        raise FemError(f"requested {k} eigenpairs of a {n}-dimensional problem")
    Ad = A.toarray() if sparse.issparse(A) else np.asarray(A)
    Md = M.toarray() if sparse.issparse(M) else np.asarray(M)
    try:
        w, v = la.eigh(Ad, Md, subset_by_index=[0, k - 1], driver="gvx" if k < n else "gv")
    except la.LinAlgError as exc:
        raise FemError(f"factorization failed: {exc}") from None
    return Spectrum(w, _fix_signs(v, M))


def robin_eigs(sys: FemSystem, alpha: float, k: int) -> Spectrum:
    """First ``k`` eigenpairs of ``(K + alpha B) u = lam M u``.

    ``alpha = 0`` gives the Neumann problem.
    """
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    return _dense_eigs(sys.K + alpha * sys.B, sys.M, k)


def neumann_eigs(sys: FemSystem, k: int) -> Spectrum:
    return robin_eigs(sys, 0.0, k)


def dirichlet_eigs(sys: FemSystem, k: int) -> Spectrum:
    """First ``k`` Dirichlet eigenpairs by elimination of the boundary nodes.

    Eigenvectors are extended by exact zeros to the boundary.
    """
    inner = sys.mesh.interior_nodes()
    K = sys.K[inner][:, inner]
    M = sys.M[inner][:, inner]
    sp = _dense_eigs(K, M, k)
    vecs = np.zeros((sys.n, len(sp)))
    vecs[inner] = sp.vectors
    return Spectrum(sp.values, vecs)


# ---------------------------------------------------------------------------
# post-processing
# ---------------------------------------------------------------------------


def variational_flux(sys: FemSystem, u: np.ndarray, lam: float = 0.0, rhs_mode: str = "eigen") -> np.ndarray:
    """Recover the outward normal derivative of ``u`` on the boundary.

    Solves ``B_bb g = r_b`` where ``r = K u - lam M u`` tested against the
    boundary hat functions.  For a discrete Dirichlet eigenvector (or a
    discrete harmonic field with ``rhs_mode="harmonic"``) the residual vanishes
    at interior nodes, so ``v^T (K u - lam M u) = int_{boundary} g v`` holds
    for every discrete ``v``: a discrete Green identity.
    """
    if rhs_mode == "harmonic":
        lam = 0.0
    elif rhs_mode != "eigen":
        raise ValueError(f"rhs_mode must be 'eigen' or 'harmonic', got {rhs_mode!r}")
    r = sys.K @ u - lam * (sys.M @ u)
    rb = r[sys.boundary_nodes]
    return spla.spsolve(sys.Bbb.tocsc(), rb)


def boundary_midpoint_sq(sys: FemSystem, g: np.ndarray) -> float:
    """``int g^2`` with ``g`` sampled at edge midpoints (one value per edge)."""
    e = sys.boundary_index[sys.mesh.boundary_edges]
    mid = 0.5 * (g[e[:, 0]] + g[e[:, 1]])
    return float(np.sum(sys.mesh.edge_lengths() * mid**2))


def h_alpha_norm(sys: FemSystem, alpha: float, u: np.ndarray) -> float:
    """``sqrt(int |grad u|^2 + alpha int_{boundary} u^2)``."""
    val = float(u @ (sys.K @ u) + alpha * (u @ (sys.B @ u)))
    return float(np.sqrt(max(val, 0.0)))


def l2_project(basis: Union[np.ndarray, List[np.ndarray]], u: np.ndarray, M) -> np.ndarray:
    """M-orthogonal projection of ``u`` onto the span of an M-orthonormal basis."""
    Q = np.column_stack(basis) if isinstance(basis, (list, tuple)) else np.asarray(basis)
    if Q.ndim == 1:
        Q = Q[:, None]
    MQ = M @ Q
    G = Q.T @ MQ
    dev = np.abs(G - np.eye(G.shape[0])).max()
    if dev > 1e-8:
        raise FemError(f"basis is not M-orthonormal (Gram deviation {dev:.2e})")
    return Q @ (MQ.T @ u)


def export_coo(A, path: Union[str, Path]) -> None:
    """Write a sparse matrix as ``i j value`` lines."""
    C = sparse.coo_matrix(A)
    with open(path, "w") as fh:
        for i, j, v in zip(C.row.tolist(), C.col.tolist(), C.data.tolist()):
            fh.write(f"{i} {j} {v:.17g}\n")
