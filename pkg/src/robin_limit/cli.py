"""Command-line entry point ``robin-limit``.

``robin-limit run config.yaml``
    Run the checks listed in a YAML config and write ``report.csv`` and
    ``report.json`` to the configured output directory.
``robin-limit explain CHECK``
    Describe what a check verifies and how it decides pass/warn/fail.
``robin-limit mesh DOMAIN ARGS --h H -o FILE``
    Build a mesh and save it in the text format of :mod:`robin_limit.geometry`.

Config schema (YAML)::

    domain: {type: interval, length: 1}          # or rectangle {l, L},
                                                 # disk {R}, polygon {vertices}
    backend: exact1d                             # exact1d | separable | fem
    mesh_h: 0.05                                 # required for fem
    alpha_grid: [10, 100, 1000]                  # or {start, factor, count}
    clusters: [1]                                # Dirichlet indices n
    checks: [spectrum, expansion]
    output_dir: out
    seed: 42
    n_random: 5                                  # boundary data per torsion check
    min_fit_points: 3
    jobs: 1

Exit codes: 0 no failing rows, 1 at least one failing row, 2 usage or
config error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import tempfile
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import yaml

from . import __version__
from .asymptotics import (
    ClusterError,
    InsufficientGridError,
    build_cluster,
    eigenfunction_residuals,
    fit_rate,
    gram_diag,
    omega_rho,
)
from .exact1d import dirichlet_mode_1d, robin_eigen_1d
from .fem import assemble, dirichlet_eigs, robin_eigs, variational_flux
from .geometry import Disk, Interval, MeshError, Polygon, Rectangle, build_mesh, refine, save_mesh
from .separable import (
    disk_boundary_flux_sq,
    disk_spectrum,
    rect_boundary_gram,
    rect_dirichlet_spectrum,
    rect_robin_spectrum,
)
from .torsion import (
    AlphaWindowWarning,
    Exact1DBackend,
    FemBackend,
    check_bounds,
    monotonicity_check,
    random_boundary_data,
    torsion_solve,
)

CHECKS = ("spectrum", "torsion_bounds", "monotonicity", "expansion", "eigenfunctions", "omega_rho", "splitting", "rates")
BACKENDS = ("exact1d", "separable", "fem")
CSV_COLUMNS = ("check", "n", "i", "alpha", "observed", "predicted", "residual", "slope", "status", "note")

SUPPORT = {
    "spectrum": BACKENDS,
    "torsion_bounds": ("exact1d", "fem"),
    "monotonicity": ("exact1d", "fem"),
    "expansion": BACKENDS,
    "eigenfunctions": ("fem",),
    "omega_rho": ("exact1d", "fem"),
    "splitting": BACKENDS,
    "rates": BACKENDS,
}

EXPLAIN = {
    "spectrum": (
        "Robin eigenvalues lie strictly below the Dirichlet ones and increase to them as alpha grows.",
        "pass when 0 < lam^alpha_k < lam_k for every listed k and alpha.",
    ),
    "torsion_bounds": (
        "Boundary torsion T_alpha(f): energy identity T = int|grad U|^2 + alpha int_b U^2 = int_b f U, "
        "the sandwich (int f)^2/|b| <= alpha T <= ||f||^2, the harmonic-extension lower bound "
        "alpha||f||^4/(||grad U_f||^2 + alpha||f||^2) <= alpha T, and the trace estimates "
        "||alpha U - f||^2 <= 2||f|| ||grad U_f|| / sqrt(alpha) and ||alpha U - f|| <= ||d_nu U_f|| / alpha.",
        "pass when each inequality holds with slack >= -1e-8 (relative); the flux-based rate allows O(h).",
    ),
    "monotonicity": (
        "alpha -> alpha T_alpha(f) is C^1 and nondecreasing with derivative int |grad U_alpha|^2.",
        "pass when the central difference (dalpha = alpha/100) matches int |grad U|^2 to 1%.",
    ),
    "expansion": (
        "First-order eigenvalue expansion in the large-alpha limit: "
        "lam_n - lam^alpha_{n+i-1} = mu_{n,i}/alpha + o(1/alpha), mu_{n,i} the eigenvalues of the boundary "
        "Gram form int_b d_nu phi_i d_nu phi_j on the Dirichlet eigenspace (largest mu with lowest Robin value).",
        "pass when every deficit is positive and the residual decays faster than 1/alpha (fitted slope < -1).",
    ),
    "eigenfunctions": (
        "Eigenfunction expansion: phi - psi_alpha is, to leading order, the torsion minimiser with datum d_nu phi, "
        "so alpha ||phi - psi||^2_{H_alpha} -> int_b (d_nu phi)^2 and alpha^2 int_b psi^2 -> int_b (d_nu phi)^2.",
        "pass within 10% of the limit; warn otherwise (pre-asymptotic or outside the mesh window).",
    ),
    "omega_rho": (
        "Remainder functionals: omega (largest L2 mass of torsion minimisers over the eigenspace) and rho "
        "(largest boundary pairing defect of alpha U against normal derivatives) are o(1/alpha).",
        "pass when alpha*omega and alpha*rho decrease strictly along the alpha grid (exact zeros pass).",
    ),
    "splitting": (
        "A multiple Dirichlet eigenvalue splits under Robin conditions when the boundary Gram eigenvalues differ: "
        "alpha (lam^alpha_{i+1} - lam^alpha_i) -> mu_i - mu_{i+1}.",
        "pass when the Robin values are strictly distinct wherever the mu differ; the ratio to the limit is reported.",
    ),
    "rates": (
        "Fitted log-log slope of |expansion residual| against alpha for every cluster branch.",
        "pass when the slope is below -1 (the remainder is o(1/alpha)).",
    ),
}


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending field path."""


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass
class RunConfig:
    domain: object
    backend: str
    alpha_grid: List[float]
    clusters: List[int]
    checks: List[str]
    output_dir: Path
    mesh_h: Optional[float] = None
    seed: int = 42
    n_random: int = 5
    min_fit_points: int = 3
    jobs: int = 1
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def digest(self) -> str:
        blob = json.dumps({k: v for k, v in self.raw.items() if k != "output_dir"}, sort_keys=True, default=str)
        return hashlib.sha256((blob + __version__).encode()).hexdigest()[:16]


def _req(tree: dict, key: str, path: str):
    if key not in tree:
        raise ConfigError(f"{path}{key}: missing")
    return tree[key]


def _num(value, path: str, positive=True) -> float:
    try:
        x = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{path}: expected a number, got {value!r}") from None
    if positive and not (math.isfinite(x) and x > 0):
        raise ConfigError(f"{path}: must be positive, got {value!r}")
    return x


def _parse_domain(d) -> object:
    if not isinstance(d, dict):
        raise ConfigError("domain: expected a mapping")
    kind = str(_req(d, "type", "domain.")).lower()
    try:
        if kind == "interval":
            return Interval(_num(d.get("length", 1.0), "domain.length"))
        if kind == "rectangle":
            return Rectangle(_num(_req(d, "l", "domain."), "domain.l"), _num(_req(d, "L", "domain."), "domain.L"))
        if kind == "disk":
            return Disk(_num(d.get("R", 1.0), "domain.R"))
        if kind == "polygon":
            verts = _req(d, "vertices", "domain.")
            return Polygon(tuple((float(x), float(y)) for x, y in verts))
    except (MeshError, ValueError, TypeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"domain: {exc}") from None
    raise ConfigError(f"domain.type: unknown domain {kind!r}")


def _parse_grid(g) -> List[float]:
    if isinstance(g, dict):
        start = _num(_req(g, "start", "alpha_grid."), "alpha_grid.start")
        factor = _num(_req(g, "factor", "alpha_grid."), "alpha_grid.factor")
        count = int(_req(g, "count", "alpha_grid."))
        if count < 1 or factor <= 1:
            raise ConfigError("alpha_grid: need count >= 1 and factor > 1")
        grid = [start * factor**k for k in range(count)]
    elif isinstance(g, (list, tuple)):
        grid = [_num(a, f"alpha_grid[{k}]") for k, a in enumerate(g)]
    else:
        raise ConfigError("alpha_grid: expected a list or {start, factor, count}")
    if not grid or any(b <= a for a, b in zip(grid, grid[1:])):
        raise ConfigError("alpha_grid: must be non-empty and strictly increasing")
    return grid


def parse_config(tree: dict, base: Path = Path(".")) -> RunConfig:
    """Validate a config mapping (see the module docstring for the schema)."""
    if not isinstance(tree, dict):
        raise ConfigError("<root>: expected a mapping")
    domain = _parse_domain(_req(tree, "domain", ""))
    backend = str(_req(tree, "backend", ""))
    if backend not in BACKENDS:
        raise ConfigError(f"backend: must be one of {', '.join(BACKENDS)}, got {backend!r}")
    if backend == "exact1d" and not isinstance(domain, Interval):
        raise ConfigError("backend: exact1d requires an interval domain")
    if backend == "fem" and isinstance(domain, Interval):
        raise ConfigError("backend: fem needs a two-dimensional domain, got an interval")
    if backend == "separable" and not isinstance(domain, (Rectangle, Disk)):
        raise ConfigError("backend: separable supports rectangle and disk domains")
    if backend == "exact1d" and domain.length != 1.0:
        raise ConfigError("domain.length: the exact1d backend works on (0, 1)")
    mesh_h = None
    if backend == "fem":
        mesh_h = _num(_req(tree, "mesh_h", ""), "mesh_h")
    grid = _parse_grid(_req(tree, "alpha_grid", ""))
    clusters = tree.get("clusters", [1])
    if not isinstance(clusters, list) or not all(isinstance(c, int) and c >= 1 for c in clusters):
        raise ConfigError("clusters: expected a list of positive integers")
    checks = tree.get("checks", ["spectrum"])
    if not isinstance(checks, list):
        raise ConfigError("checks: expected a list")
    for k, c in enumerate(checks):
        if c not in CHECKS:
            raise ConfigError(f"checks[{k}]: unknown check {c!r}; valid: {', '.join(CHECKS)}")
        if backend not in SUPPORT[c]:
            raise ConfigError(f"checks[{k}]: {c} is not available on the {backend} backend")
    out = Path(tree.get("output_dir", "robin-limit-out"))
    if not out.is_absolute():
        out = base / out
    n_random = int(tree.get("n_random", 5))
    min_fit = int(tree.get("min_fit_points", 3))
    jobs = int(tree.get("jobs", 1))
    if n_random < 1 or min_fit < 2 or jobs < 1:
        raise ConfigError("n_random >= 1, min_fit_points >= 2 and jobs >= 1 required")
    seed = tree.get("seed", 42)
    if not isinstance(seed, int):
        raise ConfigError("seed: expected an integer")
    return RunConfig(domain, backend, grid, clusters, list(checks), out, mesh_h, seed, n_random, min_fit, jobs, dict(tree))


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        tree = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"<file>: cannot read {path}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"<file>: YAML parse error: {exc}") from None
    return parse_config(tree, path.parent)


# ---------------------------------------------------------------------------
# backends as seen by the checks
# ---------------------------------------------------------------------------


@dataclass
class Row:
    check: str
    n: int
    i: int
    alpha: float
    observed: float
    predicted: float
    residual: float
    slope: Optional[float]
    status: str
    note: str


class Study:
    """Spectra, clusters and torsion backend for one configuration."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.window = math.inf
        self.torsion = None
        if cfg.backend == "fem":
            self.sys = assemble(build_mesh(cfg.domain, cfg.mesh_h))
            self.torsion = FemBackend(self.sys)
            self.window = 0.1 / self.sys.mesh.h
            self.mult_tol = 10.0 * self.sys.mesh.h**2
        else:
            self.mult_tol = 1e-9
            if cfg.backend == "exact1d":
                self.torsion = Exact1DBackend()
        self.count = max(cfg.clusters) + 6
        self._robin: Dict[float, object] = {}
        self._dir = None

    # spectra -----------------------------------------------------------
    def dirichlet(self):
        if self._dir is None:
            c, d = self.count, self.cfg.domain
            if self.cfg.backend == "exact1d":
                self._dir = [dirichlet_mode_1d(k) for k in range(1, c + 1)]
            elif self.cfg.backend == "fem":
                self._dir = dirichlet_eigs(self.sys, c)
            elif isinstance(d, Rectangle):
                self._dir = rect_dirichlet_spectrum(d.l, d.L, c)
            else:
                self._dir = disk_spectrum(d.R, None, c)
        return self._dir

    def dirichlet_values(self) -> np.ndarray:
        s = self.dirichlet()
        return s.values if self.cfg.backend == "fem" else np.array([m.lam for m in s])

    def robin(self, alpha: float):
        if alpha not in self._robin:
            c, d = self.count, self.cfg.domain
            if self.cfg.backend == "exact1d":
                self._robin[alpha] = [robin_eigen_1d(k, alpha) for k in range(1, c + 1)]
            elif self.cfg.backend == "fem":
                self._robin[alpha] = robin_eigs(self.sys, alpha, c)
            elif isinstance(d, Rectangle):
                self._robin[alpha] = rect_robin_spectrum(d.l, d.L, alpha, c)
            else:
                self._robin[alpha] = disk_spectrum(d.R, alpha, c)
        return self._robin[alpha]

    def robin_values(self, alpha: float) -> np.ndarray:
        s = self.robin(alpha)
        return s.values if self.cfg.backend == "fem" else np.array([m.lam for m in s])

    # clusters ----------------------------------------------------------
    def cluster(self, n: int):
        table = {a: self.robin_values(a) for a in self.cfg.alpha_grid}
        return build_cluster(self.dirichlet_values(), table, n, self.mult_tol)

    def cluster_basis(self, n: int, m: int):
        """(GramDiag, rotated basis vectors or None, rotated fluxes or None)."""
        modes = self.dirichlet()
        idx = range(n - 1, n - 1 + m)
        b = self.cfg.backend
        if b == "exact1d":
            fl = [np.array(modes[k].trace_derivative) for k in idx]
            gd = gram_diag(fl)
            return gd, None, gd.rotate(fl)
        if b == "fem":
            vecs = modes.vectors[:, list(idx)]
            fl = [variational_flux(self.sys, vecs[:, j], modes.values[k]) for j, k in enumerate(idx)]
            gd = gram_diag(fl, self.sys.Bbb)
            return gd, gd.rotate(vecs), gd.rotate(fl)
        ms = [modes[k] for k in idx]
        if isinstance(self.cfg.domain, Rectangle):
            G = np.array([[rect_boundary_gram(p, q) for q in ms] for p in ms])
        else:
            R = self.cfg.domain.R
            # cos and sin branches are orthogonal on the circle
            G = np.diag([disk_boundary_flux_sq(R, md.k, md.s) for md in ms])
        return gram_diag(G, "gram"), None, None

    def status(self, ok: bool, alpha: float, soft: bool = False) -> str:
        """Outside the mesh window every quantitative row is downgraded to warn."""
        if alpha > self.window:
            return "warn"
        return "pass" if ok else ("warn" if soft else "fail")


# ---------------------------------------------------------------------------
# checks
# ---------------------------------------------------------------------------


def _window_note(st: Study, alpha: float, note: str) -> str:
    if alpha > st.window:
        return f"{note}; alpha > 0.1/h = {st.window:.4g} (outside mesh window)"
    return note


def check_spectrum(st: Study) -> List[Row]:
    rows = []
    lam = st.dirichlet_values()
    kmax = max(st.cfg.clusters) + 1
    for a in st.cfg.alpha_grid:
        rv = st.robin_values(a)
        for k in range(kmax):
            ok = 0.0 < rv[k] < lam[k]
            note = "0 < lam^alpha_k < lam_k" if ok else f"violated 0 < lam^alpha_k < lam_k: {rv[k]:.12g} vs {lam[k]:.12g}"
            rows.append(Row("spectrum", k + 1, 1, a, rv[k], lam[k], lam[k] - rv[k], None, st.status(ok, a), _window_note(st, a, note)))
    return rows


def _boundary_data(st: Study) -> np.ndarray:
    nb = 2 if st.cfg.backend == "exact1d" else len(st.sys.boundary_nodes)
    return random_boundary_data(nb, st.cfg.n_random, st.cfg.seed)


def check_torsion_bounds(st: Study) -> List[Row]:
    rows = []
    fs = _boundary_data(st)
    for a in st.cfg.alpha_grid:
        for j, f in enumerate(fs, start=1):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", AlphaWindowWarning)
                res = torsion_solve(st.torsion, a, f)
                rep = check_bounds(st.torsion, a, f)
            ok = res.identity_residual <= 1e-9
            rows.append(
                Row("torsion_bounds", 0, j, a, res.grad_energy + res.boundary_energy, res.load,
                    res.identity_residual, None, st.status(ok, a),
                    _window_note(st, a, "identity grad+boundary energy = int f U (relative residual)"))
            )
            for c in rep.checks:
                note = f"{c.name}: lhs <= rhs" if c.ok else f"violated {c.name}: lhs {c.lhs:.12g} > rhs {c.rhs:.12g}"
                rows.append(Row("torsion_bounds", 0, j, a, c.lhs, c.rhs, c.slack, None, st.status(c.ok, a), _window_note(st, a, note)))
    return rows


def check_monotonicity(st: Study) -> List[Row]:
    rows = []
    fs = _boundary_data(st)
    for j, f in enumerate(fs, start=1):
        prev = None
        for a in st.cfg.alpha_grid:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", AlphaWindowWarning)
                fd, grad = monotonicity_check(st.torsion, a, f, a / 100.0)
                aT = a * torsion_solve(st.torsion, a, f).T
            rel = abs(fd - grad) / max(abs(grad), 1e-300)
            ok = rel <= 1e-2 and (prev is None or aT >= prev * (1 - 1e-12))
            note = "d(alpha T)/dalpha = int|grad U|^2 and alpha T nondecreasing"
            if not ok:
                note = f"violated: fd {fd:.12g} vs int|grad U|^2 {grad:.12g}; alpha T {aT:.12g} after {prev!r}"
            rows.append(Row("monotonicity", 0, j, a, fd, grad, fd - grad, None, st.status(ok, a), _window_note(st, a, note)))
            prev = aT
    return rows


def _expansion(st: Study, n: int):
    cl = st.cluster(n)
    gd = st.cluster_basis(n, cl.m)[0]
    out = []
    for i in range(cl.m):
        alphas, obs, pred = [], [], []
        for a in cl.alphas:
            alphas.append(a)
            obs.append(cl.lambda_n - cl.robin_by_alpha[a][i])
            pred.append(gd.mu[i] / a)
        res = [o - p for o, p in zip(obs, pred)]
        usable = [k for k, a in enumerate(alphas) if cl.threshold is not None and a >= cl.threshold]
        try:
            fit = fit_rate([alphas[k] for k in usable], [abs(res[k]) for k in usable], st.cfg.min_fit_points)
        except InsufficientGridError as exc:
            fit = exc
        out.append((i + 1, alphas, obs, pred, res, fit))
    return cl, gd, out


def check_expansion(st: Study) -> List[Row]:
    rows = []
    for n in st.cfg.clusters:
        cl, gd, branches = _expansion(st, n)
        for i, alphas, obs, pred, res, fit in branches:
            slope = fit.slope if not isinstance(fit, Exception) else None
            for a, o, p, r in zip(alphas, obs, pred, res):
                ok = o > 0 and slope is not None and slope < -1.0
                if o <= 0:
                    note = f"violated deficit > 0: lam_n {cl.lambda_n:.12g} vs lam^alpha {cl.lambda_n - o:.12g}"
                elif slope is None:
                    note = f"violated: rate fit unavailable ({fit})"
                elif not ok:
                    note = f"violated slope < -1: slope {slope:.4f}"
                else:
                    note = f"deficit vs mu_{{n,{i}}}/alpha; m={cl.m}"
                rows.append(Row("expansion", n, i, a, o, p, r, slope, st.status(ok, a), _window_note(st, a, note)))
    return rows


def check_rates(st: Study) -> List[Row]:
    rows = []
    for n in st.cfg.clusters:
        cl, gd, branches = _expansion(st, n)
        for i, alphas, obs, pred, res, fit in branches:
            a = alphas[-1]
            if isinstance(fit, Exception):
                rows.append(Row("rates", n, i, a, math.nan, -1.0, math.nan, None, "fail", f"rate fit failed: {fit}"))
                continue
            ok = fit.slope < -1.0
            note = f"slope < -1 (r2={fit.r2:.4f}, points={fit.used}, exact={fit.exact})"
            if not ok:
                note = f"violated slope < -1: slope {fit.slope:.4f} vs -1"
            rows.append(Row("rates", n, i, a, fit.slope, -1.0, fit.slope + 1.0, fit.slope, st.status(ok, a), _window_note(st, a, note)))
    return rows


def check_splitting(st: Study) -> List[Row]:
    rows = []
    for n in st.cfg.clusters:
        cl = st.cluster(n)
        if cl.m < 2:
            continue
        gd = st.cluster_basis(n, cl.m)[0]
        for i in range(cl.m - 1):
            dmu = gd.mu[i] - gd.mu[i + 1]
            split = dmu > 1e-9 * gd.mu[0]
            for a in cl.alphas:
                gap = cl.robin_by_alpha[a][i + 1] - cl.robin_by_alpha[a][i]
                ok = gap > 0 if split else True
                if not ok:
                    note = f"violated lam^alpha_{{i+1}} > lam^alpha_i: {cl.robin_by_alpha[a][i + 1]:.15g} vs {cl.robin_by_alpha[a][i]:.15g}"
                elif split:
                    note = f"alpha*gap / (mu_i - mu_(i+1)) = {a * gap / dmu:.6f}"
                else:
                    note = "equal mu: no first-order splitting predicted"
                rows.append(Row("splitting", n, i + 1, a, a * gap, dmu, a * gap - dmu, None, st.status(ok, a), _window_note(st, a, note)))
    return rows


def check_omega_rho(st: Study) -> List[Row]:
    rows = []
    for n in st.cfg.clusters:
        cl = st.cluster(n)
        _, _, fluxes = st.cluster_basis(n, cl.m)
        prev = [None, None]
        for a in st.cfg.alpha_grid:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", AlphaWindowWarning)
                om, rh = omega_rho(fluxes, st.torsion, a)
            for k, (name, val) in enumerate((("alpha*omega", a * om), ("alpha*rho", a * rh))):
                scale = a * max(om, rh, 1e-300)
                exact_zero = val <= 1e-13 * max(scale, 1.0)
                ok = prev[k] is None or exact_zero or val < prev[k]
                ref = prev[k] if prev[k] is not None else val
                note = f"{name} decreasing" if ok else f"violated {name} decreasing: {val:.12g} >= previous {prev[k]:.12g}"
                rows.append(Row("omega_rho", n, k + 1, a, val, ref, val - ref, None, st.status(ok, a), _window_note(st, a, note)))
                prev[k] = val
    return rows


def check_eigenfunctions(st: Study) -> List[Row]:
    rows = []
    for n in st.cfg.clusters:
        cl = st.cluster(n)
        _, basis, fluxes = st.cluster_basis(n, cl.m)
        for a in st.cfg.alpha_grid:
            vecs = st.robin(a).vectors[:, n - 1 : n - 1 + cl.m]
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", AlphaWindowWarning)
                try:
                    report = eigenfunction_residuals(st.torsion, basis, fluxes, vecs, a)
                except ClusterError as exc:
                    rows.append(Row("eigenfunctions", n, 0, a, math.nan, math.nan, math.nan, None, "fail", f"violated attachment: {exc}"))
                    continue
            for er in report:
                for label, obs in (("alpha*r2", a * er.r2), ("alpha^2*int_b psi^2", a * a * er.boundary_sq)):
                    ok = abs(obs / er.flux_sq - 1.0) <= 0.1
                    note = f"{label} vs int_b (d_nu phi)^2 (ratio {obs / er.flux_sq:.4f}); alpha*r1={a * er.r1:.4g}"
                    rows.append(Row("eigenfunctions", n, er.i, a, obs, er.flux_sq, obs - er.flux_sq, None,
                                    st.status(ok, a, soft=True), _window_note(st, a, note)))
    return rows


CHECK_FUNCS = {
    "spectrum": check_spectrum,
    "torsion_bounds": check_torsion_bounds,
    "monotonicity": check_monotonicity,
    "expansion": check_expansion,
    "eigenfunctions": check_eigenfunctions,
    "omega_rho": check_omega_rho,
    "splitting": check_splitting,
    "rates": check_rates,
}


# ---------------------------------------------------------------------------
# reports and cache
# ---------------------------------------------------------------------------


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return "nan" if math.isnan(x) else f"{x:.12g}"
    return str(x)


def rows_to_csv(rows: Sequence[Row]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def cache_root() -> Path:
    env = os.environ.get("ROBIN_LIMIT_CACHE")
    if env:
        return Path(env)
    return Path(os.environ.get("XDG_CACHE_HOME", Path.home() / ".cache")) / "robin-limit"


def _json_float(x):
    if x is None or (isinstance(x, float) and not math.isfinite(x)):
        return None if x is None else repr(x)
    return float(x)


def _row_to_json(r: Row) -> dict:
    d = asdict(r)
    for k in ("alpha", "observed", "predicted", "residual", "slope"):
        d[k] = _json_float(d[k])
    return d


def _row_from_json(d: dict) -> Row:
    for k in ("alpha", "observed", "predicted", "residual", "slope"):
        if isinstance(d[k], str):
            d[k] = float(d[k])
    return Row(**d)


def run(cfg: RunConfig, use_cache: bool = True) -> List[Row]:
    """Execute the configured checks and write the reports; return all rows."""
    cdir = cache_root() / cfg.digest
    study = None
    results: Dict[str, List[Row]] = {}
    todo = []
    for name in cfg.checks:
        cpath = cdir / f"{name}.json"
        if use_cache and cpath.exists():
            try:
                results[name] = [_row_from_json(d) for d in json.loads(cpath.read_text())]
                continue
            except (ValueError, TypeError, KeyError):
                pass
        todo.append(name)
    if todo:
        study = Study(cfg)
        # the study caches spectra lazily; warm them once so workers only read
        if any(c != "torsion_bounds" and c != "monotonicity" for c in todo):
            study.dirichlet()
            for a in cfg.alpha_grid:
                study.robin(a)
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            futs = {name: pool.submit(CHECK_FUNCS[name], study) for name in todo}
            for name in todo:
                results[name] = futs[name].result()
                if use_cache:
                    _atomic_write(cdir / f"{name}.json", json.dumps([_row_to_json(r) for r in results[name]]))
    rows = [r for name in cfg.checks for r in results[name]]

    out = cfg.output_dir
    _atomic_write(out / "report.csv", rows_to_csv(rows))
    counts = {s: sum(r.status == s for r in rows) for s in ("pass", "warn", "fail")}
    doc = {
        "version": __version__,
        "config_hash": cfg.digest,
        "backend": cfg.backend,
        "seed": cfg.seed,
        "random_data": {"generator": "numpy PCG64 (default_rng)", "seed": cfg.seed, "distribution": "uniform[-1,1]"},
        "summary": counts,
        "rows": [_row_to_json(r) for r in rows],
    }
    _atomic_write(out / "report.json", json.dumps(doc, indent=1, sort_keys=True) + "\n")
    return rows


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _domain_from_args(kind: str, values: List[float]):
    if kind == "rectangle":
        if len(values) != 2:
            raise ConfigError("rectangle needs two side lengths: l L")
        return Rectangle(*values)
    if kind == "disk":
        if len(values) != 1:
            raise ConfigError("disk needs one radius")
        return Disk(values[0])
    if kind == "polygon":
        if len(values) < 6 or len(values) % 2:
            raise ConfigError("polygon needs at least three x y vertex pairs")
        return Polygon(tuple(zip(values[0::2], values[1::2])))
    raise ConfigError(f"unknown domain {kind!r}; use rectangle, disk or polygon")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="robin-limit", description="Large-alpha Robin Laplacian verification toolkit.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the checks of a YAML config")
    r.add_argument("config")
    r.add_argument("--no-cache", action="store_true", help="recompute every check and do not store results")
    e = sub.add_parser("explain", help="describe a check")
    e.add_argument("check")
    m = sub.add_parser("mesh", help="build and save a triangle mesh")
    m.add_argument("domain", choices=("rectangle", "disk", "polygon"))
    m.add_argument("values", nargs="+", type=float, help="l L | R | x1 y1 x2 y2 ...")
    m.add_argument("--h", type=float, required=True, help="target edge length")
    m.add_argument("--refine", type=int, default=0, help="extra uniform refinements")
    m.add_argument("-o", "--output", required=True)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2

    if args.command == "explain":
        if args.check not in EXPLAIN:
            print(f"unknown check {args.check!r}; valid checks: {', '.join(CHECKS)}", file=sys.stderr)
            return 2
        what, crit = EXPLAIN[args.check]
        print(f"{args.check}: {what}\ncriterion: {crit}\nbackends: {', '.join(SUPPORT[args.check])}")
        return 0

    if args.command == "mesh":
        try:
            dom = _domain_from_args(args.domain, args.values)
            mesh = build_mesh(dom, args.h)
            for _ in range(args.refine):
                mesh = refine(mesh)
            save_mesh(mesh, args.output)
        except (ConfigError, MeshError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        print(f"wrote {args.output}: {mesh.n_nodes} nodes, {mesh.n_triangles} triangles, h={mesh.h:.4g}")
        return 0

    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    rows = run(cfg, use_cache=not args.no_cache)
    counts = {s: sum(r.status == s for r in rows) for s in ("pass", "warn", "fail")}
    print(f"{len(rows)} rows: {counts['pass']} pass, {counts['warn']} warn, {counts['fail']} fail -> {cfg.output_dir}")
    for r in rows:
        if r.status == "fail":
            print(f"FAIL {r.check} n={r.n} i={r.i} alpha={r.alpha:g}: {r.note}")
    return 1 if counts["fail"] else 0


if __name__ == "__main__":
    sys.exit(main())
