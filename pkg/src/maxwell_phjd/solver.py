"""Jacobi-Davidson drivers for the principal Maxwell eigenpair.

``run`` is the two-level preconditioned Helmholtz-Jacobi-Davidson iteration:
coarse eigenpair as the start, a Schwarz-preconditioned correction made
M-orthogonal to the iterate, a Helmholtz projection that removes gradient
components, and Rayleigh-Ritz on the growing search space. ``run_plain_jd``
solves the projected correction equation exactly instead, through a bordered
linear system.

The start vector is iterate 1 and ``max_iterations`` caps the iterate index,
so at most ``max_iterations - 1`` corrections are made. The report's
``iterations`` is the number of corrections performed.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from . import schwarz
from .edgefem import AssembledOperators
from .errors import ConfigurationError, SingularMatrix
from .hierarchy import Hierarchy, SubdomainCover
from .sparsela import cg_solve, dense_geneig, lu_factor, lu_solve, m_orthonormalize

log = logging.getLogger(__name__)

METHODS = ("phjd", "plain_jd")


@dataclass(frozen=True)
class SolverConfig:
    method: str = "phjd"
    # None picks the per-dimension default in resolved(); 0 disables a criterion
    tol_resnorm: float | None = None
    tol_dlambda: float | None = None
    max_iterations: int = 50
    overlap_ratio: float = 0.25
    helmholtz_rel_tol: float = 1e-12
    mass_solve_rel_tol: float = 1e-12
    zero_mode_threshold: float = 1e-8
    max_basis: int = 30
    guard_epsilon: float = schwarz.GUARD_EPSILON
    threads: int = 1

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigurationError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.max_iterations < 1:
            raise ConfigurationError("max_iterations must be >= 1")
        for name in ("helmholtz_rel_tol", "mass_solve_rel_tol", "zero_mode_threshold", "overlap_ratio"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        for name in ("tol_resnorm", "tol_dlambda"):
            value = getattr(self, name)
            if value is not None and value < 0:
                raise ConfigurationError(f"{name} must be non-negative")

    def resolved(self, dim: int) -> "SolverConfig":
        """Fill unset tolerances: 2D stops on the eigenvalue change, 3D on the residual."""
        if dim == 2:
            defaults = {"tol_dlambda": 1e-8, "tol_resnorm": 0.0}
        else:
            defaults = {"tol_dlambda": 0.0, "tol_resnorm": 1e-5}
        if self.tol_resnorm is not None or self.tol_dlambda is not None:
            defaults = {"tol_dlambda": 0.0, "tol_resnorm": 0.0}
        return replace(
            self,
            tol_resnorm=self.tol_resnorm if self.tol_resnorm is not None else defaults["tol_resnorm"],
            tol_dlambda=self.tol_dlambda if self.tol_dlambda is not None else defaults["tol_dlambda"],
        )


@dataclass(frozen=True)
class HistoryEntry:
    k: int
    lam: float
    dlambda: float
    resnorm: float
    divergence: float


@dataclass
class IterationState:
    k: int
    lam: float
    x: np.ndarray
    W: np.ndarray
    KW: np.ndarray
    history: list[HistoryEntry] = field(default_factory=list)


@dataclass
class SolveReport:
    converged: bool
    lam: float
    iterations: int
    final_resnorm: float
    final_dlambda: float
    history: list[HistoryEntry]
    dof: int
    lambda_coarse: float = math.nan
    stagnated: bool = False
    warnings: list[str] = field(default_factory=list)
    x: np.ndarray | None = field(default=None, repr=False, compare=False)


def divergence(ops: AssembledOperators, x: np.ndarray) -> float:
    """Relative size of the discrete divergence ||G^T M x|| / ||M x||."""
    Mx = ops.M @ x
    return float(np.linalg.norm(ops.G.T @ Mx) / max(np.linalg.norm(Mx), 1e-300))


def rayleigh_quotient(ops: AssembledOperators, x: np.ndarray) -> float:
    return float((x @ (ops.K @ x)) / (x @ (ops.M @ x)))


def m_normalize(ops: AssembledOperators, x: np.ndarray) -> np.ndarray:
    return x / math.sqrt(float(x @ (ops.M @ x)))


def helmholtz_project(ops: AssembledOperators, e: np.ndarray, cfg: SolverConfig = SolverConfig()):
    """Remove the discrete gradient part of ``e``; returns (t, p) with t = e - G p."""
    rhs = ops.G.T @ (ops.M @ e)
    if not np.any(rhs):
        return e.copy(), np.zeros(ops.G.shape[1])
    p = cg_solve(ops.L, rhs, rel_tol=cfg.helmholtz_rel_tol)
    return e - ops.G @ p, p


def residual(ops: AssembledOperators, x: np.ndarray, lam: float, cfg: SolverConfig = SolverConfig()):
    """M-weighted residual g = lam M x - K x and its b-norm sqrt(g^T M^{-1} g)."""
    g = lam * (ops.M @ x) - ops.K @ x
    if not np.any(g):
        return g, 0.0
    rho = cg_solve(ops.M, g, rel_tol=cfg.mass_solve_rel_tol)
    return g, math.sqrt(max(float(g @ rho), 0.0))


def initial_guess(hier: Hierarchy, ops_fine: AssembledOperators, ops_coarse: AssembledOperators,
                  cfg: SolverConfig = SolverConfig()):
    """Coarse principal pair, prolongated and Helmholtz-projected on the fine level.

    Returns ``(lam1, u1, lam1_coarse)``.
    """
    if ops_coarse.n_dof == 0:
        raise ConfigurationError("coarse mesh has no interior edges; refine the coarse grid")
    w, V = dense_geneig(ops_coarse.K.toarray(), ops_coarse.M.toarray())
    keep = np.flatnonzero(w >= cfg.zero_mode_threshold * w[-1])
    if len(keep) == 0 or w[-1] <= 0:
        raise ConfigurationError("coarse pencil has no eigenvalue above the kernel threshold; refine the coarse grid")
    j = keep[0]
    u = hier.prolongation @ V[:, j]
    u, _ = helmholtz_project(ops_fine, u, cfg)
    u = m_normalize(ops_fine, u)
    return rayleigh_quotient(ops_fine, u), u, float(w[j])


def correction_step(x: np.ndarray, pc, g: np.ndarray, M, warnings: list | None = None):
    """Preconditioned correction made M-orthogonal to ``x``; returns (e, beta).

    ``pc`` is anything with an ``apply`` method acting on M-weighted vectors.
    """
    Mx = M @ x
    c_r = pc.apply(g)
    c_u = pc.apply(Mx)
    den = float(c_u @ Mx)
    if abs(den) < 1e-14 * np.linalg.norm(c_u) * np.linalg.norm(Mx) or den == 0.0:
        msg = "degenerate orthogonalization denominator; using beta = 0"
        log.warning(msg)
        if warnings is not None:
            warnings.append(msg)
        beta = 0.0
    else:
        beta = -float(c_r @ Mx) / den
    return c_r + beta * c_u, beta


def start_state(ops: AssembledOperators, lam: float, x: np.ndarray) -> IterationState:
    x = m_normalize(ops, x)
    return IterationState(1, lam, x, x[:, None].copy(), (ops.K @ x)[:, None])


def rayleigh_ritz(state: IterationState, t: np.ndarray, ops: AssembledOperators) -> bool:
    """Extend the search space by ``t`` and move to the smallest Ritz pair.

    Updates ``state`` in place (k, lam, x, W, KW). Returns False, leaving the
    state untouched, when ``t`` is linearly dependent on the current space.
    """
    new = m_orthonormalize([t], ops.M, against=list(state.W.T))
    if not new:
        return False
    w = new[0]
    W = np.column_stack([state.W, w])
    KW = np.column_stack([state.KW, ops.K @ w])
    H = W.T @ KW
    vals, vecs = dense_geneig(0.5 * (H + H.T), np.eye(H.shape[0]), method="jacobi")
    x = m_normalize(ops, W @ vecs[:, 0])
    state.W, state.KW, state.x = W, KW, x
    state.lam = rayleigh_quotient(ops, x)
    state.k += 1
    return True


def _iterate(cfg: SolverConfig, ops: AssembledOperators, state: IterationState, correct,
             project: bool, report_extra: dict) -> SolveReport:
    warnings: list[str] = report_extra.setdefault("warnings", [])
    stagnated = False
    converged = False
    dlam = math.nan
    g, rn = residual(ops, state.x, state.lam, cfg)
    state.history.append(HistoryEntry(state.k, state.lam, math.nan, rn, divergence(ops, state.x)))
    while True:
        if rn <= 1e-12 * max(abs(state.lam), 1.0):
            converged = True  # already an eigenpair to working precision
            break
        if state.k >= cfg.max_iterations or state.W.shape[1] >= cfg.max_basis:
            converged = rn < cfg.tol_resnorm
            if state.W.shape[1] >= cfg.max_basis:
                warnings.append(f"search space reached max_basis={cfg.max_basis}")
            break
        e = correct(state, g, warnings)
        t = helmholtz_project(ops, e, cfg)[0] if project else e
        lam_prev, rn_prev = state.lam, rn
        if not rayleigh_ritz(state, t, ops):
            stagnated = True
            warnings.append(f"correction dependent on the search space at k={state.k}; stopping")
            dlam = 0.0
            converged = rn_prev < cfg.tol_resnorm or dlam < cfg.tol_dlambda
            break
        dlam = abs(state.lam - lam_prev)
        g, rn = residual(ops, state.x, state.lam, cfg)
        state.history.append(HistoryEntry(state.k, state.lam, dlam, rn, divergence(ops, state.x)))
        if rn_prev < cfg.tol_resnorm or dlam < cfg.tol_dlambda:
            converged = True
            rn = rn_prev
            break
    return SolveReport(
        converged=converged, lam=state.lam, iterations=state.k - 1, final_resnorm=rn,
        final_dlambda=dlam, history=state.history, dof=ops.n_dof, stagnated=stagnated,
        warnings=warnings, x=state.x, lambda_coarse=report_extra.get("lambda_coarse", math.nan),
    )


def run(cfg: SolverConfig, hier: Hierarchy, cover: SubdomainCover, ops_fine: AssembledOperators,
        ops_coarse: AssembledOperators) -> SolveReport:
    """Two-level PHJD. ``final_resnorm`` is ||r^k||_b of the iterate the last correction used."""
    cfg = cfg.resolved(hier.fine.dim)
    lam1, x1, lam_h = initial_guess(hier, ops_fine, ops_coarse, cfg)
    state = start_state(ops_fine, lam1, x1)

    def correct(st, g, warnings):
        pc = schwarz.setup(ops_fine, ops_coarse, hier, cover, st.lam, cfg.guard_epsilon, cfg.threads)
        if pc.guarded:
            warnings.append(f"k={st.k}: shift perturbed for {', '.join(pc.guarded)}")
        return correction_step(st.x, pc, g, ops_fine.M, warnings)[0]

    return _iterate(cfg, ops_fine, state, correct, True, {"lambda_coarse": lam_h})


def bordered_correction(ops: AssembledOperators, x: np.ndarray, lam: float, g: np.ndarray,
                        guard_epsilon: float = schwarz.GUARD_EPSILON) -> np.ndarray:
    """Exact solution of the projected correction equation, e with x^T M e = 0."""
    Mx = (ops.M @ x)[:, None]
    n = ops.n_dof

    def bordered(shift):
        A = ops.K - shift * ops.M
        return sp.bmat([[A, sp.csr_matrix(Mx)], [sp.csr_matrix(Mx.T), None]], format="csc")

    try:
        F = lu_factor(bordered(lam))
    except SingularMatrix:
        F = lu_factor(bordered(lam * (1.0 + guard_epsilon)))
    sol = lu_solve(F, np.concatenate([g, [0.0]]))
    return sol[:n]


def run_plain_jd(cfg: SolverConfig, ops_fine: AssembledOperators, x0: np.ndarray | None = None,
                 helmholtz_projection: bool = True, dim: int = 2) -> SolveReport:
    """Jacobi-Davidson with the exact bordered correction solve.

    Without ``x0`` the start is a fixed pseudo-random vector (projected when
    ``helmholtz_projection`` is on). Turning the projection off lets the
    iterates fall into the gradient kernel; the history's ``divergence``
    column shows the drift.
    """
    cfg = cfg.resolved(dim)
    if x0 is None:
        x0 = np.random.default_rng(0).standard_normal(ops_fine.n_dof)
    x = np.asarray(x0, dtype=float)
    if helmholtz_projection:
        x = helmholtz_project(ops_fine, x, cfg)[0]
    x = m_normalize(ops_fine, x)
    state = start_state(ops_fine, rayleigh_quotient(ops_fine, x), x)

    def correct(st, g, warnings):
        return bordered_correction(ops_fine, st.x, st.lam, g, cfg.guard_epsilon)

    return _iterate(cfg, ops_fine, state, correct, helmholtz_projection, {})
