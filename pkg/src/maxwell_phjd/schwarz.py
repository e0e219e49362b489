"""Two-level additive Schwarz preconditioner for the shifted operator K - lam M.

The preconditioner acts on M-weighted data ``g`` (the load vector of a field
f, g = M f). The b-orthogonal projections onto the coarse space and onto the
local spaces, followed by the shifted inverses, reduce to

    e = P (K_H - lam M_H)^{-1} P^T g + sum_i E_i (K_i - lam M_i)^{-1} E_i^T g

because the load vector of the projected field in a subspace spanned by the
columns of R is R^T g. E_i restricts to the fine interior edges of the
overlapping subdomain i; K_i, M_i are the principal submatrices on those
edges. No weighting or restriction variants are applied.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .edgefem import AssembledOperators
from .errors import CoarseSingular, LocalSingular, SingularMatrix
from .hierarchy import Hierarchy, SubdomainCover
from .sparsela import LuFactorization, lu_factor, lu_solve

log = logging.getLogger(__name__)

GUARD_EPSILON = 1e-8


def _factor_guarded(A_of, shift: float, guard_epsilon: float):
    """Factor A_of(shift); on singularity retry once at shift * (1 + eps)."""
    try:
        return lu_factor(A_of(shift)), shift, False
    except SingularMatrix as first:
        bumped = shift * (1.0 + guard_epsilon) if shift != 0.0 else guard_epsilon
        try:
            return lu_factor(A_of(bumped)), bumped, True
        except SingularMatrix:
            raise first from None


@dataclass(frozen=True, eq=False)
class TwoLevelPreconditioner:
    shift: float
    coarse_factor: LuFactorization | None
    local_factors: tuple[LuFactorization, ...]
    P: sp.csr_matrix | None
    cover: SubdomainCover
    n_dof: int
    guard_epsilon: float = GUARD_EPSILON
    threads: int = 1
    guarded: tuple[str, ...] = ()

    def apply(self, g: np.ndarray) -> np.ndarray:
        return apply(self, g)


def setup(ops_fine: AssembledOperators, ops_coarse: AssembledOperators | None,
          hier: Hierarchy | None, cover: SubdomainCover, shift: float,
          guard_epsilon: float = GUARD_EPSILON, threads: int = 1) -> TwoLevelPreconditioner:
    """Factor the shifted coarse and local operators at ``shift``.

    Pass ``ops_coarse=None`` for a one-level preconditioner.
    """
    K, M = ops_fine.K, ops_fine.M
    guarded = []
    coarse_factor = None
    P = None
    if ops_coarse is not None:
        if hier is None:
            raise ValueError("a coarse level needs the hierarchy's prolongation")
        P = hier.prolongation
        KH, MH = ops_coarse.K, ops_coarse.M
        if P.shape != (K.shape[0], KH.shape[0]):
            raise ValueError(f"prolongation {P.shape} does not match fine {K.shape} / coarse {KH.shape}")
        try:
            coarse_factor, used, bumped = _factor_guarded(lambda s: (KH - s * MH).tocsc(), shift, guard_epsilon)
        except SingularMatrix as exc:
            raise CoarseSingular(
                exc.pivot_index, exc.pivot,
                f"coarse shifted operator singular at shift {shift!r}; refine the initial coarse grid",
            ) from exc
        if bumped:
            log.warning("coarse operator singular at shift %.16g; refactored at %.16g", shift, used)
            guarded.append("coarse")

    def local(i):
        idx = cover.interior_edges[i]
        Ki, Mi = K[idx][:, idx], M[idx][:, idx]
        try:
            F, used, bumped = _factor_guarded(lambda s: (Ki - s * Mi).tocsc(), shift, guard_epsilon)
        except SingularMatrix as exc:
            raise LocalSingular(i, exc.pivot_index, exc.pivot) from exc
        return F, bumped

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(local, range(cover.N)))
    else:
        results = [local(i) for i in range(cover.N)]
    guarded += [f"local{i}" for i, (_, b) in enumerate(results) if b]
    factors = tuple(F for F, _ in results)
    return TwoLevelPreconditioner(
        shift, coarse_factor, factors, P, cover, K.shape[0], guard_epsilon, threads, tuple(guarded)
    )


def apply(pc: TwoLevelPreconditioner, g: np.ndarray) -> np.ndarray:
    g = np.asarray(g, dtype=float)
    n = pc.n_dof
    if g.shape != (n,):
        raise ValueError(f"dimension mismatch: preconditioner of size {n}, vector {g.shape}")

    def local(i):
        idx = pc.cover.interior_edges[i]
        return lu_solve(pc.local_factors[i], g[idx])

    if pc.threads > 1:
        with ThreadPoolExecutor(pc.threads) as pool:
            parts = list(pool.map(local, range(pc.cover.N)))
    else:
        parts = [local(i) for i in range(pc.cover.N)]

    e = np.zeros(n)
    if pc.coarse_factor is not None:
        e += pc.P @ lu_solve(pc.coarse_factor, pc.P.T @ g)
    # fixed subdomain order in the reduction
    for i, part in enumerate(parts):
        e[pc.cover.interior_edges[i]] += part
    return e

