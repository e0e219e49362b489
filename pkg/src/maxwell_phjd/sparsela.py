"""Sparse and dense linear-algebra kernels.

Sparse storage is scipy CSR kept in canonical form (sorted, duplicate-free
column indices). Shifted indefinite solves go through SuperLU with partial
pivoting and an explicit small-pivot check; SPD solves use a Jacobi-scaled
conjugate gradient. Small dense symmetric pencils are reduced by Cholesky and
diagonalized with cyclic Jacobi rotations.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NoConvergence, SingularMatrix

PIVOT_RTOL = 1e-13
# above this size the dense pencil goes to LAPACK instead of Jacobi sweeps
JACOBI_MAX_N = 160


def canonical(A) -> sp.csr_matrix:
    A = sp.csr_matrix(A)
    A.sum_duplicates()
    A.sort_indices()
    A.eliminate_zeros()
    return A


def spmv(A, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    if A.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: {A.shape} @ {x.shape}")
    return A @ x


@dataclass(frozen=True, eq=False)
class LuFactorization:
    lu: spla.SuperLU
    shape: tuple[int, int]
    min_pivot: float
    min_pivot_index: int

    @property
    def perm_r(self) -> np.ndarray:
        return self.lu.perm_r

    @property
    def perm_c(self) -> np.ndarray:
        return self.lu.perm_c

    def solve(self, b: np.ndarray) -> np.ndarray:
        return lu_solve(self, b)


def lu_factor(A, pivot_rtol: float = PIVOT_RTOL) -> LuFactorization:
    """Sparse LU with partial pivoting; raises SingularMatrix on a tiny pivot.

    A pivot counts as zero when ``|u_ii| < pivot_rtol * max|A|``.
    """
    A = sp.csc_matrix(A)
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"lu_factor needs a square matrix, got {A.shape}")
    n = A.shape[0]
    scale = abs(A).max() if A.nnz else 0.0
    if scale == 0.0:
        raise SingularMatrix(0, 0.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sp.SparseEfficiencyWarning)
        try:
            lu = spla.splu(A, permc_spec="COLAMD", diag_pivot_thresh=1.0)
        except RuntimeError as exc:  # SuperLU reports exact singularity this way
            raise SingularMatrix(-1, 0.0, f"matrix is exactly singular: {exc}") from exc
    diag = np.abs(lu.U.diagonal())
    idx = int(np.argmin(diag)) if n else 0
    pivot = float(diag[idx]) if n else np.inf
    if pivot < pivot_rtol * scale:
        raise SingularMatrix(idx, pivot)
    return LuFactorization(lu, (n, n), pivot, idx)


def lu_solve(F: LuFactorization, b: np.ndarray) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    if b.shape[0] != F.shape[0]:
        raise ValueError(f"dimension mismatch: factor {F.shape}, rhs {b.shape}")
    return F.lu.solve(b)


def cg_solve(A, b: np.ndarray, rel_tol: float = 1e-12, max_it: int | None = None,
             x0: np.ndarray | None = None) -> np.ndarray:
    """Jacobi-preconditioned conjugate gradient for SPD ``A``."""
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    if A.shape != (n, n):
        raise ValueError(f"dimension mismatch: {A.shape} vs rhs {b.shape}")
    if max_it is None:
        max_it = max(10 * n, 100)
    bnorm = np.linalg.norm(b)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if bnorm == 0.0:
        return np.zeros(n)
    d = A.diagonal() if sp.issparse(A) else np.diag(A)
    if np.any(d <= 0):
        raise ValueError("cg_solve: matrix diagonal not positive; not SPD")
    dinv = 1.0 / d
    r = b - A @ x
    z = dinv * r
    p = z.copy()
    rz = r @ z
    for it in range(max_it):
        if np.linalg.norm(r) <= rel_tol * bnorm:
            return x
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0:
            raise NoConvergence("cg_solve: non-positive curvature; matrix not SPD", it)
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        z = dinv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    res = np.linalg.norm(b - A @ x) / bnorm
    if res <= rel_tol:
        return x
    raise NoConvergence(f"cg_solve: relative residual {res:.3e} after {max_it} iterations", max_it, res)


def _round_robin(n: int):
    """Disjoint (p, q) index pairs covering all pairs once per sweep."""
    m = n + (n % 2)
    players = list(range(m))
    for _ in range(m - 1):
        pairs = [(players[i], players[m - 1 - i]) for i in range(m // 2)]
        pairs = [(min(a, b), max(a, b)) for a, b in pairs if a < n and b < n]
        if pairs:
            arr = np.array(pairs)
            yield arr[:, 0], arr[:, 1]
        players = [players[0], players[-1]] + players[1:-1]


def jacobi_eigh(A: np.ndarray, tol: float = 1e-14, max_sweeps: int = 60):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Rotations in each round-robin step act on disjoint index pairs and are
    applied together.
    """
    A = np.array(A, dtype=float)
    n = A.shape[0]
    V = np.eye(n)
    if n <= 1:
        return np.diag(A).copy(), V
    scale = np.linalg.norm(A)
    if scale == 0.0:
        return np.zeros(n), V
    schedule = list(_round_robin(n))
    for _ in range(max_sweeps):
        off = np.linalg.norm(A - np.diag(np.diag(A)))
        if off <= tol * scale:
            break
        for p, q in schedule:
            apq = A[p, q]
            app, aqq = A[p, p], A[q, q]
            # rotations on negligible entries would only add rounding noise
            active = np.abs(apq) > 1e-18 * np.sqrt(np.abs(app * aqq)) + 1e-300
            if not active.any():
                A[p, q] = 0.0
                A[q, p] = 0.0
                continue
            safe = np.where(active, apq, 1.0)
            tau = np.where(active, (aqq - app) / (2.0 * safe), 0.0)
            t = np.where(tau >= 0, 1.0, -1.0) / (np.abs(tau) + np.hypot(1.0, tau))
            t = np.where(active, t, 0.0)
            c = 1.0 / np.hypot(1.0, t)
            s = t * c
            Ap, Aq = A[:, p].copy(), A[:, q].copy()
            A[:, p] = c * Ap - s * Aq
            A[:, q] = s * Ap + c * Aq
            Ap, Aq = A[p].copy(), A[q].copy()
            A[p] = c[:, None] * Ap - s[:, None] * Aq
            A[q] = s[:, None] * Ap + c[:, None] * Aq
            A[p, q] = 0.0
            A[q, p] = 0.0
            Vp, Vq = V[:, p].copy(), V[:, q].copy()
            V[:, p] = c * Vp - s * Vq
            V[:, q] = s * Vp + c * Vq
    else:
        raise NoConvergence(f"jacobi_eigh: off-diagonal norm not below {tol:.1e} after {max_sweeps} sweeps")
    w = np.diag(A).copy()
    order = np.argsort(w, kind="stable")
    return w[order], V[:, order]


def dense_geneig(Kd: np.ndarray, Md: np.ndarray, method: str = "auto"):
    """Ascending eigenvalues and Md-orthonormal eigenvectors of (Kd, Md).

    ``method`` is "jacobi", "lapack" or "auto" (Jacobi up to JACOBI_MAX_N).
    """
    Kd = np.asarray(Kd, dtype=float)
    Md = np.asarray(Md, dtype=float)
    n = Kd.shape[0]
    if Kd.shape != (n, n) or Md.shape != (n, n):
        raise ValueError("dense_geneig needs two square matrices of equal size")
    Kd = 0.5 * (Kd + Kd.T)
    Md = 0.5 * (Md + Md.T)
    if method == "auto":
        method = "jacobi" if n <= JACOBI_MAX_N else "lapack"
    if method == "lapack":
        try:
            return scipy.linalg.eigh(Kd, Md)
        except np.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError(f"Md is not SPD: {exc}") from exc
    try:
        C = np.linalg.cholesky(Md)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"Md is not SPD: {exc}") from exc
    Y = scipy.linalg.solve_triangular(C, Kd, lower=True)
    S = scipy.linalg.solve_triangular(C, Y.T, lower=True)
    S = 0.5 * (S + S.T)
    w, Z = jacobi_eigh(S)
    V = scipy.linalg.solve_triangular(C.T, Z, lower=False)
    return w, V


def m_orthonormalize(basis, M, drop_tol: float = 1e-10, against=None) -> list[np.ndarray]:
    """Two-pass modified Gram-Schmidt in the M inner product.

    Vectors in ``against`` (assumed M-orthonormal) are projected out but not
    returned. A vector whose M-norm falls below ``drop_tol`` times its original
    M-norm is dropped.
    """
    fixed = [] if against is None else list(against)
    out: list[np.ndarray] = []
    for v in basis:
        v = np.array(v, dtype=float)
        norm0 = np.sqrt(max(v @ (M @ v), 0.0))
        if norm0 == 0.0:
            continue
        for _ in range(2):
            for q in fixed + out:
                v -= (q @ (M @ v)) * q
        norm = np.sqrt(max(v @ (M @ v), 0.0))
        if norm < drop_tol * norm0:
            continue
        out.append(v / norm)
    return out


def mm_write(path, A, symmetric: bool = False) -> None:
    scipy.io.mmwrite(str(path), sp.coo_matrix(A), symmetry="symmetric" if symmetric else "general")


def mm_read(path) -> sp.csr_matrix:
    return canonical(scipy.io.mmread(str(path)))
