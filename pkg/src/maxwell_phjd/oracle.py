"""Brute-force reference spectra and convergence-order bookkeeping."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .edgefem import AssembledOperators
from .errors import ConfigurationError

DENSE_MAX_DOF = 3000


@dataclass(frozen=True)
class ReferenceSpectrum:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray | None
    zero_mode_count: int
    lambda1h: float
    threshold_used: float


def dense_reference(ops: AssembledOperators | tuple, threshold_rel: float = 1e-8,
                    max_dof: int = DENSE_MAX_DOF, vectors: bool = False) -> ReferenceSpectrum:
    """Full dense eigensolve of the pencil with the gradient kernel filtered out.

    ``ops`` may also be a ``(K, M)`` pair of sparse or dense matrices. LAPACK
    is used directly so this stays independent of the iterative solver path.
    """
    K, M = (ops.K, ops.M) if isinstance(ops, AssembledOperators) else ops
    n = K.shape[0]
    if n > max_dof:
        raise ConfigurationError(f"dense reference limited to {max_dof} DOFs, got {n}")
    Kd = K.toarray() if hasattr(K, "toarray") else np.asarray(K, dtype=float)
    Md = M.toarray() if hasattr(M, "toarray") else np.asarray(M, dtype=float)
    if vectors:
        w, V = scipy.linalg.eigh(Kd, Md)
    else:
        w, V = scipy.linalg.eigh(Kd, Md, eigvals_only=True), None
    threshold = threshold_rel * float(np.max(np.abs(w)))
    # <= so an all-zero pencil counts as pure kernel
    zero = int(np.sum(w <= threshold))
    if zero == n:
        raise ConfigurationError("pencil has no eigenvalue above the kernel threshold")
    return ReferenceSpectrum(w, V, zero, float(w[zero]), threshold)


def convergence_order(errors) -> list[float]:
    """log2 of successive error ratios; NaN where an error is not positive.

    ``errors`` is a sequence of ``(h_label, error)`` pairs or plain errors,
    ordered by halving h.
    """
    errs = [e[1] if isinstance(e, (tuple, list)) else e for e in errors]
    if len(errs) < 2:
        raise ValueError("convergence_order needs at least two rows")
    orders = []
    for prev, cur in zip(errs[:-1], errs[1:]):
        if not (prev > 0 and cur > 0):
            orders.append(math.nan)
        else:
            orders.append(math.log2(prev / cur))
    return orders
