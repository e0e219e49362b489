"""Assembly of the edge-element Maxwell pencil and the discrete gradient.

Edge DOFs are tangential line integrals along the globally oriented edge, so
the gradient of a nodal hat function has coefficients -1/+1 on the edges
leaving/entering that node. Essential conditions are imposed by dropping the
boundary edges (u x n = 0) and boundary nodes (p = 0 on the boundary).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import sparsela
from .mesh import MeshLevel
from .whitney import element_matrices


@dataclass(frozen=True)
class MaterialParams:
    eps_r: float = 1.0
    mu_r: float = 1.0

    def __post_init__(self):
        if not (self.eps_r > 0 and self.mu_r > 0):
            raise ValueError("eps_r and mu_r must be positive constants")


@dataclass(frozen=True, eq=False)
class AssembledOperators:
    K: sp.csr_matrix
    M: sp.csr_matrix
    G: sp.csr_matrix
    L: sp.csr_matrix
    full_K: sp.csr_matrix
    full_M: sp.csr_matrix
    full_G: sp.csr_matrix
    interior_edge_map: np.ndarray
    interior_node_map: np.ndarray

    @property
    def n_dof(self) -> int:
        return self.K.shape[0]

    @property
    def n_interior_nodes(self) -> int:
        return self.G.shape[1]


def _scatter(mesh: MeshLevel, local: np.ndarray, threads: int = 1) -> sp.csr_matrix:
    signs = mesh.element_edge_signs
    local = local * signs[:, :, None] * signs[:, None, :]
    dofs = mesh.element_edges
    n = mesh.n_edges
    nl = dofs.shape[1]

    def block(sl):
        rows = np.repeat(dofs[sl], nl, axis=1).ravel()
        cols = np.tile(dofs[sl], (1, nl)).ravel()
        return sp.csr_matrix((local[sl].ravel(), (rows, cols)), shape=(n, n))

    # fixed chunking and fixed reduction order keep the result independent of `threads`
    bounds = np.linspace(0, mesh.n_elements, 9).astype(int)
    slices = [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:])]
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(block, slices))
    else:
        parts = [block(s) for s in slices]
    total = parts[0]
    for part in parts[1:]:
        total = total + part
    return sparsela.canonical(total)


def discrete_gradient(mesh: MeshLevel) -> sp.csr_matrix:
    """Full (all edges x all nodes) incidence matrix of the oriented edges."""
    ne = mesh.n_edges
    rows = np.repeat(np.arange(ne), 2)
    cols = mesh.edges.ravel()
    vals = np.tile([-1.0, 1.0], ne)
    return sparsela.canonical(sp.csr_matrix((vals, (rows, cols)), shape=(ne, mesh.n_nodes)))


def nodal_laplacian(G: sp.spmatrix, M: sp.spmatrix) -> sp.csr_matrix:
    """L = G^T M G, symmetrized exactly."""
    L = (G.T @ (M @ G)).tocsr()
    return sparsela.canonical(0.5 * (L + L.T))


def assemble(mesh: MeshLevel, mat: MaterialParams = MaterialParams(), threads: int = 1) -> AssembledOperators:
    stiff, mass = element_matrices(mesh)
    full_K = _scatter(mesh, stiff / mat.mu_r, threads)
    full_M = _scatter(mesh, mass * mat.eps_r, threads)
    full_K = sparsela.canonical(0.5 * (full_K + full_K.T))
    full_M = sparsela.canonical(0.5 * (full_M + full_M.T))
    full_G = discrete_gradient(mesh)

    ie = mesh.interior_edges
    inodes = mesh.interior_nodes
    K = sparsela.canonical(full_K[ie][:, ie])
    M = sparsela.canonical(full_M[ie][:, ie])
    G = sparsela.canonical(full_G[ie][:, inodes])
    L = nodal_laplacian(G, M)
    return AssembledOperators(K, M, G, L, full_K, full_M, full_G, ie, inodes)


def interpolate(mesh: MeshLevel, field, n_gauss: int = 3) -> np.ndarray:
    """Edge DOFs (line integrals of u . t) of a callable field on all edges."""
    pts, wts = np.polynomial.legendre.leggauss(n_gauss)
    a = mesh.nodes[mesh.edges[:, 0]]
    b = mesh.nodes[mesh.edges[:, 1]]
    d = b - a
    out = np.zeros(mesh.n_edges)
    for s, w in zip(pts, wts):
        x = a + 0.5 * (s + 1.0) * d
        out += 0.5 * w * np.einsum("nk,nk->n", np.asarray(field(x)), d)
    return out


def export_matrix_market(ops: AssembledOperators, directory) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for name, mat, sym in (("K", ops.K, True), ("M", ops.M, True), ("G", ops.G, False)):
        path = directory / f"{name}.mtx"
        sparsela.mm_write(path, mat, symmetric=sym)
        written.append(path)
    return written
