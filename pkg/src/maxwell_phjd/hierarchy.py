"""Nested coarse/fine meshes, edge prolongation and the overlapping cover."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import sparsela
from .errors import ConfigurationError
from .mesh import DomainSpec, MeshLevel, build_mesh
from .whitney import evaluate_basis

MAX_DOF = 5_000_000


@dataclass(frozen=True, eq=False)
class Hierarchy:
    spec: DomainSpec
    coarse: MeshLevel
    fine: MeshLevel
    refinements: int
    prolongation: sp.csr_matrix
    # coarse element containing each fine element
    parent: np.ndarray

    @property
    def P(self) -> sp.csr_matrix:
        return self.prolongation


def _element_parents(coarse: MeshLevel, fine: MeshLevel) -> np.ndarray:
    centroids = fine.nodes[fine.elements].mean(axis=1)
    return coarse.locate_elements(centroids)


def prolongation_matrix(coarse: MeshLevel, fine: MeshLevel, parent: np.ndarray) -> sp.csr_matrix:
    """Coarse interior edge coefficients -> fine interior edge coefficients.

    Each fine DOF is the line integral of the coarse field along the fine
    edge; the integrand is linear along a straight edge so the midpoint rule
    is exact.
    """
    f_interior = fine.interior_edges
    # any fine element carrying the edge lies inside one coarse element
    host_elem = np.empty(fine.n_edges, dtype=np.int64)
    host_elem[fine.element_edges.ravel()[::-1]] = np.repeat(
        np.arange(fine.n_elements), fine.element_edges.shape[1]
    )[::-1]
    host = parent[host_elem[f_interior]]
    a = fine.nodes[fine.edges[f_interior, 0]]
    b = fine.nodes[fine.edges[f_interior, 1]]
    vals = evaluate_basis(coarse, host, 0.5 * (a + b))
    entries = np.einsum("nlk,nk->nl", vals, b - a)

    c_local = np.full(coarse.n_edges, -1, dtype=np.int64)
    c_local[coarse.interior_edges] = np.arange(len(coarse.interior_edges))
    cols = c_local[coarse.element_edges[host]]
    rows = np.repeat(np.arange(len(f_interior)), cols.shape[1]).reshape(cols.shape)
    keep = (cols >= 0) & (np.abs(entries) > 1e-14 * np.abs(entries).max())
    P = sp.csr_matrix(
        (entries[keep], (rows[keep], cols[keep])),
        shape=(len(f_interior), len(coarse.interior_edges)),
    )
    return sparsela.canonical(P)


def build_hierarchy(spec: DomainSpec, coarse_resolution, refinements: int, max_dof: int = MAX_DOF) -> Hierarchy:
    if refinements < 1:
        raise ConfigurationError(f"refinements must be >= 1, got {refinements}")
    coarse = build_mesh(spec, coarse_resolution)
    grid = tuple(2**refinements * n for n in coarse.cell_grid)
    estimate = spec.dim * math.prod(n + 1 for n in grid)
    if estimate > max_dof:
        raise ConfigurationError(f"fine level would have ~{estimate} edges (limit {max_dof})")
    fine_res = (grid[0] // 2,) if spec.kind == "lshape2d" else grid
    fine = build_mesh(spec, fine_res)
    parent = _element_parents(coarse, fine)
    P = prolongation_matrix(coarse, fine, parent)
    return Hierarchy(spec, coarse, fine, refinements, P, parent)


@dataclass(frozen=True, eq=False)
class SubdomainCover:
    N: int
    overlap_layers: int
    interior_edges: list[np.ndarray]
    elements_of: list[np.ndarray]
    max_multiplicity: int


def overlap_layers_for(overlap_ratio: float, refinements: int) -> int:
    """Vertex layers standing in for the overlap width delta = ratio * H."""
    layers = math.floor(overlap_ratio * 2**refinements + 0.5)
    if layers < 1:
        raise ConfigurationError(
            f"overlap ratio {overlap_ratio} with {refinements} refinements gives less than one fine layer"
        )
    return layers


def grow_layers(incidence: sp.csr_matrix, mask: np.ndarray, layers: int) -> np.ndarray:
    """Add ``layers`` rings of vertex-adjacent elements to an element mask."""
    mask = mask.astype(np.float64)
    for _ in range(layers):
        touched = incidence.T @ mask
        mask = (incidence @ (touched > 0).astype(np.float64)) > 0
        mask = mask.astype(np.float64)
    return mask > 0


def build_subdomain_cover(hier: Hierarchy, overlap_ratio: float | None = None,
                          layers: int | None = None, single: bool = False) -> SubdomainCover:
    """One subdomain per coarse element, grown by vertex layers on the fine mesh.

    ``single`` gives the degenerate one-subdomain cover of the whole domain.
    """
    fine = hier.fine
    if layers is None:
        if overlap_ratio is None:
            raise ConfigurationError("need overlap_ratio or layers")
        layers = overlap_layers_for(overlap_ratio, hier.refinements)
    node_inc = fine.element_nodes_incidence()
    edge_inc = fine.edge_element_incidence()
    n_incident = np.asarray(edge_inc.sum(axis=1)).ravel()
    f_local = np.full(fine.n_edges, -1, dtype=np.int64)
    f_local[fine.interior_edges] = np.arange(len(fine.interior_edges))

    groups = [np.arange(fine.n_elements)] if single else [
        np.flatnonzero(hier.parent == i) for i in range(hier.coarse.n_elements)
    ]
    elements_of, interior = [], []
    multiplicity = np.zeros(fine.n_elements, dtype=np.int64)
    for i, seed in enumerate(groups):
        mask = np.zeros(fine.n_elements, dtype=bool)
        mask[seed] = True
        mask = grow_layers(node_inc, mask, layers)
        inside = np.asarray(edge_inc @ mask.astype(np.float64)).ravel()
        full = (inside == n_incident) & ~fine.edge_boundary
        dofs = f_local[np.flatnonzero(full)]
        if len(dofs) == 0:
            raise ConfigurationError(f"subdomain {i} has no interior edge DOFs; refine or widen the overlap")
        elements_of.append(np.flatnonzero(mask))
        interior.append(np.sort(dofs))
        multiplicity += mask
    if np.any(multiplicity == 0):
        raise ConfigurationError("subdomain cover misses fine elements")
    return SubdomainCover(len(groups), layers, interior, elements_of, int(multiplicity.max()))
