"""Structured meshes for the cavity domains.

Two-dimensional domains are tensor grids of squares (or rectangles), each cell
split by its bottom-left to top-right diagonal. Three-dimensional domains are
axis-aligned brick grids. Edges are stored with the smaller node index first;
that orientation is the global tangent direction of every edge DOF.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigurationError

KINDS = ("rect2d", "square2d", "lshape2d", "box3d", "cube3d")

# local edges of a brick, as pairs of local vertex ids (vertex id = a + 2b + 4c)
HEX_LOCAL_EDGES = np.array(
    [
        (0, 1), (2, 3), (4, 5), (6, 7),  # x-directed, (b, c) = 00, 10, 01, 11
        (0, 2), (1, 3), (4, 6), (5, 7),  # y-directed, (a, c) = 00, 10, 01, 11
        (0, 4), (1, 5), (2, 6), (3, 7),  # z-directed, (a, b) = 00, 10, 01, 11
    ]
)
TRI_LOCAL_EDGES = np.array([(0, 1), (0, 2), (1, 2)])


@dataclass(frozen=True)
class DomainSpec:
    kind: str
    lengths: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown domain kind {self.kind!r}; expected one of {KINDS}")
        lengths = tuple(float(v) for v in self.lengths)
        if self.kind == "lshape2d":
            lengths = (2.0, 2.0)
        elif not lengths:
            lengths = {
                "rect2d": (2 * np.pi, np.pi),
                "square2d": (np.pi, np.pi),
                "box3d": (np.pi, 2 * np.pi, 1.2 * np.pi),
                "cube3d": (np.pi, np.pi, np.pi),
            }[self.kind]
        if len(lengths) != self.dim:
            raise ConfigurationError(f"{self.kind} needs {self.dim} lengths, got {len(lengths)}")
        if any(not np.isfinite(v) or v <= 0 for v in lengths):
            raise ConfigurationError(f"domain lengths must be strictly positive, got {lengths}")
        object.__setattr__(self, "lengths", lengths)

    @property
    def dim(self) -> int:
        return 3 if self.kind.endswith("3d") else 2

    @property
    def origin(self) -> np.ndarray:
        if self.kind == "lshape2d":
            return np.array([-1.0, -1.0])
        return np.zeros(self.dim)


@dataclass(frozen=True, eq=False)
class MeshLevel:
    """One structured triangulation or brick grid.

    ``cell_grid`` is the number of cells per axis of the bounding tensor grid
    and ``cell_id`` maps each grid cell to its active-cell number (-1 for cells
    cut out of the L-shape). Element ``e`` lives in active cell ``e // 2`` in
    2D and ``e`` in 3D.
    """

    dim: int
    nodes: np.ndarray
    elements: np.ndarray
    edges: np.ndarray
    element_edges: np.ndarray
    element_edge_signs: np.ndarray
    edge_boundary: np.ndarray
    node_boundary: np.ndarray
    cell_grid: tuple[int, ...]
    cell_id: np.ndarray
    origin: np.ndarray
    cell_size: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def interior_edges(self) -> np.ndarray:
        return np.flatnonzero(~self.edge_boundary)

    @property
    def interior_nodes(self) -> np.ndarray:
        return np.flatnonzero(~self.node_boundary)

    @property
    def elements_per_cell(self) -> int:
        return 2 if self.dim == 2 else 1

    @property
    def h_max(self) -> float:
        """Longest edge length (the cell diagonal for triangles)."""
        d = self.nodes[self.edges[:, 1]] - self.nodes[self.edges[:, 0]]
        return float(np.sqrt((d * d).sum(axis=1)).max())

    def element_nodes_incidence(self):
        import scipy.sparse as sp

        ne, nv = self.elements.shape
        rows = np.repeat(np.arange(ne), nv)
        return sp.csr_matrix(
            (np.ones(ne * nv), (rows, self.elements.ravel())), shape=(ne, self.n_nodes)
        )

    def edge_element_incidence(self):
        import scipy.sparse as sp

        ne, nl = self.element_edges.shape
        cols = np.repeat(np.arange(ne), nl)
        return sp.csr_matrix(
            (np.ones(ne * nl), (self.element_edges.ravel(), cols)), shape=(self.n_edges, ne)
        )

    def locate_cells(self, points: np.ndarray) -> np.ndarray:
        """Active-cell id of the grid cell containing each point (-1 outside)."""
        rel = (np.asarray(points) - self.origin) / self.cell_size
        idx = np.floor(rel).astype(np.int64)
        grid = np.array(self.cell_grid)
        idx = np.clip(idx, 0, grid - 1)
        return self.cell_id[tuple(idx.T)]

    def locate_elements(self, points: np.ndarray) -> np.ndarray:
        """Element containing each point; points on shared faces go to either side."""
        cells = self.locate_cells(points)
        if np.any(cells < 0):
            raise ValueError("point outside the meshed domain")
        if self.dim == 3:
            return cells
        rel = (np.asarray(points) - self.origin) / self.cell_size
        idx = np.clip(np.floor(rel).astype(np.int64), 0, np.array(self.cell_grid) - 1)
        frac = rel - idx
        upper = frac[:, 1] > frac[:, 0]
        return 2 * cells + upper.astype(np.int64)


def _check_resolution(spec: DomainSpec, resolution) -> tuple[int, ...]:
    if np.isscalar(resolution):
        resolution = (int(resolution),) * spec.dim
    res = tuple(int(r) for r in resolution)
    if spec.kind == "lshape2d" and len(res) == 1:
        res = res * 2
    if len(res) != spec.dim:
        raise ConfigurationError(f"{spec.kind} needs {spec.dim} resolution entries, got {len(res)}")
    if any(r < 1 for r in res):
        raise ConfigurationError(f"resolution must be >= 1 per axis, got {res}")
    if spec.kind == "lshape2d" and res[0] != res[1]:
        raise ConfigurationError("lshape2d takes one resolution: cells per unit edge")
    return res


def _unique_edges(local_pairs: np.ndarray):
    """Deduplicate (n_elem, n_local, 2) node pairs into oriented global edges."""
    ne, nl, _ = local_pairs.shape
    flat = local_pairs.reshape(-1, 2)
    lo = flat.min(axis=1)
    hi = flat.max(axis=1)
    edges, inverse = np.unique(np.stack([lo, hi], axis=1), axis=0, return_inverse=True)
    signs = np.where(flat[:, 0] < flat[:, 1], 1.0, -1.0).reshape(ne, nl)
    return edges, inverse.reshape(ne, nl), signs


def _build_2d(spec: DomainSpec, res: tuple[int, ...]) -> MeshLevel:
    if spec.kind == "lshape2d":
        n = res[0]
        grid = (2 * n, 2 * n)
        active = np.ones(grid, dtype=bool)
        active[n:, :n] = False  # drop [0,1) x (-1,0]
    else:
        grid = res
        active = np.ones(grid, dtype=bool)
    nx, ny = grid
    size = np.array(spec.lengths) / np.array(grid)
    origin = spec.origin

    cell_id = -np.ones(grid, dtype=np.int64)
    # active cells numbered row by row (j outer, i inner)
    jj, ii = np.nonzero(active.T)
    cell_id[ii, jj] = np.arange(len(ii))

    def gnode(i, j):
        return i + (nx + 1) * j

    n00, n10 = gnode(ii, jj), gnode(ii + 1, jj)
    n01, n11 = gnode(ii, jj + 1), gnode(ii + 1, jj + 1)
    tris = np.empty((2 * len(ii), 3), dtype=np.int64)
    tris[0::2] = np.stack([n00, n10, n11], axis=1)  # below the diagonal
    tris[1::2] = np.stack([n00, n11, n01], axis=1)  # above the diagonal

    used = np.unique(tris)
    renumber = -np.ones((nx + 1) * (ny + 1), dtype=np.int64)
    renumber[used] = np.arange(len(used))
    tris = renumber[tris]
    gi, gj = used % (nx + 1), used // (nx + 1)
    nodes = origin + np.stack([gi * size[0], gj * size[1]], axis=1)

    edges, el_edges, signs = _unique_edges(tris[:, TRI_LOCAL_EDGES])
    counts = np.bincount(el_edges.ravel(), minlength=len(edges))
    edge_boundary = counts == 1
    node_boundary = np.zeros(len(nodes), dtype=bool)
    node_boundary[edges[edge_boundary].ravel()] = True
    return MeshLevel(
        dim=2, nodes=nodes, elements=tris, edges=edges, element_edges=el_edges,
        element_edge_signs=signs, edge_boundary=edge_boundary,
        node_boundary=node_boundary, cell_grid=tuple(grid), cell_id=cell_id,
        origin=np.asarray(origin, dtype=float), cell_size=size,
    )


def _build_3d(spec: DomainSpec, res: tuple[int, ...]) -> MeshLevel:
    nx, ny, nz = res
    size = np.array(spec.lengths) / np.array(res)
    k, j, i = np.meshgrid(np.arange(nz), np.arange(ny), np.arange(nx), indexing="ij")
    i, j, k = i.ravel(), j.ravel(), k.ravel()

    def gnode(a, b, c):
        return a + (nx + 1) * (b + (ny + 1) * c)

    hexes = np.stack(
        [gnode(i + a, j + b, k + c) for c in (0, 1) for b in (0, 1) for a in (0, 1)], axis=1
    )
    cell_id = -np.ones(res, dtype=np.int64)
    cell_id[i, j, k] = np.arange(len(i))

    kk, jj, ii = np.meshgrid(np.arange(nz + 1), np.arange(ny + 1), np.arange(nx + 1), indexing="ij")
    ijk = np.stack([ii.ravel(), jj.ravel(), kk.ravel()], axis=1)
    nodes = spec.origin + ijk * size
    grid = np.array(res)
    on_face = (ijk == 0) | (ijk == grid)
    node_boundary = on_face.any(axis=1)

    edges, el_edges, signs = _unique_edges(hexes[:, HEX_LOCAL_EDGES])
    # an edge is on the boundary iff both end nodes sit on a common boundary plane
    a, b = on_face[edges[:, 0]], on_face[edges[:, 1]]
    same_plane = (a & b) & (ijk[edges[:, 0]] == ijk[edges[:, 1]])
    edge_boundary = same_plane.any(axis=1)
    return MeshLevel(
        dim=3, nodes=nodes.astype(float), elements=hexes, edges=edges,
        element_edges=el_edges, element_edge_signs=signs,
        edge_boundary=edge_boundary, node_boundary=node_boundary,
        cell_grid=tuple(res), cell_id=cell_id, origin=np.asarray(spec.origin, dtype=float),
        cell_size=size,
    )


def build_mesh(spec: DomainSpec, resolution: int | Sequence[int]) -> MeshLevel:
    """Mesh ``spec`` with ``resolution`` cells per axis (cells per unit edge for the L-shape)."""
    res = _check_resolution(spec, resolution)
    if spec.dim == 2:
        return _build_2d(spec, res)
    return _build_3d(spec, res)


def count_rect_edges(nx: int, ny: int) -> tuple[int, int]:
    """(total, interior) edge counts of an nx-by-ny diagonal-split grid."""
    total = nx * (ny + 1) + ny * (nx + 1) + nx * ny
    return total, total - 2 * (nx + ny)


def dump_mesh(mesh: MeshLevel, stream) -> None:
    """Plain-text listing: one record per line, whitespace separated."""
    stream.write(f"# dim {mesh.dim} nodes {mesh.n_nodes} elements {mesh.n_elements} edges {mesh.n_edges}\n")
    for idx, (xyz, bnd) in enumerate(zip(mesh.nodes, mesh.node_boundary)):
        coords = " ".join(repr(float(v)) for v in xyz)
        stream.write(f"node {idx} {coords} {int(bnd)}\n")
    for idx, conn in enumerate(mesh.elements):
        stream.write(f"element {idx} {' '.join(str(int(v)) for v in conn)}\n")
    for idx, ((a, b), bnd) in enumerate(zip(mesh.edges, mesh.edge_boundary)):
        stream.write(f"edge {idx} {int(a)} {int(b)} {int(bnd)}\n")
