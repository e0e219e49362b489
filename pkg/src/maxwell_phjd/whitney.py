"""Lowest-order edge element shape functions and element matrices.

Triangles use Whitney forms ``l_a grad l_b - l_b grad l_a`` with closed-form
integrals. Bricks use the tensor-product first-kind family, where the basis of
an x-directed edge is ``(1/hx) phi_b(eta) phi_c(zeta) e_x``; its integrals are
computed with 2-point Gauss rules per axis, which are exact here.

All functions return quantities in the local edge order of
``mesh.TRI_LOCAL_EDGES`` / ``mesh.HEX_LOCAL_EDGES`` with the local orientation
(first local vertex to second). Callers apply ``element_edge_signs``.
"""

from __future__ import annotations

import numpy as np

from .mesh import HEX_LOCAL_EDGES, TRI_LOCAL_EDGES, MeshLevel

_GAUSS2 = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])


def triangle_geometry(coords: np.ndarray):
    """Areas and barycentric gradients of triangles ``coords`` of shape (n, 3, 2)."""
    x, y = coords[..., 0], coords[..., 1]
    det = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0])
    if np.any(np.abs(det) <= 1e-300):
        raise ValueError("degenerate (zero-area) triangle")
    grads = np.empty_like(coords)
    for a in range(3):
        b, c = (a + 1) % 3, (a + 2) % 3
        grads[:, a, 0] = (y[:, b] - y[:, c]) / det
        grads[:, a, 1] = (x[:, c] - x[:, b]) / det
    return 0.5 * np.abs(det), grads


def triangle_matrices(coords: np.ndarray):
    """Curl-curl and mass element matrices (n, 3, 3) with unit coefficients."""
    area, grads = triangle_geometry(coords)
    a_idx, b_idx = TRI_LOCAL_EDGES[:, 0], TRI_LOCAL_EDGES[:, 1]
    ga, gb = grads[:, a_idx], grads[:, b_idx]
    curl = 2.0 * (ga[..., 0] * gb[..., 1] - ga[..., 1] * gb[..., 0])
    stiff = area[:, None, None] * curl[:, :, None] * curl[:, None, :]

    gram = np.einsum("nik,njk->nij", grads, grads)
    bary = (np.ones((3, 3)) + np.eye(3)) / 12.0  # int l_i l_j / area

    def term(i, j, k, l):
        # int l_i l_k (grad l_j . grad l_l), broadcast over local edge pairs
        return bary[i[:, None], k[None, :]] * gram[:, j[:, None], l[None, :]]

    mass = (
        term(a_idx, b_idx, a_idx, b_idx)
        - term(a_idx, b_idx, b_idx, a_idx)
        - term(b_idx, a_idx, a_idx, b_idx)
        + term(b_idx, a_idx, b_idx, a_idx)
    )
    return stiff, area[:, None, None] * mass


def triangle_basis(coords: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Values (n, 3, 2) of the local Whitney functions of triangle n at points[n]."""
    _, grads = triangle_geometry(coords)
    # barycentric coordinates from gradients: l_a(p) = 1/3 + grad l_a . (p - centroid)
    centroid = coords.mean(axis=1)
    lam = 1.0 / 3.0 + np.einsum("nak,nk->na", grads, points - centroid)
    a_idx, b_idx = TRI_LOCAL_EDGES[:, 0], TRI_LOCAL_EDGES[:, 1]
    return (
        lam[:, a_idx, None] * grads[:, b_idx]
        - lam[:, b_idx, None] * grads[:, a_idx]
    )


def _hex_reference(ref: np.ndarray):
    """Reference values and curls of the 12 brick functions at unit-cube points.

    Returns arrays (npts, 12, 3) of the functions with the 1/h scalings left
    out: entry ``[.., e, d]`` must later be divided by the length of edge e's
    axis (value) or by the product of the two relevant lengths (curl).
    """
    x, y, z = ref[:, 0], ref[:, 1], ref[:, 2]
    hat = lambda t, s: t if s else 1.0 - t  # noqa: E731
    dhat = lambda s: 1.0 if s else -1.0  # noqa: E731
    npts = len(ref)
    val = np.zeros((npts, 12, 3))
    # curl terms are separated by which pair of mesh sizes scales them
    dcurl = np.zeros((npts, 12, 3, 3))  # [..., component, derivative axis]
    for e, (v0, v1) in enumerate(HEX_LOCAL_EDGES):
        axis = e // 4
        bits = [(v0 >> 0) & 1, (v0 >> 1) & 1, (v0 >> 2) & 1]
        coords = [x, y, z]
        others = [d for d in range(3) if d != axis]
        p, q = others
        fp, fq = hat(coords[p], bits[p]), hat(coords[q], bits[q])
        val[:, e, axis] = fp * fq
        # derivative of the axis component along p and q (per unit reference length)
        dcurl[:, e, axis, p] = dhat(bits[p]) * fq
        dcurl[:, e, axis, q] = dhat(bits[q]) * fp
    return val, dcurl


def _curl_from_derivatives(d: np.ndarray) -> np.ndarray:
    # d[..., comp, axis] = d u_comp / d x_axis
    return np.stack(
        [
            d[..., 2, 1] - d[..., 1, 2],
            d[..., 0, 2] - d[..., 2, 0],
            d[..., 1, 0] - d[..., 0, 1],
        ],
        axis=-1,
    )


def hex_basis(sizes: np.ndarray, ref: np.ndarray, curl: bool = False) -> np.ndarray:
    """Brick basis values (or curls) for cells of size ``sizes`` (n, 3) at ref points (n, 3)."""
    val, dref = _hex_reference(ref)  # one point per cell
    axis_of_edge = np.repeat(np.arange(3), 4)
    if not curl:
        return val / sizes[:, axis_of_edge][:, :, None]
    d = dref / sizes[:, axis_of_edge][:, :, None, None] / sizes[:, None, None, :]
    return _curl_from_derivatives(d)


def hex_matrices(sizes: np.ndarray):
    """Curl-curl and mass element matrices (n, 12, 12) for bricks of ``sizes`` (n, 3)."""
    g = _GAUSS2
    ref = np.array([(a, b, c) for c in g for b in g for a in g])
    weights = np.full(len(ref), 1.0 / 8.0)
    val, dref = _hex_reference(ref)
    axis_of_edge = np.repeat(np.arange(3), 4)

    uniq, inverse = np.unique(sizes, axis=0, return_inverse=True)
    stiff_u = np.empty((len(uniq), 12, 12))
    mass_u = np.empty((len(uniq), 12, 12))
    for n, s in enumerate(uniq):
        vol = float(np.prod(s))
        v = val / s[axis_of_edge][None, :, None]
        d = dref / s[axis_of_edge][None, :, None, None] / s[None, None, None, :]
        c = _curl_from_derivatives(d)
        mass_u[n] = vol * np.einsum("q,qik,qjk->ij", weights, v, v)
        stiff_u[n] = vol * np.einsum("q,qik,qjk->ij", weights, c, c)
    inverse = np.asarray(inverse).ravel()
    return stiff_u[inverse], mass_u[inverse]


def element_matrices(mesh: MeshLevel):
    """Unit-coefficient (curl-curl, mass) element matrices in local orientation."""
    if mesh.dim == 2:
        return triangle_matrices(mesh.nodes[mesh.elements])
    cell_sizes = np.tile(mesh.cell_size, (mesh.n_elements, 1))
    return hex_matrices(cell_sizes)


def evaluate_basis(mesh: MeshLevel, elements: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Global-orientation shape-function values of ``elements`` at ``points``.

    Shape (n, n_local, dim); entry [n, l] belongs to edge
    ``mesh.element_edges[elements[n], l]``.
    """
    elements = np.asarray(elements)
    signs = mesh.element_edge_signs[elements]
    if mesh.dim == 2:
        vals = triangle_basis(mesh.nodes[mesh.elements[elements]], points)
    else:
        corner = mesh.nodes[mesh.elements[elements, 0]]
        sizes = np.tile(mesh.cell_size, (len(elements), 1))
        vals = hex_basis(sizes, (points - corner) / sizes)
    return vals * signs[:, :, None]
