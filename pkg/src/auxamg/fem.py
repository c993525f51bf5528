"""Structured simplicial meshes and P1 finite element assembly.

Provides the model problems: the scalar reaction-diffusion form
``alpha grad u . grad v + beta u v`` and linearized elasticity
``mu eps(u):eps(v) + lambda div u div v + beta u . v``, both with lowest
order conforming elements and exact one-point integration.
"""

from __future__ import annotations

import itertools
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .blocksparse import BlockSparseMatrix

#: Boundary tag names per axis, (low side, high side).
AXIS_TAGS = (("left", "right"), ("bottom", "top"), ("front", "back"))


@dataclass(frozen=True, eq=False)
class StructuredMesh:
    """Simplicial mesh of an axis-aligned box.

    Attributes
    ----------
    points : ndarray, shape (nv, d)
    elements : ndarray of int, shape (ne, d + 1)
        Positively oriented simplices.
    boundary : dict
        Maps a tag (``"left"``, ``"right"``, ...) to boundary facets,
        an int array of shape ``(nf, d)``.
    """

    points: np.ndarray
    elements: np.ndarray
    boundary: dict = field(default_factory=dict)

    @property
    def dim(self):
        return self.points.shape[1]

    @property
    def n_vertices(self):
        return self.points.shape[0]

    @property
    def n_elements(self):
        return self.elements.shape[0]

    def signed_volumes(self):
        d = self.dim
        edges = self.points[self.elements[:, 1:]] - self.points[self.elements[:, :1]]
        return np.linalg.det(edges) / math.factorial(d)

    def centroids(self):
        return self.points[self.elements].mean(axis=1)

    def boundary_vertices(self, tags):
        """Sorted vertex indices lying on facets with any of ``tags``."""
        found = [np.asarray(self.boundary[t]).ravel() for t in tags if t in self.boundary]
        unknown = [t for t in tags if t not in self.boundary]
        if unknown:
            raise ValueError(f"unknown boundary tags: {unknown}")
        if not found:
            return np.zeros(0, dtype=np.int64)
        return np.unique(np.concatenate(found))

    def write(self, dest, dirichlet=()):
        """Text export: ``v x y z`` / ``e i0 i1 ...`` / ``d i`` lines."""
        pts = np.zeros((self.n_vertices, 3))
        pts[:, : self.dim] = self.points
        lines = [f"v {x:.17g} {y:.17g} {z:.17g}" for x, y, z in pts]
        lines += ["e " + " ".join(str(int(i)) for i in el) for el in self.elements]
        lines += [f"d {int(i)}" for i in dirichlet]
        text = "\n".join(lines) + "\n"
        if isinstance(dest, (str, os.PathLike)):
            with open(dest, "w", encoding="ascii") as fh:
                fh.write(text)
        else:
            dest.write(text)


def make_structured_mesh(d, n, cells=None, extent=None):
    """Uniform simplicial mesh of ``[0, extent_0] x ... x [0, extent_{d-1}]``.

    Parameters
    ----------
    d : int
        Dimension, 1, 2 or 3.
    n : int
        Cells per axis (used where ``cells`` is not given).
    cells : sequence of int, optional
        Cells per axis, overriding ``n``.
    extent : sequence of float, optional
        Box side lengths, default the unit box.

    Squares are split into two right triangles along the ``(1, 1)``
    diagonal, cubes into six Kuhn tetrahedra.
    """
    if d not in (1, 2, 3):
        raise ValueError("d must be 1, 2 or 3")
    cells = tuple(int(c) for c in (cells if cells is not None else (n,) * d))
    extent = tuple(float(e) for e in (extent if extent is not None else (1.0,) * d))
    if len(cells) != d or len(extent) != d or min(cells) < 1:
        raise ValueError("cells/extent must have one positive entry per axis")
    axes = [np.linspace(0.0, extent[a], cells[a] + 1) for a in range(d)]
    grid = np.meshgrid(*axes, indexing="ij")
    # vertex (i, j, k) -> i + (nx+1) * (j + (ny+1) * k)
    points = np.stack([g.transpose(tuple(range(d))[::-1]).ravel() for g in grid], axis=1)
    strides = np.cumprod((1,) + tuple(c + 1 for c in cells[:-1]))
    cell_ids = np.stack(np.meshgrid(*[np.arange(c) for c in cells], indexing="ij"), axis=-1).reshape(-1, d)
    base = cell_ids @ strides

    if d == 1:
        elements = np.stack([base, base + 1], axis=1)
    elif d == 2:
        v00, v10, v01, v11 = base, base + strides[0], base + strides[1], base + strides[0] + strides[1]
        elements = np.concatenate([np.stack([v00, v10, v11], axis=1), np.stack([v00, v11, v01], axis=1)])
    else:
        tets = []
        for perm in itertools.permutations(range(3)):
            path = [np.zeros(3, dtype=np.int64)]
            for a in perm:
                step = path[-1].copy()
                step[a] = 1
                path.append(step)
            tets.append([base + int(np.dot(p, strides)) for p in path])
        elements = np.concatenate([np.stack(t, axis=1) for t in tets])
    elements = elements.astype(np.int64)
    if d > 1:
        edges = points[elements[:, 1:]] - points[elements[:, :1]]
        flip = np.linalg.det(edges) < 0
        elements[flip, -2:] = elements[flip, -1:-3:-1]

    boundary = {}
    facets = np.concatenate([np.delete(elements, f, axis=1) for f in range(d + 1)])
    for a in range(d):
        for side, value in enumerate((0.0, extent[a])):
            on = np.all(np.isclose(points[facets, a], value), axis=1)
            boundary[AXIS_TAGS[a][side]] = np.sort(facets[on], axis=1)
    return StructuredMesh(points, elements, boundary)


@dataclass(frozen=True, eq=False)
class CoefficientField:
    """Per-element PDE coefficients.

    Scalar problems set ``alpha``; elasticity sets ``mu`` and ``lam``.
    ``beta`` (the mass term) is shared.
    """

    beta: np.ndarray
    alpha: np.ndarray | None = None
    mu: np.ndarray | None = None
    lam: np.ndarray | None = None

    def __post_init__(self):
        if (self.alpha is None) == (self.mu is None):
            raise ValueError("set exactly one of alpha (scalar) or mu/lam (elasticity)")
        if np.any(self.beta < 0):
            raise ValueError("beta must be nonnegative")
        if self.alpha is not None and np.any(self.alpha <= 0):
            raise ValueError("alpha must be positive")
        if self.mu is not None:
            if self.lam is None or np.any(self.mu <= 0) or np.any(self.lam < 0):
                raise ValueError("need mu > 0 and lam >= 0")

    @property
    def is_elasticity(self):
        return self.mu is not None

    @classmethod
    def scalar(cls, mesh, alpha=1.0, beta=0.0):
        ne = mesh.n_elements
        return cls(beta=np.full(ne, float(beta)), alpha=np.full(ne, float(alpha)))

    @classmethod
    def elasticity(cls, mesh, mu=1.0, lam=1.0, beta=0.0):
        ne = mesh.n_elements
        return cls(beta=np.full(ne, float(beta)), mu=np.full(ne, float(mu)), lam=np.full(ne, float(lam)))


def boxes_coefficients(mesh, n_boxes, soft=(1.0, 1.0), hard=(1e4, 1e4), beta=0.0):
    """Elasticity coefficients with a chain of stiff boxes along the diagonal.

    An element is *hard* iff its centroid lies in one of the boxes
    ``[(i-1)/n_boxes, i/n_boxes]^d``, ``i = 1..n_boxes``.
    """
    if n_boxes < 1:
        raise ValueError("n_boxes must be positive")
    c = mesh.centroids()
    box = np.floor(c * n_boxes)
    inside = np.all(box == box[:, :1], axis=1) & (box[:, 0] >= 0) & (box[:, 0] < n_boxes)
    mu = np.where(inside, hard[0], soft[0])
    lam = np.where(inside, hard[1], soft[1])
    return CoefficientField(beta=np.full(mesh.n_elements, float(beta)), mu=mu, lam=lam)


def _p1_gradients(mesh):
    """Barycentric gradients ``(ne, d+1, d)`` and element volumes ``(ne,)``."""
    d = mesh.dim
    edges = mesh.points[mesh.elements[:, 1:]] - mesh.points[mesh.elements[:, :1]]
    det = np.linalg.det(edges)
    if np.any(det <= 0):
        raise ValueError("degenerate or inverted element (nonpositive volume)")
    inv = np.linalg.inv(edges)
    g = np.empty((mesh.n_elements, d + 1, d))
    g[:, 1:, :] = inv.transpose(0, 2, 1)
    g[:, 0, :] = -g[:, 1:, :].sum(axis=1)
    return g, det / math.factorial(d)


def _p1_mass(d, vol):
    local = (np.ones((d + 1, d + 1)) + np.eye(d + 1)) / ((d + 1) * (d + 2))
    return vol[:, None, None] * local


def scalar_element_matrices(mesh, coeffs):
    g, vol = _p1_gradients(mesh)
    stiff = np.einsum("e,eai,ebi->eab", coeffs.alpha * vol, g, g)
    return stiff + coeffs.beta[:, None, None] * _p1_mass(mesh.dim, vol)


def elasticity_element_matrices(mesh, coeffs):
    """Element matrices of shape ``(ne, d+1, d, d+1, d)``; axes (a, l, b, m)."""
    d = mesh.dim
    g, vol = _p1_gradients(mesh)
    eye = np.eye(d)
    gg = np.einsum("eai,ebi->eab", g, g)
    # eps(phi_al):eps(phi_bm) = (delta_lm g_a.g_b + g_a[m] g_b[l]) / 2
    shear = 0.5 * (np.einsum("eab,lm->ealbm", gg, eye) + np.einsum("eam,ebl->ealbm", g, g))
    div = np.einsum("eal,ebm->ealbm", g, g)
    k = (coeffs.mu * vol)[:, None, None, None, None] * shear + (coeffs.lam * vol)[:, None, None, None, None] * div
    mass = coeffs.beta[:, None, None] * _p1_mass(d, vol)
    return k + np.einsum("eab,lm->ealbm", mass, eye)


def _assemble(mesh, local, k):
    """Sum element matrices (``(ne, d+1, k, d+1, k)``) into a block matrix."""
    el = mesh.elements
    nloc = el.shape[1]
    rows = np.repeat(el, nloc, axis=1).ravel()
    cols = np.tile(el, (1, nloc)).ravel()
    blocks = local.transpose(0, 1, 3, 2, 4).reshape(-1, k, k)
    n = mesh.n_vertices
    return BlockSparseMatrix.from_coo(rows, cols, blocks, (n, n), (k, k))


def apply_dirichlet(a, dirichlet):
    """Identity rows/columns on ``dirichlet`` vertices, couplings removed."""
    dirichlet = np.asarray(dirichlet, dtype=np.int64)
    flag = np.zeros(a.block_rows, dtype=bool)
    flag[dirichlet] = True
    rows = a.block_row_ids()
    keep = ~(flag[rows] | flag[a.indices])
    k = a.block_shape[0]
    r = np.concatenate([rows[keep], dirichlet])
    c = np.concatenate([a.indices[keep], dirichlet])
    b = np.concatenate([a.blocks[keep], np.broadcast_to(np.eye(k), (dirichlet.size, k, k))])
    return BlockSparseMatrix.from_coo(r, c, b, (a.block_rows, a.block_cols), (k, k))


def assemble_scalar(mesh, coeffs, dirichlet_tags=(), constrain=True):
    """Assemble the scalar problem.

    Returns
    -------
    A : BlockSparseMatrix
        ``1 x 1`` blocks.  With ``constrain`` the Dirichlet vertices get
        identity rows and columns.
    dirichlet : ndarray of int
        The Dirichlet vertex set.
    """
    if coeffs.alpha is None:
        raise ValueError("scalar assembly needs alpha")
    local = scalar_element_matrices(mesh, coeffs)[:, :, None, :, None]
    a = _assemble(mesh, local, 1)
    vd = mesh.boundary_vertices(dirichlet_tags)
    return (apply_dirichlet(a, vd) if constrain else a), vd


def assemble_elasticity(mesh, coeffs, dirichlet_tags=(), constrain=True):
    """Assemble linearized elasticity with ``d x d`` vertex blocks."""
    if mesh.dim not in (2, 3):
        raise ValueError("elasticity needs d in {2, 3}")
    if coeffs.mu is None:
        raise ValueError("elasticity assembly needs mu and lam")
    local = elasticity_element_matrices(mesh, coeffs)
    a = _assemble(mesh, local, mesh.dim)
    vd = mesh.boundary_vertices(dirichlet_tags)
    return (apply_dirichlet(a, vd) if constrain else a), vd


def load_vector(mesh, force, dirichlet=()):
    """Lumped load ``b_i = f * sum_{T ni v_i} |T| / (d+1)``, zero on Dirichlet vertices.

    ``force`` is a scalar (scalar problems) or a length-``d`` vector.
    """
    _, vol = _p1_gradients(mesh)
    weight = np.zeros(mesh.n_vertices)
    np.add.at(weight, mesh.elements.ravel(), np.repeat(vol / (mesh.dim + 1), mesh.dim + 1))
    b = weight[:, None] * np.atleast_1d(np.asarray(force, dtype=float))[None, :]
    b[np.asarray(dirichlet, dtype=np.int64)] = 0.0
    return b.ravel()
