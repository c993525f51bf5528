"""Auxiliary topology: vertex and edge weight matrices in kernel coordinates.

A topology is a graph whose vertices carry ``k x k`` PSD weights ``M^i``
and whose (undirected, ``i < j``) edges carry PSD weights ``E^{ij}``.  The
per-vertex unknowns are kernel coordinates: ``k = 1`` for scalar problems,
displacement plus rotation (``k = 3`` in 2D, ``k = 6`` in 3D) for
elasticity.  Transport between vertices is the affine map

    Q(t) = [[I, Skew(t)], [0, I]],

with ``Skew(t) r = t x r`` in 3D and ``Skew(t) r = r (-t_1, t_0)`` in 2D.
The auxiliary matrix induces the energy

    |u|^2 = sum_i |u_i|^2_{M^i} + sum_{ij} |Q^{ij} u_i - Q^{ji} u_j|^2_{E^{ij}},

where ``Q^{ij} = Q((x_j - x_i) / 2)`` transports to the edge midpoint.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .blocksparse import BlockSparseMatrix
from .dense import DEFAULT_TOL

SCALAR = "scalar"
ELASTICITY = "elasticity"


def rotation_dim(d):
    return d * (d - 1) // 2


def kernel_dim(kind, d):
    """Unknowns per vertex: 1 for scalar, ``d + d(d-1)/2`` for elasticity."""
    return 1 if kind == SCALAR else d + rotation_dim(d)


def skew(t):
    """Matrix of ``r -> Skew(t) r``; shape ``(..., d, d(d-1)/2)``."""
    t = np.asarray(t, dtype=float)
    d = t.shape[-1]
    if d == 2:
        out = np.empty(t.shape[:-1] + (2, 1))
        out[..., 0, 0] = -t[..., 1]
        out[..., 1, 0] = t[..., 0]
        return out
    if d == 3:
        out = np.zeros(t.shape[:-1] + (3, 3))
        out[..., 0, 1] = -t[..., 2]
        out[..., 0, 2] = t[..., 1]
        out[..., 1, 0] = t[..., 2]
        out[..., 1, 2] = -t[..., 0]
        out[..., 2, 0] = -t[..., 1]
        out[..., 2, 1] = t[..., 0]
        return out
    raise ValueError("Skew is defined for d = 2, 3 only")


def q_matrices(kind, t):
    """Batched ``Q(t)``; ``t`` has shape ``(..., d)``, result ``(..., k, k)``."""
    t = np.asarray(t, dtype=float)
    if kind == SCALAR:
        return np.ones(t.shape[:-1] + (1, 1))
    d = t.shape[-1]
    k = kernel_dim(kind, d)
    q = np.zeros(t.shape[:-1] + (k, k))
    q[..., np.arange(k), np.arange(k)] = 1.0
    q[..., :d, d:] = skew(t)
    return q


@dataclass(frozen=True)
class QTransform:
    """Transport between two vertices.

    ``root=False`` gives the full map ``Q^{v_i -> v_j} = Q(t)``;
    ``root=True`` gives the half step ``Q^{ij} = Q(t / 2)``.
    """

    kind: str
    t: tuple = ()
    root: bool = False

    def matrix(self):
        return q_matrix(self)


def q_matrix(transform):
    if transform.kind == SCALAR:
        return np.ones((1, 1))
    t = np.asarray(transform.t, dtype=float)
    return q_matrices(transform.kind, 0.5 * t if transform.root else t)


def _pad(block, k):
    out = np.zeros(block.shape[:-2] + (k, k))
    d = block.shape[-1]
    out[..., :d, :d] = block
    return out


class AuxTopology:
    """Immutable auxiliary topology.

    Parameters
    ----------
    kind : {"scalar", "elasticity"}
    positions : ndarray, shape (n, d)
    vertex_weights : ndarray, shape (n, k, k)
    edges : ndarray of int, shape (m, 2)
        Undirected edges; normalized to ``i < j`` and sorted.
    edge_weights : ndarray, shape (m, k, k)
    dirichlet : ndarray of bool, shape (n,), optional
    """

    __slots__ = ("kind", "positions", "vertex_weights", "edges", "edge_weights", "dirichlet")

    def __init__(self, kind, positions, vertex_weights, edges, edge_weights, dirichlet=None):
        if kind not in (SCALAR, ELASTICITY):
            raise ValueError(f"unknown topology kind {kind!r}")
        positions = np.asarray(positions, dtype=float)
        if positions.ndim != 2:
            raise ValueError("positions must have shape (n, d)")
        n, d = positions.shape
        k = kernel_dim(kind, d)
        if kind == ELASTICITY and d not in (2, 3):
            raise ValueError("elasticity topologies need d in {2, 3}")
        vertex_weights = np.asarray(vertex_weights, dtype=float).reshape(n, k, k)
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        edge_weights = np.asarray(edge_weights, dtype=float).reshape(-1, k, k)
        if edges.shape[0] != edge_weights.shape[0]:
            raise ValueError("edges and edge_weights disagree in length")
        if not np.all(np.isfinite(positions)):
            raise ValueError("positions must be finite")
        if edges.size:
            if edges.min() < 0 or edges.max() >= n:
                raise ValueError("edge endpoint out of range")
            if np.any(edges[:, 0] == edges[:, 1]):
                raise ValueError("self-loop in edge list")
            edges = np.sort(edges, axis=1)
            order = np.lexsort((edges[:, 1], edges[:, 0]))
            edges, edge_weights = edges[order], edge_weights[order]
            if np.any(np.all(np.diff(edges, axis=0) == 0, axis=1)):
                raise ValueError("duplicate edge in edge list")
        dirichlet = np.zeros(n, dtype=bool) if dirichlet is None else np.asarray(dirichlet, dtype=bool).copy()
        if dirichlet.shape != (n,):
            raise ValueError("dirichlet flags must have shape (n,)")
        object.__setattr__(self, "kind", kind)
        for name, arr in (("positions", positions), ("vertex_weights", vertex_weights), ("edges", edges),
                          ("edge_weights", edge_weights), ("dirichlet", dirichlet)):
            arr = np.array(arr, order="C", copy=True)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __setattr__(self, name, value):
        raise AttributeError("AuxTopology is immutable")

    @property
    def n_vertices(self):
        return self.positions.shape[0]

    @property
    def n_edges(self):
        return self.edges.shape[0]

    @property
    def dim(self):
        return self.positions.shape[1]

    @property
    def k(self):
        return kernel_dim(self.kind, self.dim)

    def dirichlet_vertices(self):
        return np.flatnonzero(self.dirichlet)

    def edge_vectors(self):
        """``t^{ij} = x_j - x_i`` per edge."""
        return self.positions[self.edges[:, 1]] - self.positions[self.edges[:, 0]]

    def half_transforms(self):
        """``(Q^{ij}, Q^{ji})`` per edge, each of shape ``(m, k, k)``."""
        t = 0.5 * self.edge_vectors()
        return q_matrices(self.kind, t), q_matrices(self.kind, -t)

    def neighbors(self):
        """CSR adjacency ``(indptr, indices, edge_ids)`` with sorted neighbours."""
        n = self.n_vertices
        i, j = self.edges[:, 0], self.edges[:, 1]
        src = np.concatenate([i, j])
        dst = np.concatenate([j, i])
        eid = np.concatenate([np.arange(self.n_edges)] * 2)
        order = np.lexsort((dst, src))
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(indptr, src + 1, 1)
        return np.cumsum(indptr), dst[order], eid[order]

    def validate(self, tol=DEFAULT_TOL):
        """Raise ``ValueError`` unless every weight is symmetric PSD to ``tol`` (relative)."""
        for name, w in (("vertex weight", self.vertex_weights), ("edge weight", self.edge_weights)):
            if not w.size:
                continue
            scale = np.max(np.abs(w), axis=(1, 2))
            asym = np.max(np.abs(w - w.transpose(0, 2, 1)), axis=(1, 2))
            bad = asym > tol * np.maximum(scale, 1e-300)
            if np.any(bad):
                raise ValueError(f"{name} {int(np.argmax(bad))} is not symmetric")
            lam = np.linalg.eigvalsh(0.5 * (w + w.transpose(0, 2, 1)))
            bad = lam[:, 0] < -tol * np.maximum(lam[:, -1], 1e-300)
            if np.any(bad):
                raise ValueError(f"{name} {int(np.argmax(bad))} is not positive semidefinite")
        return self

    def __repr__(self):
        return (f"AuxTopology(kind={self.kind!r}, n_vertices={self.n_vertices}, "
                f"n_edges={self.n_edges}, k={self.k}, n_dirichlet={int(self.dirichlet.sum())})")


@dataclass(frozen=True, eq=False)
class Agglomeration:
    """Partition of the kept vertices into agglomerates.

    Attributes
    ----------
    members : tuple of ndarray
        Sorted fine vertex indices of each agglomerate.
    dropped : ndarray of int
        Sorted dropped vertices (Dirichlet or negligible).
    positions : ndarray, shape (n_coarse, d)
        Coarse vertex positions.
    n_fine : int
    """

    members: tuple
    dropped: np.ndarray
    positions: np.ndarray
    n_fine: int

    def __post_init__(self):
        seen = np.zeros(self.n_fine, dtype=np.int64)
        for m in self.members:
            if len(m) == 0:
                raise ValueError("empty agglomerate")
            np.add.at(seen, np.asarray(m, dtype=np.int64), 1)
        np.add.at(seen, np.asarray(self.dropped, dtype=np.int64), 1)
        if np.any(seen != 1):
            raise ValueError("agglomerates and dropped set must partition the vertices")
        if len(self.positions) != len(self.members):
            raise ValueError("one coarse position per agglomerate required")

    @classmethod
    def from_members(cls, members, n_fine, positions=None, fine_positions=None, dropped=None):
        """Build from member lists; positions default to centroids of ``fine_positions``."""
        members = tuple(np.sort(np.asarray(m, dtype=np.int64)) for m in members)
        if dropped is None:
            covered = np.zeros(n_fine, dtype=bool)
            for m in members:
                covered[m] = True
            dropped = np.flatnonzero(~covered)
        dropped = np.sort(np.asarray(dropped, dtype=np.int64))
        if positions is None:
            if fine_positions is None:
                raise ValueError("need positions or fine_positions")
            fine_positions = np.asarray(fine_positions, dtype=float)
            positions = np.array([fine_positions[m].mean(axis=0) for m in members]).reshape(
                len(members), fine_positions.shape[1])
        return cls(members, dropped, np.asarray(positions, dtype=float), int(n_fine))

    @property
    def n_coarse(self):
        return len(self.members)

    def vertex_map(self):
        """Coarse index of every fine vertex, ``-1`` on dropped vertices."""
        out = np.full(self.n_fine, -1, dtype=np.int64)
        for c, m in enumerate(self.members):
            out[m] = c
        return out

    def sizes(self):
        return np.array([len(m) for m in self.members], dtype=np.int64)


def build_scalar_topology(a, positions=None, dirichlet=None):
    """Finest topology of a scalar matrix.

    ``E^{ij} = |a_ij|`` for every nonzero off-diagonal entry and
    ``M^i = max(0, a_ii - sum_{j != i} |a_ij|)``.  For an M-matrix with
    nonnegative row sums this splitting reproduces ``a`` exactly.

    Parameters
    ----------
    a : BlockSparseMatrix
        Symmetric, ``1 x 1`` blocks.
    positions : ndarray, optional
        Vertex coordinates (only used for coarse positions and dumps).
    dirichlet : array_like, optional
        Dirichlet vertex indices.
    """
    if a.block_shape != (1, 1) or a.block_rows != a.block_cols:
        raise ValueError("scalar topology needs a square matrix with 1x1 blocks")
    n = a.block_rows
    rows = a.block_row_ids()
    cols = a.indices
    vals = a.blocks[:, 0, 0]
    off = (rows != cols) & (vals != 0.0)
    upper = off & (rows < cols)
    diag = np.zeros(n)
    np.add.at(diag, rows[rows == cols], vals[rows == cols])
    absum = np.zeros(n)
    np.add.at(absum, rows[off], np.abs(vals[off]))
    m = np.maximum(0.0, diag - absum)
    if positions is None:
        positions = np.zeros((n, 1))
    edges = np.stack([rows[upper], cols[upper]], axis=1)
    return AuxTopology(SCALAR, positions, m.reshape(n, 1, 1), edges,
                       np.abs(vals[upper]).reshape(-1, 1, 1), _flags(n, dirichlet))


def elasticity_edge_weight(block, t, normalize=True):
    """Edge matrix ``c [[s s^T, 0], [0, 0]]`` for one ``d x d`` coupling block.

    ``c`` is the mean absolute entry of ``block``.  ``s`` is the unit edge
    direction when ``normalize`` is set and the raw edge vector otherwise.
    """
    block = np.asarray(block, dtype=float)
    t = np.asarray(t, dtype=float)
    d = t.shape[-1]
    c = np.abs(block).sum(axis=(-2, -1)) / d**2
    length = np.linalg.norm(t, axis=-1)
    if np.any(length == 0.0):
        raise ValueError("coincident vertex positions on an edge")
    s = t / length[..., None] if normalize else t
    return _pad(c[..., None, None] * np.einsum("...i,...j->...ij", s, s), kernel_dim(ELASTICITY, d))


def build_elasticity_topology(a, positions, dirichlet=None, normalize=True):
    """Finest topology of an elasticity matrix with ``d x d`` vertex blocks.

    Every nonzero off-diagonal block ``A_ij`` gives an edge with weight
    :func:`elasticity_edge_weight`; all vertex weights vanish.
    """
    positions = np.asarray(positions, dtype=float)
    d = positions.shape[1]
    if a.block_shape != (d, d) or a.block_rows != a.block_cols or a.block_rows != positions.shape[0]:
        raise ValueError("elasticity topology needs square d x d blocks matching the positions")
    n = a.block_rows
    rows = a.block_row_ids()
    upper = (rows < a.indices) & np.any(a.blocks != 0.0, axis=(1, 2))
    i, j = rows[upper], a.indices[upper]
    weights = elasticity_edge_weight(a.blocks[upper], positions[j] - positions[i], normalize)
    k = kernel_dim(ELASTICITY, d)
    return AuxTopology(ELASTICITY, positions, np.zeros((n, k, k)), np.stack([i, j], axis=1), weights,
                       _flags(n, dirichlet))


def _flags(n, dirichlet):
    flags = np.zeros(n, dtype=bool)
    if dirichlet is not None:
        dirichlet = np.asarray(dirichlet)
        if dirichlet.dtype == bool:
            flags[:] = dirichlet
        else:
            flags[dirichlet.astype(np.int64)] = True
    return flags


def edge_element_matrices(topo, ids=None):
    """Per-edge ``2k x 2k`` contributions ``[Q^{ij} -Q^{ji}]^T E [Q^{ij} -Q^{ji}]``."""
    ids = np.arange(topo.n_edges) if ids is None else np.asarray(ids, dtype=np.int64)
    t = 0.5 * topo.edge_vectors()[ids]
    b = np.concatenate([q_matrices(topo.kind, t), -q_matrices(topo.kind, -t)], axis=2)
    return np.einsum("eai,eab,ebj->eij", b, topo.edge_weights[ids], b)


def assemble_aux_matrix(topo):
    """Auxiliary matrix of a topology as a ``k x k`` block matrix.

    Diagonal blocks ``M^i + sum_j Q^{ij,T} E^{ij} Q^{ij}``, off-diagonal
    blocks ``-Q^{ij,T} E^{ij} Q^{ji}``.
    """
    n, k = topo.n_vertices, topo.k
    i, j = topo.edges[:, 0], topo.edges[:, 1]
    loc = edge_element_matrices(topo)
    diag_ids = np.arange(n)
    rows = np.concatenate([diag_ids, i, j, i, j])
    cols = np.concatenate([diag_ids, i, j, j, i])
    blocks = np.concatenate([topo.vertex_weights, loc[:, :k, :k], loc[:, k:, k:], loc[:, :k, k:], loc[:, k:, :k]])
    return BlockSparseMatrix.from_coo(rows, cols, blocks, (n, n), (k, k))


def discrete_energy(topo, u):
    """Energy norm induced by the topology (no matrix is assembled)."""
    k = topo.k
    u = np.asarray(u, dtype=float).reshape(topo.n_vertices, k)
    vert = np.einsum("ia,iab,ib->", u, topo.vertex_weights, u)
    qij, qji = topo.half_transforms()
    i, j = topo.edges[:, 0], topo.edges[:, 1]
    jump = np.einsum("eab,eb->ea", qij, u[i]) - np.einsum("eab,eb->ea", qji, u[j])
    edge = np.einsum("ea,eab,eb->", jump, topo.edge_weights, jump)
    return float(np.sqrt(max(vert + edge, 0.0)))


def coarsen_topology(topo, agg):
    """Coarse topology whose auxiliary matrix is ``P^T A_hat P`` exactly.

    ``P`` is the tentative prolongation of ``agg``: row ``i in C_J`` holds
    ``Q(x_i - x_J)``, rows of dropped vertices are empty.  Fine edges
    between two agglomerates map to coarse edges through the transport
    between the two edge midpoints; edges from an agglomerate into the
    dropped set are folded into the coarse vertex weight; internal edges
    and edges between dropped vertices vanish.
    """
    if agg.n_fine != topo.n_vertices:
        raise ValueError("agglomeration does not match the topology")
    vmap = agg.vertex_map()
    if np.any(vmap[topo.dirichlet] >= 0):
        raise ValueError("agglomerate contains a Dirichlet vertex")
    kind, k = topo.kind, topo.k
    x = topo.positions
    xc = np.asarray(agg.positions, dtype=float).reshape(agg.n_coarse, topo.dim)
    nc = agg.n_coarse

    def conj(w, t):
        q = q_matrices(kind, t)
        return np.einsum("eai,eab,ebj->eij", q, w, q)

    mc = np.zeros((nc, k, k))
    kept = np.flatnonzero(vmap >= 0)
    np.add.at(mc, vmap[kept], conj(topo.vertex_weights[kept], x[kept] - xc[vmap[kept]]))

    i, j = topo.edges[:, 0], topo.edges[:, 1]
    ci, cj = vmap[i], vmap[j]
    mid = 0.5 * (x[i] + x[j])
    # edge into the dropped set: |Q(m_ij - x_I) u_I|_E^2
    for a, b, ca, cb in ((i, j, ci, cj), (j, i, cj, ci)):
        sel = (ca >= 0) & (cb < 0)
        if np.any(sel):
            np.add.at(mc, ca[sel], conj(topo.edge_weights[sel], mid[sel] - xc[ca[sel]]))

    cross = (ci >= 0) & (cj >= 0) & (ci != cj)
    lo = np.minimum(ci[cross], cj[cross])
    hi = np.maximum(ci[cross], cj[cross])
    cmid = 0.5 * (xc[lo] + xc[hi])
    w = conj(topo.edge_weights[cross], mid[cross] - cmid)
    key = lo * nc + hi
    uniq, inv = np.unique(key, return_inverse=True)
    ec = np.zeros((uniq.size, k, k))
    np.add.at(ec, inv, w)
    cedges = np.stack([uniq // nc, uniq % nc], axis=1)
    return AuxTopology(kind, xc, 0.5 * (mc + mc.transpose(0, 2, 1)), cedges,
                       0.5 * (ec + ec.transpose(0, 2, 1)))


def tentative_prolongation(topo, agg, restrict=False):
    """Piecewise transport prolongation of an agglomeration.

    Row block ``i in C_J`` is ``Q(x_i - x_J)``; dropped rows are empty.
    With ``restrict`` (finest elasticity level) only the ``d`` displacement
    rows of each block are kept, giving ``d x k`` blocks.
    """
    vmap = agg.vertex_map()
    rows = np.flatnonzero(vmap >= 0)
    cols = vmap[rows]
    xc = np.asarray(agg.positions, dtype=float).reshape(agg.n_coarse, topo.dim)
    blocks = q_matrices(topo.kind, topo.positions[rows] - xc[cols])
    k = topo.k
    r = k
    if restrict:
        if topo.kind != ELASTICITY:
            raise ValueError("restricted prolongation only applies to elasticity")
        r = topo.dim
        blocks = blocks[:, :r, :]
    return BlockSparseMatrix.from_coo(rows, cols, blocks, (topo.n_vertices, agg.n_coarse), (r, k))


def rigid_modes(topo):
    """Kernel vectors ``u_i = Q(x_i) u_0`` for each unit ``u_0``; shape ``(n*k, k)``."""
    q = q_matrices(topo.kind, topo.positions)
    return q.reshape(-1, topo.k)


def write_topology(topo, dest):
    """Dump as ``vtx i x y z m..`` / ``edge i j e..`` / ``dir i`` lines."""
    pts = np.zeros((topo.n_vertices, 3))
    pts[:, : min(3, topo.dim)] = topo.positions[:, :3]
    fmt = "{:.17g}".format
    lines = [f"topology {topo.kind} {topo.n_vertices} {topo.dim}"]
    for i in range(topo.n_vertices):
        vals = " ".join(map(fmt, np.concatenate([pts[i], topo.vertex_weights[i].ravel()])))
        lines.append(f"vtx {i} {vals}")
    for (i, j), w in zip(topo.edges, topo.edge_weights):
        lines.append(f"edge {i} {j} " + " ".join(map(fmt, w.ravel())))
    lines += [f"dir {i}" for i in topo.dirichlet_vertices()]
    text = "\n".join(lines) + "\n"
    if isinstance(dest, (str, os.PathLike)):
        with open(dest, "w", encoding="ascii") as fh:
            fh.write(text)
    else:
        dest.write(text)


def read_topology(src):
    """Inverse of :func:`write_topology`."""
    if isinstance(src, (str, os.PathLike)):
        with open(src, encoding="ascii") as fh:
            text = fh.read()
    else:
        text = src.read()
    lines = [ln.split() for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0][0] != "topology":
        raise ValueError("missing 'topology' header")
    kind, n, d = lines[0][1], int(lines[0][2]), int(lines[0][3])
    k = kernel_dim(kind, d)
    pos = np.zeros((n, d))
    vw = np.zeros((n, k, k))
    edges, ew, dirichlet = [], [], []
    for parts in lines[1:]:
        tag = parts[0]
        if tag == "vtx":
            i = int(parts[1])
            vals = np.array(parts[2:], dtype=float)
            pos[i] = vals[:d]
            vw[i] = vals[3:].reshape(k, k)
        elif tag == "edge":
            edges.append((int(parts[1]), int(parts[2])))
            ew.append(np.array(parts[3:], dtype=float).reshape(k, k))
        elif tag == "dir":
            dirichlet.append(int(parts[1]))
        else:
            raise ValueError(f"unknown line tag {tag!r}")
    return AuxTopology(kind, pos, vw, np.array(edges, dtype=np.int64).reshape(-1, 2),
                       np.array(ew).reshape(-1, k, k), _flags(n, dirichlet))
