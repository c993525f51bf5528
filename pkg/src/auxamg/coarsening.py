"""Agglomeration by successive pairwise matching.

Pairs are formed from local quality measures computed on the auxiliary
topology:

``mu_D``
    drops a vertex when its vertex weight alone dominates its diagonal.
``mu_s``
    a cheap trace heuristic used to propose candidates.
``mu_p``
    a ``k x k`` generalized eigenvalue problem that bounds ``mu_g`` for pairs.
``mu_g``
    the agglomerate measure whose supremum bounds the two-grid constant.

Several rounds of matching are run per level, each round pairing up the
agglomerates of the previous one.
"""

from __future__ import annotations

import math
import os
from collections import deque
from dataclasses import dataclass

import numpy as np

from .blocksparse import BlockSparseMatrix
from .dense import DEFAULT_TOL, gen_eig_sup, harmonic_mean, pseudo_inverse, psd_check, range_basis, symmetrize
from .topology import (Agglomeration, assemble_aux_matrix, coarsen_topology, edge_element_matrices,
                       q_matrices, tentative_prolongation)


@dataclass(frozen=True)
class CoarseningParams:
    """Parameters of the successive matching.

    Attributes
    ----------
    sigma : float
        Acceptance threshold (> 1).
    delta : int
        0 or 1; whether outside neighbours stabilize ``mu_p`` / ``mu_g``.
    pick_by_scalar : bool
        Pick candidates by minimal ``mu_s`` (True) or minimal ``mu_p``.
    rounds : int
        Matching rounds per level; agglomerates have at most ``2**rounds`` vertices.
    robust : bool
        When False only ``mu_s`` is used and ``mu_p`` / ``mu_g`` are skipped.
    tol : float
        Relative rank cutoff for pseudo-inverses and PSD checks.
    """

    sigma: float = 20.0
    delta: int = 1
    pick_by_scalar: bool = True
    rounds: int = 2
    robust: bool = True
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        if not self.sigma > 1.0:
            raise ValueError("sigma must exceed 1")
        if self.delta not in (0, 1):
            raise ValueError("delta must be 0 or 1")
        if self.rounds < 1:
            raise ValueError("rounds must be at least 1")


#: Default acceptance thresholds per topology kind.
DEFAULT_SIGMA = {"scalar": 20.0, "elasticity": 80.0}


# -- small dense helpers with a scalar fast path ---------------------------

def _harm(a, b, tol):
    if a.shape == (1, 1):
        s = a[0, 0] + b[0, 0]
        return np.array([[a[0, 0] * b[0, 0] / s if s > 0 else 0.0]])
    return harmonic_mean(a, b, tol)


def _gsup(m, a, tol):
    if m.shape == (1, 1):
        mv, av = m[0, 0], a[0, 0]
        if av > 0:
            return max(mv / av, 0.0)
        return math.inf if mv > 0 else 0.0
    return gen_eig_sup(m, a, tol)


def _conj(q, w):
    return q.T @ w @ q


class _Graph:
    """Per-vertex ``{neighbour: edge id}`` maps of a topology."""

    def __init__(self, topo):
        self.topo = topo
        indptr, nbrs, eids = topo.neighbors()
        self.adj = [dict(zip(nbrs[indptr[i]:indptr[i + 1]].tolist(), eids[indptr[i]:indptr[i + 1]].tolist()))
                    for i in range(topo.n_vertices)]
        tr_e = np.trace(topo.edge_weights, axis1=1, axis2=2) if topo.n_edges else np.zeros(0)
        self.edge_trace = tr_e
        strength = np.trace(topo.vertex_weights, axis1=1, axis2=2).copy()
        if topo.n_edges:
            np.maximum.at(strength, topo.edges[:, 0], tr_e)
            np.maximum.at(strength, topo.edges[:, 1], tr_e)
        self.strength = strength


# -- measures ----------------------------------------------------------------

def mu_D(d_ii, m_i, tol=DEFAULT_TOL):
    """Largest generalized eigenvalue of ``(D_ii, M^i)``; ``inf`` if ``M^i`` misses energy of ``D_ii``."""
    return _gsup(np.asarray(d_ii, dtype=float), np.asarray(m_i, dtype=float), tol)


def mu_D_all(topo, dhat, tol=DEFAULT_TOL):
    """``mu_D`` for every vertex."""
    return np.array([mu_D(dhat[i], topo.vertex_weights[i], tol) for i in range(topo.n_vertices)])


def mu_s(topo, i, j, graph=None):
    """Trace heuristic ``sqrt(s_i s_j) / tr E^{ij}`` with ``s_i = max(tr M^i, max_l tr E^{il})``."""
    graph = graph or _Graph(topo)
    eid = graph.adj[i].get(j)
    if eid is None:
        raise ValueError(f"({i}, {j}) is not an edge")
    tr = graph.edge_trace[eid]
    if tr <= 0.0:
        return math.inf
    return math.sqrt(graph.strength[i] * graph.strength[j]) / tr


def mu_p(topo, dhat, i, j, delta=1, graph=None, tol=DEFAULT_TOL):
    """Pairwise measure: a ``k x k`` generalized eigenvalue problem.

    The left matrix is the harmonic mean of the two diagonal blocks moved to
    the edge midpoint; the right matrix is ``E^{ij}`` plus, for ``delta = 1``,
    half of the harmonic means of the edges to every common non-Dirichlet
    neighbour, moved to the same midpoint.
    """
    graph = graph or _Graph(topo)
    eid = graph.adj[i].get(j)
    if eid is None:
        raise ValueError(f"({i}, {j}) is not an edge")
    kind, x = topo.kind, topo.positions
    t = x[j] - x[i]
    qij, qji = q_matrices(kind, np.stack([0.5 * t, -0.5 * t]))
    left = _harm(_conj(qji, dhat[i]), _conj(qij, dhat[j]), tol)
    right = topo.edge_weights[eid].copy()
    if delta:
        common = [l for l in graph.adj[i] if l in graph.adj[j] and not topo.dirichlet[l]]
        for l in sorted(common):
            q_li, q_lj, q_il_full = q_matrices(kind, np.stack([0.5 * (x[i] - x[l]), 0.5 * (x[j] - x[l]), x[l] - x[i]]))
            h = _harm(_conj(q_li, topo.edge_weights[graph.adj[i][l]]),
                      _conj(q_lj, topo.edge_weights[graph.adj[j][l]]), tol)
            right += 0.5 * _conj(q_il_full @ qji, h)
    return _gsup(symmetrize(left), symmetrize(right), tol)


def mu_g_matrices(topo, dhat, members, delta=1, graph=None, tol=DEFAULT_TOL):
    """Left and right matrices of the agglomerate measure.

    Returns
    -------
    lhs : ndarray
        ``D_C - D_C P_C (P_C^T D_C P_C)^+ P_C^T D_C``, the ``D_C``-norm
        distance to the range of the agglomerate's transport.
    rhs : ndarray
        Vertex weights, internal edge terms and (``delta = 1``) half of the
        generalized Schur complement of every outside non-Dirichlet
        neighbour's star, each neighbour eliminated separately.
    """
    graph = graph or _Graph(topo)
    members = [int(v) for v in members]
    k = topo.k
    nc = len(members)
    local = {v: a for a, v in enumerate(members)}
    x = topo.positions
    xc = x[members].mean(axis=0)

    d_c = np.zeros((nc * k, nc * k))
    rhs = np.zeros((nc * k, nc * k))
    for a, v in enumerate(members):
        sl = slice(a * k, (a + 1) * k)
        d_c[sl, sl] = dhat[v]
        rhs[sl, sl] = topo.vertex_weights[v]
    p = q_matrices(topo.kind, x[members] - xc).reshape(nc * k, k)
    dp = d_c @ p
    lhs = d_c - dp @ pseudo_inverse(symmetrize(p.T @ dp), tol) @ dp.T

    internal, outside = [], {}
    for v in members:
        for w, eid in graph.adj[v].items():
            if w in local:
                if v < w:
                    internal.append(eid)
            elif not topo.dirichlet[w]:
                outside.setdefault(w, []).append((v, eid))
    if internal:
        ids = np.array(internal)
        elem = edge_element_matrices(topo, ids)
        for e, m in zip(ids, elem):
            ia, ib = local[topo.edges[e, 0]], local[topo.edges[e, 1]]
            for sa, la in ((0, ia), (1, ib)):
                for sb, lb in ((0, ia), (1, ib)):
                    rhs[la * k:(la + 1) * k, lb * k:(lb + 1) * k] += m[sa * k:(sa + 1) * k, sb * k:(sb + 1) * k]
    if delta and outside:
        for w in sorted(outside):
            star_cc = np.zeros((nc * k, nc * k))
            star_cw = np.zeros((nc * k, k))
            star_ww = np.zeros((k, k))
            for v, eid in outside[w]:
                t = x[w] - x[v]
                q_vw, q_wv = q_matrices(topo.kind, np.stack([0.5 * t, -0.5 * t]))
                e = topo.edge_weights[eid]
                la = local[v]
                sl = slice(la * k, (la + 1) * k)
                star_cc[sl, sl] += _conj(q_vw, e)
                star_cw[sl] -= q_vw.T @ e @ q_wv
                star_ww += _conj(q_wv, e)
            rhs += 0.5 * (star_cc - star_cw @ pseudo_inverse(symmetrize(star_ww), tol) @ star_cw.T)
    return symmetrize(lhs), symmetrize(rhs)


def mu_g_value(topo, dhat, members, delta=1, graph=None, tol=DEFAULT_TOL):
    """Exact agglomerate measure (``inf`` on a range mismatch, ``0`` for singletons)."""
    if len(members) < 2:
        return 0.0
    lhs, rhs = mu_g_matrices(topo, dhat, members, delta, graph, tol)
    return gen_eig_sup(lhs, rhs, tol)


def mu_g_check(topo, dhat, members, delta, sigma, graph=None, tol=DEFAULT_TOL):
    """``True`` iff ``sigma * rhs - lhs`` is PSD (pivoted Cholesky, no eigensolve)."""
    if len(members) < 2:
        return True
    lhs, rhs = mu_g_matrices(topo, dhat, members, delta, graph, tol)
    test = sigma * rhs - lhs
    scale = max(np.max(np.abs(lhs)), np.max(np.abs(sigma * rhs)))
    if scale == 0.0:
        return True
    return psd_check(test / scale, tol)


# -- ordering ----------------------------------------------------------------

def cuthill_mckee(indptr, indices):
    """Cuthill-McKee ordering of an undirected graph in CSR form.

    Components are processed by ascending smallest vertex.  Each is seeded
    at its minimum-degree vertex (lowest index on ties) and traversed
    breadth-first, visiting unvisited neighbours by increasing degree, then
    index.
    """
    indptr = np.asarray(indptr)
    indices = np.asarray(indices)
    n = indptr.size - 1
    degree = np.diff(indptr)
    nbrs = [sorted(indices[indptr[i]:indptr[i + 1]].tolist(), key=lambda j: (degree[j], j)) for i in range(n)]
    comp_seen = np.zeros(n, dtype=bool)
    visited = np.zeros(n, dtype=bool)
    order = []
    for start in range(n):
        if comp_seen[start]:
            continue
        comp = [start]
        comp_seen[start] = True
        queue = deque([start])
        while queue:
            v = queue.popleft()
            for w in nbrs[v]:
                if not comp_seen[w]:
                    comp_seen[w] = True
                    comp.append(w)
                    queue.append(w)
        seed = min(comp, key=lambda v: (degree[v], v))
        visited[seed] = True
        queue = deque([seed])
        while queue:
            v = queue.popleft()
            order.append(v)
            for w in nbrs[v]:
                if not visited[w]:
                    visited[w] = True
                    queue.append(w)
    return np.array(order, dtype=np.int64)


# -- matching ----------------------------------------------------------------

@dataclass
class _FineContext:
    topo: object
    dhat: np.ndarray
    graph: _Graph


def match_round(topo, dhat, params, active, order, members=None, fine=None, graph=None):
    """One pass of pairwise matching.

    Parameters
    ----------
    topo : AuxTopology
        Current-round topology (measures ``mu_s``, ``mu_p``).
    dhat : ndarray, shape (n, k, k)
        Diagonal blocks of the current-round auxiliary matrix.
    params : CoarseningParams
    active : array_like of bool
        Vertices taking part (not dropped).
    order : sequence of int
        Iteration order; also breaks ties between equal measures.
    members : list of sequences, optional
        Fine vertices represented by each current vertex (for ``mu_g``).
    fine : _FineContext, optional
        Fine-level topology used by ``mu_g``.

    Returns
    -------
    list of tuple
        Merged groups (one or two current vertices) in creation order.
    """
    graph = graph or _Graph(topo)
    n = topo.n_vertices
    rank = np.full(n, n, dtype=np.int64)
    rank[np.asarray(order, dtype=np.int64)] = np.arange(len(order))
    pending = np.zeros(n, dtype=bool)
    pending[np.asarray(order, dtype=np.int64)] = True
    pending &= np.asarray(active, dtype=bool)
    sigma, delta, tol = params.sigma, params.delta, params.tol
    groups = []
    for i in order:
        i = int(i)
        if not pending[i]:
            continue
        pending[i] = False
        cands = []
        for j in graph.adj[i]:
            if pending[j]:
                ms = mu_s(topo, i, j, graph)
                if ms < sigma:
                    cands.append((ms, rank[j], j))
        if params.robust and not params.pick_by_scalar:
            cands = [(mu_p(topo, dhat, i, j, delta, graph, tol), r, j) for _, r, j in cands]
        cands.sort()
        partner = None
        for score, _, j in cands:
            if not params.robust:
                partner = j
                break
            mp = score if not params.pick_by_scalar else mu_p(topo, dhat, i, j, delta, graph, tol)
            if not mp < sigma:
                continue
            if members is not None and len(members[i]) + len(members[j]) > 2:
                union = sorted(list(members[i]) + list(members[j]))
                if not mu_g_check(fine.topo, fine.dhat, union, delta, sigma, fine.graph, tol):
                    continue
            partner = j
            break
        if partner is None:
            groups.append((i,))
        else:
            pending[partner] = False
            groups.append((i, partner))
    return groups


def successive_matching(topo, params, dhat=None, return_history=False):
    """Agglomerate a topology by ``params.rounds`` rounds of pairwise matching.

    Dirichlet vertices and vertices with ``mu_D < sigma`` are dropped
    first.  The first round walks the kept vertices in Cuthill-McKee order;
    later rounds walk the previous round's agglomerates in reverse order of
    creation, on the intermediate coarse topology.

    Returns
    -------
    Agglomeration
        Members are fine vertex indices; positions are centroids.
    """
    if dhat is None:
        dhat = assemble_aux_matrix(topo).diagonal_blocks()
    n = topo.n_vertices
    fine_graph = _Graph(topo)
    dropped = topo.dirichlet.copy()
    dropped |= mu_D_all(topo, dhat, params.tol) < params.sigma
    indptr, nbrs, _ = topo.neighbors()
    order = cuthill_mckee(indptr, nbrs)
    fine = _FineContext(topo, dhat, fine_graph)

    cur_topo, cur_dhat, cur_graph = topo, dhat, fine_graph
    members = [(i,) for i in range(n)]
    active = ~dropped
    history = []
    for r in range(params.rounds):
        groups = match_round(cur_topo, cur_dhat, params, active, order,
                             members if r > 0 else None, fine, cur_graph)
        new_members = [tuple(sorted(v for c in g for v in members[c])) for g in groups]
        history.append(new_members)
        if r + 1 < params.rounds and groups:
            agg = Agglomeration.from_members([np.array(g) for g in groups], cur_topo.n_vertices,
                                             positions=np.array([topo.positions[list(m)].mean(axis=0)
                                                                 for m in new_members]))
            cur_topo = coarsen_topology(cur_topo, agg)
            cur_dhat = assemble_aux_matrix(cur_topo).diagonal_blocks()
            cur_graph = _Graph(cur_topo)
            active = np.ones(len(groups), dtype=bool)
            order = np.arange(len(groups))[::-1]
        members = new_members
        if not groups:
            break
    agg = Agglomeration.from_members([np.array(m) for m in members], n, fine_positions=topo.positions,
                                     dropped=np.flatnonzero(dropped))
    return (agg, history) if return_history else agg


# -- prolongation and kernels ------------------------------------------------

def build_tentative_prolongation(topo, agg, finest_elasticity=False):
    """Tentative prolongation; ``d x k`` blocks on the finest elasticity level."""
    return tentative_prolongation(topo, agg, restrict=finest_elasticity)


@dataclass(frozen=True, eq=False)
class VertexKernelBasis:
    """Per-vertex orthonormal bases of the range of each diagonal block."""

    bases: tuple
    k: int

    def sizes(self):
        return np.array([b.shape[1] for b in self.bases], dtype=np.int64)

    def matrix(self):
        """Block-diagonal ``E`` with ``E^T E = I``, as a dense array."""
        n = len(self.bases)
        out = np.zeros((n * self.k, int(self.sizes().sum())))
        col = 0
        for i, b in enumerate(self.bases):
            out[i * self.k:(i + 1) * self.k, col:col + b.shape[1]] = b
            col += b.shape[1]
        return out

    def projector(self):
        """``E E^T`` as a block-diagonal matrix."""
        return BlockSparseMatrix.block_diagonal(np.array([b @ b.T for b in self.bases]).reshape(-1, self.k, self.k))


def vertex_kernel_bases(a, tol=DEFAULT_TOL):
    """Range bases of the diagonal blocks of a level matrix."""
    diag = a.diagonal_blocks()
    k = a.block_shape[0]
    bases = []
    for block in diag:
        if not np.any(block):
            bases.append(np.zeros((k, 0)))
        else:
            bases.append(range_basis(symmetrize(block), tol))
    return VertexKernelBasis(tuple(bases), k)


def write_agglomeration(topo, agg, dest):
    """One CSV line ``i,x,y,z,agg_id`` per vertex (``-1`` for dropped vertices)."""
    vmap = agg.vertex_map()
    pts = np.zeros((topo.n_vertices, 3))
    pts[:, :topo.dim] = topo.positions[:, :3]
    lines = [f"{i},{p[0]:.17g},{p[1]:.17g},{p[2]:.17g},{c}" for i, (p, c) in enumerate(zip(pts, vmap))]
    text = "\n".join(lines) + "\n"
    if isinstance(dest, (str, os.PathLike)):
        with open(dest, "w", encoding="ascii") as fh:
            fh.write(text)
    else:
        dest.write(text)
