"""Smoothed prolongation through a filtered auxiliary matrix.

The prolongation is smoothed with one damped Jacobi step,
``P_s = (I - omega D0^+ A0) P``.  ``A0`` mixes two kinds of rows:

* *standard* rows (class S) copy the level matrix where its row is short;
* *auxiliary* rows (class A) are assembled from a few strong edges of the
  auxiliary topology only.  Every edge term annihilates transported
  kernel vectors, so filtering never breaks kernel preservation.

Dropped vertices (class D) get identity rows and zero prolongation rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .blocksparse import BlockSparseMatrix
from .dense import DEFAULT_TOL
from .topology import q_matrices

CLASS_S, CLASS_A, CLASS_D = 0, 1, 2


@dataclass(frozen=True)
class SmoothingParams:
    """Parameters of the prolongation smoother.

    Attributes
    ----------
    omega : float
        Damping in ``(0, 1]``.
    cap : int
        Maximum number of filtered neighbours of an auxiliary row.
    standard_cap : int, optional
        Rows of the level matrix with at most ``standard_cap + 1`` blocks
        are used verbatim; defaults to ``cap``.
    """

    omega: float = 2.0 / 3.0
    cap: int = 4
    standard_cap: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.omega <= 1.0:
            raise ValueError("omega must lie in [0, 1]")
        if self.cap < 0 or (self.standard_cap is not None and self.standard_cap < 0):
            raise ValueError("caps must be nonnegative")

    @property
    def row_limit(self):
        return self.cap if self.standard_cap is None else self.standard_cap


@dataclass(frozen=True, eq=False)
class FilteredAuxMatrix:
    """Filtered auxiliary matrix ``A0`` with its vertex classes.

    Attributes
    ----------
    classes : ndarray of int
        ``CLASS_S``, ``CLASS_A`` or ``CLASS_D`` per vertex.
    filtered : dict
        Filtered neighbour sets of auxiliary vertices.
    matrix : BlockSparseMatrix
        ``A0`` with ``k x k`` blocks.
    diag_pinv : ndarray, shape (n, k, k)
        Pseudo-inverses of the diagonal blocks of ``A0``.
    """

    classes: np.ndarray
    filtered: dict
    matrix: BlockSparseMatrix
    diag_pinv: np.ndarray


def _pad_blocks(blocks, k):
    d = blocks.shape[-1]
    if d == k:
        return blocks
    out = np.zeros(blocks.shape[:-2] + (k, k))
    out[..., :d, :d] = blocks
    return out


def batched_pinv(blocks, tol=DEFAULT_TOL):
    """Pseudo-inverse of every symmetric block in ``(n, k, k)``."""
    blocks = 0.5 * (blocks + blocks.transpose(0, 2, 1))
    if blocks.shape[0] == 0:
        return blocks.copy()
    w, v = np.linalg.eigh(blocks)
    scale = np.max(np.abs(w), axis=1, keepdims=True)
    keep = np.abs(w) > tol * scale
    inv = np.where(keep, 1.0 / np.where(keep, w, 1.0), 0.0)
    return np.einsum("nij,nj,nkj->nik", v, inv, v)


def filtered_neighbors(i, nbrs, traces, cap, vmap):
    """Up to ``cap`` of the neighbours ``nbrs`` of ``i``, strongest ``tr E`` first.

    If none of them shares ``i``'s agglomerate, the weakest pick is swapped
    for the strongest agglomerate mate (when one exists).
    """
    if cap == 0 or nbrs.size == 0:
        return []
    order = np.lexsort((nbrs, -traces))
    chosen = [int(nbrs[o]) for o in order[:cap]]
    if vmap[i] >= 0 and not any(vmap[j] == vmap[i] for j in chosen):
        mates = [int(nbrs[o]) for o in order if vmap[nbrs[o]] == vmap[i]]
        if mates:
            chosen[-1] = mates[0]
    return sorted(chosen)


def build_filtered_aux(topo, a, agg, params, tol=DEFAULT_TOL):
    """Assemble the filtered auxiliary matrix of one level.

    Parameters
    ----------
    topo : AuxTopology
        Level topology (``k x k`` weights).
    a : BlockSparseMatrix
        Level matrix; its blocks may be smaller than ``k`` (finest
        elasticity level), in which case they are zero padded.
    agg : Agglomeration
    params : SmoothingParams
    """
    n, k = topo.n_vertices, topo.k
    if a.block_rows != n:
        raise ValueError("level matrix and topology disagree in size")
    vmap = agg.vertex_map()
    classes = np.where(vmap < 0, CLASS_D, CLASS_A)
    short = a.row_lengths() <= params.row_limit + 1
    classes[(classes == CLASS_A) & short] = CLASS_S

    indptr, nbrs, eids = topo.neighbors()
    traces = np.trace(topo.edge_weights, axis1=1, axis2=2)
    x = topo.positions

    rows, cols, blocks = [], [], []
    # class S: verbatim rows
    arow = a.block_row_ids()
    sel = classes[arow] == CLASS_S
    rows.append(arow[sel])
    cols.append(a.indices[sel])
    blocks.append(_pad_blocks(a.blocks[sel], k))
    # class D: identity
    dvert = np.flatnonzero(classes == CLASS_D)
    rows.append(dvert)
    cols.append(dvert)
    blocks.append(np.broadcast_to(np.eye(k), (dvert.size, k, k)))
    # class A: filtered edge terms
    filtered = {}
    ai, al, ae = [], [], []
    for i in np.flatnonzero(classes == CLASS_A):
        lo, hi = indptr[i], indptr[i + 1]
        f = filtered_neighbors(i, nbrs[lo:hi], traces[eids[lo:hi]], params.cap, vmap)
        filtered[int(i)] = f
        lookup = dict(zip(nbrs[lo:hi].tolist(), eids[lo:hi].tolist()))
        for l in f:
            ai.append(i)
            al.append(l)
            ae.append(lookup[l])
    if ai:
        ai, al, ae = np.array(ai), np.array(al), np.array(ae)
        t = 0.5 * (x[al] - x[ai])
        q_il = q_matrices(topo.kind, t)
        q_li = q_matrices(topo.kind, -t)
        e = topo.edge_weights[ae]
        rows += [ai, ai]
        cols += [ai, al]
        blocks += [np.einsum("eai,eab,ebj->eij", q_il, e, q_il), -np.einsum("eai,eab,ebj->eij", q_il, e, q_li)]
    # class A vertices with empty filter sets still need a (zero) diagonal entry
    avert = np.array(sorted(filtered), dtype=np.int64)
    rows.append(avert)
    cols.append(avert)
    blocks.append(np.zeros((avert.size, k, k)))
    a0 = BlockSparseMatrix.from_coo(np.concatenate(rows), np.concatenate(cols),
                                    np.concatenate([np.asarray(b).reshape(-1, k, k) for b in blocks]), (n, n), (k, k))
    return FilteredAuxMatrix(classes, filtered, a0, batched_pinv(a0.diagonal_blocks(), tol))


def smooth_prolongation(filt, p, omega, restrict_dim=None):
    """``(I - omega D0^+ A0) P``, optionally keeping the first ``restrict_dim`` rows of each block.

    ``p`` must have ``k x k`` blocks matching ``filt.matrix``.
    """
    a0 = filt.matrix
    k = a0.block_shape[0]
    if p.block_rows != a0.block_cols or p.block_shape[0] != k:
        raise ValueError(f"shape mismatch: A0 is {a0.shape} with {k}x{k} blocks, P is {p.shape}")
    ps = p.to_scipy("csr")
    dinv = BlockSparseMatrix.block_diagonal(filt.diag_pinv).to_scipy("csr")
    out = (ps - omega * (dinv @ (a0.to_scipy("csr") @ ps))).tocsr()
    c = p.block_shape[1]
    if restrict_dim is not None:
        keep = (np.arange(out.shape[0]) % k) < restrict_dim
        out = out[np.flatnonzero(keep)]
        r = restrict_dim
    else:
        r = k
    out.eliminate_zeros()
    return BlockSparseMatrix.from_scipy(out, (r, c))


def restrict_rows(p, dim):
    """Keep the first ``dim`` rows of each block (finest elasticity prolongation)."""
    k = p.block_shape[0]
    return BlockSparseMatrix(p.indptr, p.indices, p.blocks[:, :dim, :], p.block_cols, (dim, p.block_shape[1])) \
        if dim != k else p
