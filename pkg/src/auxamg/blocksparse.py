"""Block compressed sparse row matrices with small dense blocks.

``BlockSparseMatrix`` stores ``block_rows x block_cols`` blocks of a fixed
``(r, c)`` shape.  Heavy products are delegated to ``scipy.sparse`` (BSR/CSR)
while the container itself stays a plain immutable value.
"""

from __future__ import annotations

import io
import os

import numpy as np
import scipy.sparse as sp


class BlockSparseMatrix:
    """Immutable block-CSR matrix.

    Parameters
    ----------
    indptr : array_like of int, shape (block_rows + 1,)
        Row offsets into ``indices`` / ``blocks``.
    indices : array_like of int, shape (nnzb,)
        Block column indices, strictly increasing within each row.
    blocks : array_like, shape (nnzb, r, c)
        Dense blocks.
    block_cols : int
        Number of block columns.
    block_shape : tuple of int, optional
        Needed only when ``nnzb == 0``.
    """

    __slots__ = ("indptr", "indices", "blocks", "block_cols", "block_shape")

    def __init__(self, indptr, indices, blocks, block_cols, block_shape=None):
        indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        indices = np.ascontiguousarray(indices, dtype=np.int64)
        blocks = np.asarray(blocks, dtype=float)
        if block_shape is None:
            if blocks.ndim != 3:
                raise ValueError("blocks must have shape (nnzb, r, c)")
            block_shape = blocks.shape[1:]
        block_shape = (int(block_shape[0]), int(block_shape[1]))
        blocks = np.ascontiguousarray(blocks.reshape((-1,) + block_shape))
        if indptr.ndim != 1 or indptr.size < 1 or indptr[0] != 0:
            raise ValueError("invalid indptr")
        if indptr[-1] != indices.size or indices.size != blocks.shape[0]:
            raise ValueError("indptr, indices and blocks disagree in length")
        if np.any(np.diff(indptr) < 0):
            raise ValueError("indptr must be nondecreasing")
        if indices.size:
            if indices.min() < 0 or indices.max() >= block_cols:
                raise ValueError("block column index out of range")
            step = np.diff(indices)
            row_start = np.zeros(indices.size, dtype=bool)
            row_start[indptr[:-1][np.diff(indptr) > 0]] = True
            if np.any((step <= 0) & ~row_start[1:]):
                raise ValueError("column indices must be strictly increasing within a row")
        indptr, indices, blocks = (np.array(arr, order="C", copy=True) for arr in (indptr, indices, blocks))
        for arr in (indptr, indices, blocks):
            arr.setflags(write=False)
        self.indptr = indptr
        self.indices = indices
        self.blocks = blocks
        self.block_cols = int(block_cols)
        self.block_shape = block_shape

    # -- construction -----------------------------------------------------

    @classmethod
    def from_scipy(cls, a, block_shape):
        """Convert any scipy sparse matrix; explicit zeros are kept."""
        r, c = block_shape
        a = sp.bsr_matrix(a, blocksize=(r, c))
        a.sort_indices()
        a.sum_duplicates()
        nbr = a.shape[0] // r
        nbc = a.shape[1] // c
        return cls(a.indptr, a.indices, a.data, nbc, (r, c)) if nbr else cls(
            np.zeros(1, dtype=np.int64), [], np.zeros((0, r, c)), nbc, (r, c))

    @classmethod
    def from_dense(cls, a, block_shape, drop_zero_blocks=True):
        a = np.asarray(a, dtype=float)
        r, c = block_shape
        if a.shape[0] % r or a.shape[1] % c:
            raise ValueError("dense shape is not a multiple of the block shape")
        nbr, nbc = a.shape[0] // r, a.shape[1] // c
        tiles = a.reshape(nbr, r, nbc, c).transpose(0, 2, 1, 3)
        mask = np.ones((nbr, nbc), dtype=bool)
        if drop_zero_blocks:
            mask = np.any(tiles != 0.0, axis=(2, 3))
        rows, cols = np.nonzero(mask)
        indptr = np.zeros(nbr + 1, dtype=np.int64)
        np.add.at(indptr, rows + 1, 1)
        return cls(np.cumsum(indptr), cols, tiles[rows, cols], nbc, (r, c))

    @classmethod
    def from_coo(cls, rows, cols, blocks, shape, block_shape):
        """Assemble from block triplets; duplicate positions are summed in input order."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        r, c = block_shape
        blocks = np.asarray(blocks, dtype=float).reshape(-1, r, c)
        nbr, nbc = shape
        if rows.size == 0:
            return cls(np.zeros(nbr + 1, dtype=np.int64), [], np.zeros((0, r, c)), nbc, (r, c))
        key = rows * nbc + cols
        uniq, inverse = np.unique(key, return_inverse=True)
        summed = np.zeros((uniq.size, r, c))
        np.add.at(summed, inverse, blocks)
        urows = uniq // nbc
        indptr = np.zeros(nbr + 1, dtype=np.int64)
        np.add.at(indptr, urows + 1, 1)
        return cls(np.cumsum(indptr), uniq % nbc, summed, nbc, (r, c))

    @classmethod
    def block_diagonal(cls, blocks):
        blocks = np.asarray(blocks, dtype=float)
        n = blocks.shape[0]
        return cls(np.arange(n + 1), np.arange(n), blocks, n, blocks.shape[1:])

    @classmethod
    def identity(cls, n, k=1):
        return cls.block_diagonal(np.broadcast_to(np.eye(k), (n, k, k)))

    # -- properties -------------------------------------------------------

    @property
    def block_rows(self):
        return self.indptr.size - 1

    @property
    def nnzb(self):
        return self.indices.size

    @property
    def nnz(self):
        """Number of stored scalar entries."""
        return self.nnzb * self.block_shape[0] * self.block_shape[1]

    @property
    def shape(self):
        return (self.block_rows * self.block_shape[0], self.block_cols * self.block_shape[1])

    def row_lengths(self):
        return np.diff(self.indptr)

    def row(self, i):
        """Column indices and blocks of block row ``i``."""
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return self.indices[lo:hi], self.blocks[lo:hi]

    def block_row_ids(self):
        return np.repeat(np.arange(self.block_rows), np.diff(self.indptr))

    def get_block(self, i, j):
        cols, blocks = self.row(i)
        pos = np.searchsorted(cols, j)
        if pos < cols.size and cols[pos] == j:
            return blocks[pos].copy()
        return np.zeros(self.block_shape)

    def diagonal_blocks(self):
        """Diagonal blocks as an array of shape ``(n, r, c)`` (zeros where absent)."""
        n = min(self.block_rows, self.block_cols)
        out = np.zeros((n,) + self.block_shape)
        rows = self.block_row_ids()
        on_diag = rows == self.indices
        out[rows[on_diag]] = self.blocks[on_diag]
        return out

    # -- conversion -------------------------------------------------------

    def to_scipy(self, fmt="csr"):
        r, c = self.block_shape
        if self.nnzb == 0:
            return sp.csr_matrix(self.shape) if fmt == "csr" else sp.bsr_matrix(self.shape, blocksize=(r, c))
        bsr = sp.bsr_matrix((self.blocks, self.indices, self.indptr), shape=self.shape)
        return bsr if fmt == "bsr" else bsr.asformat(fmt)

    def to_dense(self):
        r, c = self.block_shape
        tiles = np.zeros((self.block_rows, self.block_cols, r, c))
        tiles[self.block_row_ids(), self.indices] = self.blocks
        return tiles.transpose(0, 2, 1, 3).reshape(self.shape)

    def transpose(self):
        r, c = self.block_shape
        rows = self.block_row_ids()
        return BlockSparseMatrix.from_coo(self.indices, rows, self.blocks.transpose(0, 2, 1),
                                          (self.block_cols, self.block_rows), (c, r))

    @property
    def T(self):
        return self.transpose()

    def matvec(self, x):
        return sparse_matvec(self, x)

    def __matmul__(self, x):
        return sparse_matvec(self, x)

    def is_structurally_symmetric(self):
        if self.block_rows != self.block_cols:
            return False
        rows = self.block_row_ids()
        a = set(zip(rows.tolist(), self.indices.tolist()))
        return all((j, i) in a for i, j in a)

    def __repr__(self):
        return (f"BlockSparseMatrix(block_rows={self.block_rows}, block_cols={self.block_cols}, "
                f"block_shape={self.block_shape}, nnzb={self.nnzb})")


def sparse_matvec(a, x):
    """Block matrix times block vector.

    ``x`` may be flat (length ``block_cols * c``) or shaped
    ``(block_cols, c)``; the result has the matching layout.
    """
    x = np.asarray(x, dtype=float)
    r, c = a.block_shape
    blocked = x.ndim == 2
    if x.size != a.block_cols * c:
        raise ValueError(f"dimension mismatch: matrix has {a.block_cols * c} columns, vector {x.size}")
    xb = x.reshape(a.block_cols, c)
    contrib = np.einsum("bij,bj->bi", a.blocks, xb[a.indices])
    y = np.zeros((a.block_rows, r))
    np.add.at(y, a.block_row_ids(), contrib)
    return y if blocked else y.ravel()


def galerkin_product(p, a):
    """Coarse matrix ``P^T A P``, symmetrized.

    ``a`` has square ``r x r`` blocks, ``p`` has ``r x c`` blocks; the result
    has ``c x c`` blocks.
    """
    r, c = p.block_shape
    if a.block_rows != a.block_cols or a.block_shape != (r, r):
        raise ValueError(f"shape mismatch: A blocks {a.block_shape}, P blocks {p.block_shape}")
    if p.block_rows != a.block_cols:
        raise ValueError("P and A do not conform")
    ps = p.to_scipy("csr")
    coarse = (ps.T @ a.to_scipy("csr") @ ps).tocsr()
    coarse = 0.5 * (coarse + coarse.T)
    return BlockSparseMatrix.from_scipy(coarse, (c, c))


def write_blocksparse(a, dest):
    """Write ``a`` in the line-based coordinate text format (17 significant digits)."""
    r, c = a.block_shape
    lines = [f"blocksparse {a.block_rows} {a.block_cols} {r} {c}"]
    rows = a.block_row_ids()
    for b in range(a.nnzb):
        vals = " ".join(f"{v:.17g}" for v in a.blocks[b].ravel())
        lines.append(f"{rows[b]} {a.indices[b]} {vals}")
    text = "\n".join(lines) + "\n"
    if isinstance(dest, (str, os.PathLike)):
        with open(dest, "w", encoding="ascii") as fh:
            fh.write(text)
    else:
        dest.write(text)


def read_blocksparse(src):
    """Inverse of :func:`write_blocksparse`."""
    if isinstance(src, (str, os.PathLike)):
        with open(src, encoding="ascii") as fh:
            text = fh.read()
    elif isinstance(src, io.IOBase) or hasattr(src, "read"):
        text = src.read()
    else:
        raise TypeError("src must be a path or a readable file")
    lines = [ln for ln in text.splitlines() if ln.strip()]
    head = lines[0].split()
    if len(head) != 5 or head[0] != "blocksparse":
        raise ValueError("missing 'blocksparse' header")
    nbr, nbc, r, c = (int(v) for v in head[1:])
    rows, cols, blocks = [], [], []
    for ln in lines[1:]:
        parts = ln.split()
        if len(parts) != 2 + r * c:
            raise ValueError(f"malformed block line: {ln!r}")
        rows.append(int(parts[0]))
        cols.append(int(parts[1]))
        blocks.append([float(v) for v in parts[2:]])
    return BlockSparseMatrix.from_coo(rows, cols, np.reshape(blocks, (-1, r, c)), (nbr, nbc), (r, c))
