"""Block smoothers for the multigrid cycle.

All smoothers work on vertex blocks and pseudo-invert singular diagonal
blocks.  A smoother exposes ``solve(r)`` (``M^{-1} r``) and
``solve_transpose(r)`` (``M^{-T} r``); the cycle pre-smooths with ``M``
and post-smooths with ``M^T`` so that the preconditioner is symmetric.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .blocksparse import BlockSparseMatrix
from .dense import DEFAULT_TOL
from .smoothing import batched_pinv

SMOOTHERS = ("gauss-seidel", "jacobi", "l1")


class Smoother:
    """Base class; subclasses fill in ``solve`` and ``solve_transpose``."""

    kind = ""

    def __init__(self, a):
        self.a = a
        self.a_csr = a.to_scipy("csr")

    def solve(self, r):
        raise NotImplementedError

    def solve_transpose(self, r):
        raise NotImplementedError

    def presmooth(self, b, x, steps=1):
        for _ in range(steps):
            x = x + self.solve(b - self.a_csr @ x)
        return x

    def postsmooth(self, b, x, steps=1):
        for _ in range(steps):
            x = x + self.solve_transpose(b - self.a_csr @ x)
        return x

    def matrix(self):
        """Dense ``M`` (for diagnostics on small problems)."""
        n = self.a.shape[0]
        return np.linalg.pinv(np.column_stack([self.solve(e) for e in np.eye(n)]))

    def inverse_matrix(self):
        """Dense ``M^{-1}``."""
        n = self.a.shape[0]
        return np.column_stack([self.solve(e) for e in np.eye(n)])


def _block_diag_csr(blocks):
    return BlockSparseMatrix.block_diagonal(blocks).to_scipy("csr")


class BlockGaussSeidel(Smoother):
    """Forward block Gauss-Seidel, ``M^{-1} = (I + D^+ L)^{-1} D^+``.

    ``L`` is the strictly block-lower part of ``A``.  The backward sweep
    ``M^{-T}`` reuses the same triangular factor.
    """

    kind = "gauss-seidel"

    def __init__(self, a, tol=DEFAULT_TOL):
        super().__init__(a)
        self.dinv = _block_diag_csr(batched_pinv(a.diagonal_blocks(), tol))
        rows = a.block_row_ids()
        lower = rows > a.indices
        low = BlockSparseMatrix.from_coo(rows[lower], a.indices[lower], a.blocks[lower],
                                         (a.block_rows, a.block_cols), a.block_shape).to_scipy("csr")
        n = a.shape[0]
        unit = (sp.identity(n, format="csr") + self.dinv @ low).tocsc()
        self._lu = spla.splu(unit, permc_spec="NATURAL", diag_pivot_thresh=0.0,
                             options={"SymmetricMode": True}) if n else None

    def solve(self, r):
        if self._lu is None:
            return np.zeros_like(r)
        return self._lu.solve(self.dinv @ r)

    def solve_transpose(self, r):
        if self._lu is None:
            return np.zeros_like(r)
        return self.dinv @ self._lu.solve(np.asarray(r, dtype=float), trans="T")


class _DiagonalSmoother(Smoother):
    def __init__(self, a, inv_blocks):
        super().__init__(a)
        self.minv = _block_diag_csr(inv_blocks)

    def solve(self, r):
        return self.minv @ r

    def solve_transpose(self, r):
        return self.minv @ r


def power_iteration(op, n, iters=30):
    """Deterministic power iteration estimate of the spectral radius of ``op``."""
    if n == 0:
        return 0.0
    v = np.cos(np.arange(1, n + 1))
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = op(v)
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        lam = norm
        v = w / norm
    return float(lam)


class BlockJacobi(_DiagonalSmoother):
    """Damped block Jacobi, ``M = c D`` with ``c = max(1, 3 rho(D^+ A) / 4)``."""

    kind = "jacobi"

    def __init__(self, a, tol=DEFAULT_TOL):
        dinv = batched_pinv(a.diagonal_blocks(), tol)
        csr = a.to_scipy("csr")
        dcsr = _block_diag_csr(dinv)
        rho = power_iteration(lambda v: dcsr @ (csr @ v), a.shape[0])
        self.scale = max(1.0, 0.75 * rho)
        super().__init__(a, dinv / self.scale)


class BlockL1(_DiagonalSmoother):
    """Block l1 smoother, ``M_b = A_bb + diag(sum_{j outside b} |a_ij|)``."""

    kind = "l1"

    def __init__(self, a, tol=DEFAULT_TOL):
        rows = a.block_row_ids()
        off = rows != a.indices
        k = a.block_shape[0]
        extra = np.zeros((a.block_rows, k))
        np.add.at(extra, rows[off], np.abs(a.blocks[off]).sum(axis=2))
        blocks = a.diagonal_blocks().copy()
        idx = np.arange(k)
        blocks[:, idx, idx] += extra
        self.blocks = blocks
        super().__init__(a, batched_pinv(blocks, tol))


def make_smoother(a, kind="gauss-seidel", tol=DEFAULT_TOL):
    """Build a block smoother for the block matrix ``a``."""
    if kind == "gauss-seidel":
        return BlockGaussSeidel(a, tol)
    if kind == "jacobi":
        return BlockJacobi(a, tol)
    if kind == "l1":
        return BlockL1(a, tol)
    raise ValueError(f"unknown smoother {kind!r}; choose from {SMOOTHERS}")
