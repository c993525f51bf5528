"""Multigrid hierarchy setup and cycling."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla

from .blocksparse import galerkin_product
from .coarsening import DEFAULT_SIGMA, CoarseningParams, successive_matching, vertex_kernel_bases
from .dense import DEFAULT_TOL
from .smoothers import make_smoother
from .smoothing import SmoothingParams, build_filtered_aux, restrict_rows, smooth_prolongation
from .topology import ELASTICITY, assemble_aux_matrix, coarsen_topology, tentative_prolongation


class CoarseSolveError(RuntimeError):
    """The regularized coarsest matrix could not be factorized."""


@dataclass(frozen=True)
class HierarchyConfig:
    """Setup parameters.

    Attributes
    ----------
    coarsening : CoarseningParams
    rounds : tuple of int
        Matching rounds per level; the last entry repeats on deeper levels.
    prolongation : {"smoothed", "tentative"}
    smoothing : SmoothingParams
    smoother : {"gauss-seidel", "jacobi", "l1"}
    pre_steps, post_steps : int
    coarse_size : int
        Static coarsest-level vertex threshold.
    coarse_reduction : float
        Coarsen until ``n <= min(coarse_size, n0 / coarse_reduction)``.
    max_levels : int
    stall_ratio : float
        Stop when a level keeps more than this fraction of the vertices.
    """

    coarsening: CoarseningParams = field(default_factory=CoarseningParams)
    rounds: tuple = (4, 4, 3)
    prolongation: str = "smoothed"
    smoothing: SmoothingParams = field(default_factory=SmoothingParams)
    smoother: str = "gauss-seidel"
    pre_steps: int = 1
    post_steps: int = 1
    coarse_size: int = 100
    coarse_reduction: float = 10.0
    max_levels: int = 25
    stall_ratio: float = 0.95
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        if self.prolongation not in ("smoothed", "tentative"):
            raise ValueError("prolongation must be 'smoothed' or 'tentative'")
        if not self.rounds or min(self.rounds) < 1:
            raise ValueError("rounds must be positive")

    def level_params(self, level):
        r = self.rounds[min(level, len(self.rounds) - 1)]
        return replace(self.coarsening, rounds=int(r))


@dataclass(eq=False)
class Level:
    """One level: matrix, topology and the transfer to the next level."""

    a: object
    topology: object
    agglomeration: object = None
    p: object = None
    smoother: object = None
    p_csr: object = None


@dataclass(eq=False)
class CoarsestSolver:
    """Dense Cholesky of ``A_L + (I - E E^T)`` followed by projection onto ``range(E)``."""

    factor: tuple
    projector: np.ndarray

    def solve(self, b):
        x = sla.cho_solve(self.factor, b)
        return self.projector @ x


def coarsest_solve_factorize(a, bases=None, tol=DEFAULT_TOL):
    """Factorize the regularized coarsest matrix.

    Parameters
    ----------
    a : BlockSparseMatrix
    bases : VertexKernelBasis, optional
        Defaults to :func:`vertex_kernel_bases` of ``a``.

    Raises
    ------
    CoarseSolveError
        When the regularized matrix is still numerically singular.
    """
    bases = bases or vertex_kernel_bases(a, tol)
    dense = a.to_dense()
    proj = bases.projector().to_dense()
    reg = 0.5 * (dense + dense.T) + np.eye(dense.shape[0]) - proj
    if reg.shape[0] == 0:
        return CoarsestSolver((np.zeros((0, 0)), False), proj)
    try:
        factor = sla.cho_factor(reg, lower=False)
    except np.linalg.LinAlgError as exc:
        raise CoarseSolveError(f"regularized coarsest matrix is not SPD: {exc}") from exc
    diag = np.abs(np.diag(factor[0]))
    if diag.min() <= np.sqrt(tol) * diag.max():
        raise CoarseSolveError("regularized coarsest matrix is numerically singular")
    return CoarsestSolver(factor, proj)


@dataclass(eq=False)
class Hierarchy:
    levels: list
    coarse_solver: CoarsestSolver
    config: HierarchyConfig
    setup_time: float = 0.0
    notes: list = field(default_factory=list)

    @property
    def n_levels(self):
        return len(self.levels)

    def vertex_counts(self):
        return [lvl.a.block_rows for lvl in self.levels]

    def vertex_complexity(self):
        counts = self.vertex_counts()
        return sum(counts) / counts[0]

    def operator_complexity(self):
        nnz = [lvl.a.to_scipy("csr").count_nonzero() for lvl in self.levels]
        return sum(nnz) / nnz[0]

    def vcycle(self, b, level=0):
        """One V-cycle with zero initial guess; returns ``B^{-1} b``."""
        lvl = self.levels[level]
        if level == self.n_levels - 1:
            return self.coarse_solver.solve(b)
        cfg = self.config
        x = lvl.smoother.presmooth(b, np.zeros_like(b), cfg.pre_steps)
        p = lvl.p_csr
        r = b - lvl.smoother.a_csr @ x
        x = x + p @ self.vcycle(p.T @ r, level + 1)
        return lvl.smoother.postsmooth(b, x, cfg.post_steps)

    def as_preconditioner(self):
        return self.vcycle


def setup_hierarchy(a, topo, config=None):
    """Build the multigrid hierarchy.

    Parameters
    ----------
    a : BlockSparseMatrix
        Finest (constrained) matrix: ``1 x 1`` blocks for scalar problems,
        ``d x d`` for elasticity.
    topo : AuxTopology
        Finest auxiliary topology (with Dirichlet flags).
    config : HierarchyConfig, optional
        Defaults to :class:`HierarchyConfig` with the per-kind default
        ``sigma`` of :data:`DEFAULT_SIGMA`.

    Per level: successive matching, tentative prolongation (displacement rows
    only on the finest elasticity level), optional smoothing through the
    filtered auxiliary matrix, Galerkin product for the next matrix, and the
    next topology from the tentative prolongation.
    """
    if config is None:
        config = HierarchyConfig(coarsening=CoarseningParams(sigma=DEFAULT_SIGMA[topo.kind]))
    t0 = time.perf_counter()
    if a.block_rows != topo.n_vertices:
        raise ValueError("matrix and topology disagree in vertex count")
    levels = [Level(a, topo)]
    notes = []
    n0 = topo.n_vertices
    target = min(config.coarse_size, n0 / config.coarse_reduction)
    while len(levels) < config.max_levels:
        lvl = levels[-1]
        n = lvl.topology.n_vertices
        if n <= target:
            break
        params = config.level_params(len(levels) - 1)
        dhat = assemble_aux_matrix(lvl.topology).diagonal_blocks()
        agg = successive_matching(lvl.topology, params, dhat)
        nc = agg.n_coarse
        if nc == 0 or nc > config.stall_ratio * n:
            notes.append(f"coarsening stalled on level {len(levels) - 1}: {n} -> {nc} vertices")
            break
        t_full = tentative_prolongation(lvl.topology, agg)
        restrict = lvl.topology.dim if (len(levels) == 1 and topo.kind == ELASTICITY) else None
        if config.prolongation == "smoothed":
            filt = build_filtered_aux(lvl.topology, lvl.a, agg, config.smoothing, config.tol)
            p = smooth_prolongation(filt, t_full, config.smoothing.omega, restrict)
        else:
            p = restrict_rows(t_full, restrict) if restrict else t_full
        lvl.agglomeration = agg
        lvl.p = p
        levels.append(Level(galerkin_product(p, lvl.a), coarsen_topology(lvl.topology, agg)))
    for lvl in levels[:-1]:
        lvl.smoother = make_smoother(lvl.a, config.smoother, config.tol)
        lvl.p_csr = lvl.p.to_scipy("csr")
    coarse = coarsest_solve_factorize(levels[-1].a, tol=config.tol)
    return Hierarchy(levels, coarse, config, time.perf_counter() - t0, notes)


def two_grid_apply(a, smoother, p, coarse_solve, b, x):
    """One symmetric two-grid iteration: pre-smooth, coarse correction, post-smooth with ``M^T``."""
    a_csr = a.to_scipy("csr") if hasattr(a, "to_scipy") else a
    p_csr = p.to_scipy("csr") if hasattr(p, "to_scipy") else p
    x = x + smoother.solve(b - a_csr @ x)
    x = x + p_csr @ coarse_solve(p_csr.T @ (b - a_csr @ x))
    return x + smoother.solve_transpose(b - a_csr @ x)
