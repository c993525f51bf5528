"""Algebraic multigrid on an auxiliary topology of edge and vertex weights."""

from .blocksparse import BlockSparseMatrix, galerkin_product, read_blocksparse, write_blocksparse
from .coarsening import (CoarseningParams, mu_D, mu_g_value, mu_p, mu_s, successive_matching,
                         vertex_kernel_bases)
from .config import ConfigError, RunConfig, load_config, parse_config
from .dense import gen_eig_sup, harmonic_mean, pseudo_inverse, psd_check
from .diagnostics import dense_two_grid_condition, two_grid_constant
from .krylov import BreakdownError, pcg
from .multigrid import CoarseSolveError, Hierarchy, HierarchyConfig, setup_hierarchy, two_grid_apply
from .problems import PROBLEMS, make_problem
from .report import SolveReport, run_coarsen, run_solve
from .smoothers import make_smoother
from .smoothing import SmoothingParams, build_filtered_aux, smooth_prolongation
from .topology import (Agglomeration, AuxTopology, assemble_aux_matrix, build_elasticity_topology,
                       build_scalar_topology, coarsen_topology, tentative_prolongation)

__version__ = "0.1.0"
