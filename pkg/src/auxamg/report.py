"""Solve reports and the drivers behind the command line."""

from __future__ import annotations

import csv
import io
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .coarsening import successive_matching, write_agglomeration
from .krylov import pcg
from .multigrid import setup_hierarchy
from .problems import make_problem
from .topology import assemble_aux_matrix

CSV_COLUMNS = ("levels", "n_c", "VC", "OC", "its", "tsup", "tsol")


@dataclass
class SolveReport:
    """Summary of one setup + PCG solve.

    Attributes
    ----------
    iterations : int
    converged : bool
    final_residual : float
        Relative preconditioned residual ``sqrt(r'z / r0'z0)``.
    ritz_min, ritz_max : float
        Extreme Lanczos Ritz values of ``B^{-1} A``.
    level_sizes : list of int
        Vertices per level, finest first.
    vertex_complexity, operator_complexity : float
    setup_time, solve_time : float
        Wall times in seconds (``nan`` when not recorded).
    symmetry_defect : float
        ``|<Bu, v> - <u, Bv>| / (|Bu| |v|)`` for two seeded random vectors.
    config : list of (str, str)
        Echo of the run configuration.
    """

    iterations: int
    converged: bool
    final_residual: float
    ritz_min: float
    ritz_max: float
    level_sizes: list
    vertex_complexity: float
    operator_complexity: float
    setup_time: float = math.nan
    solve_time: float = math.nan
    symmetry_defect: float = math.nan
    config: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def n_levels(self):
        return len(self.level_sizes)

    @property
    def coarsest_size(self):
        return self.level_sizes[-1]

    @property
    def kappa(self):
        return self.ritz_max / self.ritz_min if self.ritz_min > 0 else math.nan

    def row(self):
        """Values of :data:`CSV_COLUMNS` as strings."""
        return [str(self.n_levels), str(self.coarsest_size), f"{self.vertex_complexity:.3f}",
                f"{self.operator_complexity:.3f}", str(self.iterations), _fmt_time(self.setup_time),
                _fmt_time(self.solve_time)]

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        w.writerow(self.row())
        return buf.getvalue()

    def to_text(self):
        lines = ["# solve report"]
        lines += [f"# {k} = {v}" for k, v in self.config]
        lines.append("")
        row = self.row()
        widths = [max(len(c), len(v)) for c, v in zip(CSV_COLUMNS, row)]
        lines.append("  ".join(c.rjust(w) for c, w in zip(CSV_COLUMNS, widths)))
        lines.append("  ".join(v.rjust(w) for v, w in zip(row, widths)))
        lines.append("")
        lines.append(f"level sizes     : {' '.join(str(s) for s in self.level_sizes)}")
        lines.append(f"converged       : {'yes' if self.converged else 'no'}")
        lines.append(f"final residual  : {self.final_residual:.6e}")
        lines.append(f"ritz min / max  : {self.ritz_min:.6e} {self.ritz_max:.6e}")
        lines.append(f"kappa estimate  : {self.kappa:.6e}")
        lines.append(f"symmetry defect : {self.symmetry_defect:.3e}")
        lines += [f"note            : {n}" for n in self.notes]
        return "\n".join(lines) + "\n"


def _fmt_time(t):
    return "-" if math.isnan(t) else f"{t:.3f}"


def _symmetry_defect(apply, n, seed):
    rng = np.random.default_rng(seed)
    u, v = rng.standard_normal((2, n))
    bu, bv = apply(u), apply(v)
    scale = max(np.linalg.norm(bu) * np.linalg.norm(v), np.finfo(float).tiny)
    return abs(float(bu @ v - u @ bv)) / scale


def run_solve(cfg):
    """Assemble, set up and solve the configured problem.

    Returns
    -------
    report : SolveReport
    x : ndarray
    """
    problem = make_problem(cfg.problem, cfg.n, **cfg.problem_kwargs())
    t0 = time.perf_counter()
    h = setup_hierarchy(problem.a, problem.topology, cfg.hierarchy_config())
    t1 = time.perf_counter()
    x, res = pcg(problem.a, problem.b, h.vcycle, rtol=cfg.rtol, maxit=cfg.maxit)
    t2 = time.perf_counter()
    report = SolveReport(
        iterations=res.iterations, converged=res.converged, final_residual=res.final_residual,
        ritz_min=res.ritz_min, ritz_max=res.ritz_max, level_sizes=h.vertex_counts(),
        vertex_complexity=h.vertex_complexity(), operator_complexity=h.operator_complexity(),
        setup_time=t1 - t0 if cfg.timings else math.nan, solve_time=t2 - t1 if cfg.timings else math.nan,
        symmetry_defect=_symmetry_defect(h.vcycle, problem.n_unknowns, cfg.seed),
        config=cfg.items() + [("sigma_used", repr(cfg.effective_sigma))], notes=list(h.notes))
    return report, x


def run_coarsen(cfg, out_dir):
    """Write ``level<l>.csv`` agglomerate dumps for every coarsened level.

    Returns the list of written paths.  When the problem is already below the
    coarsest threshold, one matching of the finest level is dumped instead.
    """
    problem = make_problem(cfg.problem, cfg.n, **cfg.problem_kwargs())
    hc = cfg.hierarchy_config()
    h = setup_hierarchy(problem.a, problem.topology, hc)
    os.makedirs(out_dir, exist_ok=True)
    pairs = [(lvl.topology, lvl.agglomeration) for lvl in h.levels if lvl.agglomeration is not None]
    if not pairs:
        topo = problem.topology
        dhat = assemble_aux_matrix(topo).diagonal_blocks()
        pairs = [(topo, successive_matching(topo, hc.level_params(0), dhat))]
    paths = []
    for lev, (topo, agg) in enumerate(pairs):
        path = os.path.join(out_dir, f"level{lev}.csv")
        write_agglomeration(topo, agg, path)
        paths.append(path)
    return paths
