"""Model problems: Poisson, elasticity beams and the stiff-boxes benchmark."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fem import (AXIS_TAGS, CoefficientField, assemble_elasticity, assemble_scalar, boxes_coefficients,
                  load_vector, make_structured_mesh)
from .topology import build_elasticity_topology, build_scalar_topology

PROBLEMS = ("poisson1d", "poisson2d", "poisson3d", "elasticity2d", "elasticity3d", "boxes2d", "boxes3d")


@dataclass(frozen=True, eq=False)
class Problem:
    """An assembled linear system with its finest auxiliary topology.

    Attributes
    ----------
    name : str
    mesh : StructuredMesh
    a : BlockSparseMatrix
        Constrained matrix (identity rows on Dirichlet vertices).
    a_free : BlockSparseMatrix
        Unconstrained matrix the topology was built from.
    dirichlet : ndarray of int
    topology : AuxTopology
    b : ndarray
        Right-hand side, zero on Dirichlet unknowns.
    """

    name: str
    mesh: object
    a: object
    a_free: object
    dirichlet: np.ndarray
    topology: object
    b: np.ndarray

    @property
    def n_unknowns(self):
        return self.a.shape[0]

    def free_vertices(self):
        mask = np.ones(self.a.block_rows, dtype=bool)
        mask[self.dirichlet] = False
        return np.flatnonzero(mask)


def all_tags(d):
    return tuple(t for a in range(d) for t in AXIS_TAGS[a])


def make_problem(name, n, dirichlet=None, mu=1.0, lam=1.0, alpha=1.0, beta=0.0, n_boxes=11,
                 soft=1.0, hard=1e4, beam_length=4):
    """Assemble one of :data:`PROBLEMS`.

    Parameters
    ----------
    name : str
    n : int
        Cells per unit length along each axis.
    dirichlet : sequence of str, optional
        Boundary tags; defaults to the whole boundary for Poisson and the
        left side otherwise.
    mu, lam : float
        Lame parameters (elasticity).
    alpha, beta : float
        Diffusion and mass coefficients.
    n_boxes : int
        Stiff boxes along the diagonal (boxes problems).
    soft, hard : float
        ``mu = lam`` outside / inside the boxes.
    beam_length : int
        Beam aspect ratio (elasticity problems).
    """
    if name not in PROBLEMS:
        raise ValueError(f"unknown problem {name!r}; choose from {PROBLEMS}")
    d = int(name[-2])
    if name.startswith("poisson"):
        mesh = make_structured_mesh(d, n)
        tags = all_tags(d) if dirichlet is None else tuple(dirichlet)
        coeffs = CoefficientField.scalar(mesh, alpha, beta)
        a_free, vd = assemble_scalar(mesh, coeffs, tags, constrain=False)
        a, _ = assemble_scalar(mesh, coeffs, tags, constrain=True)
        topo = build_scalar_topology(a_free, mesh.points, vd)
        b = load_vector(mesh, 1.0, vd)
    else:
        if name.startswith("elasticity"):
            cells = (beam_length * n,) + (n,) * (d - 1)
            mesh = make_structured_mesh(d, n, cells=cells, extent=(float(beam_length),) + (1.0,) * (d - 1))
            coeffs = CoefficientField.elasticity(mesh, mu, lam, beta)
        else:
            mesh = make_structured_mesh(d, n)
            coeffs = boxes_coefficients(mesh, n_boxes, soft=(soft, soft), hard=(hard, hard), beta=beta)
        tags = ("left",) if dirichlet is None else tuple(dirichlet)
        a_free, vd = assemble_elasticity(mesh, coeffs, tags, constrain=False)
        a, _ = assemble_elasticity(mesh, coeffs, tags, constrain=True)
        topo = build_elasticity_topology(a_free, mesh.points, vd)
        force = np.zeros(d)
        force[-1] = -1.0
        b = load_vector(mesh, force, vd)
    return Problem(name, mesh, a, a_free, vd, topo, b)
