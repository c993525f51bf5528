"""Preconditioned conjugate gradients with Lanczos spectrum estimates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class BreakdownError(ArithmeticError):
    """Nonpositive curvature or preconditioner energy: input is not SPD."""


@dataclass
class PCGResult:
    """Outcome of :func:`pcg`.

    Attributes
    ----------
    iterations : int
    converged : bool
    residuals : list of float
        Relative preconditioned residual norms ``sqrt(r'z / r0'z0)``, one per iteration (index 0 is 1).
    ritz_min, ritz_max : float
        Extreme eigenvalues of the Lanczos tridiagonal matrix.
    """

    iterations: int = 0
    converged: bool = False
    residuals: list = field(default_factory=list)
    ritz_min: float = math.nan
    ritz_max: float = math.nan
    kappa_history: list = field(default_factory=list)

    @property
    def kappa(self):
        if not self.ritz_min > 0:
            return math.nan
        return self.ritz_max / self.ritz_min

    @property
    def final_residual(self):
        return self.residuals[-1] if self.residuals else math.nan


def _as_operator(a):
    if a is None:
        return lambda v: v
    if callable(a):
        return a
    if hasattr(a, "to_scipy"):
        a = a.to_scipy("csr")
    return lambda v: a @ v


def lanczos_tridiagonal(alphas, betas):
    """Lanczos matrix of the preconditioned operator from CG step lengths.

    ``alphas[j]`` are the CG step lengths, ``betas[j]`` the ratios
    ``r_{j+1}'z_{j+1} / r_j'z_j``.
    """
    m = len(alphas)
    diag = np.empty(m)
    off = np.empty(max(m - 1, 0))
    for j in range(m):
        diag[j] = 1.0 / alphas[j] + (betas[j - 1] / alphas[j - 1] if j > 0 else 0.0)
        if j < m - 1:
            off[j] = math.sqrt(max(betas[j], 0.0)) / alphas[j]
    return diag, off


def ritz_values(alphas, betas):
    if not alphas:
        return np.zeros(0)
    diag, off = lanczos_tridiagonal(alphas, betas)
    t = np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)
    return np.linalg.eigvalsh(t)


def pcg(a, b, precond=None, x0=None, rtol=1e-6, maxit=500, track_kappa=False):
    """Solve ``A x = b`` by preconditioned CG.

    Parameters
    ----------
    a : BlockSparseMatrix, scipy matrix, ndarray or callable
    b : ndarray
    precond : callable or matrix, optional
        Applies ``B^{-1}``; identity by default.
    x0 : ndarray, optional
    rtol : float
        Stop once ``sqrt(r'z / r0'z0) <= rtol``.
    maxit : int
    track_kappa : bool
        Record the Ritz condition estimate after every iteration.

    Returns
    -------
    x : ndarray
    result : PCGResult

    Raises
    ------
    BreakdownError
        If ``p'Ap <= 0`` or ``r'z < 0``.
    """
    apply_a = _as_operator(a)
    apply_b = _as_operator(precond)
    b = np.asarray(b, dtype=float)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - apply_a(x) if x0 is not None else b.copy()
    z = apply_b(r)
    rz = float(r @ z)
    if rz < 0:
        raise BreakdownError("preconditioner is not positive (r'z < 0)")
    result = PCGResult(residuals=[1.0])
    if rz == 0.0:
        result.converged = True
        result.residuals = [0.0]
        return x, result
    rz0 = rz
    p = z.copy()
    alphas, betas = [], []
    for it in range(1, maxit + 1):
        ap = apply_a(p)
        curv = float(p @ ap)
        if curv <= 0:
            raise BreakdownError(f"nonpositive curvature p'Ap = {curv:.3e} at iteration {it}")
        alpha = rz / curv
        x += alpha * p
        r -= alpha * ap
        z = apply_b(r)
        rz_new = float(r @ z)
        if rz_new < 0:
            raise BreakdownError("preconditioner is not positive (r'z < 0)")
        alphas.append(alpha)
        beta = rz_new / rz
        rel = math.sqrt(rz_new / rz0)
        result.residuals.append(rel)
        result.iterations = it
        if track_kappa:
            w = ritz_values(alphas, betas)
            result.kappa_history.append(w[-1] / w[0] if w[0] > 0 else math.inf)
        if rel <= rtol:
            result.converged = True
            break
        betas.append(beta)
        p = z + beta * p
        rz = rz_new
    w = ritz_values(alphas, betas)
    if w.size:
        result.ritz_min, result.ritz_max = float(w[0]), float(w[-1])
    return x, result
