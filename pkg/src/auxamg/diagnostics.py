"""Dense two-grid diagnostics for small problems."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .dense import DEFAULT_TOL, gen_eig_sup, pseudo_inverse, symmetrize

#: Largest problem (scalar unknowns) the dense diagnostics accept.
MAX_DENSE = 3000


@dataclass(frozen=True)
class TwoGridSpectrum:
    lambda_min: float
    lambda_max: float

    @property
    def kappa(self):
        return self.lambda_max / self.lambda_min


def _dense(m):
    if hasattr(m, "to_dense"):
        return m.to_dense()
    if hasattr(m, "toarray"):
        return m.toarray()
    return np.asarray(m, dtype=float)


def _guard(n):
    if n > MAX_DENSE:
        raise ValueError(f"problem too large for dense diagnostics ({n} > {MAX_DENSE} unknowns)")


def two_grid_inverse(a, minv, p, tol=DEFAULT_TOL):
    """Dense ``B_TG^{-1} = M~^{-1} + (I - M^{-T} A) P A_c^+ P^T (I - A M^{-1})``.

    ``M~^{-1} = M^{-T} + M^{-1} - M^{-T} A M^{-1}`` is the symmetrized
    smoother; the coarse matrix ``P^T A P`` is pseudo-inverted.
    """
    a = _dense(a)
    minv = _dense(minv)
    p = _dense(p)
    _guard(a.shape[0])
    n = a.shape[0]
    eye = np.eye(n)
    msym = minv.T + minv - minv.T @ a @ minv
    ac = symmetrize(p.T @ a @ p)
    coarse = p @ pseudo_inverse(ac, tol) @ p.T if ac.size else np.zeros((n, n))
    return symmetrize(msym + (eye - minv.T @ a) @ coarse @ (eye - a @ minv))


def two_grid_error_operator(a, minv, p, tol=DEFAULT_TOL):
    """``(I - M^{-T} A)(I - P A_c^+ P^T A)(I - M^{-1} A)``."""
    a, minv, p = _dense(a), _dense(minv), _dense(p)
    eye = np.eye(a.shape[0])
    ac = symmetrize(p.T @ a @ p)
    return (eye - minv.T @ a) @ (eye - p @ pseudo_inverse(ac, tol) @ p.T @ a) @ (eye - minv @ a)


def dense_two_grid_condition(a, minv, p, tol=DEFAULT_TOL):
    """Spectrum of ``B_TG^{-1} A`` for SPD ``a``.

    Parameters
    ----------
    a : matrix
        SPD (restrict to free unknowns before calling).
    minv : matrix
        Smoother inverse ``M^{-1}``.
    p : matrix
        Prolongation.
    """
    a = symmetrize(_dense(a))
    _guard(a.shape[0])
    binv = two_grid_inverse(a, minv, p, tol)
    low = np.linalg.cholesky(a)
    w = np.linalg.eigvalsh(symmetrize(low.T @ binv @ low))
    return TwoGridSpectrum(float(w[0]), float(w[-1]))


def ktg_matrices(a_hat, p, tol=DEFAULT_TOL):
    """Numerator ``D (I - P (P'DP)^+ P'D)`` and denominator ``A_hat`` of the two-grid constant.

    ``D`` is the block diagonal of ``a_hat`` (block size from ``a_hat``).
    """
    k = a_hat.block_shape[0]
    dense = symmetrize(_dense(a_hat))
    n = dense.shape[0]
    d = np.zeros_like(dense)
    for i in range(0, n, k):
        d[i:i + k, i:i + k] = dense[i:i + k, i:i + k]
    p = _dense(p)
    dp = d @ p
    num = d - dp @ pseudo_inverse(symmetrize(p.T @ dp), tol) @ dp.T
    return symmetrize(num), dense


def two_grid_constant(a_hat, p, tol=DEFAULT_TOL):
    """``K_TG = sup_{v in range(A_hat)} v'D(I - P(P'DP)^+P'D)v / v'A_hat v``."""
    num, den = ktg_matrices(a_hat, p, tol)
    _guard(den.shape[0])
    return gen_eig_sup(num, den, tol)


def restrict_to_free(a, p, free_blocks, k):
    """Principal submatrix of ``a`` and rows of ``p`` for the given free vertices."""
    idx = (np.asarray(free_blocks)[:, None] * k + np.arange(k)[None, :]).ravel()
    a = _dense(a)
    out_a = a[np.ix_(idx, idx)]
    if p is None:
        return out_a, None
    return out_a, _dense(p)[idx]


def generalized_eigenvalues(a, b):
    """All eigenvalues of the SPD pencil ``a v = lambda b v`` (ascending)."""
    return sla.eigh(symmetrize(_dense(a)), symmetrize(_dense(b)), eigvals_only=True)
