"""Small dense symmetric linear algebra.

Everything here works on plain ``numpy`` arrays of shape ``(n, n)``.  The
matrices are tiny (edge and vertex weights, agglomerate blocks), so clarity
wins over speed.  A cyclic Jacobi eigensolver is provided for reference; the
production path goes through LAPACK (``numpy.linalg.eigh``).
"""

from __future__ import annotations

import math

import numpy as np

#: Relative rank cutoff used wherever a pseudo-inverse or kernel is taken.
DEFAULT_TOL = 1e-10

_SYM_RTOL = 1e-12


def symmetrize(a):
    a = np.asarray(a, dtype=float)
    return 0.5 * (a + a.T)


def check_symmetric(a, rtol=_SYM_RTOL, name="matrix"):
    """Raise ``ValueError`` unless ``a`` is square and symmetric to ``rtol``."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    if a.size == 0:
        return a
    scale = np.max(np.abs(a))
    if np.max(np.abs(a - a.T)) > rtol * scale:
        raise ValueError(f"{name} is not symmetric")
    return a


def jacobi_eigh(a, tol=1e-15, max_sweeps=100):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Parameters
    ----------
    a : array_like, shape (n, n)
        Symmetric matrix.
    tol : float
        Sweeps stop once the off-diagonal Frobenius norm drops below
        ``tol * ||a||_F``.
    max_sweeps : int
        Hard limit on the number of sweeps.

    Returns
    -------
    w : ndarray, shape (n,)
        Eigenvalues in ascending order.
    v : ndarray, shape (n, n)
        Orthonormal eigenvectors, ``a @ v[:, i] == w[i] * v[:, i]``.
    """
    a = check_symmetric(a).copy()
    n = a.shape[0]
    v = np.eye(n)
    norm = np.linalg.norm(a)
    if n < 2 or norm == 0.0:
        order = np.argsort(np.diag(a), kind="stable")
        return np.diag(a)[order].copy(), v[:, order]
    for _ in range(max_sweeps):
        off = math.sqrt(2.0 * np.sum(np.tril(a, -1) ** 2))
        if off <= tol * norm:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.hypot(theta, 1.0))
                c = 1.0 / math.hypot(t, 1.0)
                s = t * c
                cp = a[:, p].copy()
                cq = a[:, q].copy()
                a[:, p] = c * cp - s * cq
                a[:, q] = s * cp + c * cq
                rp = a[p, :].copy()
                rq = a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def eigh(a):
    """Symmetric eigen-decomposition (LAPACK), ascending eigenvalues."""
    return np.linalg.eigh(symmetrize(a))


def _cutoff(w, tol):
    scale = np.max(np.abs(w)) if w.size else 0.0
    return tol * scale


def pseudo_inverse(a, tol=DEFAULT_TOL):
    """Moore-Penrose pseudo-inverse of a symmetric matrix.

    Eigenvalues with ``|lambda| <= tol * max|lambda|`` are treated as zero.
    """
    if not 0.0 < tol < 1.0:
        raise ValueError("tol must lie in (0, 1)")
    a = check_symmetric(a)
    if a.size == 0:
        return a.copy()
    w, v = eigh(a)
    keep = np.abs(w) > _cutoff(w, tol)
    inv = np.zeros_like(w)
    inv[keep] = 1.0 / w[keep]
    return symmetrize((v * inv) @ v.T)


def harmonic_mean(a, b, tol=DEFAULT_TOL):
    """Harmonic mean ``H(A, B) = A (A + B)^+ B`` of two symmetric PSD matrices."""
    a = check_symmetric(a, name="A")
    b = check_symmetric(b, name="B")
    if a.shape != b.shape:
        raise ValueError(f"size mismatch: {a.shape} vs {b.shape}")
    return symmetrize(a @ pseudo_inverse(symmetrize(a + b), tol) @ b)


# roundoff floor for PSD validation; inputs built from high-contrast data
# (harmonic means, Schur complements) lose a few digits
_PSD_FLOOR = 1e-8


def _require_psd(w, name, tol):
    if w.size and w[0] < -max(tol, _PSD_FLOOR) * max(np.max(np.abs(w)), 1e-300):
        raise ValueError(f"{name} is not positive semidefinite (min eigenvalue {w[0]:.3e})")


def gen_eig_sup(m, a, tol=DEFAULT_TOL):
    """Largest generalized eigenvalue ``sup v'Mv / v'Av`` of a PSD pencil.

    The supremum runs over vectors with ``v'Av > 0``.  Returns ``math.inf``
    when some kernel direction of ``A`` carries energy of ``M`` above
    ``tol * trace(M)``.  ``M`` is projected onto the range of ``A`` and the
    reduced standard problem is solved.
    """
    m = check_symmetric(m, name="M")
    a = check_symmetric(a, name="A")
    if m.shape != a.shape:
        raise ValueError(f"size mismatch: {m.shape} vs {a.shape}")
    if a.size == 0:
        return 0.0
    m = symmetrize(m)
    wa, va = eigh(a)
    _require_psd(wa, "A", tol)
    wm = np.linalg.eigvalsh(m)
    _require_psd(wm, "M", tol)
    trace_m = float(np.trace(m))
    keep = wa > _cutoff(wa, tol)
    kernel = va[:, ~keep]
    if kernel.shape[1]:
        if np.max(np.linalg.eigvalsh(kernel.T @ m @ kernel)) > tol * trace_m:
            return math.inf
    if not np.any(keep):
        return 0.0
    u = va[:, keep] / np.sqrt(wa[keep])
    return max(float(np.max(np.linalg.eigvalsh(symmetrize(u.T @ m @ u)))), 0.0)


def psd_check(a, tol=DEFAULT_TOL):
    """Positive semi-definiteness test by diagonally pivoted Cholesky.

    Returns ``True`` iff no pivot falls below ``-tol * max(1, max|a_ij|)``.
    No eigensolve is performed.
    """
    a = check_symmetric(a).copy()
    n = a.shape[0]
    if n == 0:
        return True
    thr = tol * max(1.0, float(np.max(np.abs(a))))
    active = np.arange(n)
    while active.size:
        d = a[active, active]
        p = int(np.argmax(d))
        piv = d[p]
        if piv < -thr:
            return False
        if piv <= thr:
            # every remaining diagonal is ~0, so PSD forces ~0 off-diagonals
            rest = a[np.ix_(active, active)]
            return bool(np.all(np.abs(rest) <= thr))
        ip = active[p]
        active = np.delete(active, p)
        col = a[active, ip]
        a[np.ix_(active, active)] -= np.outer(col, col) / piv
    return True


def kernel_basis(a, tol=DEFAULT_TOL):
    """Orthonormal basis (as columns) of the numerical kernel of ``a``."""
    a = check_symmetric(a)
    w, v = eigh(a)
    return v[:, np.abs(w) <= _cutoff(w, tol)].copy()


def range_basis(a, tol=DEFAULT_TOL):
    """Orthonormal basis (as columns) of the orthogonal complement of the kernel."""
    a = check_symmetric(a)
    w, v = eigh(a)
    if not w.size or np.max(np.abs(w)) == 0.0:
        return np.zeros((a.shape[0], 0))
    return v[:, np.abs(w) > _cutoff(w, tol)].copy()
