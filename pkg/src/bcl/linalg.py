"""Small dense linear algebra.

Everything here works on plain ``numpy`` arrays of dimension n <= ~8.  The
symmetric eigensolver is a cyclic Jacobi sweep, which is exact enough and
fully deterministic for matrices that small.
"""

import math

import numpy as np

from .errors import DimensionMismatch, NonFinite, NonPositiveGain, NonPositiveMu, NonSymmetric

SYM_TOL = 1e-10
DEFAULT_PSD_TOL = 1e-9

_OFF_TOL = 1e-12
_MAX_SWEEPS = 100


def as_square(M):
    M = np.asarray(M, dtype=float)
    if M.ndim == 0:
        M = M.reshape(1, 1)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] < 1:
        raise DimensionMismatch(f"expected a non-empty square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise NonFinite("matrix has NaN/Inf entries")
    return M


def _check_symmetric(M):
    M = as_square(M)
    asym = np.max(np.abs(M - M.T))
    if asym > SYM_TOL:
        raise NonSymmetric(f"max |M_ij - M_ji| = {asym:.3e} exceeds {SYM_TOL:g}")
    return 0.5 * (M + M.T)


def jacobi_eigh(M):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns ``(w, Q)`` with ``w`` ascending and ``M = Q diag(w) Q^T``.
    """
    A = _check_symmetric(M).copy()
    n = A.shape[0]
    Q = np.eye(n)
    scale = max(1.0, float(np.max(np.abs(A))))
    for _ in range(_MAX_SWEEPS):
        off = math.sqrt(float(np.sum(np.square(A - np.diag(np.diag(A))))))
        if off < _OFF_TOL * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                # A <- J^T A J with the rotation acting on rows/cols p, q
                Ap = A[:, p].copy()
                Aq = A[:, q].copy()
                A[:, p] = c * Ap - s * Aq
                A[:, q] = s * Ap + c * Aq
                Ap = A[p, :].copy()
                Aq = A[q, :].copy()
                A[p, :] = c * Ap - s * Aq
                A[q, :] = s * Ap + c * Aq
                A[p, q] = A[q, p] = 0.0
                Qp = Q[:, p].copy()
                Qq = Q[:, q].copy()
                Q[:, p] = c * Qp - s * Qq
                Q[:, q] = s * Qp + c * Qq
    w = np.diag(A).copy()
    order = np.argsort(w, kind="stable")
    return w[order], Q[:, order]


def symmetric_eigenvalues(M):
    """All eigenvalues of symmetric ``M``, ascending."""
    return jacobi_eigh(M)[0]


def max_eigenvalue(M):
    return float(symmetric_eigenvalues(M)[-1])


def is_negative_semidefinite(M, tol=DEFAULT_PSD_TOL):
    return max_eigenvalue(M) <= tol


def is_positive_definite(M, tol=0.0):
    return float(symmetric_eigenvalues(M)[0]) > tol


def quadratic_form(M, v):
    M = as_square(M)
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.shape[0] != M.shape[0]:
        raise DimensionMismatch(f"matrix is {M.shape[0]}x{M.shape[0]} but vector has {v.shape[0]} entries")
    return float(v @ M @ v)


def build_A0(gains):
    """``diag(-k_1, ..., -k_n)``."""
    k = np.asarray(gains, dtype=float).reshape(-1)
    if k.size == 0 or np.any(~np.isfinite(k)) or np.any(k <= 0):
        raise NonPositiveGain(f"all gains must be positive, got {k.tolist()}")
    return np.diag(-k)


def build_Ag(g_values, n=None):
    """Tridiagonal skew-symmetric coupling matrix with ``+g_i`` above the diagonal."""
    g = np.asarray(g_values, dtype=float).reshape(-1)
    if n is None:
        n = g.size + 1
    if g.size != n - 1:
        raise DimensionMismatch(f"n={n} needs {n - 1} coupling values, got {g.size}")
    if not np.all(np.isfinite(g)):
        raise NonFinite("coupling values must be finite")
    M = np.zeros((n, n))
    idx = np.arange(n - 1)
    M[idx, idx + 1] = g
    M[idx + 1, idx] = -g
    return M


def build_Dmu(n, mu, alpha):
    """``diag(mu**alpha, 1, ..., 1)``."""
    if not (mu > 0):
        raise NonPositiveMu(f"mu must be positive, got {mu}")
    d = np.ones(n)
    d[0] = mu ** alpha
    return np.diag(d)
