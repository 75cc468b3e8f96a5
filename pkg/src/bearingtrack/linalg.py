"""Cyclic Jacobi eigensolver for dense symmetric matrices."""

import math

import numpy as np
from numba import njit

from .errors import NumericError, SizeError


@njit(cache=True)
def _off_norm(a):
    n = a.shape[0]
    s = 0.0
    for i in range(n):
        for j in range(n):
            if i != j:
                s += a[i, j] * a[i, j]
    return math.sqrt(s)


@njit(cache=True)
def _jacobi_sweeps(a, vt, tol_abs, max_sweeps):
    # a is overwritten and converges to diag(eigenvalues); rows of vt
    # accumulate the eigenvectors. Returns (sweeps used, final off-norm);
    # sweeps == -1 means the cap was hit.
    n = a.shape[0]
    for sweep in range(max_sweeps + 1):
        off = _off_norm(a)
        if off <= tol_abs:
            return sweep, off
        if sweep == max_sweeps:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                app = a[p, p]
                aqq = a[q, q]
                theta = (aqq - app) / (2.0 * apq)
                sgn = 1.0 if theta >= 0.0 else -1.0
                t = sgn / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - s * aqk
                    a[q, k] = s * apk + c * aqk
                for k in range(n):
                    a[k, p] = a[p, k]
                    a[k, q] = a[q, k]
                a[p, p] = app - t * apq
                a[q, q] = aqq + t * apq
                a[p, q] = 0.0
                a[q, p] = 0.0
                for k in range(n):
                    vpk = vt[p, k]
                    vqk = vt[q, k]
                    vt[p, k] = c * vpk - s * vqk
                    vt[q, k] = s * vpk + c * vqk
    return -1, _off_norm(a)


def jacobi_eigh(a, tol=1e-12, max_sweeps=100):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Iterates until the off-diagonal Frobenius norm is at most
    ``tol * ||a||_F``.

    Returns
    -------
    w : (n,) array
        Eigenvalues in descending order.
    v : (n, n) array
        Matching unit eigenvectors as columns.

    Raises
    ------
    NumericError
        If ``max_sweeps`` sweeps do not reach the tolerance; ``residual``
        carries the remaining off-diagonal norm.
    """
    a = np.array(a, dtype=np.float64, copy=True)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise SizeError("jacobi_eigh needs a square matrix")
    a = 0.5 * (a + a.T)
    n = a.shape[0]
    vt = np.eye(n)
    scale = float(np.linalg.norm(a))
    sweeps, off = _jacobi_sweeps(a, vt, tol * scale, max_sweeps)
    if sweeps < 0:
        raise NumericError(f"Jacobi did not converge in {max_sweeps} sweeps "
                           f"(off-diagonal norm {off:.3e})", residual=off)
    w = np.diag(a).copy()
    order = np.argsort(-w, kind="stable")
    return w[order], vt[order].T.copy()
