"""Independent reference computations used by the tests."""

import mpmath
import numpy as np


def normal_equations_mp(X, y, dps=50):
    """Least squares with intercept by normal equations in ``dps``-digit arithmetic."""
    mpmath.mp.dps = dps
    n, p = X.shape
    Z = [[mpmath.mpf(1)] + [mpmath.mpf(float(v)) for v in row] for row in X]
    yy = [mpmath.mpf(float(v)) for v in y]
    q = p + 1
    A = mpmath.matrix(q, q)
    b = mpmath.matrix(q, 1)
    for i in range(q):
        for j in range(i, q):
            s = mpmath.fsum(Z[r][i] * Z[r][j] for r in range(n))
            A[i, j] = A[j, i] = s
        b[i] = mpmath.fsum(Z[r][i] * yy[r] for r in range(n))
    sol = mpmath.lu_solve(A, b)
    return np.array([float(sol[i]) for i in range(q)])


def weighted_least_squares(X, y, var):
    """GLS for a diagonal covariance by per-row rescaling."""
    w = 1.0 / np.sqrt(var)
    Z = np.column_stack([np.ones(len(y)), X]) * w[:, None]
    beta, *_ = np.linalg.lstsq(Z, y * w, rcond=None)
    return beta
