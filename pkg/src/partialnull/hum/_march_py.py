"""Pure numpy/scipy implementation of the tridiagonal march (same API as the compiled kernel)."""
import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded


def thomas_factor(lower, diag, upper):
    # A is symmetric positive definite here: keep its banded Cholesky factor
    ab = np.vstack([np.r_[0.0, np.asarray(upper, float)[:-1]], np.asarray(diag, float)])
    return cholesky_banded(ab, lower=False), None


def march(lower, cp, inv, ml, md, mu, rhs, out):
    nt = out.shape[0] - 1
    has_rhs = rhs.shape[0] > 0
    for k in range(nt):
        x = out[k]
        b = md * x
        b[1:] += ml[1:] * x[:-1]
        b[:-1] += mu[:-1] * x[1:]
        if has_rhs:
            b += rhs[k]
        out[k + 1] = cho_solve_banded((cp, False), b, check_finite=False)
