"""Select the compiled march kernel when available, else the scipy fallback.

Set PARTIALNULL_BACKEND=python to force the fallback.
"""
import os

import numpy as np

from . import _march_py

_forced = os.environ.get("PARTIALNULL_BACKEND", "").lower()
_ext = None
if _forced != "python":
    try:
        from . import _march as _ext
    except ImportError:
        _ext = None

BACKENDS = {"python": _march_py}
if _ext is not None:
    BACKENDS["cython"] = _ext
DEFAULT = "cython" if _ext is not None else "python"


class Tridiag:
    """Tridiagonal matrix stored as (lower, diag, upper) arrays of equal length."""

    __slots__ = ("lower", "diag", "upper")

    def __init__(self, lower, diag, upper):
        self.diag = np.ascontiguousarray(diag, dtype=float)
        n = self.diag.size
        self.lower = np.ascontiguousarray(lower, dtype=float)
        self.upper = np.ascontiguousarray(upper, dtype=float)
        if self.lower.size != n or self.upper.size != n:
            raise ValueError("band arrays must have equal length")
        self.lower[0] = 0.0
        self.upper[-1] = 0.0

    @property
    def n(self):
        return self.diag.size

    def __matmul__(self, x):
        """Apply to a vector or to every row of a (k, n) array."""
        x = np.asarray(x, dtype=float)
        y = self.diag * x
        y[..., 1:] += self.lower[1:] * x[..., :-1]
        y[..., :-1] += self.upper[:-1] * x[..., 1:]
        return y

    def __add__(self, other):
        return Tridiag(self.lower + other.lower, self.diag + other.diag, self.upper + other.upper)

    def scale(self, c):
        return Tridiag(self.lower * c, self.diag * c, self.upper * c)

    def masked(self, d):
        """D T D for a diagonal D."""
        d = np.asarray(d, dtype=float)
        lo = self.lower.copy()
        lo[1:] *= d[1:] * d[:-1]
        up = self.upper.copy()
        up[:-1] *= d[:-1] * d[1:]
        return Tridiag(lo, self.diag * d * d, up)

    def dense(self):
        return np.diag(self.diag) + np.diag(self.lower[1:], -1) + np.diag(self.upper[:-1], 1)


class Stepper:
    """x_{n+1} = A^{-1} (M x_n + rhs_n) with A factored once."""

    def __init__(self, A: Tridiag, M: Tridiag, backend: str | None = None):
        name = backend or DEFAULT
        if name not in BACKENDS:
            raise ValueError(f"backend {name!r} unavailable; have {sorted(BACKENDS)}")
        self.backend = name
        self._k = BACKENDS[name]
        self.A, self.M = A, M
        self._cp, self._inv = self._k.thomas_factor(A.lower, A.diag, A.upper)
        self._empty = np.zeros((0, A.n))

    def march(self, x0, n_steps: int, rhs=None) -> np.ndarray:
        out = np.empty((n_steps + 1, self.A.n))
        out[0] = x0
        r = self._empty if rhs is None else np.ascontiguousarray(rhs, dtype=float)
        if r.shape[0] not in (0, n_steps):
            raise ValueError(f"rhs has {r.shape[0]} rows, expected {n_steps}")
        self._k.march(self.A.lower, self._cp, self._inv, self.M.lower, self.M.diag, self.M.upper, r, out)
        return out
