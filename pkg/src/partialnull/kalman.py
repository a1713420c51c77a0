"""Kalman rank tests for partial null controllability of ODE-coupled parabolic systems.

Everything here works on the finite-dimensional coupling pair (A, B):

* ``build_kalman_constant`` / ``build_kalman_time`` assemble the Kalman matrix,
  the second one through the recursion B_i = A B_{i-1} - d/dt B_{i-1} applied to
  polynomial entries so that the time derivative is exact.
* ``check_partial_constant`` / ``check_partial_time`` test whether the first
  ``p`` rows of the Kalman matrix have rank ``p``.
* ``extract_basis``, ``permute_rows`` and ``build_transform`` construct the
  change of variables to a cascade (companion block) system.
* ``gramian_oracle`` is an independent check based on the controllability
  Gramian of the finite-dimensional system y' = Ay + Bu.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.linalg import expm

DEFAULT_TOL = 1e-10
COND_CAP = 1e12


class DimensionError(ValueError):
    """Raised when matrix shapes are inconsistent."""

    def __init__(self, what: str, got, expected):
        self.what = what
        self.got = got
        self.expected = expected
        super().__init__(f"{what}: got {got}, expected {expected}")


# ---------------------------------------------------------------------------
# polynomial matrices
# ---------------------------------------------------------------------------

class MatrixPoly:
    """Matrix with real polynomial entries in t.

    ``coeffs[d]`` is the (rows, cols) matrix multiplying t**d, ascending order.
    """

    def __init__(self, coeffs):
        c = np.asarray(coeffs, dtype=float)
        if c.ndim == 2:
            c = c[None, :, :]
        if c.ndim != 3 or c.shape[0] < 1:
            raise DimensionError("MatrixPoly coefficient array ndim", c.ndim, 3)
        # drop trailing zero degrees but keep at least the constant term
        d = c.shape[0]
        while d > 1 and not np.any(c[d - 1]):
            d -= 1
        self.coeffs = c[:d].copy()
        self.coeffs.setflags(write=False)

    @classmethod
    def constant(cls, M) -> "MatrixPoly":
        return cls(np.asarray(M, dtype=float)[None, :, :])

    @classmethod
    def from_entries(cls, entries) -> "MatrixPoly":
        """Build from a row-major nested list whose leaves are coefficient lists.

        A bare number is accepted as a degree-0 polynomial.
        """
        rows = [[np.atleast_1d(np.asarray(e, dtype=float)) for e in row] for row in entries]
        if not rows or not rows[0]:
            raise DimensionError("MatrixPoly entries", "empty", "at least 1x1")
        ncol = len(rows[0])
        for i, row in enumerate(rows):
            if len(row) != ncol:
                raise DimensionError(f"MatrixPoly row {i} length", len(row), ncol)
        deg = max(len(e) for row in rows for e in row)
        c = np.zeros((deg, len(rows), ncol))
        for i, row in enumerate(rows):
            for j, e in enumerate(row):
                if e.ndim != 1:
                    raise DimensionError(f"MatrixPoly entry ({i},{j}) ndim", e.ndim, 1)
                c[: len(e), i, j] = e
        return cls(c)

    def to_entries(self) -> list:
        return [[self.coeffs[:, i, j].tolist() for j in range(self.cols)] for i in range(self.rows)]

    @property
    def rows(self) -> int:
        return self.coeffs.shape[1]

    @property
    def cols(self) -> int:
        return self.coeffs.shape[2]

    @property
    def degree(self) -> int:
        return self.coeffs.shape[0] - 1

    @property
    def shape(self):
        return (self.rows, self.cols)

    def __call__(self, t: float) -> np.ndarray:
        # Horner in the leading axis
        out = np.array(self.coeffs[-1])
        for d in range(self.degree - 1, -1, -1):
            out = out * t + self.coeffs[d]
        return out

    def derivative(self) -> "MatrixPoly":
        if self.degree == 0:
            return MatrixPoly(np.zeros((1, self.rows, self.cols)))
        k = np.arange(1, self.degree + 1, dtype=float)[:, None, None]
        return MatrixPoly(self.coeffs[1:] * k)

    def __matmul__(self, other: "MatrixPoly") -> "MatrixPoly":
        if self.cols != other.rows:
            raise DimensionError("MatrixPoly product inner dimension", other.rows, self.cols)
        out = np.zeros((self.degree + other.degree + 1, self.rows, other.cols))
        for i in range(self.degree + 1):
            for j in range(other.degree + 1):
                out[i + j] += self.coeffs[i] @ other.coeffs[j]
        return MatrixPoly(out)

    def __sub__(self, other: "MatrixPoly") -> "MatrixPoly":
        if self.shape != other.shape:
            raise DimensionError("MatrixPoly difference shape", other.shape, self.shape)
        d = max(self.degree, other.degree) + 1
        out = np.zeros((d, self.rows, self.cols))
        out[: self.degree + 1] += self.coeffs
        out[: other.degree + 1] -= other.coeffs
        return MatrixPoly(out)

    def entry(self, i: int, j: int) -> np.ndarray:
        return npoly.polytrim(self.coeffs[:, i, j])

    def __repr__(self):
        return f"MatrixPoly(rows={self.rows}, cols={self.cols}, degree={self.degree})"


# ---------------------------------------------------------------------------
# Kalman matrices and rank
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KalmanMatrix:
    value: np.ndarray
    block_columns: tuple
    eval_time: object = "constant"

    @property
    def n(self) -> int:
        return self.value.shape[0]

    @property
    def m(self) -> int:
        return self.block_columns[0].shape[1]


@dataclass(frozen=True)
class ControllabilityVerdict:
    rank: int
    required: int
    controllable: bool
    singular_values: tuple
    tolerance_used: float
    mode: str = "constant"
    sufficient_only: bool = False

    def to_dict(self) -> dict:
        return {
            "rank": self.rank,
            "required": self.required,
            "controllable": self.controllable,
            "singular_values": [float(s) for s in self.singular_values],
            "tolerance": self.tolerance_used,
            "mode": self.mode,
            "sufficient_only": self.sufficient_only,
        }


def _check_pair(A, B):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError("A must be square; shape", A.shape, "(n, n)")
    if B.ndim != 2 or B.shape[0] != A.shape[0]:
        raise DimensionError("B rows", B.shape[0] if B.ndim == 2 else B.shape, A.shape[0])
    return A, B


def build_kalman_constant(A, B) -> KalmanMatrix:
    """[A|B] = (B | AB | ... | A^{n-1}B), powers applied left to right."""
    A, B = _check_pair(A, B)
    n = A.shape[0]
    blocks = [B.copy()]
    for _ in range(1, n):
        blocks.append(A @ blocks[-1])
    for b in blocks:
        b.setflags(write=False)
    return KalmanMatrix(np.hstack(blocks), tuple(blocks), "constant")


def _as_poly(M) -> MatrixPoly:
    if isinstance(M, MatrixPoly):
        return M
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M[:, None]
    return MatrixPoly.constant(M)


def kalman_blocks_poly(A, B) -> list:
    """Symbolic blocks B_0..B_{n-1} of the time-dependent recursion."""
    A, B = _as_poly(A), _as_poly(B)
    if A.rows != A.cols:
        raise DimensionError("A must be square; shape", A.shape, "(n, n)")
    if B.rows != A.rows:
        raise DimensionError("B rows", B.rows, A.rows)
    out = [B]
    for _ in range(1, A.rows):
        prev = out[-1]
        out.append(A @ prev - prev.derivative())
    return out


def build_kalman_time(A, B, t0: float) -> KalmanMatrix:
    """Evaluate B_i(t0), B_i = A B_{i-1} - d/dt B_{i-1}, exactly for polynomial data."""
    A, B = _as_poly(A), _as_poly(B)
    if A.degree == 0 and B.degree == 0:
        # identical arithmetic to the constant builder
        k = build_kalman_constant(A.coeffs[0], B.coeffs[0])
        return KalmanMatrix(k.value, k.block_columns, float(t0))
    blocks = [bp(t0) for bp in kalman_blocks_poly(A, B)]
    for b in blocks:
        b.setflags(write=False)
    return KalmanMatrix(np.hstack(blocks), tuple(blocks), float(t0))


def numeric_rank(M, tol_rel: float = DEFAULT_TOL):
    """Return (rank, singular values) with the threshold tol_rel * sigma_max."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        raise ValueError("numeric_rank: empty matrix")
    if tol_rel <= 0:
        raise ValueError("numeric_rank: tol_rel must be positive")
    sv = np.linalg.svd(M, compute_uv=False)
    smax = sv[0] if sv.size else 0.0
    if smax == 0.0:
        return 0, sv
    return int(np.sum(sv > tol_rel * smax)), sv


def _verdict(K: np.ndarray, p: int, tol_rel: float, mode="constant", sufficient_only=False):
    n = K.shape[0]
    if not (1 <= p <= n):
        raise ValueError(f"p must satisfy 1 <= p <= n={n}, got {p}")
    r, sv = numeric_rank(K[:p], tol_rel)
    return ControllabilityVerdict(r, p, r >= p, tuple(float(s) for s in sv), tol_rel, mode, sufficient_only)


def check_partial_constant(A, B, p: int, tol_rel: float = DEFAULT_TOL) -> ControllabilityVerdict:
    """rank Pi_p [A|B] = p for constant coupling matrices."""
    K = build_kalman_constant(A, B).value
    return _verdict(K, p, tol_rel)


def check_partial_time(A, B, p: int, T: float, tol_rel: float = DEFAULT_TOL) -> ControllabilityVerdict:
    """Sufficient condition rank Pi_p [A|B](T) = p for polynomial coefficients."""
    K = build_kalman_time(A, B, T).value
    return _verdict(K, p, tol_rel, mode="time", sufficient_only=True)


def scan_times(A, B, p: int, times: Sequence[float], tol_rel: float = DEFAULT_TOL) -> list:
    """Rank of Pi_p [A|B](t0) over a user grid. Diagnostic only: no necessity claim."""
    out = []
    for t0 in times:
        K = build_kalman_time(A, B, t0).value
        r, _ = numeric_rank(K[:p], tol_rel)
        out.append((float(t0), r))
    return out


# ---------------------------------------------------------------------------
# Gramian oracle
# ---------------------------------------------------------------------------

def gramian_factor(A, B, T: float, n_panels: int = 64, order: int = 8) -> np.ndarray:
    """R with W = R R^T, W = int_0^T e^{As} B B^T e^{A^T s} ds (composite Gauss-Legendre)."""
    A, B = _check_pair(A, B)
    x, w = np.polynomial.legendre.leggauss(order)
    h = T / n_panels
    cols = []
    for j in range(n_panels):
        s = j * h + 0.5 * h * (x + 1.0)
        for sq, wq in zip(s, w):
            cols.append(np.sqrt(0.5 * h * wq) * (expm(A * sq) @ B))
    return np.hstack(cols)


def gramian_oracle(A, B, p: int, T: float = 1.0, tol_rel: float = DEFAULT_TOL,
                   n_panels: int = 64) -> ControllabilityVerdict:
    """Independent verdict from the range of the controllability Gramian.

    The range of W equals the reachable subspace. The verdict is
    rank(Pi_p U) = p where U is an orthonormal basis of range(W).
    Ranks use the same relative threshold as ``numeric_rank``; applied to the
    square-root factor of W so that the threshold acts on singular values.
    """
    A, B = _check_pair(A, B)
    n = A.shape[0]
    if not (1 <= p <= n):
        raise ValueError(f"p must satisfy 1 <= p <= n={n}, got {p}")
    if T <= 0:
        raise ValueError("T must be positive")
    R = gramian_factor(A, B, T, n_panels)
    U, sv, _ = np.linalg.svd(R, full_matrices=False)
    if sv[0] == 0.0:
        s = 0
    else:
        s = int(np.sum(sv > tol_rel * sv[0]))
    if s == 0:
        return ControllabilityVerdict(0, p, False, tuple(), tol_rel, "gramian")
    # U has orthonormal columns, so its singular value scale is 1 and the
    # threshold is taken relative to that rather than to sigma_max(Pi_p U)
    sv_p = np.linalg.svd(U[:p, :s], compute_uv=False)
    r = int(np.sum(sv_p > tol_rel))
    return ControllabilityVerdict(r, p, r >= p, tuple(float(v) for v in sv_p), tol_rel, "gramian")


# ---------------------------------------------------------------------------
# basis extraction and cascade transform
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KalmanBasis:
    r: int
    l_j: tuple          # selected control columns (0-based)
    s_j: tuple          # chain lengths
    columns: np.ndarray  # n x s, chains concatenated
    coefficients: tuple  # per chain: A^{s_j} b^{l_j} in terms of chains 1..j
    residuals: tuple     # least-squares residual of each representation

    @property
    def s(self) -> int:
        return int(sum(self.s_j))

    @property
    def S_i(self) -> tuple:
        # 0-based start index of each chain
        return tuple(int(v) for v in np.concatenate([[0], np.cumsum(self.s_j)[:-1]])) if self.r else ()


def extract_basis(A, B, tol_rel: float = DEFAULT_TOL) -> KalmanBasis:
    """Greedy chains b^l, Ab^l, ... accepted while they raise the rank.

    Control columns are scanned in index order. For each one the chain is
    extended until the next power is dependent on everything accepted so far.
    """
    A, B = _check_pair(A, B)
    n, m = B.shape
    accepted: list = []
    l_j, s_j = [], []
    rank = 0
    for l in range(m):
        v = B[:, l].copy()
        length = 0
        while rank < n:
            trial = np.column_stack(accepted + [v])
            r = numeric_rank(trial, tol_rel)[0]
            if r > rank:
                accepted.append(v)
                rank = r
                length += 1
                v = A @ v
            else:
                break
        if length:
            l_j.append(l)
            s_j.append(length)
        if rank == n:
            break
    cols = np.column_stack(accepted) if accepted else np.zeros((n, 0))
    coefs, resid = [], []
    start = 0
    for j, (l, s) in enumerate(zip(l_j, s_j)):
        stop = start + s
        target = np.linalg.matrix_power(A, s) @ B[:, l]
        sub = cols[:, :stop]
        c, *_ = np.linalg.lstsq(sub, target, rcond=None)
        coefs.append(c)
        resid.append(float(np.linalg.norm(sub @ c - target)))
        start = stop
    return KalmanBasis(len(l_j), tuple(l_j), tuple(s_j), cols, tuple(coefs), tuple(resid))


def companion_matrix(basis: KalmanBasis) -> np.ndarray:
    """Block upper triangular C~: ones on each block's subdiagonal, coefficients in last columns."""
    s = basis.s
    C = np.zeros((s, s))
    for j, (start, sj) in enumerate(zip(basis.S_i, basis.s_j)):
        for i in range(1, sj):
            C[start + i, start + i - 1] = 1.0
        C[: start + sj, start + sj - 1] = basis.coefficients[j]
    return C


def permute_rows(A, B, p: int, tol_rel: float = DEFAULT_TOL):
    """Permutation Q reducing p < s to the square case.

    Keeps rows 0..p-1 and then adds rows p..n-1 in increasing order whenever
    they raise the rank of the selected rows of the chain matrix, until the
    rank reaches s. Returns (Q, selected_rows); Q @ x moves the selected rows
    to the front while keeping the rest in their original order.
    """
    A, B = _check_pair(A, B)
    n = A.shape[0]
    basis = extract_basis(A, B, tol_rel)
    X = basis.columns
    s = basis.s
    sel = list(range(p))
    rank = numeric_rank(X[sel], tol_rel)[0] if p and s else 0
    for i in range(p, n):
        if rank >= s:
            break
        r = numeric_rank(X[sel + [i]], tol_rel)[0]
        if r > rank:
            sel.append(i)
            rank = r
    rest = [i for i in range(n) if i not in sel]
    order = sel + rest
    Q = np.zeros((n, n))
    Q[np.arange(n), order] = 1.0
    return Q, tuple(sel)


@dataclass(frozen=True)
class CascadeTransform:
    times: np.ndarray
    P: np.ndarray          # (len(times), n, n)
    C_tilde: np.ndarray    # (s, s) or (len(times), s, s) for the time-dependent variant
    D: np.ndarray          # (n, r)
    r: int
    s_j: tuple
    l_j: tuple
    S_i: tuple             # 1-based block start indices
    T_star: float
    conditions: np.ndarray = field(repr=False, default=None)

    @property
    def s(self) -> int:
        return int(sum(self.s_j))


def _D_matrix(n: int, S_i0) -> np.ndarray:
    D = np.zeros((n, len(S_i0)))
    for j, k in enumerate(S_i0):
        D[k, j] = 1.0
    return D


def _t_star(times, conds, cap):
    ok = conds < cap
    if not ok[-1]:
        return float("nan")
    i = len(times) - 1
    while i > 0 and ok[i - 1]:
        i -= 1
    return float(times[i])


def build_transform(A, B, basis: KalmanBasis | None, T: float, grid=None,
                    cond_cap: float = COND_CAP) -> CascadeTransform:
    """P(t) = (chains | e^{A(t-T)} e_l for l > s) sampled on the grid."""
    A, B = _check_pair(A, B)
    n = A.shape[0]
    if basis is None:
        basis = extract_basis(A, B)
    times = np.linspace(0.0, T, 101) if grid is None else np.asarray(grid, dtype=float)
    s = basis.s
    X = basis.columns
    PT = np.hstack([X, np.eye(n)[:, s:]])
    if numeric_rank(PT)[0] < n:
        raise np.linalg.LinAlgError("P(T) is singular: the first s rows of the chain matrix are dependent")
    P = np.empty((len(times), n, n))
    conds = np.empty(len(times))
    for i, t in enumerate(times):
        P[i, :, :s] = X
        if s < n:
            P[i, :, s:] = expm(A * (t - T))[:, s:]
        conds[i] = np.linalg.cond(P[i])
    C = companion_matrix(basis)
    S0 = basis.S_i
    return CascadeTransform(times, P, C, _D_matrix(n, S0), basis.r, basis.s_j, basis.l_j,
                            tuple(k + 1 for k in S0), _t_star(times, conds, cond_cap), conds)


def build_transform_time(A, B, T: float, grid=None, tol_rel: float = DEFAULT_TOL,
                         cond_cap: float = COND_CAP) -> CascadeTransform:
    """Time-dependent transform for polynomial A, B when rank [A|B](T) = n.

    The chain indices are fixed by greedy extraction at t = T; P(t) stacks the
    recursion columns b_i^{l_j}(t) and the last column of each diagonal block of
    C~(t) is obtained by solving P(t) theta = b_{s_j}^{l_j}(t) at every grid time.
    """
    A, B = _as_poly(A), _as_poly(B)
    n, m = B.rows, B.cols
    blocks = kalman_blocks_poly(A, B) + [None]
    # one extra recursion step for the representation right-hand side
    last = blocks[-2]
    blocks[-1] = A @ last - last.derivative()
    times = np.linspace(0.0, T, 101) if grid is None else np.asarray(grid, dtype=float)
    # greedy chain selection at T on the recursion vectors
    accepted, l_j, s_j = [], [], []
    rank = 0
    for l in range(m):
        length = 0
        while rank < n and length < n:
            v = blocks[length](T)[:, l]
            r = numeric_rank(np.column_stack(accepted + [v]), tol_rel)[0]
            if r > rank:
                accepted.append(v)
                rank = r
                length += 1
            else:
                break
        if length:
            l_j.append(l)
            s_j.append(length)
    if rank < n:
        raise ValueError(f"time-dependent transform needs rank [A|B](T) = n; got {rank} < {n}")
    starts = np.concatenate([[0], np.cumsum(s_j)[:-1]]).astype(int)
    P = np.empty((len(times), n, n))
    C = np.zeros((len(times), n, n))
    conds = np.empty(len(times))
    for it, t in enumerate(times):
        cols = []
        for l, sj in zip(l_j, s_j):
            cols.extend(blocks[i](t)[:, l] for i in range(sj))
        P[it] = np.column_stack(cols)
        conds[it] = np.linalg.cond(P[it])
        for j, (l, sj) in enumerate(zip(l_j, s_j)):
            st = starts[j]
            for i in range(1, sj):
                C[it, st + i, st + i - 1] = 1.0
            rhs = blocks[sj](t)[:, l]
            if conds[it] < cond_cap:
                C[it, :, st + sj - 1] = np.linalg.solve(P[it], rhs)
            else:
                C[it, :, st + sj - 1] = np.nan
    return CascadeTransform(times, P, C, _D_matrix(n, starts), len(l_j), tuple(s_j), tuple(l_j),
                            tuple(int(k) + 1 for k in starts), _t_star(times, conds, cond_cap), conds)


def fd4_derivative(values: np.ndarray, times: np.ndarray) -> np.ndarray:
    """Fourth-order finite differences on a uniform grid (one-sided at the ends)."""
    N = len(times)
    if N < 5:
        raise ValueError("need at least 5 grid points")
    h = times[1] - times[0]
    if not np.allclose(np.diff(times), h, rtol=1e-9, atol=0):
        raise ValueError("fourth-order differences need a uniform grid")
    f = values
    d = np.empty_like(f)
    d[2:-2] = (f[:-4] - 8 * f[1:-3] + 8 * f[3:-1] - f[4:]) / (12 * h)
    # one-sided 5-point stencils
    fwd = np.array([-25, 48, -36, 16, -3]) / (12 * h)
    d[0] = np.tensordot(fwd, f[0:5], axes=1)
    d[1] = np.tensordot(np.array([-3, -10, 18, -6, 1]) / (12 * h), f[0:5], axes=1)
    d[-1] = -np.tensordot(fwd, f[-1:-6:-1], axes=1)
    d[-2] = -np.tensordot(np.array([-3, -10, 18, -6, 1]) / (12 * h), f[-1:-6:-1], axes=1)
    return d


def transform_residual(tr: CascadeTransform, A) -> np.ndarray:
    """Frobenius norm of -dP/dt + A P - P blockdiag(C~, 0) at every grid time.

    ``A`` may be a constant matrix or a ``MatrixPoly``.
    """
    n = tr.P.shape[1]
    s = tr.s
    dP = fd4_derivative(tr.P, tr.times)
    out = np.empty(len(tr.times))
    for i, t in enumerate(tr.times):
        At = A(t) if isinstance(A, MatrixPoly) else np.asarray(A, dtype=float)
        Ct = tr.C_tilde[i] if tr.C_tilde.ndim == 3 else tr.C_tilde
        big = np.zeros((n, n))
        big[:s, :s] = Ct[:s, :s]
        out[i] = np.linalg.norm(-dP[i] + At @ tr.P[i] - tr.P[i] @ big)
    return out
