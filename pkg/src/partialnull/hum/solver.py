"""Penalized HUM for the coupled system, discretized by P1 elements and backward Euler.

Discrete maps (S = A^{-1} M, A = M + dt K, levels t_n = n dt):

    z^{n+1} = S z^n
    y^{n+1} = A^{-1} (M y^n + dt C z^{n+1} + dt Mw u^{n+1})

The adjoint of u -> y(T) with respect to <., .>_M and the control inner product
dt sum_n u^n . Mw v^n is phi^n = S^{Nt+1-n} phi0, n = 1..Nt, so the Gramian
Lambda phi0 = (forward solve from 0 driven by u = phi) is exactly symmetric in
the mass inner product. The control only enters the y equation, so Lambda is
the scalar heat Gramian; the coupling appears through y(T; y0, z0, 0).
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from ._backend import Stepper
from .fem import Mesh1D, Operators, TimeScheme, assemble


class ConvergenceError(RuntimeError):
    def __init__(self, msg, history=()):
        super().__init__(msg)
        self.history = tuple(history)


@dataclass(frozen=True)
class HumConfig:
    mesh: Mesh1D
    scheme: TimeScheme
    epsilon: float
    omega: tuple
    alpha: Callable
    y0: Callable
    z0: Callable
    cg_tol: float = 1e-10
    cg_max_iter: int = 5000
    method: str = "cr"
    backend: Optional[str] = None

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        d = self.mesh.domain
        if not (d.a <= self.omega[0] < self.omega[1] <= d.b):
            raise ValueError(f"omega={self.omega} is not inside ({d.a}, {d.b})")
        if self.method not in ("cr", "cg"):
            raise ValueError("method must be 'cr' or 'cg'")


@dataclass(frozen=True)
class HumRun:
    h: float
    epsilon: float
    min_F: float
    control_norm: float
    yT_norm: float
    cg_iters: int
    fenchel_gap: float          # |F + J| / (1 + |J|)
    J: float
    residual: float             # ||(Lambda + eps) phi0 + y_free||_M / ||y_free||_M, recomputed
    n_cells: int = 0
    history: tuple = field(default=(), repr=False)


class HumProblem:
    """Operators and factorized steppers for one configuration."""

    def __init__(self, cfg: HumConfig):
        self.cfg = cfg
        self.ops: Operators = assemble(cfg.mesh, cfg.alpha, cfg.omega)
        dt = cfg.scheme.dt
        self.dt = dt
        self.nt = cfg.scheme.n_steps
        A = self.ops.M + self.ops.K.scale(dt)
        self.stepper = Stepper(A, self.ops.M, cfg.backend)
        x = cfg.mesh.nodes
        self.y0 = np.asarray(cfg.y0(x), dtype=float) * np.ones_like(x)
        self.z0 = np.asarray(cfg.z0(x), dtype=float) * np.ones_like(x)

    # inner products -------------------------------------------------------
    def ip(self, a, b) -> float:
        return float(a @ (self.ops.M @ b))

    def norm(self, a) -> float:
        return math.sqrt(max(self.ip(a, a), 0.0))

    def control_norm2(self, u) -> float:
        """dt sum_n u^n . Mw u^n over n = 1..Nt."""
        return float(self.dt * np.sum(u * (self.ops.Mw @ u)))

    # solves ---------------------------------------------------------------
    def z_path(self) -> np.ndarray:
        return self.stepper.march(self.z0, self.nt)

    def forward(self, u=None, y0=None, z0=True):
        """(y path, z path), rows at levels 0..Nt. ``u`` rows are levels 1..Nt."""
        y0 = self.y0 if y0 is None else y0
        if z0 is True:
            z = self.z_path()
        else:
            z = np.zeros((self.nt + 1, y0.size))
        rhs = self.dt * (self.ops.C @ z[1:])
        if u is not None:
            u = np.asarray(u, dtype=float)
            if u.shape != (self.nt, y0.size):
                raise ValueError(f"control shape {u.shape}, expected {(self.nt, y0.size)}")
            rhs = rhs + self.dt * (self.ops.Mw @ u)
        return self.stepper.march(y0, self.nt, rhs), z

    def y_free(self) -> np.ndarray:
        y, _ = self.forward()
        return y[-1]

    def adjoint(self, phi0) -> np.ndarray:
        """phi^n for n = 1..Nt (row n-1)."""
        back = self.stepper.march(phi0, self.nt)
        return back[1:][::-1].copy()

    def gramian(self, phi0) -> np.ndarray:
        phi = self.adjoint(phi0)
        rhs = self.dt * (self.ops.Mw @ phi)
        w = self.stepper.march(np.zeros_like(phi0), self.nt, rhs)
        return w[-1]


def forward_solve(cfg: HumConfig, u=None, problem: HumProblem | None = None):
    p = problem or HumProblem(cfg)
    return p.forward(u)


def apply_gramian(cfg: HumConfig, phi0, problem: HumProblem | None = None) -> np.ndarray:
    p = problem or HumProblem(cfg)
    return p.gramian(np.asarray(phi0, dtype=float))


def conjugate_residual(op, b, ip, tol, maxiter):
    """Conjugate residual iteration for an operator self-adjoint in ``ip``.

    Minimizes the residual norm over the Krylov space, so the recorded residual
    history is nonincreasing. Returns (x, history of ||r|| / ||b||).
    """
    x = np.zeros_like(b)
    bn = math.sqrt(ip(b, b))
    if bn == 0.0:
        return x, [0.0]
    r = b.copy()
    Ar = op(r)
    p, Ap = r.copy(), Ar.copy()
    rho = ip(r, Ar)
    hist = [1.0]
    for _ in range(maxiter):
        a = rho / ip(Ap, Ap)
        x += a * p
        r -= a * Ap
        rel = math.sqrt(max(ip(r, r), 0.0)) / bn
        hist.append(rel)
        if rel <= tol:
            return x, hist
        Ar = op(r)
        rho_new = ip(r, Ar)
        beta = rho_new / rho
        rho = rho_new
        p = r + beta * p
        Ap = Ar + beta * Ap
    raise ConvergenceError(f"conjugate residual did not reach {tol:g} in {maxiter} iterations "
                           f"(last {hist[-1]:.3e})", hist)


def conjugate_gradient(op, b, ip, tol, maxiter):
    """Plain CG in the inner product ``ip``; its residual history need not be monotone."""
    x = np.zeros_like(b)
    bn = math.sqrt(ip(b, b))
    if bn == 0.0:
        return x, [0.0]
    r = b.copy()
    p = r.copy()
    rr = ip(r, r)
    hist = [1.0]
    for _ in range(maxiter):
        Ap = op(p)
        a = rr / ip(p, Ap)
        x += a * p
        r -= a * Ap
        rr_new = ip(r, r)
        hist.append(math.sqrt(max(rr_new, 0.0)) / bn)
        if hist[-1] <= tol:
            return x, hist
        p = r + (rr_new / rr) * p
        rr = rr_new
    raise ConvergenceError(f"conjugate gradient did not reach {tol:g} in {maxiter} iterations "
                           f"(last {hist[-1]:.3e})", hist)


def solve_penalized(cfg: HumConfig, problem: HumProblem | None = None) -> HumRun:
    """Solve (Lambda + eps) phi0 = -y(T; y0, z0, 0) and evaluate F, J and the gap."""
    p = problem or HumProblem(cfg)
    eps = cfg.epsilon
    yf = p.y_free()
    b = -yf
    op = lambda v: p.gramian(v) + eps * v
    solver = conjugate_residual if cfg.method == "cr" else conjugate_gradient
    phi0, hist = solver(op, b, p.ip, cfg.cg_tol, cfg.cg_max_iter)
    bn = p.norm(b)
    res = p.norm(op(phi0) - b) / bn if bn > 0 else 0.0
    phi = p.adjoint(phi0)
    u = phi                               # u = 1_omega phi; Mw carries the mask
    u2 = p.control_norm2(u)
    y, _ = p.forward(u)
    yT = y[-1]
    yT2 = p.ip(yT, yT)
    F = 0.5 * u2 + yT2 / (2.0 * eps)
    J = 0.5 * u2 + 0.5 * eps * p.ip(phi0, phi0) + p.ip(yf, phi0)
    gap = abs(F + J) / (1.0 + abs(J))
    return HumRun(cfg.mesh.h, eps, F, math.sqrt(u2), math.sqrt(max(yT2, 0.0)), len(hist) - 1, gap, J, res,
                  cfg.mesh.n_cells, tuple(hist))


@dataclass(frozen=True)
class SweepResult:
    runs: tuple
    slopes: dict

    def table(self):
        return [(r.h, r.epsilon, r.min_F, r.control_norm, r.yT_norm, r.cg_iters, r.fenchel_gap) for r in self.runs]


def loglog_slope(x, y) -> float:
    x, y = np.asarray(x, float), np.asarray(y, float)
    if x.size < 2 or np.any(y <= 0):
        return float("nan")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def sweep(base: HumConfig, n_cells_list: Sequence[int], eps_exponent: float = 4.0,
          threads: int = 1) -> SweepResult:
    """solve_penalized for each mesh with eps = h^eps_exponent; results ordered by input."""
    if not n_cells_list:
        raise ValueError("n_cells_list must be nonempty")
    cfgs = []
    for n in n_cells_list:
        mesh = Mesh1D(base.mesh.domain, int(n))
        cfgs.append(replace(base, mesh=mesh, epsilon=mesh.h ** eps_exponent))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            runs = list(ex.map(solve_penalized, cfgs))
    else:
        runs = [solve_penalized(c) for c in cfgs]
    h = [r.h for r in runs]
    slopes = {
        "min_F": loglog_slope(h, [r.min_F for r in runs]),
        "u_norm": loglog_slope(h, [r.control_norm for r in runs]),
        "yT_norm": loglog_slope(h, [r.yT_norm for r in runs]),
    }
    return SweepResult(tuple(runs), slopes)
