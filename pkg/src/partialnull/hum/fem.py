"""P1 finite elements on a uniform 1-D mesh with homogeneous Dirichlet data."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..spectral import IntervalDomain
from ._backend import Tridiag


@dataclass(frozen=True)
class Mesh1D:
    domain: IntervalDomain
    n_cells: int

    def __post_init__(self):
        if self.n_cells < 4:
            raise ValueError("n_cells must be >= 4")

    @property
    def h(self) -> float:
        return self.domain.L / self.n_cells

    @property
    def all_nodes(self) -> np.ndarray:
        return self.domain.a + self.h * np.arange(self.n_cells + 1)

    @property
    def nodes(self) -> np.ndarray:
        """Interior nodes; the Dirichlet rows are eliminated."""
        return self.all_nodes[1:-1]

    @property
    def n_dofs(self) -> int:
        return self.n_cells - 1


@dataclass(frozen=True)
class TimeScheme:
    T: float
    n_steps: int

    def __post_init__(self):
        if self.T <= 0 or self.n_steps < 1:
            raise ValueError("need T > 0 and n_steps >= 1")

    @property
    def dt(self) -> float:
        return self.T / self.n_steps

    @classmethod
    def from_mode(cls, T: float, mode: str = "per_T", n_steps: int = 400, dt: float = 1.0 / 400):
        """``per_T``: dt = T / n_steps. ``literal``: the given dt, rounded to a whole number of steps."""
        if mode == "per_T":
            return cls(T, int(n_steps))
        if mode == "literal":
            return cls(T, max(1, int(round(T / dt))))
        raise ValueError(f"unknown dt mode {mode!r}")


@dataclass(frozen=True)
class Operators:
    K: Tridiag          # stiffness
    M: Tridiag          # consistent mass
    C: Tridiag          # alpha-weighted mass (coupling)
    Mw: Tridiag         # D M D, mass of the omega-masked field
    indicator: np.ndarray


def _assemble_weighted(n_cells, h, a_nodes):
    # int (a0 N0 + a1 N1) Ni Nj over one element: h/12 [[3a0+a1, a0+a1], [a0+a1, a0+3a1]]
    a0, a1 = a_nodes[:-1], a_nodes[1:]
    d_full = np.zeros(n_cells + 1)
    d_full[:-1] += h / 12.0 * (3 * a0 + a1)
    d_full[1:] += h / 12.0 * (a0 + 3 * a1)
    off = h / 12.0 * (a0 + a1)          # couples node e and e+1
    d = d_full[1:-1]
    lo = np.r_[0.0, off[1:-1]]
    up = np.r_[off[1:-1], 0.0]
    return Tridiag(lo, d, up)


def assemble(mesh: Mesh1D, alpha, omega) -> Operators:
    """Stiffness, mass, coupling and omega restriction on interior nodes.

    ``alpha`` is a callable (vectorized in x) giving the coupling coefficient;
    its nodal values are interpolated linearly inside each element.
    """
    lo_w, hi_w = float(omega[0]), float(omega[1])
    dom = mesh.domain
    if not (dom.a <= lo_w < hi_w <= dom.b):
        raise ValueError(f"omega={omega} is not a sub-interval of ({dom.a}, {dom.b})")
    n, h = mesh.n_dofs, mesh.h
    off = np.ones(n)
    K = Tridiag(-off / h, 2.0 * off / h, -off / h)
    M = Tridiag(off * h / 6.0, 4.0 * off * h / 6.0, off * h / 6.0)
    a_nodes = np.asarray(alpha(mesh.all_nodes), dtype=float) * np.ones(mesh.n_cells + 1)
    C = _assemble_weighted(mesh.n_cells, h, a_nodes)
    x = mesh.nodes
    tol = 1e-12 * dom.L
    ind = ((x >= lo_w - tol) & (x <= hi_w + tol)).astype(float)
    return Operators(K, M, C, M.masked(ind), ind)
