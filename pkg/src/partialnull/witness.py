"""Adjoint data certifying that the first component is not null controllable.

For the coupling alpha(x) = sum_j j^{-2} cos(G j x) on (0, pi) and adjoint data
phi0 supported on the modes GM+1..GM+m, the coefficients are chosen so that
the boundary flux of the adjoint heat solution vanishes to order m-1 at t = T.
That makes the observation energy A_M decay like a high negative power of M,
while the pairing <z0, psi(0)> with z0 = w_{k1} only decays like M^{-4}.
An observability inequality would bound the second by the first, so a ratio
pairing / sqrt(A_M) growing with M rules it out.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import mpmath as mp
import numpy as np

from .spectral import (CouplingSpec, IntervalDomain, SpectralField, coupling_matrix,
                       solve_adjoint)


class WitnessError(RuntimeError):
    pass


@dataclass(frozen=True)
class WitnessData:
    m: int
    G: int
    M: int
    T: float
    phi_coeffs: np.ndarray      # phi_{GM+1..GM+m}, sup-norm 1, phi_{k1} = +1
    k1: int                     # 1..m
    phi_exact: tuple            # exact rational solution, same normalization
    singular_values: np.ndarray

    @property
    def modes(self) -> np.ndarray:
        return self.G * self.M + np.arange(1, self.m + 1)

    def constraint_residuals(self) -> list:
        """|sum_j a_j x_j^l phi_j| relative to max_j a_j x_j^l, exact for the stored doubles."""
        return constraint_residuals(self.m, self.G, self.M, self.phi_coeffs)


def _nodes(m, G, M):
    a = [G * M + j for j in range(1, m + 1)]
    x = [2 * G * M * j + j * j for j in range(1, m + 1)]
    return a, x


def constraint_residuals(m, G, M, phi) -> list:
    a, x = _nodes(m, G, M)
    ph = [Fraction(float(v)) for v in phi]
    out = []
    for l in range(m - 1):
        terms = [a[j] * x[j] ** l for j in range(m)]
        s = sum(t * p for t, p in zip(terms, ph))
        out.append(float(abs(s) / max(terms)))
    return out


def exact_witness(m: int, G: int, M: int) -> tuple:
    """Rational solution phi_j proportional to 1 / (a_j prod_{i != j} (x_j - x_i)).

    With v_j = a_j phi_j the constraints say sum_j v_j x_j^l = 0 for l <= m-2,
    whose solution is given by the Lagrange weights of the nodes x_j.
    """
    a, x = _nodes(m, G, M)
    raw = []
    for j in range(m):
        d = Fraction(a[j])
        for i in range(m):
            if i != j:
                d *= x[j] - x[i]
        raw.append(1 / d)
    big = max(abs(v) for v in raw)
    k1 = min(j for j in range(m) if abs(raw[j]) == big)
    s = big if raw[k1] > 0 else -big
    return tuple(v / s for v in raw), k1 + 1


def witness_coefficients(m: int, G: int, M: int, T: float) -> WitnessData:
    """Null vector of the (m-1) x m moment system, rows scaled to unit max before the SVD."""
    if m < 1:
        raise ValueError("m must be >= 1")
    if G < 2 * m + 1:
        raise ValueError(f"G={G} must satisfy G >= 2m+1 = {2 * m + 1}")
    if M < 2:
        raise ValueError("M must be >= 2")
    a, x = _nodes(m, G, M)
    if m == 1:
        phi = np.ones(1)
        sv = np.zeros(0)
    else:
        rows = np.array([[float(a[j]) * float(x[j]) ** l for j in range(m)] for l in range(m - 1)])
        rows /= np.max(np.abs(rows), axis=1, keepdims=True)
        _, sv, Vt = np.linalg.svd(rows)
        rank = int(np.sum(sv > 1e-13 * sv[0]))
        if m - rank != 1:
            raise WitnessError(f"numeric null space has dimension {m - rank}, expected 1 (singular values {sv})")
        phi = Vt[-1].copy()
    big = np.max(np.abs(phi))
    k1 = int(np.flatnonzero(np.abs(phi) == big)[0])
    phi = phi / (big if phi[k1] > 0 else -big)
    phi[k1] = 1.0
    exact, _ = exact_witness(m, G, M)
    phi.setflags(write=False)
    return WitnessData(m, G, M, float(T), phi, k1 + 1, exact, sv)


# ---------------------------------------------------------------------------
# observation energy
# ---------------------------------------------------------------------------

def _dps_for(w):
    # A_M is roughly (GM)^{-(2m-2)} times O(1) terms: keep that many digits plus margin
    return int(40 + 2 * w.m * np.log10(w.G * w.M + w.m) + 5)


def _mp_phi(w, use_exact):
    if use_exact:
        return [mp.mpf(v.numerator) / v.denominator for v in w.phi_exact]
    return [mp.mpf(float(v)) for v in w.phi_coeffs]


def observation_closed_form(w: WitnessData, use_exact: bool = False) -> mp.mpf:
    """sum_{k,l} k l phi_k phi_l (1 - e^{-(k^2 + l^2) T}) / (k^2 + l^2) in high precision."""
    ks = [int(k) for k in w.modes]
    ph = _mp_phi(w, use_exact)
    T = mp.mpf(w.T)
    tot = mp.mpf(0)
    for i, k in enumerate(ks):
        for j, l in enumerate(ks):
            s = k * k + l * l
            tot += k * l * ph[i] * ph[j] * (-mp.expm1(-s * T)) / s
    return tot


def observation_quadrature(w: WitnessData, n_quad: int = 64, order: int = 20,
                           use_exact: bool = False) -> mp.mpf:
    """int_0^T (sum_k k e^{-k^2 tau} phi_k)^2 d tau on panels graded toward tau = 0."""
    ks = [int(k) for k in w.modes]
    ph = _mp_phi(w, use_exact)
    T = mp.mpf(w.T)
    tau0 = mp.mpf(1) / (4 * max(ks) ** 2)
    edges = [mp.mpf(0)]
    if tau0 < T:
        r = (T / tau0) ** (mp.mpf(1) / (n_quad - 1))
        edges += [tau0 * r ** i for i in range(n_quad - 1)] + [T]
    else:
        edges += [T * (i + 1) / n_quad for i in range(n_quad)]
    xg, wg = np.polynomial.legendre.leggauss(order)
    xg = [mp.mpf(float(v)) for v in xg]
    wg = [mp.mpf(float(v)) for v in wg]
    tot = mp.mpf(0)
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi <= lo:
            continue
        half, mid = (hi - lo) / 2, (hi + lo) / 2
        for xq, wq in zip(xg, wg):
            tau = mid + half * xq
            f = mp.fsum(k * mp.exp(-k * k * tau) * p for k, p in zip(ks, ph))
            tot += half * wq * f * f
    return tot


@dataclass(frozen=True)
class Observation:
    A_M: float
    quadrature: float
    discrepancy: float          # |closed - quadrature| / closed
    exact_phi_value: float      # A_M for the rational witness, a check on the SVD solution


def boundary_observation(w: WitnessData, n_quad: int = 64, tol: float = 1e-8) -> Observation:
    """A_M = int_0^T |sum_k k e^{-k^2 (T - t)} phi_k|^2 dt, two independent evaluations."""
    if n_quad < 64:
        raise ValueError("n_quad must be >= 64")
    with mp.workdps(_dps_for(w)):
        cf = observation_closed_form(w)
        qd = observation_quadrature(w, n_quad)
        ex = observation_closed_form(w, use_exact=True)
        disc = abs(cf - qd) / abs(cf) if cf != 0 else abs(qd)
        disc = float(disc)
        if disc > tol:
            raise WitnessError(f"A_M closed form and quadrature disagree: relative {disc:.3e} > {tol:g}")
        return Observation(float(cf), float(qd), disc, float(ex))


# ---------------------------------------------------------------------------
# pairing with z0 = w_{k1}
# ---------------------------------------------------------------------------

def coupling_entry(G: int, M: int, k1: int, power: float = 2.0) -> float:
    """alpha_{k1, GM+k1} for alpha = sum_j j^{-power} cos(G j x) on (0, pi).

    Product to sum gives (alpha_{GM} - alpha_{GM+2k1}) / 2, and GM+2k1 is not a
    multiple of G when 2 k1 < G, so the entry is M^{-power} / 2.
    """
    if 2 * k1 < G:
        return 0.5 * float(M) ** (-power)
    second = float((G * M + 2 * k1) // G) ** (-power) if (G * M + 2 * k1) % G == 0 else 0.0
    return 0.5 * (float(M) ** (-power) - second)


def pairing_lower_bound(w: WitnessData, power: float = 2.0) -> float:
    """|(e^{-k1^2 T} - e^{-(GM+k1)^2 T}) / ((GM+k1)^2 - k1^2)| alpha_{k1, GM+k1}."""
    k1 = w.k1
    K1 = w.G * w.M + k1
    num = -np.expm1(-(K1 ** 2 - k1 ** 2) * w.T) * np.exp(-k1 ** 2 * w.T)
    return float(abs(num / (K1 ** 2 - k1 ** 2)) * coupling_entry(w.G, w.M, k1, power))


def pairing_via_adjoint(w: WitnessData, K: int | None = None, power: float = 2.0) -> float:
    """|<w_{k1}, psi(0)>| from the full spectral adjoint solve at truncation K >= GM+m."""
    need = w.G * w.M + w.m
    K = need if K is None else int(K)
    if K < need:
        raise ValueError(f"truncation K={K} < GM+m={need}")
    spec = CouplingSpec.strided_power(w.G, power, 2 * K)
    A = coupling_matrix(spec, K)
    phi0 = np.zeros(K)
    phi0[w.modes - 1] = w.phi_coeffs
    adj = solve_adjoint(SpectralField(phi0), A, w.T)
    return float(abs(adj.psi(0.0)[w.k1 - 1]))


def coupling_submatrix(G: int, M: int, m: int, power: float = 2.0) -> np.ndarray:
    """(alpha_{k, GM+l})_{1 <= k, l <= m} from the computed coupling matrix."""
    K = G * M + m
    A = coupling_matrix(CouplingSpec.strided_power(G, power, 2 * K), K).values
    return A[:m, G * M: G * M + m]


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WitnessReport:
    m: int
    G: int
    T: float
    M_list: tuple
    A_M: tuple
    pairing: tuple
    ratio: tuple             # pairing / sqrt(A_M)
    k1: tuple
    k1_modal: int
    slope_A: float
    slope_pairing: float
    gamma1: float            # max A_M M^{2m-5}
    gamma2: float            # min pairing M^4
    quad_discrepancy: float
    valid: bool

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}

    def rows(self):
        for M, a, p, r, k in zip(self.M_list, self.A_M, self.pairing, self.ratio, self.k1):
            yield M, a, p, r, k


def certificate_sweep(m: int, G: int, T: float, M_list: Sequence[int], n_quad: int = 64,
                      cross_check: bool = True) -> WitnessReport:
    """Fit log A_M and log pairing against log M and decide the certificate.

    VALID needs slope_A <= -(2m-5)+1, slope_pairing within 0.3 of -4, and the
    ratio pairing / sqrt(A_M) growing by more than 10x from first to last M.
    """
    M_list = tuple(int(M) for M in M_list)
    if len(M_list) < 4:
        raise ValueError("certificate_sweep needs at least 4 values of M for a fit")
    A, P, k1s, disc = [], [], [], 0.0
    for M in M_list:
        w = witness_coefficients(m, G, M, T)
        obs = boundary_observation(w, n_quad)
        p = pairing_lower_bound(w)
        if cross_check:
            q = pairing_via_adjoint(w)
            if abs(q - p) > 1e-10 * abs(p):
                raise WitnessError(f"pairing closed form {p:.16e} != adjoint solve {q:.16e} at M={M}")
        A.append(obs.A_M)
        P.append(p)
        k1s.append(w.k1)
        disc = max(disc, obs.discrepancy)
    lm = np.log(np.array(M_list, dtype=float))
    slope_A = float(np.polyfit(lm, np.log(A), 1)[0])
    slope_P = float(np.polyfit(lm, np.log(P), 1)[0])
    ratio = tuple(float(p / np.sqrt(a)) for p, a in zip(P, A))
    Ms = np.array(M_list, dtype=float)
    g1 = float(np.max(np.array(A) * Ms ** (2 * m - 5)))
    g2 = float(np.min(np.array(P) * Ms ** 4))
    valid = (slope_A <= -(2 * m - 5) + 1 and abs(slope_P + 4) <= 0.3 and ratio[-1] > 10 * ratio[0])
    modal = Counter(k1s).most_common()
    k1_modal = min(k for k, c in modal if c == modal[0][1])
    return WitnessReport(m, G, float(T), M_list, tuple(A), tuple(P), ratio, tuple(k1s), k1_modal,
                         slope_A, slope_P, g1, g2, disc, bool(valid))
