"""Moment-method synthesis of a control that kills the first component.

The control is separated, u(x, t) = f(x) gamma(t), with f supported in omega.
Writing the first K modes of y(T) = 0 as moment equations gives

    int_0^T gamma(T - t) e^{-mu_k t} dt = M_k,   k = 1..K,

which is solved with a family q_k biorthogonal to the exponentials e^{-mu_l t}
on (0, T): gamma(t) = sum_k M_k q_k(T - t).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import mpmath as mp
import numpy as np
import scipy.linalg as sla

from .spectral import (CouplingMatrix, ExpSeries, IntervalDomain, SeparatedControl,
                       SpectralField, exp_diff_quotient, gauss_panels)

RESIDUAL_GATE = 1e-6
K_CAP = {"double": 8, "extended_precision": 20, "regularized": 20}


class BiorthogonalityError(RuntimeError):
    pass


class AdmissibilityError(RuntimeError):
    def __init__(self, msg, offending=()):
        super().__init__(msg)
        self.offending = tuple(offending)


def gram_matrix(K: int, T: float, domain: IntervalDomain = IntervalDomain()) -> np.ndarray:
    """G_jl = int_0^T e^{-(mu_j + mu_l) t} dt."""
    if K < 1 or T <= 0:
        raise ValueError("need K >= 1 and T > 0")
    mu = domain.mu(K)
    s = mu[:, None] + mu[None, :]
    return -np.expm1(-s * T) / s


def _gram_mp(K, T, domain, dps):
    with mp.workdps(dps):
        L = mp.mpf(domain.b) - mp.mpf(domain.a)
        mu = [(k * mp.pi / L) ** 2 for k in range(1, K + 1)]
        T = mp.mpf(T)
        return mp.matrix([[-mp.expm1(-(mu[j] + mu[l]) * T) / (mu[j] + mu[l]) for l in range(K)]
                          for j in range(K)])


def biorth_residual(coeffs, K: int, T: float, domain: IntervalDomain = IntervalDomain(),
                    dps: int = 50) -> float:
    """max_kl |<q_k, e^{-mu_l t}> - delta_kl| evaluated in extended precision.

    ``coeffs`` may be a float array or an mpmath matrix; the inner products are
    formed exactly from the coefficients as stored.
    """
    with mp.workdps(dps):
        G = _gram_mp(K, T, domain, dps)
        C = coeffs if isinstance(coeffs, mp.matrix) else mp.matrix(np.asarray(coeffs).tolist())
        R = C * G
        return float(max(abs(R[k, l] - (1 if k == l else 0)) for k in range(K) for l in range(K)))


@dataclass(frozen=True)
class BiorthFamily:
    K: int
    T: float
    coeffs: np.ndarray          # row k: q_k(t) = sum_j coeffs[k, j] e^{-mu_j t}
    gram: np.ndarray
    condition_estimate: float
    residual: float
    mode: str
    domain: IntervalDomain = IntervalDomain()
    coeffs_exact: object = field(default=None, repr=False)

    def norms(self) -> np.ndarray:
        """||q_k||_{L2(0,T)}; exact relation ||q_k||^2 = c_k^T G c_k."""
        return np.sqrt(np.abs(np.einsum("kj,jl,kl->k", self.coeffs, self.gram, self.coeffs)))

    def growth_fit(self):
        """Slope and intercept of log ||q_k|| against k (compared with pi + eps)."""
        k = np.arange(1, self.K + 1)
        if self.K < 2:
            return float("nan"), float(np.log(self.norms()[0]))
        slope, icpt = np.polyfit(k, np.log(self.norms()), 1)
        return float(slope), float(icpt)

    def evaluate(self, t) -> np.ndarray:
        """(len(t), K) values q_k(t)."""
        mu = self.domain.mu(self.K)
        return np.exp(-np.outer(np.atleast_1d(t), mu)) @ self.coeffs.T


def biorthogonal_family(K: int, T: float, mode: str = "double",
                        domain: IntervalDomain = IntervalDomain(), dps: int = 50) -> BiorthFamily:
    """Solve G c_k = e_k for every k and gate on the biorthogonality residual."""
    if mode not in K_CAP:
        raise ValueError(f"unknown mode {mode!r}; expected one of {sorted(K_CAP)}")
    if K > K_CAP[mode]:
        raise ValueError(f"K={K} exceeds the cap {K_CAP[mode]} for mode {mode!r}")
    G = gram_matrix(K, T, domain)
    cond = float(np.linalg.cond(G))
    exact = None
    if mode == "double":
        C = sla.solve(G, np.eye(K), assume_a="pos")
    elif mode == "regularized":
        lam = 1e-14 * np.trace(G)
        C = sla.solve(G + lam * np.eye(K), np.eye(K), assume_a="pos")
    else:
        with mp.workdps(dps):
            exact = mp.inverse(_gram_mp(K, T, domain, dps))
            C = np.array([[float(exact[i, j]) for j in range(K)] for i in range(K)])
    # G is symmetric so the inverse is too; rows are the q_k coefficient vectors
    res = biorth_residual(exact if exact is not None else C, K, T, domain, dps)
    if not res < RESIDUAL_GATE:
        raise BiorthogonalityError(
            f"biorthogonality residual {res:.3e} >= {RESIDUAL_GATE:g} (K={K}, T={T}, mode={mode}, "
            f"cond={cond:.2e}); reduce K or use mode='extended_precision'")
    C.setflags(write=False)
    return BiorthFamily(K, float(T), C, G, cond, res, mode, domain, exact)


# ---------------------------------------------------------------------------
# spatial profile
# ---------------------------------------------------------------------------

def _bump(x, c, r):
    s = (np.asarray(x, dtype=float) - c) / r
    out = np.zeros_like(s)
    m = np.abs(s) < 1.0
    out[m] = np.exp(-1.0 / (1.0 - s[m] ** 2))
    return out


@dataclass(frozen=True)
class SpatialProfile:
    f_coeffs: np.ndarray
    support: tuple
    beta: float
    leakage: float
    centers: tuple
    radius: float
    weights: tuple
    attempts: int
    domain: IntervalDomain = IntervalDomain()

    @property
    def K(self) -> int:
        return self.f_coeffs.size

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return sum(w * _bump(x, c, self.radius) for w, c in zip(self.weights, self.centers))

    def scaled(self, factor: float) -> "SpatialProfile":
        return SpatialProfile(self.f_coeffs * factor, self.support, self.beta * factor, self.leakage * abs(factor),
                              self.centers, self.radius, tuple(w * factor for w in self.weights),
                              self.attempts, self.domain)


def _profile_coeffs(centers, radius, weights, K, domain, n_panels=128, order=10):
    out = np.zeros(K)
    for c, w in zip(centers, weights):
        x, wq = gauss_panels(c - radius, c + radius, n_panels, order)
        out += w * (domain.basis(x, K) @ (wq * _bump(x, c, radius)))
    return out


def _leakage(profile_fn, omega, domain, n_panels=256, order=8):
    pieces = []
    if omega[0] > domain.a:
        pieces.append((domain.a, omega[0]))
    if omega[1] < domain.b:
        pieces.append((omega[1], domain.b))
    tot = 0.0
    for a, b in pieces:
        x, w = gauss_panels(a, b, n_panels, order)
        tot += float(w @ profile_fn(x) ** 2)
    return float(np.sqrt(tot))


def spatial_profile(omega, K: int, domain: IntervalDomain = IntervalDomain(),
                    max_retries: int = 40) -> SpatialProfile:
    """Smooth profile supported in omega with f_k k^3 > 0 for k <= K.

    Tries a single mollifier bump first: centered and as wide as omega allows,
    then a deterministic schedule of shifted and narrowed bumps. If none of them
    is admissible the last attempt is a sum of K equal bumps tiling omega with
    weights chosen so that f_k k^3 = 1 for k <= K.
    """
    lo, hi = float(omega[0]), float(omega[1])
    if not (domain.a <= lo < hi <= domain.b):
        raise ValueError(f"omega={omega} must be a nonempty sub-interval of ({domain.a}, {domain.b})")
    if K < 1:
        raise ValueError("K must be >= 1")
    k3 = np.arange(1, K + 1, dtype=float) ** 3
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    schedule = [(mid, half)]
    for shrink in (0.75, 0.5, 0.25):
        r = half * shrink
        for shift in np.linspace(-1.0, 1.0, 5):
            schedule.append((mid + shift * (half - r), r))
    schedule = schedule[: max(max_retries - 1, 1)]
    best = None
    attempts = 0
    for c, r in schedule:
        attempts += 1
        fk = _profile_coeffs((c,), r, (1.0,), K, domain)
        for sgn in (1.0, -1.0):
            b = float(np.min(sgn * fk * k3))
            if best is None or b > best[0]:
                best = (b, c, r, sgn, sgn * fk)
            if b > 0:
                prof = SpatialProfile(sgn * fk, (lo, hi), b, 0.0, (c,), r, (sgn,), attempts, domain)
                return _with_leakage(prof)
    # combination of K bumps
    attempts += 1
    r = (hi - lo) / (K + 1)
    centers = tuple(lo + r * np.arange(1, K + 1))
    Bm = np.column_stack([_profile_coeffs((c,), r, (1.0,), K, domain) for c in centers])
    try:
        wts = np.linalg.solve(Bm * k3[:, None], np.ones(K))
    except np.linalg.LinAlgError:
        wts = None
    if wts is not None:
        fk = _profile_coeffs(centers, r, wts, K, domain)
        b = float(np.min(fk * k3))
        if b > 0:
            prof = SpatialProfile(fk, (lo, hi), b, 0.0, centers, r, tuple(float(w) for w in wts), attempts, domain)
            return _with_leakage(prof)
    _, c, r0, sgn, fk = best
    bad = [k + 1 for k in range(K) if fk[k] * k3[k] <= 0]
    raise AdmissibilityError(f"no admissible profile in omega={omega} for K={K} after {attempts} attempts; "
                             f"offending modes {bad}", bad)


def _with_leakage(prof: SpatialProfile) -> SpatialProfile:
    leak = _leakage(prof, prof.support, prof.domain)
    return SpatialProfile(prof.f_coeffs, prof.support, prof.beta, leak, prof.centers, prof.radius,
                          prof.weights, prof.attempts, prof.domain)


# ---------------------------------------------------------------------------
# moment problem and synthesis
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MomentProblem:
    targets: np.ndarray
    T: float
    K: int
    tail: float            # largest dropped |E alpha_kl z_l| with l > K
    decay_slope: float     # fitted slope of log |M_k| against k
    domain: IntervalDomain = IntervalDomain()

    def decay_bound_ratio(self, C2: float, eps: float = 0.1) -> np.ndarray:
        """|M_k| / (k^3 e^{-C2 (1 - eps) k}); bounded ratios are consistent with the decay estimate."""
        k = np.arange(1, self.K + 1, dtype=float)
        return np.abs(self.targets) / (k ** 3 * np.exp(-C2 * (1.0 - eps) * k))


def _fit_slope(v):
    k = np.arange(1, len(v) + 1, dtype=float)
    m = np.abs(v) > 0
    if m.sum() < 2:
        return float("nan")
    return float(np.polyfit(k[m], np.log(np.abs(v[m])), 1)[0])


def moment_targets(y0: SpectralField, z0: SpectralField, alphaM: CouplingMatrix,
                   f: SpatialProfile, T: float, K: int) -> MomentProblem:
    """M_k = f_k^{-1} (-e^{-mu_k T} y_k0 - sum_l E(mu_k, mu_l, T) alpha_kl z_l0)."""
    if y0.K < K or z0.K < K or alphaM.K < K or f.K < K:
        raise ValueError(f"inconsistent truncation: need K={K} from y0({y0.K}), z0({z0.K}), "
                         f"alpha({alphaM.K}), f({f.K})")
    fk = f.f_coeffs[:K]
    zero = np.flatnonzero(fk == 0.0)
    if zero.size:
        raise AdmissibilityError(f"f_k = 0 for modes {list(zero + 1)}", list(zero + 1))
    dom = y0.domain
    mu = dom.mu(max(alphaM.K, K))
    E = exp_diff_quotient(mu[:K, None], mu[None, :K], T)
    coup = (E * alphaM.values[:K, :K]) @ z0.coeffs[:K]
    M = (-np.exp(-mu[:K] * T) * y0.coeffs[:K] - coup) / fk
    tail = 0.0
    Lz = min(alphaM.K, z0.K)
    if Lz > K:
        Et = exp_diff_quotient(mu[:K, None], mu[None, K:Lz], T)
        tail = float(np.max(np.abs(Et * alphaM.values[:K, K:Lz] * z0.coeffs[None, K:Lz])))
    M.setflags(write=False)
    return MomentProblem(M, float(T), K, tail, _fit_slope(M), dom)


@dataclass(frozen=True)
class SynthesizedControl:
    control: SeparatedControl
    gamma: ExpSeries
    gamma_l2: float
    exceeds_cap: bool
    moment_residual: float    # max_k |int gamma(T-t) e^{-mu_k t} dt - M_k| / (1 + |M_k|)
    amplitudes: np.ndarray    # a_j with gamma(t) = sum_j a_j e^{-mu_j (T - t)}


def moment_values(gamma: ExpSeries, K: int, T: float, domain: IntervalDomain = IntervalDomain(),
                  n_panels: int = 512, order: int = 8) -> np.ndarray:
    """int_0^T gamma(T - t) e^{-mu_k t} dt by composite Gauss (independent of the Gram formula)."""
    t, w = gauss_panels(0.0, T, n_panels, order)
    mu = domain.mu(K)
    return (w * gamma(T - t)) @ np.exp(-np.outer(t, mu))


def synthesize_control(problem: MomentProblem, family: BiorthFamily, f: SpatialProfile,
                       gamma_cap: float = 1e8) -> SynthesizedControl:
    """gamma(t) = sum_k M_k q_k(T - t), returned as an exponential series."""
    K = problem.K
    if family.K != K or f.K < K or abs(family.T - problem.T) > 1e-14 * max(1.0, problem.T):
        raise ValueError("inconsistent truncation or horizon between problem, family and profile")
    T = problem.T
    mu = family.domain.mu(K)
    a = problem.targets @ family.coeffs     # a_j = sum_k M_k c_kj
    gamma = ExpSeries(a, mu, origin=T)      # e^{mu_j (t - T)} = e^{-mu_j (T - t)}
    g2 = gamma.l2_norm(T)
    mom = moment_values(gamma, K, T, family.domain)
    res = float(np.max(np.abs(mom - problem.targets) / (1.0 + np.abs(problem.targets)))) if K else 0.0
    ctrl = SeparatedControl(f.f_coeffs[:K].copy(), gamma, f.support)
    return SynthesizedControl(ctrl, gamma, g2, bool(g2 > gamma_cap), res, a)


@dataclass(frozen=True)
class DecayFit:
    C1_fit: float
    C2_fit: float
    satisfied: bool
    residual: float
    trivial: bool
    n_points: int
    L: float


def verify_decay_condition(alphaM: CouplingMatrix, K: Optional[int] = None, rel_zero: float = 1e-14) -> DecayFit:
    """Least-squares fit log |alpha_kl| = log C1 - C2 |k - l| over nonzero off-diagonal entries."""
    K = alphaM.K if K is None else int(K)
    if K < 4:
        raise ValueError("verify_decay_condition needs K >= 4")
    A = alphaM.values[:K, :K]
    L = alphaM.domain.L
    k, l = np.triu_indices(K, 1)
    v = np.abs(A[k, l])
    scale = max(float(np.max(np.abs(A))), 1e-300)
    nz = v > rel_zero * scale
    if not np.any(nz):
        return DecayFit(0.0, float("inf"), True, 0.0, True, 0, L)
    lag = (l - k)[nz].astype(float)
    logv = np.log(v[nz])
    if np.unique(lag).size < 2:
        # a single lag cannot determine a rate
        return DecayFit(float(np.exp(logv.max())), float("nan"), False, float("nan"), False, int(nz.sum()), L)
    X = np.column_stack([np.ones_like(lag), -lag])
    sol, *_ = np.linalg.lstsq(X, logv, rcond=None)
    res = float(np.sqrt(np.mean((X @ sol - logv) ** 2)))
    C1, C2 = float(np.exp(sol[0])), float(sol[1])
    return DecayFit(C1, C2, bool(C2 > L), res, False, int(nz.sum()), L)


def unresolved_tail(y0: SpectralField, z0: SpectralField, K: int, T: float) -> float:
    """Free-decay estimate e^{-mu_{K+1} T} (||y0|| + ||z0||) of the unresolved modes of y(T)."""
    mu = y0.domain.mu(K + 1)[-1]
    return float(np.exp(-mu * T) * (y0.norm() + z0.norm()))
