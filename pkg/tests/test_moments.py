import numpy as np
import pytest
from scipy.integrate import quad

from partialnull.moments import (
    AdmissibilityError, biorth_residual, biorthogonal_family, gram_matrix,
    moment_targets, moment_values, spatial_profile, synthesize_control, unresolved_tail,
    verify_decay_condition,
)
from partialnull.spectral import (CouplingSpec, SpectralField, coupling_matrix,
                                  solve_forward)

GEOM = CouplingSpec(np.exp(-5.0 * np.arange(40)))      # sum_j e^{-5j} cos(jx), j >= 0


def test_gram_scalar():
    assert gram_matrix(1, 1.0)[0, 0] == pytest.approx((1 - np.exp(-2)) / 2, rel=1e-15)


def test_gram_vs_quadrature():
    G = gram_matrix(2, 0.5)
    for j in range(2):
        for l in range(2):
            s = (j + 1) ** 2 + (l + 1) ** 2
            ref, _ = quad(lambda t: np.exp(-s * t), 0, 0.5, epsabs=1e-15, epsrel=1e-13)
            assert G[j, l] == pytest.approx(ref, abs=1e-14)


def test_gram_cauchy_limit():
    G = gram_matrix(4, 60.0)
    mu = np.arange(1, 5) ** 2.0
    np.testing.assert_allclose(G, 1.0 / (mu[:, None] + mu[None, :]), rtol=1e-14)
    assert np.all(np.linalg.eigvalsh(gram_matrix(6, 0.5)) > 0)


def test_family_K1():
    fam = biorthogonal_family(1, 1.0)
    assert fam.coeffs[0, 0] == pytest.approx(1.0 / gram_matrix(1, 1.0)[0, 0])
    assert fam.residual < 1e-15


def test_family_K6_residual_in_double():
    fam = biorthogonal_family(6, 0.5)
    # recompute inner products independently by Gauss quadrature
    t, w = np.polynomial.legendre.leggauss(60)
    t, w = 0.25 * (t + 1), 0.25 * w
    Q = fam.evaluate(t)
    E = np.exp(-np.outer(t, np.arange(1, 7) ** 2.0))
    R = (Q * w[:, None]).T @ E
    assert np.max(np.abs(R - np.eye(6))) < 1e-8
    assert fam.residual < 1e-8


def test_family_growth_shape():
    fam = biorthogonal_family(8, 0.5)
    n = fam.norms()
    slope, _ = fam.growth_fit()
    assert 0 < slope < 3 * np.pi          # log ||q_k|| grows at most linearly
    peak = int(np.argmax(n))
    assert np.all(np.diff(n[: peak + 1]) > 0)
    # the decline after the peak is a property of the finite family, not round-off
    ext = biorthogonal_family(8, 0.5, mode="extended_precision")
    np.testing.assert_allclose(ext.norms(), n, rtol=1e-4)


def test_family_modes_and_caps():
    for mode in ("regularized", "extended_precision"):
        assert biorthogonal_family(8, 0.5, mode=mode).residual < 1e-6
    hi = biorthogonal_family(12, 0.5, mode="extended_precision")
    assert hi.residual < 1e-6
    with pytest.raises(ValueError, match="cap"):
        biorthogonal_family(9, 0.5)
    with pytest.raises(ValueError):
        biorthogonal_family(3, 0.5, mode="quad")


def test_gate_rejects_bad_coefficients():
    fam = biorthogonal_family(4, 0.5)
    assert biorth_residual(fam.coeffs * (1 + 1e-3), 4, 0.5) > 1e-6


# --- spatial profile -------------------------------------------------------

def test_first_eigenfunction_is_inadmissible():
    fk = SpectralField.mode(1, 8).coeffs
    assert np.min(fk * np.arange(1, 9) ** 3) <= 0


def test_profile_full_domain():
    prof = spatial_profile((0.0, np.pi), 8)
    assert prof.beta > 0 and np.all(prof.f_coeffs != 0)
    assert prof.leakage == 0.0


def test_profile_interior_bump():
    prof = spatial_profile((1.0, 2.0), 8)
    k3 = np.arange(1, 9) ** 3
    assert prof.beta == pytest.approx(np.min(prof.f_coeffs * k3))
    assert prof.beta > 0
    # coefficients agree with direct quadrature of the profile
    ref = SpectralField.from_function(prof, 8, n_panels=1024).coeffs
    np.testing.assert_allclose(prof.f_coeffs, ref, atol=1e-10)
    assert prof.leakage < 1e-12
    x = np.linspace(0, np.pi, 2001)
    assert np.all(prof(x[(x < 1.0) | (x > 2.0)]) == 0)


def test_profile_errors():
    with pytest.raises(ValueError):
        spatial_profile((2.0, 1.0), 4)
    with pytest.raises(AdmissibilityError) as ei:
        spatial_profile((1.0, 1.0 + 1e-3), 8, max_retries=1)
    assert ei.value.offending


# --- targets and synthesis -------------------------------------------------

def _setup(K=8, T=0.5, alpha=GEOM, y0=None, z0=None):
    y0 = SpectralField.mode(1, K) if y0 is None else y0
    z0 = SpectralField.mode(2, K) if z0 is None else z0
    A = coupling_matrix(alpha, K)
    f = spatial_profile((1.0, 2.0), K)
    return y0, z0, A, f


def test_targets_simple():
    K, T = 4, 0.3
    A = coupling_matrix(CouplingSpec.constant(0.0), K)
    prof = spatial_profile((1.0, 2.0), K)
    unit = type(prof)(np.ones(K), prof.support, 1.0, 0.0, prof.centers, prof.radius, prof.weights, 1)
    mp_ = moment_targets(SpectralField.mode(1, K), SpectralField.zeros(K), A, unit, T, K)
    np.testing.assert_allclose(mp_.targets, [-np.exp(-T), 0, 0, 0], atol=0)
    rng = np.random.default_rng(1)
    y0 = SpectralField(rng.uniform(-1, 1, K))
    mp2 = moment_targets(y0, SpectralField(rng.uniform(-1, 1, K)), A, prof, T, K)
    np.testing.assert_allclose(mp2.targets, -np.exp(-np.arange(1, K + 1) ** 2 * T) * y0.coeffs / prof.f_coeffs,
                               rtol=1e-15)


def test_targets_zero_profile_rejected():
    y0, z0, A, f = _setup(K=4)
    bad = type(f)(np.array([1.0, 0.0, 1.0, 1.0]), f.support, 0.0, 0.0, f.centers, f.radius, f.weights, 1)
    with pytest.raises(AdmissibilityError):
        moment_targets(y0, z0, A, bad, 0.5, 4)


def test_targets_decay_bound():
    K = 8
    rng = np.random.default_rng(5)
    y0 = SpectralField(rng.uniform(-1, 1, K) * np.exp(-5.0 * np.arange(K)))
    z0 = SpectralField(rng.uniform(-1, 1, K) * np.exp(-5.0 * np.arange(K)))
    _, _, A, f = _setup(K)
    prob = moment_targets(y0, z0, A, f, 0.5, K)
    ratio = prob.decay_bound_ratio(C2=5.0) / (y0.norm() + z0.norm())
    assert np.all(np.isfinite(ratio))
    assert ratio.max() < 1e3 * max(1.0, 1.0 / f.beta)


def test_zero_targets_give_zero_control():
    K = 5
    _, _, A, f = _setup(K)
    prob = moment_targets(SpectralField.zeros(K), SpectralField.zeros(K), A, f, 0.5, K)
    sc = synthesize_control(prob, biorthogonal_family(K, 0.5), f)
    assert not np.any(sc.amplitudes) and sc.gamma_l2 == 0.0


def test_single_target_moment():
    K, T = 6, 0.5
    y0, _, A, f = _setup(K)
    prob = moment_targets(y0, SpectralField.zeros(K), coupling_matrix(CouplingSpec.constant(0.0), K), f, T, K)
    assert np.count_nonzero(prob.targets) == 1
    sc = synthesize_control(prob, biorthogonal_family(K, T), f)
    # independent integral of gamma(T - t) e^{-t}
    val = quad(lambda t: float(sc.gamma(T - t)) * np.exp(-t), 0, T, limit=200, epsabs=1e-12, epsrel=1e-12)[0]
    assert abs(val - prob.targets[0]) < 1e-10 * max(1.0, abs(prob.targets[0]))
    mv = moment_values(sc.gamma, K, T)
    assert np.max(np.abs(mv - prob.targets) / (1 + np.abs(prob.targets))) < 1e-6


def test_profile_scaling_halves_gamma():
    K, T = 8, 0.5
    y0, z0, A, f = _setup(K)
    fam = biorthogonal_family(K, T)
    g1 = synthesize_control(moment_targets(y0, z0, A, f, T, K), fam, f)
    f2 = f.scaled(2.0)
    assert f2.beta == pytest.approx(2 * f.beta)
    g2 = synthesize_control(moment_targets(y0, z0, A, f2, T, K), fam, f2)
    np.testing.assert_allclose(g2.amplitudes, 0.5 * g1.amplitudes, rtol=1e-14)
    t = np.linspace(0, T, 7)
    np.testing.assert_allclose(g2.control.coeffs_at(t), g1.control.coeffs_at(t), rtol=1e-12, atol=1e-12)


def test_linearity_in_data():
    K, T = 8, 0.5
    rng = np.random.default_rng(8)
    _, _, A, f = _setup(K)
    fam = biorthogonal_family(K, T)
    ya, za, yb, zb = (SpectralField(rng.uniform(-1, 1, K)) for _ in range(4))
    amp = lambda y, z: synthesize_control(moment_targets(y, z, A, f, T, K), fam, f).amplitudes
    s = amp(SpectralField(ya.coeffs + yb.coeffs), SpectralField(za.coeffs + zb.coeffs))
    np.testing.assert_allclose(s, amp(ya, za) + amp(yb, zb), rtol=1e-12, atol=1e-12 * np.abs(s).max())


def test_closed_loop():
    K, T = 8, 0.5
    y0, z0, A, f = _setup(K, T)
    sc = synthesize_control(moment_targets(y0, z0, A, f, T, K), biorthogonal_family(K, T), f)
    assert sc.moment_residual < 1e-6
    traj = solve_forward(y0, z0, A, sc.control, T, n_steps=256)
    assert np.max(np.abs(traj.yT)) < 1e-6 * (y0.norm() + z0.norm())
    assert unresolved_tail(y0, z0, K, T) == pytest.approx(np.exp(-81 * T) * 2)


def test_gamma_cap_flag():
    K, T = 8, 0.5
    y0, z0, A, f = _setup(K, T)
    sc = synthesize_control(moment_targets(y0, z0, A, f, T, K), biorthogonal_family(K, T), f, gamma_cap=1e-3)
    assert sc.exceeds_cap


# --- decay condition -------------------------------------------------------

def test_decay_trivial():
    d = verify_decay_condition(coupling_matrix(CouplingSpec.constant(1.0), 8))
    assert d.trivial and d.satisfied


def test_decay_geometric():
    d = verify_decay_condition(coupling_matrix(GEOM, 12))
    assert d.C2_fit == pytest.approx(5.0, rel=0.05)
    assert d.satisfied


def test_decay_strided_fails():
    spec = CouplingSpec.strided_power(15, 2.0, 200)
    d = verify_decay_condition(coupling_matrix(spec, 80))
    assert not d.satisfied
    assert d.C2_fit < 0.1
    with pytest.raises(ValueError):
        verify_decay_condition(coupling_matrix(GEOM, 3))
