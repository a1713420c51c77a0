import numpy as np
import pytest

from partialnull.spectral import (
    CouplingSpec, ExpSeries, IntervalDomain, ModalControl, SeparatedControl, SpectralField,
    TruncationError, coupling_matrix, coupling_quadrature, duality_residual, exp_diff_quotient,
    gauss_panels, solve_adjoint, solve_forward, dropped_coupling_term,
)

PI = IntervalDomain()
TWO_PI = IntervalDomain(0.0, 2 * np.pi)


def test_basis_orthonormal():
    for dom in (PI, TWO_PI, IntervalDomain(-1.0, 2.5)):
        x, w = gauss_panels(dom.a, dom.b, 64, 8)
        W = dom.basis(x, 10)
        np.testing.assert_allclose((W * w) @ W.T, np.eye(10), atol=1e-12)


def test_field_norm_is_coefficient_norm():
    rng = np.random.default_rng(0)
    f = SpectralField(rng.uniform(-1, 1, 6), TWO_PI)
    x, w = gauss_panels(TWO_PI.a, TWO_PI.b, 64, 8)
    assert np.sqrt(np.sum(w * f(x) ** 2)) == pytest.approx(f.norm(), rel=1e-12)
    g = SpectralField.from_function(f, 6, TWO_PI)
    np.testing.assert_allclose(g.coeffs, f.coeffs, atol=1e-12)


def test_eigenvalues():
    np.testing.assert_allclose(PI.mu(4), [1, 4, 9, 16])
    np.testing.assert_allclose(TWO_PI.mu(2), [0.25, 1.0])


# --- coupling --------------------------------------------------------------

def test_alpha_one_is_identity():
    for dom in (PI, TWO_PI):
        C = coupling_matrix(CouplingSpec.constant(1.0, dom), 12)
        np.testing.assert_allclose(C.values, np.eye(12), atol=1e-12)


def test_cosine_closed_form_vs_quadrature():
    spec = CouplingSpec(np.array([0.0, 1.0]))       # cos x
    cf = coupling_matrix(spec, 8).values
    qd, _ = coupling_quadrature(CouplingSpec(func=np.cos), 8)
    np.testing.assert_allclose(cf, qd, atol=1e-10)
    # off-diagonal neighbours carry 1/2, everything else vanishes
    assert cf[0, 1] == pytest.approx(0.5)
    assert cf[0, 0] == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("dom", [PI, TWO_PI, IntervalDomain(0.5, 3.0)])
def test_closed_form_any_interval(dom):
    rng = np.random.default_rng(2)
    c = rng.uniform(-1, 1, 25) * np.exp(-0.3 * np.arange(25))
    spec = CouplingSpec(c, dom)
    cf = coupling_matrix(spec, 10, method="closed_form").values
    qd = coupling_matrix(CouplingSpec(func=spec, domain=dom), 10).values
    np.testing.assert_allclose(cf, qd, atol=1e-10)


def test_symmetry_exact():
    spec = CouplingSpec.strided_power(3, 2.0, 60)
    for method in ("closed_form", "quadrature"):
        v = coupling_matrix(spec if method == "closed_form" else CouplingSpec(func=spec), 9, method).values
        assert np.array_equal(v, v.T)


def test_strided_submatrix_is_scaled_identity():
    G, m = 15, 7
    for M in (2, 3):
        K = G * M + m
        spec = CouplingSpec.strided_power(G, 2.0, 2 * K + G)
        C = coupling_matrix(spec, K).values
        sub = C[:m, G * M:G * M + m]
        np.testing.assert_allclose(sub, np.eye(m) / (2.0 * M ** 2), atol=1e-12)
    # independent check of the constant by quadrature at M = 2
    f = lambda x: sum(np.cos(G * j * x) / j ** 2 for j in range(1, 4))
    qd, _ = coupling_quadrature(CouplingSpec(func=f), G * 2 + m)
    assert qd[0, G * 2] == pytest.approx(1.0 / 8.0, abs=1e-10)


# --- adjoint ---------------------------------------------------------------

def test_adjoint_alpha_zero():
    adj = solve_adjoint(SpectralField(np.ones(5)), coupling_matrix(CouplingSpec.constant(0.0), 5), 1.0)
    for t in (0.0, 0.4, 1.0):
        assert not np.any(adj.psi(t))


def test_adjoint_psi_hand_value():
    T = 0.7
    adj = solve_adjoint(SpectralField.mode(1, 3), coupling_matrix(CouplingSpec.constant(1.0), 3), T)
    psi0 = adj.psi(0.0)
    assert psi0[0] == pytest.approx(T * np.exp(-T), rel=1e-14)
    np.testing.assert_array_equal(psi0[1:], 0.0)
    assert not np.any(adj.psi(T))


def test_diagonal_switch_threshold():
    tau = 0.3
    a = 4.0
    b = a * (1 + 5e-9)                      # inside the switch
    assert exp_diff_quotient(a, b, tau) == tau * np.exp(-a * tau)
    b2 = a * (1 + 2e-8)                     # outside: quotient through expm1
    exact = (np.exp(-a * tau) - np.exp(-b2 * tau)) / (b2 - a)
    assert exp_diff_quotient(a, b2, tau) == pytest.approx(exact, rel=1e-7)
    assert exp_diff_quotient(a, b2, tau) == exp_diff_quotient(b2, a, tau)


def test_diagonal_convention_continuity():
    tau, mu_k = 0.4, 9.0
    lim = tau * np.exp(-mu_k * tau)
    errs = [abs(float(exp_diff_quotient(mu_k, mu_k + d, tau)) - lim) for d in (1e-3, 1e-5, 1e-7)]
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-8


def test_adjoint_truncation_error():
    with pytest.raises(TruncationError):
        solve_adjoint(SpectralField(np.ones(5)), coupling_matrix(CouplingSpec.constant(1.0), 3), 1.0)


# --- forward ---------------------------------------------------------------

def test_forward_decoupled_decay():
    y0 = SpectralField([1.0, -0.5, 0.25])
    traj = solve_forward(y0, SpectralField.zeros(3), coupling_matrix(CouplingSpec.constant(0.0), 3), None, 0.8)
    np.testing.assert_allclose(traj.yT, np.exp(-PI.mu(3) * 0.8) * y0.coeffs, rtol=1e-14)


def test_forward_coupled_hand_value():
    T = 1.0
    traj = solve_forward(SpectralField.zeros(3), SpectralField.mode(1, 3),
                         coupling_matrix(CouplingSpec.constant(1.0), 3), None, T)
    assert traj.yT[0] == pytest.approx(T * np.exp(-T), rel=1e-12)
    np.testing.assert_allclose(traj.yT[1:], 0.0, atol=1e-15)


def test_forward_exp_control_exact():
    # u = w_1 e^{-2t}: y_1(T) = (e^{-T} - e^{-2T}) / (2 - 1)
    T = 0.9
    u = SeparatedControl([1.0, 0.0], ExpSeries([1.0], [-2.0]))
    traj = solve_forward(SpectralField.zeros(2), SpectralField.zeros(2),
                         coupling_matrix(CouplingSpec.constant(0.0), 2), u, T, n_steps=3)
    assert traj.yT[0] == pytest.approx(np.exp(-T) - np.exp(-2 * T), rel=1e-13)


def test_forward_energy_decay():
    rng = np.random.default_rng(9)
    y0, z0 = SpectralField(rng.uniform(-1, 1, 8)), SpectralField(rng.uniform(-1, 1, 8))
    traj = solve_forward(y0, z0, coupling_matrix(CouplingSpec.constant(0.0), 8), None, 1.0)
    for arr in (traj.y, traj.z):
        n = np.linalg.norm(arr, axis=1)
        assert np.all(np.diff(n) <= 1e-15)


def test_forward_truncation_errors():
    A3 = coupling_matrix(CouplingSpec.constant(1.0), 3)
    with pytest.raises(TruncationError):
        solve_forward(SpectralField.zeros(3), SpectralField.zeros(4), A3, None, 1.0)
    with pytest.raises(TruncationError):
        solve_forward(SpectralField.zeros(5), SpectralField.zeros(5), A3, None, 1.0)


def test_dropped_term_reported():
    A = coupling_matrix(CouplingSpec(np.array([0.0, 0.3])), 6)
    z0 = SpectralField([0, 0, 0, 1.0, 0, 0])
    assert dropped_coupling_term(A, z0, 3) == pytest.approx(0.15)
    assert dropped_coupling_term(A, z0, 6) == 0.0


def test_trajectory_csv():
    traj = solve_forward(SpectralField([1.0]), SpectralField([0.0]),
                         coupling_matrix(CouplingSpec.constant(0.0), 1), None, 1.0, n_steps=2)
    lines = traj.to_csv().split("\n")
    assert lines[0] == "t,component,mode,coefficient"
    assert len(lines) == 1 + 3 * 2 + 1 and lines[-1] == ""


# --- duality ---------------------------------------------------------------

def test_duality_trivial():
    K = 4
    r = duality_residual(SpectralField.zeros(K), SpectralField.zeros(K), None, SpectralField(np.ones(K)),
                         coupling_matrix(CouplingSpec.constant(1.0), K), 1.0)
    assert r == 0.0


def _random_case(rng, K, dom=PI):
    alpha = CouplingSpec(rng.uniform(-1, 1, 2 * K + 2), dom)
    f = rng.uniform(-1, 1, K)
    gamma = ExpSeries(rng.uniform(-1, 1, 3), -rng.uniform(0, 5, 3))
    return (SpectralField(rng.uniform(-1, 1, K), dom), SpectralField(rng.uniform(-1, 1, K), dom),
            SeparatedControl(f, gamma), SpectralField(rng.uniform(-1, 1, K), dom),
            coupling_matrix(alpha, K))


@pytest.mark.parametrize("K", [4, 8, 16])
def test_duality_random(K):
    rng = np.random.default_rng(K)
    for _ in range(5):
        y0, z0, u, phi0, A = _random_case(rng, K)
        assert duality_residual(y0, z0, u, phi0, A, 1.0, n_steps=64) < 1e-8


def test_duality_sampled_control_and_order():
    rng = np.random.default_rng(4)
    K = 6
    y0, z0, _, phi0, A = _random_case(rng, K, TWO_PI)
    freq = rng.uniform(1, 4, K)
    u = ModalControl(lambda t: np.sin(np.multiply.outer(t, freq)))
    r = [duality_residual(y0, z0, u, phi0, A, 1.0, n_steps=n, n_gauss=2) for n in (8, 16, 32)]
    assert r[0] / r[1] >= 4 and r[1] / r[2] >= 4
    assert duality_residual(y0, z0, u, phi0, A, 1.0, n_steps=64) < 1e-8


def test_coupling_spec_roundtrip():
    spec = CouplingSpec(np.array([1.0, 0.5, 0.25]), TWO_PI)
    back = CouplingSpec.from_dict(spec.to_dict())
    np.testing.assert_array_equal(back.cosine_coeffs, spec.cosine_coeffs)
    assert back.domain == TWO_PI
    assert spec.abs_sum() == pytest.approx(1.75)
