import math
from dataclasses import replace

import numpy as np
import pytest
import scipy.linalg as sla

from partialnull import hum
from partialnull.hum import (BACKENDS, HumConfig, HumProblem, Mesh1D, TimeScheme, apply_gramian, assemble,
                             conjugate_gradient, conjugate_residual, forward_solve, solve_penalized, sweep)
from partialnull.hum.config import strided_inverse_square
from partialnull.spectral import CouplingSpec, IntervalDomain, SpectralField, coupling_matrix, solve_forward

PI = IntervalDomain()
TWO_PI = IntervalDomain(0.0, 2 * np.pi)


def const(v):
    return lambda x: np.full(np.shape(x), float(v))


def make_cfg(n=40, T=0.5, steps=50, eps=1e-4, dom=TWO_PI, omega=(0.0, np.pi), alpha=1.0,
             y0=lambda x: 100 * np.sin(x), z0=lambda x: 100 * np.sin(x), **kw):
    return HumConfig(Mesh1D(dom, n), TimeScheme(T, steps), eps, omega,
                     alpha if callable(alpha) else const(alpha), y0, z0, **kw)


# --- assembly --------------------------------------------------------------

def test_p1_values():
    ops = assemble(Mesh1D(PI, 4), const(1.0), (0.0, np.pi))
    h = np.pi / 4
    K = ops.K.dense()
    np.testing.assert_allclose(K, np.array([[2, -1, 0], [-1, 2, -1], [0, -1, 2]]) / h, rtol=1e-15)
    np.testing.assert_allclose(ops.M.dense(), np.array([[4, 1, 0], [1, 4, 1], [0, 1, 4]]) * h / 6, rtol=1e-15)
    # alpha = 1 gives the mass matrix back
    np.testing.assert_allclose(ops.C.dense(), ops.M.dense(), rtol=1e-15)


def test_zero_coupling():
    ops = assemble(Mesh1D(PI, 8), const(0.0), (1.0, 2.0))
    assert not np.any(ops.C.dense())


def test_stiffness_row_sums():
    ops = assemble(Mesh1D(PI, 10), const(1.0), (0.0, 1.0))
    rows = ops.K.dense().sum(axis=1)
    np.testing.assert_allclose(rows[1:-1], 0.0, atol=1e-12)
    assert rows[0] > 0 and rows[-1] > 0


def test_omega_indicator_includes_boundary_nodes():
    mesh = Mesh1D(PI, 4)
    ops = assemble(mesh, const(1.0), (np.pi / 4, np.pi / 2))
    np.testing.assert_array_equal(ops.indicator, [1, 1, 0])
    with pytest.raises(ValueError):
        assemble(mesh, const(1.0), (0.0, 4.0))


def test_mesh_and_scheme_invariants():
    m = Mesh1D(TWO_PI, 50)
    assert m.h * m.n_cells == pytest.approx(TWO_PI.L)
    assert m.nodes.size == 49
    with pytest.raises(ValueError):
        Mesh1D(PI, 3)
    s = TimeScheme.from_mode(0.005)
    assert s.n_steps == 400 and s.dt * s.n_steps == pytest.approx(0.005)
    assert TimeScheme.from_mode(0.005, "literal").n_steps == 2


def test_strided_alpha_closed_form():
    x = np.linspace(0, 2 * np.pi, 101)
    ref = sum(np.cos(15 * j * x) / j ** 2 for j in range(1, 20001))
    np.testing.assert_allclose(strided_inverse_square(x), ref, atol=1e-4)


# --- forward ---------------------------------------------------------------

def test_discrete_eigenvector_decay():
    cfg = make_cfg(n=20, T=0.3, steps=30, dom=PI, alpha=0.0, z0=const(0.0))
    p = HumProblem(cfg)
    lam, V = sla.eigh(p.ops.K.dense(), p.ops.M.dense())
    v = V[:, 2]
    y, _ = p.forward(y0=v)
    np.testing.assert_allclose(y[-1], (1 + cfg.scheme.dt * lam[2]) ** (-30) * v, rtol=1e-12, atol=1e-14)


def test_z_path_independent_of_u():
    cfg = make_cfg(n=16, steps=10)
    p = HumProblem(cfg)
    u = np.random.default_rng(0).normal(size=(10, p.y0.size))
    (_, z1), (_, z2) = p.forward(), p.forward(u)
    assert np.array_equal(z1, z2)
    with pytest.raises(ValueError):
        p.forward(u[:3])


def _nodal_error(n, steps):
    T = 0.25
    cfg = make_cfg(n=n, T=T, steps=steps, dom=PI, omega=(1.0, 2.0), alpha=1.0,
                   y0=np.sin, z0=lambda x: np.sin(2 * x))
    y, _ = forward_solve(cfg)
    K = 4
    c = math.sqrt(np.pi / 2)          # sin(kx) = c w_k on (0, pi)
    traj = solve_forward(SpectralField.mode(1, K, amplitude=c), SpectralField.mode(2, K, amplitude=c),
                         coupling_matrix(CouplingSpec.constant(1.0), K), None, T, n_steps=64)
    ref = SpectralField(traj.yT)(cfg.mesh.nodes)
    return float(np.max(np.abs(y[-1] - ref)))


def test_converges_to_spectral_solution():
    e = [_nodal_error(n, s) for n, s in ((16, 16), (32, 64), (64, 256))]
    assert e[0] / e[1] > 3.0 and e[1] / e[2] > 3.0
    assert e[2] < 1e-3


# --- Gramian ---------------------------------------------------------------

@pytest.mark.parametrize("backend", sorted(BACKENDS))
def test_gramian_symmetric_psd(backend):
    cfg = make_cfg(n=30, steps=40, backend=backend)
    p = HumProblem(cfg)
    rng = np.random.default_rng(1)
    for _ in range(10):
        a, b = rng.normal(size=(2, p.y0.size))
        la, lb = p.gramian(a), p.gramian(b)
        assert abs(p.ip(la, b) - p.ip(a, lb)) <= 1e-10 * abs(p.ip(la, b)) + 1e-300
    for _ in range(100):
        a = rng.normal(size=p.y0.size)
        assert p.ip(p.gramian(a), a) >= 0.0


def test_gramian_zero():
    cfg = make_cfg(n=10, steps=5)
    assert not np.any(apply_gramian(cfg, np.zeros(9)))


def test_backends_agree():
    if len(BACKENDS) < 2:
        pytest.skip("compiled kernel not built")
    cfg = make_cfg(n=30, steps=40)
    r = {b: solve_penalized(replace(cfg, backend=b)) for b in BACKENDS}
    a, c = r["python"], r["cython"]
    assert a.min_F == pytest.approx(c.min_F, rel=1e-9)
    assert a.yT_norm == pytest.approx(c.yT_norm, rel=1e-7)


def test_unknown_backend():
    with pytest.raises(ValueError):
        HumProblem(make_cfg(n=8, steps=2, backend="fortran"))


# --- penalized solve -------------------------------------------------------

def test_zero_data():
    cfg = make_cfg(n=12, steps=10, y0=const(0.0), z0=const(0.0))
    run = solve_penalized(cfg)
    assert run.min_F == 0.0 and run.control_norm == 0.0 and run.cg_iters == 0


@pytest.mark.parametrize("method", ["cr", "cg"])
def test_gap_and_optimality(method):
    cfg = make_cfg(n=40, T=0.05, steps=40, eps=(2 * np.pi / 40) ** 4, method=method)
    run = solve_penalized(cfg)
    assert run.fenchel_gap < 1e-6
    assert run.residual <= 1.5 * cfg.cg_tol
    assert run.min_F >= 0
    if method == "cr":
        assert np.all(np.diff(run.history) <= 0)


def test_solvers_monotone_and_errors():
    rng = np.random.default_rng(2)
    Q = rng.normal(size=(20, 20))
    A = Q @ Q.T + 0.1 * np.eye(20)
    b = rng.normal(size=20)
    ip = lambda x, y: float(x @ y)
    x, hist = conjugate_residual(lambda v: A @ v, b, ip, 1e-12, 200)
    np.testing.assert_allclose(A @ x, b, atol=1e-9)
    assert np.all(np.diff(hist) <= 0)
    x2, _ = conjugate_gradient(lambda v: A @ v, b, ip, 1e-12, 200)
    np.testing.assert_allclose(x2, x, rtol=1e-7, atol=1e-9)
    with pytest.raises(hum.ConvergenceError) as ei:
        conjugate_residual(lambda v: A @ v, b, ip, 1e-14, 2)
    assert len(ei.value.history) == 3


def test_epsilon_monotonicity():
    base = make_cfg(n=40, T=0.5, steps=50, alpha=1.0)
    runs = [solve_penalized(replace(base, epsilon=e)) for e in (1e-2, 1e-4, 1e-6, 1e-8)]
    F = [r.min_F for r in runs]
    Y = [r.yT_norm for r in runs]
    assert all(b >= a * (1 - 1e-9) for a, b in zip(F, F[1:]))
    assert all(b <= a * (1 + 1e-9) for a, b in zip(Y, Y[1:]))


def test_scalar_reduction():
    # alpha = 0 and z0 = 0 over a horizon long enough for the control to act
    base = make_cfg(n=50, T=2.0, steps=400, alpha=0.0, z0=const(0.0))
    res = sweep(base, [50, 100, 200], threads=3)
    F = [r.min_F for r in res.runs]
    Y = [r.yT_norm for r in res.runs]
    assert max(F) / min(F) < 5
    assert Y[0] > Y[1] > Y[2]
    assert res.slopes["yT_norm"] > 1.0


def test_sweep_ordering_threads():
    base = make_cfg(n=20, T=0.05, steps=20)
    a = sweep(base, [30, 20, 25], threads=1)
    b = sweep(base, [30, 20, 25], threads=3)
    assert [r.n_cells for r in b.runs] == [30, 20, 25]
    assert a.table() == b.table()
    with pytest.raises(ValueError):
        sweep(base, [])


def test_config_validation():
    with pytest.raises(ValueError):
        make_cfg(eps=0.0)
    with pytest.raises(ValueError):
        make_cfg(omega=(0.0, 7.0))
    with pytest.raises(ValueError):
        make_cfg(method="gmres")
