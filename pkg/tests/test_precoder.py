import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from riskg.channel import CovarianceSet
from riskg.config import SystemConfig, ValidationError
from riskg.metrics import kgr_upper_bound
from riskg.precoder import (PrecoderSubproblem, build_subproblem, default_init, kkt_step,
                            lagrangian_gradient, multiplier_system, objective,
                            optimize_precoders, phi, solve_multiplier, update_precoders)

from conftest import rand_covs, rand_phases, rand_precoders


def scalar_sub(m, n=0.0, P_A=1.0):
    return PrecoderSubproblem(np.full((1, 1, 1, 1), m, complex), np.full((1, 1, 1, 1), n, complex),
                              np.ones(1), P_A)


@pytest.mark.parametrize("m,lam", [(2.0, 0.5), (5.0, 1.0), (1.0, 0.25)])
def test_scalar_kkt_fixed_point_is_water_level(m, lam):
    p = np.sqrt((m / lam - 1) / m)
    out = kkt_step([np.full((1, 1), p, complex)], [lam], scalar_sub(m))
    assert out[0][0, 0] == pytest.approx(p, rel=1e-12)


def test_zero_precoder_is_stationary(small_instance):
    cfg, covs, _, v = small_instance
    sub = build_subproblem(covs, v, cfg)
    P0 = [np.zeros((2, 2), complex)] * 2
    out = kkt_step(P0, [0.3, 0.7], sub)
    assert all(not np.any(p) for p in out)
    out, _ = update_precoders(sub, P0)
    assert all(not np.any(p) for p in out)


def test_phi_closed_form():
    assert phi(2.0, [0.0], [2.0]) == pytest.approx(1.0, rel=1e-15)
    assert phi(0.7, [0.1, 3.0], [0.0, 0.0]) == 0.0


def test_solve_multiplier_closed_form_root():
    assert solve_multiplier(np.array([0.0]), np.array([2.0]), 1.0) == pytest.approx(2.0, abs=1e-8)


def test_solve_multiplier_inactive_constraint():
    # phi(0) = 4 / 4 = 1 = P_A / 2
    assert solve_multiplier(np.array([2.0]), np.array([2.0]), 2.0) == 0.0


def test_solve_multiplier_rejects_bad_budget():
    with pytest.raises(ValidationError):
        solve_multiplier(np.array([1.0]), np.array([1.0]), 0.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 100.0))
def test_phi_decreasing_and_upper_bound_brackets(seed, P_A):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 9))
    b = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    f = rng.exponential(1.0, n)
    grid = np.linspace(0.0, 10.0, 101)
    vals = np.array([phi(x, f, b) for x in grid])
    assert np.all(np.diff(vals) < 0)
    lam_ub = np.sqrt(np.sum(np.abs(b) ** 2) / P_A)
    assert phi(lam_ub, f, b) < P_A
    lam = solve_multiplier(f, b, P_A)
    if lam > 0:
        assert phi(lam, f, b) <= P_A * (1 + 1e-12)
        assert phi(lam, f, b) == pytest.approx(P_A, rel=1e-6)


def test_single_cell_power_saturates():
    m, P_A = 3.0, 2.0
    cfg = SystemConfig(K=1, M=1, M_e=1, N=0, L=0, P_A=P_A)
    covs = CovarianceSet(np.full((1, 1, 1, 1), m, complex), np.zeros((1, 1, 0, 0), complex), 0, 0)
    sub = build_subproblem(covs, np.zeros(0), cfg)
    res = optimize_precoders(sub, cfg, P_init=[np.full((1, 1), 0.1, complex)])
    assert np.linalg.norm(res.P[0]) ** 2 == pytest.approx(P_A, rel=1e-8)
    want = np.log((1 + P_A * m) / (1 + P_A * m / (m + 1)))
    assert res.trace[-1] == pytest.approx(want, rel=1e-9)


def test_zero_weights_return_init(small_instance):
    _, covs, P, v = small_instance
    cfg = SystemConfig(K=2, M=2, M_e=2, N=2, L=1, P_A=2.0, weights=(0.0, 0.0))
    res = optimize_precoders(build_subproblem(covs, v, cfg), cfg, P_init=P)
    assert res.n_iter == 0 and all(np.array_equal(a, b) for a, b in zip(res.P, P))


def test_infeasible_init_rejected(small_instance):
    cfg, covs, P, v = small_instance
    with pytest.raises(ValidationError):
        optimize_precoders(build_subproblem(covs, v, cfg), cfg, P_init=[3 * p for p in P])


def test_objective_is_weighted_upper_bound(small_instance):
    cfg, covs, P, v = small_instance
    sub = build_subproblem(covs, v, cfg)
    ub = kgr_upper_bound(cfg, covs, P, v)
    assert objective(sub, P) == pytest.approx(float(np.dot(cfg.weights, ub)), rel=1e-10)


def test_block_update_matches_kronecker_form(rng):
    cfg = SystemConfig(K=2, M=3, M_e=2, N=2, L=1, P_A=2.0)
    covs = rand_covs(rng, M=3)
    v = rand_phases(rng, 2)
    sub = build_subproblem(covs, v, cfg)
    P = rand_precoders(rng, 2, 2, 3, 2.0)
    blocks, lams = update_precoders(sub, P)
    full = kkt_step(P, lams, sub)
    for a, b in zip(blocks, full):
        assert np.allclose(a, b, atol=1e-8 * max(1.0, np.abs(a).max()))


@pytest.mark.parametrize("seed", range(5))
def test_optimizer_monotone_feasible_kkt(seed):
    rng = np.random.default_rng(seed)
    cfg = SystemConfig(K=2, M=3, M_e=2, N=2, L=1, P_A=4.0, weights=(1.0, 0.5))
    covs = rand_covs(rng, M=3)
    sub = build_subproblem(covs, rand_phases(rng, 2), cfg)
    res = optimize_precoders(sub, cfg, eps=1e-14, step_tol=1e-10, max_iter=3000)
    assert np.all(np.diff(res.trace) >= -1e-8)
    for i, p in enumerate(res.P):
        pw = np.linalg.norm(p) ** 2
        assert pw <= cfg.P_A + 1e-8
        assert abs(res.lambdas[i] * (pw - cfg.P_A)) < 1e-6 * cfg.P_A
    grad = lagrangian_gradient(sub, res.P, res.lambdas)
    norm_P = np.sqrt(sum(np.linalg.norm(p) ** 2 for p in res.P))
    assert np.sqrt(sum(np.linalg.norm(g) ** 2 for g in grad)) < 1e-6 * max(1.0, norm_P)


def test_improves_on_default_init(small_instance):
    cfg, covs, _, v = small_instance
    sub = build_subproblem(covs, v, cfg)
    res = optimize_precoders(sub, cfg)
    assert res.trace[-1] >= objective(sub, default_init(cfg))


def test_multiplier_system_is_psd(small_instance):
    cfg, covs, P, v = small_instance
    fs, Ds, as_ = multiplier_system(build_subproblem(covs, v, cfg), P)
    assert all(np.all(f >= 0) for f in fs)
    assert all(np.allclose(D.conj().T @ D, np.eye(D.shape[0])) for D in Ds)


def test_plain_damped_iteration_monotone_and_feasible(small_instance):
    cfg, covs, _, v = small_instance
    sub = build_subproblem(covs, v, cfg)
    plain = optimize_precoders(sub, cfg, anderson=0, max_iter=300)
    fast = optimize_precoders(sub, cfg)
    assert np.all(np.diff(plain.trace) >= -1e-8)
    assert all(np.linalg.norm(p) ** 2 <= cfg.P_A + 1e-8 for p in plain.P)
    assert fast.trace[-1] >= plain.trace[-1] - 1e-6
