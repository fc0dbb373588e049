import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from railalloc.allocators import dual_oracle, grid_oracle
from railalloc.errors import DegenerateStepError, MaxIterationsError, NoDecreaseError
from railalloc.experiments import random_instance
from railalloc.geometry import make_scenario
from railalloc.radio import LinkBudget, RadioParams
from railalloc.sqp import (KktPoint, SolverConfig, bfgs_update, capacity_problem, kkt_residuals,
                           merit_line_search, multipliers_for, solve_sqp, write_trace_csv)


def _table_problem(seed=0, beta=1e-7, w=1.2e9, pt_mw=1000.0):
    params = RadioParams.from_table(beta=beta, pt_mw=pt_mw)
    return capacity_problem(LinkBudget(make_scenario(seed=seed), w, params))


def _random_problem(seed, devices=3):
    sc, w, params = random_instance(devices, seed)
    return capacity_problem(LinkBudget(sc, w, params))


def test_kkt_residuals_at_oracle_optimum():
    problem = _table_problem(seed=4)
    ref = dual_oracle(problem)
    x = ref.alpha[problem.devices]
    point = KktPoint(x, ref.mu, multipliers_for(problem, x, ref.mu))
    res = kkt_residuals(problem, point)
    assert res.max <= 1e-8


def test_kkt_stationarity_symmetric_uniform(symmetric_problem):
    x = np.array([0.5, 0.5])
    mu = float(symmetric_problem.gradient(x)[0] / symmetric_problem.scale)
    res = kkt_residuals(symmetric_problem, KktPoint(x, mu, np.zeros(4)))
    assert res.stationarity <= 1e-10
    assert res.certified()


def test_negative_multiplier_shows_as_dual_infeasibility(symmetric_problem):
    gamma = np.array([0.0, -0.3, 0.0, 0.0])
    res = kkt_residuals(symmetric_problem, KktPoint(np.array([0.5, 0.5]), 0.0, gamma))
    assert res.dual_feasibility == pytest.approx(0.3)


def test_kkt_residual_shapes(symmetric_problem):
    assert symmetric_problem.n_inequalities == 4
    g = symmetric_problem.inequalities(np.array([0.2, 0.8]))
    assert np.allclose(g, [-0.8, -0.2, -0.2, -0.8])


def test_bfgs_identity_fixed_point():
    e1 = np.array([1.0, 0.0, 0.0])
    assert np.allclose(bfgs_update(np.eye(3), e1, e1), np.eye(3))


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(1, 8))
def test_bfgs_stays_positive_definite(seed, n):
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(n, n))
    H = m @ m.T + 0.1 * np.eye(n)
    S, q = rng.normal(size=n), rng.normal(size=n)
    if q @ S < 0:
        q = -q
    H1 = bfgs_update(H, S, q)
    assert np.allclose(H1, H1.T)
    assert np.linalg.eigvalsh(H1).min() > 0


def test_bfgs_damping_for_negative_curvature():
    H = np.diag([2.0, 1.0])
    S = np.array([1.0, 1.0])
    q = np.array([-1.0, -0.5])
    H1 = bfgs_update(H, S, q)
    assert np.linalg.eigvalsh(H1).min() > 0


def test_bfgs_undamped_satisfies_secant():
    H = np.eye(2)
    S = np.array([1.0, 2.0])
    q = np.array([2.0, 3.0])
    assert np.allclose(bfgs_update(H, S, q) @ S, q)


def test_bfgs_rejects_zero_step():
    with pytest.raises(DegenerateStepError):
        bfgs_update(np.eye(2), np.zeros(2), np.ones(2))


def test_line_search_parabola():
    res = merit_line_search(lambda z: float((z[0] - 0.5) ** 2), np.zeros(1), np.ones(1), eps2=1e-8)
    assert res.t == pytest.approx(0.5, abs=1e-8)


def test_line_search_with_slope():
    res = merit_line_search(lambda z: float((z[0] - 0.3) ** 2), np.zeros(1), np.ones(1),
                            eps2=1e-10, slope=lambda z: float(2 * (z[0] - 0.3)))
    assert res.t == pytest.approx(0.3, abs=1e-10)


def test_line_search_zero_direction():
    with pytest.raises(NoDecreaseError):
        merit_line_search(lambda z: float(z @ z), np.ones(2), np.zeros(2))


def test_line_search_ascent_direction():
    with pytest.raises(NoDecreaseError):
        merit_line_search(lambda z: float(z @ z), np.ones(2), np.ones(2))


def test_line_search_full_step_when_merit_keeps_falling(symmetric_problem):
    x = np.array([0.3, 0.7])
    d = np.array([0.1, -0.1])
    res = merit_line_search(symmetric_problem.phi, x, d)
    assert res.t == 1.0
    ladder = [symmetric_problem.phi(x + t * d) for t in (1.0, 0.5, 0.25, 0.125)]
    assert ladder[0] == min(ladder)


def test_symmetric_instance_splits_evenly(symmetric_problem):
    rep = solve_sqp(symmetric_problem)
    assert rep.certified
    assert np.allclose(rep.alpha, [0.5, 0.5], atol=1e-6)


def test_extreme_self_interference_goes_to_bs():
    rep = solve_sqp(_table_problem(seed=0, beta=1e-3))
    assert rep.alpha[0] >= 0.999
    assert np.all(rep.alpha[1:] <= 1e-6)


@pytest.mark.parametrize("seed", range(6))
def test_matches_dual_oracle_on_table_instances(seed):
    problem = _table_problem(seed=seed)
    rep = solve_sqp(problem)
    ref = dual_oracle(problem)
    assert rep.certified
    assert abs(rep.objective_bps - ref.objective) <= 1e-6 * ref.objective


@pytest.mark.parametrize("seed", range(10))
def test_matches_dual_oracle_on_random_instances(seed):
    problem = _random_problem(seed, devices=int(2 + seed % 6))
    rep = solve_sqp(problem)
    ref = dual_oracle(problem)
    assert abs(rep.objective_bps - ref.objective) <= 1e-6 * ref.objective


@pytest.mark.parametrize("seed", range(3))
def test_global_optimum_against_grid(seed):
    problem = _random_problem(50 + seed)
    rep = solve_sqp(problem)
    grid = grid_oracle(problem, step=1e-3)
    assert rep.objective_bps >= grid.objective * (1 - 1e-12)


@pytest.mark.parametrize("seed", [1, 7])
def test_merit_monotone_and_hessians_positive(seed):
    rep = solve_sqp(_table_problem(seed=seed), SolverConfig(record_hessians=True))
    merits = [row.merit for row in rep.trace]
    assert all(b <= a + 1e-15 * abs(a) for a, b in zip(merits, merits[1:]))
    for H in rep.hessians:
        assert np.allclose(H, H.T)
        assert np.linalg.eigvalsh(H).min() > 0


def test_exit_feasibility():
    rep = solve_sqp(_table_problem(seed=2, beta=1e-9))
    assert abs(rep.alpha.sum() - 1) <= 1e-9
    assert np.all((rep.alpha >= 0) & (rep.alpha <= 1))


@pytest.mark.parametrize("pt_mw", [1e-3, 1e-1, 1e1, 1e3])
def test_certifies_across_power_scalings(pt_mw):
    rep = solve_sqp(_table_problem(seed=5, pt_mw=pt_mw))
    assert rep.certified
    assert rep.kkt.residuals.max <= 1e-6


def test_empty_devices_reported_with_zero_share():
    sc = make_scenario(m=3, seed=1)
    problem = capacity_problem(LinkBudget(sc, 1e9, RadioParams.from_table()))
    rep = solve_sqp(problem)
    empty = sc.user_counts == 0
    assert empty.any()
    assert np.all(rep.alpha[empty] == 0)
    assert rep.alpha.size == sc.n_devices


def test_iteration_cap_raises_with_partial_report():
    with pytest.raises(MaxIterationsError) as info:
        solve_sqp(_table_problem(seed=0), SolverConfig(max_iters=1))
    assert info.value.result.iterations == 1
    assert not info.value.result.certified


def test_trace_csv(tmp_path):
    rep = solve_sqp(_table_problem(seed=0))
    path = tmp_path / "trace.csv"
    write_trace_csv(rep, path)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["iter", "objective_bps", "step_norm", "kkt_residual", "linesearch_evals",
                       "elapsed_s"]
    assert len(rows) == len(rep.trace) + 1
