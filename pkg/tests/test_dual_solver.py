import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_measure, transport_value_oracle
from vecot import (
    SolverConfig,
    SolverStatus,
    achievable_exact,
    build_measure,
    induced_demand,
    is_equilibrium,
    lp_dual_value,
    sample_achievable,
    solve_dual,
    solve_scalar,
    stable_partition,
    total_mass,
)
from vecot.counterexample import build_witness
from vecot.exceptions import FractionalOnly, InfeasibleDemand
from vecot.partition import demand_of, monge_cost
from vecot.pricing import incomes


def _scalar_instance(seed, T=40, n=3):
    rng = np.random.default_rng(seed)
    m = build_measure(rng.random((T, 2)), rng.random(T) + 1e-3, np.ones((T, 1)))
    costs = rng.random((n, T))
    target, _ = sample_achievable(m, n, seed=seed)
    return m, costs, target


def test_start_at_equilibrium_takes_zero_iterations():
    rng = np.random.default_rng(0)
    m = random_measure(rng, 12, 2)
    P0 = rng.normal(size=(3, 2))
    u = np.sort(incomes(m, None, P0), axis=1)
    assert np.min(u[:, -1] - u[:, -2]) > 1e-9
    rep = solve_dual(m, None, induced_demand(m, None, P0), initial_prices=P0)
    assert rep.status is SolverStatus.CONVERGED
    assert rep.iterations == 0 and len(rep.history) == 0
    assert rep.residual_norm == 0.0


def test_rejects_infeasible_target(three_point):
    with pytest.raises(InfeasibleDemand):
        solve_dual(three_point, None, [[1.0, 1.0], [1.0, 1.0]])


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(tol=0)
    with pytest.raises(ValueError):
        SolverConfig(max_iter=0)
    with pytest.raises(ValueError):
        SolverConfig(step="polyak")


def test_scalar_single_agent_saturation():
    m, costs, _ = _scalar_instance(1, n=1)
    rep = solve_scalar(m, costs, total_mass(m))
    assert rep.converged
    assert rep.prices[0, 0] > costs.max()
    np.testing.assert_array_equal(rep.plan[:, 1] > 0.5, True)


def test_scalar_zero_target():
    m, costs, _ = _scalar_instance(2)
    rep = solve_scalar(m, costs, np.zeros(3))
    assert rep.converged
    assert incomes(m, costs, rep.prices)[:, 1:].max() <= 1e-6


@pytest.mark.parametrize("seed", [3, 4, 5])
def test_scalar_matches_lp_oracle(seed):
    m, costs, target = _scalar_instance(seed)
    rep = solve_dual(m, costs, target)
    assert rep.converged
    assert rep.best_objective == pytest.approx(transport_value_oracle(m, costs, target), abs=1e-6)


@pytest.mark.parametrize("step", ["diminishing", "polyak"])
def test_converged_implies_equilibrium(step):
    rng = np.random.default_rng(9)
    m = random_measure(rng, 30, 2)
    costs = rng.random((2, 30))
    target, _ = sample_achievable(m, 2, seed=9)
    value = lp_dual_value(m, costs, target)[0]
    cfg = SolverConfig(step=step, target_value=value if step == "polyak" else None)
    rep = solve_dual(m, costs, target, cfg)
    assert rep.converged
    assert rep.residual_norm <= cfg.tol
    assert is_equilibrium(m, costs, rep.prices, target, tol=cfg.tol, split_ties=True, tie_tol=cfg.tie_tol)
    assert rep.objective == pytest.approx(value, abs=1e-6)


def test_history_shape_and_running_max():
    m, costs, target = _scalar_instance(6)
    rep = solve_dual(m, costs, target, SolverConfig(max_iter=50, polish_every=0))
    assert rep.status is SolverStatus.ITERATION_CAP
    assert rep.history.shape == (rep.iterations, 3)
    running = np.maximum.accumulate(rep.history[:, 0])
    assert np.all(np.diff(running) >= 0)
    assert rep.best_objective == pytest.approx(running[-1])
    rows = rep.history_rows()
    assert rows[0][0] == 0 and len(rows[0]) == 4


def test_seeded_start_is_reproducible():
    m, costs, target = _scalar_instance(7)
    a = solve_dual(m, costs, target, SolverConfig(seed=3, max_iter=200))
    b = solve_dual(m, costs, target, SolverConfig(seed=3, max_iter=200))
    np.testing.assert_array_equal(a.prices, b.prices)
    np.testing.assert_array_equal(a.history, b.history)


def test_witness_diverges():
    wit = build_witness()
    rep = solve_dual(wit.measure, wit.costs, wit.target, initial_prices=wit.prices)
    assert rep.status is SolverStatus.DIVERGED
    assert rep.price_norm > 1e4 or np.linalg.norm(rep.best_prices) <= 1e4
    assert rep.residual_floor() >= 0.5 * wit.atom_masses.min()


def test_stable_partition_zero_cost(three_point):
    target = [[1.0, 0.0], [0.0, 1.0]]
    labels, cost = stable_partition(three_point, np.zeros((2, 3)), target)
    assert cost == 0.0
    np.testing.assert_allclose(demand_of(three_point, labels, 2), target, atol=1e-9)


@pytest.mark.parametrize("seed", range(6))
def test_scalar_uniqueness_regime(seed):
    # atoms make the optimum at an arbitrary demand fractional, so the demand
    # is taken from untied prices, where the scalar partition is unique
    rng = np.random.default_rng(100 + seed)
    T, n = 10, 2
    m = build_measure(rng.random((T, 2)), rng.uniform(0.5, 1.5, T), np.ones((T, 1)))
    costs = rng.random((n, T))
    assert np.unique(costs[0] - costs[1]).size == T
    P = rng.uniform(0.2, 1.0, size=(n, 1))
    target = induced_demand(m, costs, P)
    value, _, plan = lp_dual_value(m, costs, target)
    assert np.abs(plan - np.round(plan)).max() <= 1e-9
    labels, cost = stable_partition(m, costs, target)
    assert cost == pytest.approx(value, abs=1e-9)
    res = achievable_exact(target, m)
    assert res.count == 1
    np.testing.assert_array_equal(res.witness, labels)


def test_sampled_scalar_demand_can_be_fractional_only():
    rng = np.random.default_rng(100)
    m = build_measure(rng.random((9, 2)), rng.uniform(0.5, 1.5, 9), np.ones((9, 1)))
    costs = rng.random((2, 9))
    target, _ = sample_achievable(m, 2, seed=0)
    with pytest.raises(FractionalOnly) as exc:
        stable_partition(m, costs, target)
    assert exc.value.value == pytest.approx(transport_value_oracle(m, costs, target), abs=1e-9)


def test_stable_partition_on_witness_matches_dual_estimate():
    wit = build_witness()
    try:
        labels, value = stable_partition(wit.measure, wit.costs, wit.target)
    except FractionalOnly as exc:
        value = exc.value
    else:
        np.testing.assert_allclose(demand_of(wit.measure, labels, 2), wit.target, atol=1e-9)
    rep = solve_dual(wit.measure, wit.costs, wit.target, SolverConfig(divergence_threshold=np.inf,
                                                                       max_iter=3000))
    assert rep.best_objective <= value + 1e-9
    assert rep.best_objective == pytest.approx(value, abs=1e-4)


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=10, deadline=None)
def test_random_q2_instances_converge_to_lp_value(seed):
    rng = np.random.default_rng(seed)
    m = random_measure(rng, 15, 2)
    costs = rng.random((2, 15))
    target, _ = sample_achievable(m, 2, seed=seed)
    rep = solve_dual(m, costs, target, SolverConfig(max_iter=5000))
    value = transport_value_oracle(m, costs, target)
    assert rep.best_objective <= value + 1e-8
    if rep.converged:
        assert rep.objective == pytest.approx(value, abs=1e-6)
