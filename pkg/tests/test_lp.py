import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from vecot.lp import FarkasCertificate, LinearProgram, LpStatus, feasibility, solve_lp

METHODS = ["highs", "bland"]


@pytest.mark.parametrize("method", METHODS)
def test_min_x_at_least_one(method):
    p = LinearProgram([1.0], [[1.0]], ">=", [1.0])
    sol = solve_lp(p, method)
    assert sol.status is LpStatus.OPTIMAL
    assert sol.x[0] == pytest.approx(1.0)
    assert sol.objective == pytest.approx(1.0)


@pytest.mark.parametrize("method", METHODS)
def test_max_sum_on_simplex(method):
    p = LinearProgram([1.0, 1.0], [[1.0, 1.0]], "<=", [1.0], maximize=True)
    sol = solve_lp(p, method)
    assert sol.objective == pytest.approx(1.0)
    assert sol.dual_objective == pytest.approx(1.0)


@pytest.mark.parametrize("method", METHODS)
def test_negative_rhs_infeasible(method):
    p = LinearProgram([0.0], [[1.0]], "<=", [-1.0])
    assert solve_lp(p, method).status is LpStatus.INFEASIBLE


@pytest.mark.parametrize("method", METHODS)
def test_unbounded_detected(method):
    p = LinearProgram([-1.0, 0.0], [[1.0, -1.0]], "<=", [1.0])
    assert solve_lp(p, method).status is LpStatus.UNBOUNDED


@pytest.mark.parametrize("method", METHODS)
def test_feasibility_examples(method):
    ok, x = feasibility(LinearProgram([0.0], [[1.0]], "==", [0.5], 0.0, 1.0), method)
    assert ok and x[0] == pytest.approx(0.5)
    p = LinearProgram([0.0], [[1.0]], "==", [2.0], 0.0, 1.0)
    ok, cert = feasibility(p, method)
    assert not ok and isinstance(cert, FarkasCertificate)
    assert cert.verify(p)
    ok, _ = feasibility(LinearProgram([0.0, 0.0], np.zeros((0, 2)), [], []), method)
    assert ok


def test_beale_cycling_example_terminates():
    # classic instance on which the largest-coefficient rule cycles
    c = [-0.75, 150.0, -0.02, 6.0]
    A = [[0.25, -60.0, -0.04, 9.0], [0.5, -90.0, -0.02, 3.0], [0.0, 0.0, 1.0, 0.0]]
    p = LinearProgram(c, A, "<=", [0.0, 0.0, 1.0])
    sol = solve_lp(p, "bland")
    assert sol.objective == pytest.approx(-0.05)


def test_bland_is_deterministic():
    rng = np.random.default_rng(0)
    A = rng.random((6, 9))
    p = LinearProgram(rng.random(9) - 0.3, A, "<=", A.sum(axis=1) * 0.4)
    a, b = solve_lp(p, "bland"), solve_lp(p, "bland")
    np.testing.assert_array_equal(a.x, b.x)
    np.testing.assert_array_equal(a.duals, b.duals)


def test_rejects_bad_input():
    with pytest.raises(ValueError):
        LinearProgram([np.nan], [[1.0]], "<=", [1.0])
    with pytest.raises(ValueError):
        LinearProgram([1.0], [[1.0]], "<", [1.0])
    with pytest.raises(ValueError):
        LinearProgram([1.0], [[1.0]], "<=", [1.0], lower=2.0, upper=1.0)


def _random_program(seed, m, nv):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(m, nv))
    x0 = rng.random(nv)
    senses = rng.choice(["<=", "==", ">="], size=m)
    b = A @ x0
    b = np.where(senses == "<=", b + rng.random(m), np.where(senses == ">=", b - rng.random(m), b))
    c = rng.normal(size=nv)
    upper = np.where(rng.random(nv) < 0.5, 2.0, np.inf)
    return LinearProgram(c, A, senses, b, 0.0, upper)


@given(st.integers(0, 10**6), st.integers(1, 5), st.integers(1, 6), st.sampled_from(METHODS))
@settings(max_examples=60, deadline=None)
def test_optimal_solutions_certify_themselves(seed, m, nv, method):
    p = _random_program(seed, m, nv)
    sol = solve_lp(p, method)
    # every random program is feasible (x0 satisfies it) but may be unbounded
    assert sol.status in (LpStatus.OPTIMAL, LpStatus.UNBOUNDED)
    ref = linprog(p.c, A_ub=np.vstack([p.A[p.senses == "<="], -p.A[p.senses == ">="]]),
                  b_ub=np.concatenate([p.b[p.senses == "<="], -p.b[p.senses == ">="]]),
                  A_eq=p.A[p.senses == "=="], b_eq=p.b[p.senses == "=="],
                  bounds=list(zip(p.lower, [None if np.isinf(u) else u for u in p.upper])),
                  method="highs-ipm")
    if sol.status is LpStatus.UNBOUNDED:
        assert ref.status == 3
        return
    assert sol.primal_residual <= 1e-9 * (1 + np.abs(p.b).max())
    assert sol.slackness_residual <= 1e-7
    assert sol.relative_gap <= 1e-8
    assert sol.objective == pytest.approx(ref.fun, rel=1e-7, abs=1e-7)


@given(st.integers(0, 10**6), st.integers(1, 5), st.integers(1, 5))
@settings(max_examples=40, deadline=None)
def test_infeasibility_certificates_verify(seed, m, nv):
    rng = np.random.default_rng(seed)
    A = rng.random((m, nv))
    # rows of a nonnegative matrix times nonnegative x cannot be negative
    p = LinearProgram(np.zeros(nv), A, "==", -rng.random(m) - 0.1)
    for method in METHODS:
        ok, cert = feasibility(p, method)
        assert not ok
        assert cert.verify(p)
