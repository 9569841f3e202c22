import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from delaylmi import lmi
from delaylmi.lmi import LmiConstraint, LmiProblem, Variable, he
from delaylmi.sdp import (
    INFEASIBLE,
    OPTIMAL,
    UNBOUNDED,
    SolverSettings,
    maximize,
    solve,
)
from delaylmi.stability import build_theorem1, certify, is_feasible
from delaylmi.systems import example_system1


def lyapunov_problem(A):
    n = A.shape[0]
    P = Variable("P", lmi.SYMMETRIC, n, lmi.POSITIVE_DEFINITE, bound=1e3)
    return LmiProblem([P], [LmiConstraint(he(A.T @ P), name="lyap")])


def test_settings_validation():
    with pytest.raises(ValueError):
        SolverSettings(step_fraction=1.0)
    with pytest.raises(ValueError):
        SolverSettings(max_iterations=0)
    with pytest.raises(ValueError):
        SolverSettings.from_dict({"bogus": 1})
    assert SolverSettings.from_dict({"max_iterations": 50}).max_iterations == 50


def test_one_dimensional_margin_unbounded_then_bounded():
    x = Variable("x", lmi.SCALAR, 1)
    sol = solve(lmi.compile(LmiProblem([x], [LmiConstraint(x - 1.0, name="a")])))
    assert sol.status == UNBOUNDED
    prob = LmiProblem([x], [LmiConstraint(x - 1.0, name="a"),
                            LmiConstraint(x, lmi.POSITIVE_DEFINITE_SENSE, "b")])
    sol = solve(lmi.compile(prob))
    # rows are normalized: (x - 1)/2 <= t and -x <= t, optimum at x = 1/3
    assert sol.status == OPTIMAL and sol.feasible
    assert sol.objective_value == pytest.approx(-1.0 / 3.0, abs=1e-7)
    assert sol.assignment["x"] == pytest.approx(1.0 / 3.0, abs=1e-6)


def test_lyapunov_feasible_and_infeasible():
    stable = solve(lmi.compile(lyapunov_problem(np.array([[-1.0, 2.0], [0.0, -3.0]]))))
    assert stable.feasible and stable.status == OPTIMAL
    P = stable.assignment["P"]
    assert np.linalg.eigvalsh(P)[0] > 0
    assert np.linalg.eigvalsh(he_num(np.array([[-1.0, 2.0], [0.0, -3.0]]).T @ P))[-1] < 0
    unstable = solve(lmi.compile(lyapunov_problem(np.array([[0.5, 0.0], [0.0, -1.0]]))))
    assert not unstable.feasible and unstable.status == INFEASIBLE


def he_num(M):
    return M + M.T


def test_maximize_min_eigenvalue_bound():
    M = np.array([[3.0, 1.0, 0.0], [1.0, 2.0, 0.5], [0.0, 0.5, 4.0]])
    b = Variable("b", lmi.SCALAR, 1)
    prob = LmiProblem([b], [LmiConstraint(b * np.eye(3) - M, lmi.NEGATIVE_SEMIDEFINITE, "b<=eig")],
                      objective=b.expr())
    sol = maximize(lmi.compile(prob))
    assert sol.status == OPTIMAL
    assert sol.assignment["b"] == pytest.approx(np.linalg.eigvalsh(M)[0], abs=1e-6)


def test_maximize_requires_objective():
    with pytest.raises(ValueError):
        maximize(lmi.compile(lyapunov_problem(-np.eye(2))))


def test_theorem1_examples_system1():
    assert is_feasible(example_system1(1.0), 0.0)
    assert not is_feasible(example_system1(2.0), 0.0)
    cert = certify(example_system1(1.0), 0.0)
    assert cert.beta1 > 0


@settings(max_examples=15, deadline=None)
@given(st.integers(2, 4), st.integers(0, 2**32 - 1))
def test_optimal_solutions_recheck_through_model(n, seed):
    # random Hurwitz matrix: independent re-evaluation of the returned assignment
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, n))
    A -= (np.max(np.linalg.eigvals(A).real) + 0.5) * np.eye(n)
    prob = lyapunov_problem(A)
    sol = solve(lmi.compile(prob))
    assert sol.feasible
    for name, sense, M in lmi.evaluate_constraints(prob, sol.assignment):
        assert np.linalg.eigvalsh(M)[-1] < 0
    assert np.linalg.eigvalsh(sol.assignment["P"])[0] > 0


@pytest.mark.parametrize("h", [0.5, 1.0, 1.5])
def test_objective_history_nonincreasing(h):
    tp = build_theorem1(example_system1(h), 0.0)
    sol = solve(lmi.compile(tp.problem))
    hist = np.asarray(sol.history)
    assert len(hist) >= 2
    assert np.all(np.diff(hist) <= 1e-12 * (1 + np.abs(hist[:-1])))


def test_interval_shape_harness_system1():
    grid = np.linspace(0.1, 2.2, 22)
    ok = np.array([is_feasible(example_system1(h), 0.0) for h in grid])
    idx = np.flatnonzero(ok)
    assert len(idx)
    # feasibility at two delays implies feasibility at every sampled delay in between
    assert np.all(ok[idx[0]: idx[-1] + 1])
