import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from delaylmi.inequalities import (
    ExponentialFunction,
    PolynomialFunction,
    TrigFunction,
    check_bessel_like,
    check_jensen,
    check_wirtinger,
    random_pd,
    random_polynomial,
    run_trials,
    xi_factor,
    xi_factor_quadrature,
)
from delaylmi.stability import exp_factor


def test_jensen_example():
    # x(s) = s on [-1, 0]: h int x^2 = 1/3, (int x)^2 = 1/4
    c = check_jensen(PolynomialFunction([[0.0], [1.0]]), np.eye(1), 1.0)
    assert c.lhs == pytest.approx(1.0 / 3.0) and c.rhs == pytest.approx(0.25)


def test_wirtinger_affine_equality():
    x = PolynomialFunction([[0.3, -1.0], [2.0, 0.5]])
    c = check_wirtinger(x, np.array([[2.0, 0.3], [0.3, 1.0]]), 1.7)
    assert abs(c.slack) <= 1e-6 * (1 + abs(c.lhs))


def test_wirtinger_dominates_jensen_form():
    rng = np.random.default_rng(5)
    for _ in range(10):
        x = random_polynomial(2, rng)
        R = random_pd(2, rng)
        h = 1.3
        d = x.value(0.0) - x.value(-h)
        c = check_wirtinger(x, R, h)
        assert c.rhs >= d @ R @ d / h - 1e-12


@pytest.mark.parametrize("alpha,h", [(0.0, 1.0), (0.5, 1.0), (1.2, 2.5)])
def test_bessel_like_equality_case(alpha, h):
    x = ExponentialFunction([1.0, -0.4], -2.0 * alpha)
    c = check_bessel_like(x, np.array([[1.5, 0.2], [0.2, 0.7]]), h, alpha)
    assert abs(c.slack) <= 1e-6 * (1 + abs(c.lhs))


def test_trig_functions_satisfy_all():
    x = TrigFunction([1.0, 0.0], [0.0, 2.0], 3.0)
    R = np.eye(2)
    for c in (check_wirtinger(x, R, 2.0), check_jensen(x, R, 2.0), check_bessel_like(x, R, 2.0, 0.4)):
        assert c.ok


def test_xi_factor_values():
    assert xi_factor(0.5, 1.0) == pytest.approx(math.e - 2.0, rel=1e-14)
    assert xi_factor(0.0, 2.0) == 2.0
    assert xi_factor_quadrature(0.5, 1.0) == pytest.approx(math.e - 2.0, rel=1e-10)
    assert xi_factor_quadrature(0.0, 2.0) == pytest.approx(2.0, rel=1e-10)
    with pytest.raises(ValueError):
        xi_factor(-1.0, 1.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-6, 2.0), st.floats(0.1, 3.0))
def test_exp_factor_xi_identity(alpha, h):
    assert exp_factor(alpha, h) * xi_factor(alpha, h) == pytest.approx(h, rel=1e-12)


def test_input_validation():
    x = PolynomialFunction([[1.0]])
    with pytest.raises(ValueError):
        check_jensen(x, -np.eye(1), 1.0)
    with pytest.raises(ValueError):
        check_wirtinger(PolynomialFunction([[1.0, 1.0]]), np.array([[1.0, 2.0], [0.0, 1.0]]), 1.0)
    with pytest.raises(ValueError):
        check_bessel_like(x, np.eye(1), 1.0, -0.5)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 3.0), st.floats(0.0, 1.5))
def test_random_polynomials_never_violate(seed, h, alpha):
    rng = np.random.default_rng(seed)
    x = random_polynomial(2, rng)
    R = random_pd(2, rng)
    for c in (check_wirtinger(x, R, h), check_jensen(x, R, h), check_bessel_like(x, R, h, alpha)):
        assert c.relative_slack >= -1e-9


def test_run_trials_report():
    rep = run_trials(20, seed=1)
    assert rep.ok and set(rep.min_slack) == {"wirtinger", "jensen", "bessel_like"}
    assert "seed: 1" in rep.text()
    assert run_trials(0).ok
    with pytest.raises(ValueError):
        run_trials(-1)
