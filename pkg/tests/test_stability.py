import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from delaylmi import lmi
from delaylmi.lmi import Variable
from delaylmi.stability import (
    COROLLARY1,
    FREE_Y,
    NULLSPACE,
    beta2_value,
    build_F4,
    build_F_matrices,
    build_theorem1,
    certify,
    corollary_slack_nonsingular,
    exp_factor,
    expm1_minus_x,
    is_feasible,
    phi_expr,
    phi_matrix,
    positivity_matrix,
)
from delaylmi.systems import (
    EPS_NEQ_ONE,
    EPS_ONE,
    DelaySystem,
    EpsilonProfile,
    example_system1,
    example_system2,
)


def _random_psr(n, rng):
    Q = rng.normal(size=(2 * n, 2 * n))
    P = Q + Q.T
    S = rng.normal(size=(n, n))
    R = rng.normal(size=(n, n))
    return P, S @ S.T + np.eye(n), R @ R.T + np.eye(n)


def test_F1_example():
    F1 = build_F_matrices(1, 2.0)["F1"]
    assert np.array_equal(F1, [[1, 0, 0, 0], [0, 0, 0, 2]])


def test_F2_kernel_on_constants_and_F3_selection():
    F = build_F_matrices(1, 1.0)
    c = 0.7
    assert np.allclose(F["F2"] @ np.array([c, c, 5.0, c]), 0.0)
    assert F["F3"] @ np.array([1.0, 2.0, 3.0, 4.0]) == pytest.approx(3.0)
    shapes = {k: v.shape for k, v in build_F_matrices(3, 0.5).items()}
    assert shapes == {"F0": (6, 12), "F1": (6, 12), "F2": (6, 12), "F3": (3, 12)}


def test_F4_examples():
    s1 = example_system1(1.0)
    assert np.array_equal(build_F4(s1), np.hstack([s1.A, np.zeros((2, 2)), -np.eye(2), s1.AD]))
    z = DelaySystem(np.zeros((2, 2)), None, None, 1.0)
    assert np.array_equal(build_F4(z), np.hstack([np.zeros((2, 4)), -np.eye(2), np.zeros((2, 2))]))
    s2 = example_system2(0.5)
    assert np.array_equal(build_F4(s2), np.hstack([s2.A, s2.Ad, -np.eye(2), np.zeros((2, 2))]))


def test_exp_factor_values():
    assert exp_factor(0.5, 1.0) == pytest.approx(1.0 / (math.e - 2.0), rel=1e-14)
    assert exp_factor(0.5, 1.0) == pytest.approx(1.3922, abs=1e-4)
    for h in (0.1, 1.0, 3.0):
        assert exp_factor(0.0, h) == 2.0 / h
        assert exp_factor(1e-6, h) == pytest.approx(2.0 / h, rel=1e-4)
    with pytest.raises(ValueError):
        exp_factor(-1.0, 1.0)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.0, 5.0), st.floats(1e-3, 5.0))
def test_exp_factor_positive(alpha, h):
    assert exp_factor(alpha, h) > 0


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-12, 2.0))
def test_expm1_minus_x_series_matches_direct(x):
    # direct formula is accurate once x is not tiny
    if x > 1e-3:
        assert expm1_minus_x(x) == pytest.approx(math.expm1(x) - x, rel=1e-9)
    assert expm1_minus_x(x) == pytest.approx(x * x / 2 * (1 + x / 3 + x * x / 12), rel=max(x ** 3, 1e-14))


def _phi_quadratic_form(P, S, R, alpha, h, xi):
    """Quadratic form of Phi written out slot by slot."""
    n = S.shape[0]
    x, xh, xd, m = (xi[i * n:(i + 1) * n] for i in range(4))
    w = math.exp(-2 * alpha * h)
    xbar = np.concatenate([x, h * m])
    xbar_dot = np.concatenate([xd, x - xh])
    d = x - xh
    e = x + xh - 2 * m
    return (2 * xbar @ P @ (xbar_dot + alpha * xbar) + x @ S @ x - w * xh @ S @ xh
            + h * h * xd @ R @ xd - w * (d @ R @ d + 3 * e @ R @ e))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 3), st.floats(0.0, 2.0), st.floats(0.05, 3.0), st.integers(0, 2**32 - 1))
def test_phi_matches_slotwise_quadratic_form(n, alpha, h, seed):
    rng = np.random.default_rng(seed)
    P, S, R = _random_psr(n, rng)
    Phi = phi_matrix(P, S, R, alpha, h)
    assert np.array_equal(Phi, Phi.T)
    for _ in range(3):
        xi = rng.normal(size=4 * n)
        want = _phi_quadratic_form(P, S, R, alpha, h, xi)
        assert xi @ Phi @ xi == pytest.approx(want, rel=1e-10, abs=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 3), st.floats(0.0, 2.0), st.floats(0.05, 3.0), st.integers(0, 2**32 - 1))
def test_phi_expression_and_matrix_agree(n, alpha, h, seed):
    rng = np.random.default_rng(seed)
    P, S, R = _random_psr(n, rng)
    Pv = Variable("P", lmi.SYMMETRIC, 2 * n)
    Sv = Variable("S", lmi.SYMMETRIC, n)
    Rv = Variable("R", lmi.SYMMETRIC, n)
    got = phi_expr(Pv, Sv, Rv, alpha, h, n).evaluate({"P": P, "S": S, "R": R})
    assert np.allclose(got, phi_matrix(P, S, R, alpha, h), rtol=1e-12, atol=1e-12)
    assert np.array_equal(got, got.T)


def test_phi_at_alpha_zero_has_unit_weights():
    n, h = 1, 0.7
    P, S, R = np.eye(2), np.eye(1), np.eye(1)
    Phi = phi_matrix(P, S, R, 0.0, h)
    # (x(t-h), x(t-h)) entry: -S - R - 3R with weight exactly 1
    assert Phi[1, 1] == pytest.approx(-1.0 - 1.0 - 3.0)


def test_positivity_matrix_structure():
    P = np.zeros((2, 2))
    S = np.array([[2.0]])
    R = np.array([[1.0]])
    M = positivity_matrix(P, S, R, 0.5, 0.0, 1.0)
    k = 2.0
    assert np.allclose(M, [[k - 0.5, -k], [-k, 2.0 + k]])


@pytest.mark.parametrize("h,alpha,expected", [(1.0, 0.0, True), (0.1, 0.0, False), (0.8, 0.5, True),
                                              (2.0, 0.0, False)])
def test_theorem1_examples(h, alpha, expected):
    assert is_feasible(example_system1(h), alpha) is expected


def test_system2_certificate_and_invariants():
    cert = certify(example_system2(0.5), 0.0)
    assert cert is not None
    ok, checks = cert.verify()
    assert ok, checks
    assert cert.beta2 == pytest.approx(beta2_value(cert.P, cert.S, cert.R, cert.h), rel=1e-12)
    assert cert.gamma == pytest.approx(math.sqrt(cert.beta2 / cert.beta1), rel=1e-12)
    assert cert.gamma >= 1.0


@pytest.mark.parametrize("mode,profile", [(FREE_Y, None), (COROLLARY1, EPS_ONE),
                                          (COROLLARY1, EPS_NEQ_ONE), (NULLSPACE, None)])
def test_certify_modes_verify(mode, profile):
    cert = certify(example_system1(1.0), 0.0, mode, profile)
    assert cert is not None and cert.mode == mode
    assert cert.verify()[0]
    assert cert.beta1 > 0 and cert.gamma >= 1


def test_corollary_slack_checks():
    cert = certify(example_system1(1.0), 0.0, COROLLARY1, EPS_NEQ_ONE)
    assert corollary_slack_nonsingular(cert)
    cert.slack = np.array([[1.0, 2.0], [2.0, 4.0]])
    assert not corollary_slack_nonsingular(cert)
    with pytest.raises(ValueError):
        corollary_slack_nonsingular(certify(example_system1(1.0), 0.0))


def test_profile_with_zero_xdot_weight_rejected():
    with pytest.raises(ValueError):
        build_theorem1(example_system1(1.0), 0.0, COROLLARY1, EpsilonProfile(1.0, 0.0, 0.0, 1.0))


def test_build_rejects_bad_inputs():
    with pytest.raises(ValueError):
        build_theorem1(example_system1(1.0), -0.1)
    with pytest.raises(ValueError):
        build_theorem1(example_system1(1.0), 0.0, mode="bogus")


def test_system_validation():
    with pytest.raises(ValueError):
        DelaySystem(np.eye(2), None, None, 0.0)
    with pytest.raises(ValueError):
        DelaySystem(np.eye(2), np.eye(3), None, 1.0)


@settings(max_examples=8, deadline=None)
@given(st.floats(0.25, 1.9), st.floats(0.0, 0.8))
def test_mode_dominance_and_finsler_equivalence(h, alpha):
    sys = example_system1(h)
    free = is_feasible(sys, alpha, FREE_Y)
    if is_feasible(sys, alpha, COROLLARY1, EPS_NEQ_ONE):
        assert free
    assert is_feasible(sys, alpha, NULLSPACE) == free
