import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from delaylmi.dde import (
    PolynomialHistory,
    SampledHistory,
    envelope_check,
    integrate,
    is_nonincreasing,
    lyapunov_diagnostic,
    random_polynomial_history,
)
from delaylmi.io import read_csv
from delaylmi.stability import certify
from delaylmi.systems import DelaySystem, example_system1


def test_pure_ode_matches_matrix_exponential():
    A = np.array([[-1.0, 2.0], [-2.0, -1.0]])
    sys = DelaySystem(A, None, None, 1.0)
    x0 = np.array([1.0, 0.5])
    rec = integrate(sys, PolynomialHistory.constant(x0), 5.0, dt=0.01)
    want = scipy.linalg.expm(A * rec.t[-1]) @ x0
    assert np.linalg.norm(rec.x[-1] - want) <= 1e-8


def test_step_halving_fourth_order():
    A = np.array([[0.0, 1.0], [-4.0, -0.4]])
    sys = DelaySystem(A, None, None, 1.0)
    x0 = np.array([1.0, 0.0])
    errs = []
    for dt in (0.05, 0.025):
        rec = integrate(sys, PolynomialHistory.constant(x0), 4.0, dt=dt)
        errs.append(np.linalg.norm(rec.x[-1] - scipy.linalg.expm(A * 4.0) @ x0))
    ratio = errs[0] / errs[1]
    assert 8.0 <= ratio <= 32.0


def test_discrete_delay_method_of_steps_exact():
    # x' = -x(t-1), x = 1 on [-1, 0]: x(t) = 1 - t + (t-1)^2/2 on [1, 2]
    sys = DelaySystem([[0.0]], [[-1.0]], None, 1.0)
    rec = integrate(sys, PolynomialHistory.constant([1.0]), 2.0)
    for tk in (0.5, 1.0, 1.5, 2.0):
        k = int(round(tk / rec.dt))
        want = 1 - tk if tk <= 1 else 1 - tk + (tk - 1) ** 2 / 2
        assert rec.x[k, 0] == pytest.approx(want, abs=1e-9)


def test_distributed_delay_first_window_exact():
    # x' = -int_{t-h}^t x, x = 1 on [-h, 0]: x(t) = 1 - h sin t while t <= h
    h = 1.0
    sys = DelaySystem([[0.0]], None, [[-1.0]], h)
    rec = integrate(sys, PolynomialHistory.constant([1.0]), h)
    assert np.allclose(rec.x[:, 0], 1 - h * np.sin(rec.t), atol=1e-9)
    assert rec.z[0, 0] == pytest.approx(h)


def test_initial_slope_uses_history():
    sys = example_system1(1.0)
    rec = integrate(sys, PolynomialHistory.constant([1.0, 1.0]), 0.5)
    want = sys.A @ [1.0, 1.0] + sys.AD @ [1.0, 1.0]
    assert np.allclose(rec.xdot[0], want)


def test_mesh_alignment():
    rec = integrate(example_system1(0.7), PolynomialHistory.constant([1.0, 0.0]), 1.0, dt=0.1)
    M = 0.7 / rec.dt
    assert abs(M - round(M)) < 1e-9 and round(M) % 2 == 0 and rec.dt <= 0.7 / 16


def test_divergence_flag():
    sys = DelaySystem([[5.0]], None, None, 1.0)
    rec = integrate(sys, PolynomialHistory.constant([1.0]), 10.0)
    assert rec.diverged and rec.notes
    assert not envelope_check(rec, 10.0, 0.0).holds


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.2, 3.0))
def test_w_norm_matches_fine_grid(seed, h):
    hist = random_polynomial_history(2, np.random.default_rng(seed))
    th = np.linspace(-h, 0.0, 1000)
    grid = max(np.linalg.norm(hist.value(th), axis=1).max(), np.linalg.norm(hist.derivative(th), axis=1).max())
    w = hist.w_norm(h)
    assert w >= grid * (1 - 1e-12)
    assert abs(w - grid) <= 1e-5 * w


def test_sampled_history_reproduces_cubic():
    poly = PolynomialHistory([[1.0, 0.0], [0.5, -1.0], [0.0, 0.3], [0.2, 0.0]])
    th = np.linspace(-1.0, 0.0, 30)
    samp = SampledHistory(th, poly.value(th))
    q = np.array([-0.73, -0.21])
    assert np.allclose(samp.value(q), poly.value(q), atol=1e-3)
    with pytest.raises(ValueError):
        SampledHistory([0.0, 1.0], [[1.0], [2.0]])


def test_envelope_check_semantics():
    sys = DelaySystem(-np.eye(1), None, None, 1.0)
    rec = integrate(sys, PolynomialHistory.constant([2.0]), 3.0)
    env = envelope_check(rec, 1.0, 1.0)
    assert env.holds and env.worst_margin == pytest.approx(1.0, abs=1e-8)
    assert not envelope_check(rec, 1.0, 1.5).holds
    zero = integrate(sys, PolynomialHistory.constant([0.0]), 1.0)
    assert envelope_check(zero, 1.0, 0.0).holds


@pytest.fixture(scope="module")
def cert1():
    return certify(example_system1(1.0), 0.0)


def test_certificate_envelope_and_lyapunov(cert1):
    rng = np.random.default_rng(11)
    for _ in range(3):
        rec = integrate(cert1.system, random_polynomial_history(2, rng), 12.0)
        env = envelope_check(rec, cert1.gamma, cert1.alpha)
        assert env.holds and env.worst_margin <= 1.0
        series = lyapunov_diagnostic(rec, cert1.P, cert1.S, cert1.R, cert1.alpha)
        assert is_nonincreasing(series)


def test_is_nonincreasing():
    assert is_nonincreasing([3.0, 2.0, 2.0, 1.0])
    assert not is_nonincreasing([1.0, 1.1])
    assert is_nonincreasing([1.0, 1.0 + 1e-8])


def test_trajectory_csv(tmp_path):
    rec = integrate(example_system1(1.0), PolynomialHistory.constant([1.0, 1.0]), 0.5)
    rec.to_csv(tmp_path / "t.csv", derivatives=True)
    cols, rows = read_csv(tmp_path / "t.csv")
    assert cols == ["t", "x_1", "x_2", "dx_1", "dx_2"] and len(rows) == len(rec.t)
