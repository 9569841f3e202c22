"""Numerical checks of the integral inequalities behind the stability LMIs.

All functions live on the window ``[-h, 0]`` (the window ``[t-h, t]``
shifted to ``t = 0``).  Double integrals ``int_{-h}^0 int_theta^0 g(s) ds dtheta``
are reduced to ``int_{-h}^0 (s + h) g(s) ds``.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.integrate

from .stability import expm1_minus_x_ratio

QUAD_RTOL = 1e-9
SLACK_TOL = 1e-9


class QuadratureError(RuntimeError):
    pass


class TestFunction:
    """Vector-valued C^1 function on ``[-h, 0]`` with an analytic derivative."""

    __test__ = False  # not a pytest class
    n = 0

    def value(self, s):
        raise NotImplementedError

    def derivative(self, s):
        raise NotImplementedError


class PolynomialFunction(TestFunction):
    """``x(s) = sum_k coeffs[k] s**k`` with ``coeffs`` of shape (degree+1, n)."""

    def __init__(self, coeffs):
        self.coeffs = np.atleast_2d(np.asarray(coeffs, dtype=float))
        self.n = self.coeffs.shape[1]
        k = np.arange(1, self.coeffs.shape[0])
        self.dcoeffs = self.coeffs[1:] * k[:, None] if len(k) else np.zeros((1, self.n))

    @staticmethod
    def _horner(c, s):
        out = np.zeros(c.shape[1])
        for ck in c[::-1]:
            out = out * s + ck
        return out

    def value(self, s):
        return self._horner(self.coeffs, s)

    def derivative(self, s):
        return self._horner(self.dcoeffs, s)


class TrigFunction(TestFunction):
    """``x(s) = a cos(w s) + b sin(w s)``."""

    def __init__(self, a, b, omega):
        self.a = np.asarray(a, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self.omega = float(omega)
        self.n = self.a.size

    def value(self, s):
        w = self.omega
        return self.a * np.cos(w * s) + self.b * np.sin(w * s)

    def derivative(self, s):
        w = self.omega
        return w * (-self.a * np.sin(w * s) + self.b * np.cos(w * s))


class ExponentialFunction(TestFunction):
    """``x(s) = v exp(rate * s)``."""

    def __init__(self, v, rate):
        self.v = np.asarray(v, dtype=float)
        self.rate = float(rate)
        self.n = self.v.size

    def value(self, s):
        return self.v * np.exp(self.rate * s)

    def derivative(self, s):
        return self.rate * self.v * np.exp(self.rate * s)


def _quad(f, h):
    """Scalar integral over ``[-h, 0]`` with an error-estimate check."""
    val, err = scipy.integrate.quad(f, -h, 0.0, epsabs=0.0, epsrel=1e-13, limit=200)
    if err > QUAD_RTOL * abs(val) + 1e-300 and err > 1e-15:
        raise QuadratureError(f"quadrature error estimate {err:.2e} for value {val:.3e}")
    return val


def _quad_vec(f, h):
    val, err = scipy.integrate.quad_vec(f, -h, 0.0, epsabs=1e-300, epsrel=1e-13)
    if err > QUAD_RTOL * np.linalg.norm(val) and err > 1e-15:
        raise QuadratureError(f"quadrature error estimate {err:.2e} for value {np.linalg.norm(val):.3e}")
    return val


@dataclass
class InequalityCheck:
    """``slack = lhs - rhs``; ``ok`` means ``slack >= -1e-9 (1 + |lhs|)``."""

    name: str
    lhs: float
    rhs: float

    @property
    def slack(self):
        return self.lhs - self.rhs

    @property
    def relative_slack(self):
        return self.slack / (1.0 + abs(self.lhs))

    @property
    def ok(self):
        return self.relative_slack >= -SLACK_TOL


def _check_pd(M, name):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if np.max(np.abs(M - M.T), initial=0.0) > 1e-12 * (1 + np.max(np.abs(M))):
        raise ValueError(f"{name} must be symmetric")
    if np.linalg.eigvalsh(0.5 * (M + M.T))[0] <= 0:
        raise ValueError(f"{name} must be positive definite")
    return 0.5 * (M + M.T)


def check_wirtinger(x, R, h):
    """``int x'^T R x' >= (1/h) (d^T R d + 3 w^T R w)``.

    Here ``d = x(0) - x(-h)`` and ``w = x(0) + x(-h) - (2/h) int x``.
    """
    R = _check_pd(R, "R")
    lhs = _quad(lambda s: x.derivative(s) @ R @ x.derivative(s), h)
    mean = _quad_vec(x.value, h) / h
    d = x.value(0.0) - x.value(-h)
    w = x.value(0.0) + x.value(-h) - 2.0 * mean
    rhs = (d @ R @ d + 3.0 * (w @ R @ w)) / h
    return InequalityCheck("wirtinger", lhs, rhs)


def check_jensen(x, S, h):
    """``h int x^T S x >= (int x)^T S (int x)``."""
    S = _check_pd(S, "S")
    lhs = h * _quad(lambda s: x.value(s) @ S @ x.value(s), h)
    v = _quad_vec(x.value, h)
    return InequalityCheck("jensen", lhs, float(v @ S @ v))


def xi_factor(alpha, h):
    """``int_{-h}^0 int_theta^0 exp(-2 alpha s) ds dtheta = (e^{2 alpha h} - 2 alpha h - 1) / (4 alpha^2)``.

    Equal to ``h^2 / 2`` at ``alpha = 0``.
    """
    if alpha < 0 or h <= 0:
        raise ValueError("need alpha >= 0 and h > 0")
    return 0.5 * h * h * expm1_minus_x_ratio(2.0 * alpha * h)


def xi_factor_quadrature(alpha, h):
    """:func:`xi_factor` by direct double quadrature (for cross-checks)."""
    val, _ = scipy.integrate.dblquad(lambda s, th: np.exp(-2.0 * alpha * s), -h, 0.0,
                                     lambda th: th, lambda th: 0.0, epsabs=0.0, epsrel=1e-13)
    return val


def check_bessel_like(x, R, h, alpha):
    """``int int e^{2 alpha s} x^T R x >= (1/Xi) (int int x)^T R (int int x)``.

    Double integrals run over ``-h <= theta <= s <= 0``.  Equality holds for
    ``x(s)`` proportional to ``exp(-2 alpha s)``.
    """
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    R = _check_pd(R, "R")
    lhs = _quad(lambda s: (s + h) * np.exp(2.0 * alpha * s) * (x.value(s) @ R @ x.value(s)), h)
    v = _quad_vec(lambda s: (s + h) * x.value(s), h)
    return InequalityCheck("bessel_like", lhs, float(v @ R @ v) / xi_factor(alpha, h))


def random_pd(n, rng):
    Q = rng.uniform(-1.0, 1.0, size=(n, n))
    return Q @ Q.T + 0.1 * np.eye(n)


def random_polynomial(n, rng, max_degree=4):
    deg = int(rng.integers(0, max_degree + 1))
    return PolynomialFunction(rng.uniform(-1.0, 1.0, size=(deg + 1, n)))


@dataclass
class InequalityReport:
    """Minimum relative slack per inequality over a batch of random trials."""

    trials: int
    seed: int
    min_slack: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)

    @property
    def ok(self):
        return not any(self.failures.values())

    def text(self):
        lines = [f"trials per inequality: {self.trials}", f"seed: {self.seed}"]
        for name in sorted(self.min_slack):
            lines.append(f"{name}: min relative slack {self.min_slack[name]:.6e}, "
                         f"violations {self.failures[name]}")
        return "\n".join(lines) + "\n"


def run_trials(trials, seed=0):
    """Random polynomial trials (degree <= 4, h in [0.1, 3], alpha in [0, 1.5])."""
    if trials < 0:
        raise ValueError("trials must be nonnegative")
    rng = np.random.default_rng(seed)
    rep = InequalityReport(trials, seed)
    if trials == 0:
        return rep
    names = ("wirtinger", "jensen", "bessel_like")
    results = {k: [] for k in names}
    for _ in range(trials):
        n = int(rng.integers(1, 4))
        h = float(rng.uniform(0.1, 3.0))
        alpha = float(rng.uniform(0.0, 1.5))
        x = random_polynomial(n, rng)
        M = random_pd(n, rng)
        results["wirtinger"].append(check_wirtinger(x, M, h))
        results["jensen"].append(check_jensen(x, M, h))
        results["bessel_like"].append(check_bessel_like(x, M, h, alpha))
    for k, checks in results.items():
        rep.checks[k] = checks
        rep.min_slack[k] = min(c.relative_slack for c in checks)
        rep.failures[k] = sum(not c.ok for c in checks)
    return rep
