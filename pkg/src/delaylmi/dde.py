"""Time-domain simulation of systems with a discrete and a distributed delay.

The window integral ``z(t) = int_{t-h}^t x(s) ds`` is carried as extra
state (``z' = x(t) - x(t-h)``) and the pair ``(x, z)`` is advanced with the
classical Runge-Kutta scheme.  Delayed values come from the exact history
for ``t <= 0`` and from cubic Hermite interpolation of the stored
``(x, x')`` samples afterwards, so the scheme stays fourth order.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.integrate
import scipy.interpolate
import scipy.optimize

from .io import write_csv

log = logging.getLogger(__name__)

DIVERGENCE_NORM = 1e12


class HistoryFunction:
    """Initial condition ``phi`` on ``[-h, 0]`` with its derivative."""

    n = 0

    def value(self, theta):
        raise NotImplementedError

    def derivative(self, theta):
        raise NotImplementedError

    def sup_norms(self, h, grid=2001):
        """``(sup |phi|, sup |phi'|)`` over ``[-h, 0]`` (Euclidean norm pointwise)."""
        return self._sup(self.value, h, grid), self._sup(self.derivative, h, grid)

    def w_norm(self, h):
        """``max(sup |phi|, sup |phi'|)``."""
        return max(self.sup_norms(h))

    @staticmethod
    def _sup(f, h, grid):
        th = np.linspace(-h, 0.0, grid)
        vals = np.linalg.norm(np.atleast_2d(f(th)), axis=1)
        k = int(np.argmax(vals))
        best = float(vals[k])
        lo, hi = th[max(k - 1, 0)], th[min(k + 1, grid - 1)]
        if hi > lo:
            res = scipy.optimize.minimize_scalar(lambda t: -np.linalg.norm(f(np.array([t]))[0]),
                                                 bounds=(lo, hi), method="bounded",
                                                 options={"xatol": 1e-12})
            best = max(best, -float(res.fun))
        return best


class PolynomialHistory(HistoryFunction):
    """``phi(theta) = sum_k coeffs[k] * theta**k``; ``coeffs`` has shape (degree+1, n)."""

    def __init__(self, coeffs):
        c = np.atleast_2d(np.asarray(coeffs, dtype=float))
        if not np.all(np.isfinite(c)):
            raise ValueError("history coefficients must be finite")
        self.coeffs = c
        self.n = c.shape[1]
        k = np.arange(1, c.shape[0])
        self._dcoeffs = c[1:] * k[:, None] if c.shape[0] > 1 else np.zeros((1, self.n))

    @classmethod
    def constant(cls, x0):
        return cls(np.atleast_2d(np.asarray(x0, dtype=float)))

    @staticmethod
    def _eval(c, theta):
        theta = np.asarray(theta, dtype=float)
        out = np.zeros(theta.shape + (c.shape[1],))
        for ck in c[::-1]:
            out = out * theta[..., None] + ck
        return out

    def value(self, theta):
        return self._eval(self.coeffs, theta)

    def derivative(self, theta):
        return self._eval(self._dcoeffs, theta)


class SampledHistory(HistoryFunction):
    """Cubic spline through samples ``values[i]`` at ``theta[i]`` (covering ``[-h, 0]``)."""

    def __init__(self, theta, values):
        theta = np.asarray(theta, dtype=float)
        values = np.atleast_2d(np.asarray(values, dtype=float))
        if values.shape[0] != theta.size:
            values = values.T
        if values.shape[0] != theta.size or theta.size < 4:
            raise ValueError("need at least 4 samples, one row per sample time")
        self.spline = scipy.interpolate.CubicSpline(theta, values, axis=0)
        self._d = self.spline.derivative()
        self.n = values.shape[1]
        self.span = (theta.min(), theta.max())

    def value(self, theta):
        return self.spline(np.asarray(theta, dtype=float))

    def derivative(self, theta):
        return self._d(np.asarray(theta, dtype=float))


def random_polynomial_history(n, rng, degree=3):
    """Polynomial history with coefficients uniform in [-1, 1] and the given degree."""
    return PolynomialHistory(rng.uniform(-1.0, 1.0, size=(degree + 1, n)))


@dataclass
class TrajectoryRecord:
    """Samples ``x(t_k)``, ``x'(t_k)`` on ``t_k = k dt`` plus the history norms.

    ``z[k]`` is the window integral ``int_{t_k - h}^{t_k} x``.  ``xdot[0]`` is
    the right derivative at 0 (the solution's, not the history's).
    """

    system: object
    history: HistoryFunction
    t: np.ndarray
    x: np.ndarray
    xdot: np.ndarray
    z: np.ndarray
    dt: float
    phi_norm_h: float
    phidot_norm_h: float
    diverged: bool = False
    notes: list = field(default_factory=list)

    @property
    def phi_norm_w(self):
        return max(self.phi_norm_h, self.phidot_norm_h)

    def to_csv(self, path, derivatives=False):
        n = self.x.shape[1]
        cols = ["t"] + [f"x_{i + 1}" for i in range(n)]
        if derivatives:
            cols += [f"dx_{i + 1}" for i in range(n)]
        rows = []
        for k, tk in enumerate(self.t):
            row = [float(tk)] + [float(v) for v in self.x[k]]
            if derivatives:
                row += [float(v) for v in self.xdot[k]]
            rows.append(row)
        write_csv(path, cols, rows)


def _mesh(h, dt):
    if dt <= 0:
        raise ValueError("dt must be positive")
    M = int(np.ceil(h / min(dt, h / 16.0) - 1e-9))
    M += M % 2
    return M, h / M


def integrate(sys, history, T, dt=None):
    """Simulate ``x' = A x + Ad x(t-h) + AD int_{t-h}^t x`` from `history`.

    Parameters
    ----------
    sys : DelaySystem
    history : HistoryFunction
    T : float
        Horizon.
    dt : float, optional
        Requested step; it is reduced so that ``h / dt`` is an even integer
        and ``dt <= h / 16``.  Defaults to ``h / 64``.

    Returns
    -------
    TrajectoryRecord
        Stops early with ``diverged=True`` once ``|x|`` exceeds 1e12.
    """
    if T <= 0:
        raise ValueError("horizon T must be positive")
    if history.n != sys.n:
        raise ValueError(f"history has dimension {history.n}, system {sys.n}")
    h = sys.h
    M, dt = _mesh(h, dt if dt is not None else h / 64.0)
    K = int(np.ceil(T / dt - 1e-9))
    A, Ad, AD = sys.A, sys.Ad, sys.AD
    n = sys.n

    # window integral of the history by composite Simpson on the mesh
    th = -h + dt * np.arange(M + 1)
    z0 = scipy.integrate.simpson(history.value(th), x=th, axis=0)

    x = np.zeros((K + 1, n))
    xd = np.zeros((K + 1, n))
    z = np.zeros((K + 1, n))
    x[0] = history.value(np.array([0.0]))[0]
    z[0] = z0

    def delayed(k, c):
        """x at time (k + c) dt - h for c in [0, 1]."""
        j = k - M
        tau = (j + c) * dt
        if tau <= 0.0 or j < 0:
            return history.value(np.array([tau]))[0]
        if c == 0.0:
            return x[j]
        # cubic Hermite on [t_j, t_{j+1}]
        y0, y1, d0, d1 = x[j], x[j + 1], xd[j], xd[j + 1]
        c2, c3 = c * c, c * c * c
        return ((2 * c3 - 3 * c2 + 1) * y0 + (c3 - 2 * c2 + c) * dt * d0
                + (-2 * c3 + 3 * c2) * y1 + (c3 - c2) * dt * d1)

    def rhs(xv, zv, xdel):
        return A @ xv + Ad @ xdel + AD @ zv, xv - xdel

    xd[0] = A @ x[0] + Ad @ delayed(0, 0.0) + AD @ z[0]
    diverged = False
    last = K
    for k in range(K):
        d0, d_half, d1 = delayed(k, 0.0), delayed(k, 0.5), None
        k1x, k1z = rhs(x[k], z[k], d0)
        k2x, k2z = rhs(x[k] + 0.5 * dt * k1x, z[k] + 0.5 * dt * k1z, d_half)
        k3x, k3z = rhs(x[k] + 0.5 * dt * k2x, z[k] + 0.5 * dt * k2z, d_half)
        if k + 1 - M <= 0:
            d1 = history.value(np.array([(k + 1 - M) * dt]))[0]
        else:
            d1 = x[k + 1 - M]
        k4x, k4z = rhs(x[k] + dt * k3x, z[k] + dt * k3z, d1)
        x[k + 1] = x[k] + dt / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
        z[k + 1] = z[k] + dt / 6.0 * (k1z + 2 * k2z + 2 * k3z + k4z)
        xd[k + 1] = A @ x[k + 1] + Ad @ d1 + AD @ z[k + 1]
        if not np.all(np.isfinite(x[k + 1])) or np.linalg.norm(x[k + 1]) > DIVERGENCE_NORM:
            diverged = True
            last = k + 1
            break
    t = dt * np.arange(last + 1)
    pn, pdn = history.sup_norms(h)
    rec = TrajectoryRecord(sys, history, t, x[: last + 1], xd[: last + 1], z[: last + 1], dt,
                           pn, pdn, diverged)
    if diverged:
        rec.notes.append(f"state norm exceeded {DIVERGENCE_NORM:g} at t={t[-1]:g}")
    return rec


@dataclass
class EnvelopeResult:
    holds: bool
    worst_margin: float
    worst_time: float


def envelope_check(record, gamma, alpha, rel_tol=1e-6):
    """Check ``|x(t)| <= gamma exp(-alpha t) |phi|_W`` at every sample.

    ``worst_margin`` is the largest ratio of the two sides; the check passes
    when it is at most ``1 + rel_tol``.  A zero history gives margin 0.
    """
    norms = np.linalg.norm(record.x, axis=1)
    bound = gamma * np.exp(-alpha * record.t) * record.phi_norm_w
    if record.phi_norm_w == 0.0:
        worst = 0.0 if np.all(norms == 0.0) else np.inf
        return EnvelopeResult(worst == 0.0, worst, 0.0)
    ratio = norms / bound
    k = int(np.argmax(ratio))
    worst = float(ratio[k])
    return EnvelopeResult(bool(worst <= 1.0 + rel_tol) and not record.diverged, worst, float(record.t[k]))


def _segment(record, k):
    """Times and (x, x') on ``[t_k - h, t_k]`` as two pieces split at t = 0."""
    h, dt = record.system.h, record.dt
    M = int(round(h / dt))
    j0 = k - M
    pieces = []
    if j0 < 0:
        th = dt * np.arange(j0, 1)
        pieces.append((th, record.history.value(th), record.history.derivative(th)))
    lo = max(j0, 0)
    if k > lo or j0 >= 0:
        sl = slice(lo, k + 1)
        pieces.append((record.t[sl], record.x[sl], record.xdot[sl]))
    return pieces


def _integrate(tt, vals):
    if len(tt) < 2:
        return 0.0
    return float(scipy.integrate.simpson(vals, x=tt))


def lyapunov_diagnostic(record, P, S, R, alpha, h=None):
    """``exp(2 alpha t) V(x_t, x'_t)`` at every sample time.

    ``V = xb' P xb + int_{t-h}^t e^{-2 alpha (t-s)} x' S x ds
    + h int_{t-h}^t (s - t + h) e^{-2 alpha (t-s)} x'' R x' ds`` with
    ``xb = [x(t); int_{t-h}^t x]``.  Integrals use Simpson's rule on the
    mesh, split at t = 0 where x' jumps.
    """
    h = record.system.h if h is None else h
    P, S, R = (np.asarray(M, dtype=float) for M in (P, S, R))
    out = np.zeros(len(record.t))
    for k, tk in enumerate(record.t):
        xb = np.concatenate([record.x[k], record.z[k]])
        v = xb @ P @ xb
        for ts, xs, ds in _segment(record, k):
            w = np.exp(-2.0 * alpha * (tk - ts))
            qs = np.einsum("ij,jk,ik->i", xs, S, xs)
            qr = np.einsum("ij,jk,ik->i", ds, R, ds)
            v += _integrate(ts, w * qs) + h * _integrate(ts, (ts - tk + h) * w * qr)
        out[k] = np.exp(2.0 * alpha * tk) * v
    return out


def is_nonincreasing(series, rel_tol=1e-6):
    """True when no step increases by more than ``rel_tol * |series[0]|``."""
    series = np.asarray(series, dtype=float)
    if series.size < 2:
        return True
    return bool(np.max(np.diff(series)) <= rel_tol * abs(series[0]))
