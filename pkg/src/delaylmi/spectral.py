"""Rightmost characteristic roots by Chebyshev collocation.

The solution operator's generator acts on functions ``u`` on ``[-h, 0]`` as
``u -> u'`` with the boundary rule

    u'(0) = A u(0) + Ad u(-h) + AD int_{-h}^0 u.

Collocating on Chebyshev points gives a matrix whose eigenvalues approach
the roots of ``det Delta(s) = 0`` with

    Delta(s) = s I - A - Ad exp(-h s) - AD (1 - exp(-h s)) / s.

The rightmost candidates are polished by Newton's method on ``det Delta``.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .io import write_csv

log = logging.getLogger(__name__)


class SpectralError(RuntimeError):
    pass


@dataclass(frozen=True)
class SpectralSettings:
    N: int = 20
    convergence: float = 1e-6
    max_N: int = 80
    candidates: int = 6

    def __post_init__(self):
        if self.N < 5:
            raise ValueError("N must be at least 5")
        if self.convergence <= 0:
            raise ValueError("convergence tolerance must be positive")


def cheb(N):
    """Chebyshev differentiation matrix and points ``x_j = cos(pi j / N)``."""
    x = np.cos(np.pi * np.arange(N + 1) / N)
    c = np.ones(N + 1)
    c[0] = c[-1] = 2.0
    c *= (-1.0) ** np.arange(N + 1)
    X = np.tile(x, (N + 1, 1)).T
    dX = X - X.T
    D = np.outer(c, 1.0 / c) / (dX + np.eye(N + 1))
    D -= np.diag(D.sum(axis=1))
    return D, x


def clenshaw_curtis_weights(N):
    """Quadrature weights on ``x_j = cos(pi j / N)`` for integrals over [-1, 1]."""
    theta = np.pi * np.arange(N + 1) / N
    w = np.zeros(N + 1)
    v = np.ones(N - 1)
    inner = slice(1, N)
    if N % 2 == 0:
        w[0] = w[N] = 1.0 / (N * N - 1)
        for k in range(1, N // 2):
            v -= 2.0 * np.cos(2 * k * theta[inner]) / (4 * k * k - 1)
        v -= np.cos(N * theta[inner]) / (N * N - 1)
    else:
        w[0] = w[N] = 1.0 / (N * N)
        for k in range(1, (N - 1) // 2 + 1):
            v -= 2.0 * np.cos(2 * k * theta[inner]) / (4 * k * k - 1)
    w[inner] = 2.0 * v / N
    return w


def generator_matrix(sys, N):
    """Collocated generator, size ``n (N + 1)``; node 0 is ``theta = 0``."""
    n, h = sys.n, sys.h
    D, x = cheb(N)
    w = clenshaw_curtis_weights(N) * (h / 2.0)
    M = np.kron((2.0 / h) * D, np.eye(n))
    top = np.kron(w[None, :], sys.AD)
    top[:, :n] += sys.A
    top[:, N * n:] += sys.Ad
    M[:n, :] = top
    return M


def _distributed_symbol(s, h):
    """``q(s) = (1 - exp(-h s)) / s`` and ``q'(s)``, with q(0) = h."""
    z = h * s
    if abs(z) < 1e-3:
        q = h * (1 - z / 2 + z * z / 6 - z ** 3 / 24)
        dq = h * h * (-0.5 + z / 3 - z * z / 8 + z ** 3 / 30)
        return q, dq
    e = np.exp(-z)
    q = (1.0 - e) / s
    dq = (h * e * s - (1.0 - e)) / (s * s)
    return q, dq


def characteristic_matrix(sys, s):
    """``Delta(s)`` and its derivative with respect to s."""
    n, h = sys.n, sys.h
    e = np.exp(-h * s)
    q, dq = _distributed_symbol(s, h)
    I = np.eye(n)
    Delta = s * I - sys.A - sys.Ad * e - sys.AD * q
    dDelta = I + h * e * sys.Ad - sys.AD * dq
    return Delta, dDelta


def _scale(sys, s):
    return abs(s) + np.linalg.norm(sys.A, 2) + np.linalg.norm(sys.Ad, 2) * abs(np.exp(-sys.h * s)) \
        + np.linalg.norm(sys.AD, 2) * sys.h + 1.0


def newton_refine(sys, s0, tol=1e-13, max_iter=50):
    """Polish a root of ``det Delta`` from `s0`.

    Returns (root, residual, converged), the residual being
    ``|det Delta(root)| / scale^n``.
    """
    s = complex(s0)
    converged = False
    for _ in range(max_iter):
        Delta, dDelta = characteristic_matrix(sys, s)
        try:
            step = 1.0 / np.trace(np.linalg.solve(Delta, dDelta))
        except np.linalg.LinAlgError:
            converged = True  # exactly singular: s is a root
            break
        s -= step
        if abs(step) <= tol * (1.0 + abs(s)):
            converged = True
            break
    Delta, _ = characteristic_matrix(sys, s)
    resid = abs(np.linalg.det(Delta)) / _scale(sys, s) ** sys.n
    return s, resid, converged


def _rightmost_at(sys, N, settings):
    ev = np.linalg.eigvals(generator_matrix(sys, N))
    order = np.argsort(-ev.real)
    best = None
    for s0 in ev[order[: settings.candidates]]:
        s, resid, ok = newton_refine(sys, s0)
        if not ok or resid > 1e-8 or abs(s - s0) > 0.5 * (1.0 + abs(s0)):
            continue
        if best is None or s.real > best.real:
            best = s
    if best is None:
        raise SpectralError(f"no candidate root converged at N={N}")
    if best.imag < 0 and abs(best.imag) > 1e-12:
        best = best.conjugate()
    elif abs(best.imag) <= 1e-12:
        best = complex(best.real, 0.0)
    return best, ev


def rightmost_root(sys, settings=None, return_spectrum=False):
    """Rightmost characteristic root of `sys`, checked for convergence in N.

    Parameters
    ----------
    sys : DelaySystem
    settings : SpectralSettings, optional

    Returns
    -------
    complex
        The root with largest real part (nonnegative imaginary part).  With
        ``return_spectrum`` the collocation eigenvalues are returned as well.

    Raises
    ------
    SpectralError
        When the root does not settle as N grows up to ``settings.max_N``.
    """
    settings = settings or SpectralSettings()
    N = settings.N
    prev = None
    while N <= settings.max_N:
        try:
            root, ev = _rightmost_at(sys, N, settings)
        except SpectralError:
            root, ev = None, None
        if root is not None and prev is not None and abs(root - prev) <= settings.convergence:
            return (root, ev) if return_spectrum else root
        prev = root
        N += 5
    raise SpectralError(f"rightmost root not converged up to N={settings.max_N}")


@dataclass
class SpectralFrontier:
    """Per-delay rightmost roots; ``alpha_spec = -Re(root)`` (negative when unstable)."""

    h: np.ndarray
    roots: np.ndarray
    errors: dict = field(default_factory=dict)

    @property
    def alpha_spec(self):
        return -self.roots.real

    def to_csv(self, path):
        rows = [(float(h), float(r.real), float(r.imag)) for h, r in zip(self.h, self.roots)]
        write_csv(path, ["h", "re_rightmost", "im_rightmost"], rows)


def spectral_abscissa_frontier(sys, h_grid, settings=None):
    """Rightmost root for every delay in `h_grid`; failures are recorded as NaN."""
    h_grid = np.atleast_1d(np.asarray(h_grid, dtype=float))
    if h_grid.size == 0:
        raise ValueError("h_grid must be nonempty")
    roots = np.full(h_grid.size, np.nan + 0j)
    errors = {}
    for i, h in enumerate(h_grid):
        try:
            roots[i] = rightmost_root(sys.with_delay(h), settings)
        except SpectralError as exc:
            errors[float(h)] = str(exc)
            log.warning("spectral oracle failed at h=%g: %s", h, exc)
    return SpectralFrontier(h_grid, roots, errors)


def alpha_spec(sys, h, settings=None):
    """``-Re`` of the rightmost root at delay `h`."""
    return -rightmost_root(sys.with_delay(h), settings).real


def stability_crossings(sys, h_lo, h_hi, n_scan=200, tol=1e-6, settings=None):
    """Delays in ``[h_lo, h_hi]`` where the rightmost root crosses the imaginary axis."""
    grid = np.linspace(h_lo, h_hi, n_scan)
    re = np.array([-alpha_spec(sys, h, settings) for h in grid])
    out = []
    for i in range(n_scan - 1):
        if np.sign(re[i]) != np.sign(re[i + 1]):
            a, b, fa = grid[i], grid[i + 1], re[i]
            while b - a > tol:
                m = 0.5 * (a + b)
                fm = -alpha_spec(sys, m, settings)
                if np.sign(fm) == np.sign(fa):
                    a, fa = m, fm
                else:
                    b = m
            out.append(0.5 * (a + b))
    return out
