"""Small dense semidefinite solver for compiled LMI problems.

The solver is a feasible log-det barrier method: for increasing weights
``tau`` it minimizes ``tau * c @ x - sum_k log det(-F_k(x)) - sum_j log(-f_j(x))``
with damped Newton steps.  Feasibility questions are phrased as margin
problems (``min t  s.t.  F_k(x) <= t I`` on every strict block), which always
have a strictly feasible start, so no infeasible-start machinery is needed.
Objective problems first run that margin problem until it reaches ``t < 0``
and then continue from the interior point found.

Barrier multipliers ``Z_k = S_k^{-1} / tau`` at the last center give the
lower bound ``c @ x - N / tau`` reported as :attr:`Solution.lower_bound`.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible_certificate"
MAX_ITER = "max_iter"
NUMERICAL_FAILURE = "numerical_failure"
UNBOUNDED = "unbounded"


@dataclass
class SolverSettings:
    max_iterations: int = 200
    duality_gap_tol: float = 1e-9
    step_fraction: float = 0.98
    feasibility_margin: float = 1e-7
    barrier_growth: float = 20.0

    def __post_init__(self):
        if self.max_iterations <= 0 or self.duality_gap_tol <= 0 or self.feasibility_margin <= 0:
            raise ValueError("solver settings must be positive")
        if not 0.0 < self.step_fraction < 1.0:
            raise ValueError("step_fraction must lie in (0, 1)")
        if self.barrier_growth <= 1.0:
            raise ValueError("barrier_growth must exceed 1")

    @classmethod
    def from_dict(cls, d):
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown solver settings {sorted(unknown)}")
        return cls(**d)


@dataclass
class Solution:
    status: str
    x: np.ndarray
    assignment: dict
    objective_value: float
    block_max_eigs: dict
    lower_bound: float = -np.inf
    feasible: bool = None
    iterations: int = 0
    history: list = field(default_factory=list)
    message: str = ""

    @property
    def margin(self):
        """Most positive normalized block eigenvalue (negative means strict feasibility)."""
        return max(self.block_max_eigs.values()) if self.block_max_eigs else -np.inf


class _Unbounded(Exception):
    pass


class _NumericalFailure(Exception):
    pass


class _Barrier:
    """Barrier data for ``F_k(x) = G0_k + sum x_i G_ki < 0`` and LP rows."""

    def __init__(self, blocks, lp_a0, lp_A, c):
        self.blocks = [(G0, G, G.reshape(G.shape[0], -1)) for G0, G in blocks]
        self.lp_a0 = lp_a0
        self.lp_A = lp_A              # (k, nx)
        self.c = c
        self.N = sum(G0.shape[0] for G0, _ in blocks) + len(lp_a0)

    def slacks(self, x):
        """Per-block inverse Cholesky factors of -F_k(x) and LP slacks, or None."""
        linvs = []
        for G0, _, Gf in self.blocks:
            d = G0.shape[0]
            S = -(G0 + (x @ Gf).reshape(d, d))
            try:
                L = np.linalg.cholesky(S)
            except np.linalg.LinAlgError:
                return None
            linvs.append(scipy.linalg.solve_triangular(L, np.eye(d), lower=True, check_finite=False))
        s = -(self.lp_a0 + self.lp_A @ x)
        if np.any(s <= 0.0):
            return None
        return linvs, s

    def barrier_value(self, sl):
        linvs, s = sl
        val = -np.sum(np.log(s))
        for Li in linvs:
            val += 2.0 * np.sum(np.log(np.diag(Li)))
        return val

    def derivatives(self, sl):
        linvs, s = sl
        nx = len(self.c)
        g = np.zeros(nx)
        H = np.zeros((nx, nx))
        for Li, (_, G, _) in zip(linvs, self.blocks):
            V = (Li[None] @ G @ Li.T[None]).reshape(nx, -1)
            d = Li.shape[0]
            g += V[:, :: d + 1].sum(axis=1)
            H += V @ V.T
        if len(s):
            As = self.lp_A / s[:, None]
            g += As.sum(axis=0)
            H += As.T @ As
        return g, H

    def max_step(self, sl, dx):
        linvs, s = sl
        amax = np.inf
        for Li, (G0, _, Gf) in zip(linvs, self.blocks):
            d = G0.shape[0]
            D = (dx @ Gf).reshape(d, d)
            Y = Li @ D @ Li.T
            lam = np.linalg.eigvalsh(0.5 * (Y + Y.T))[-1]
            if lam > 0:
                amax = min(amax, 1.0 / lam)
        ds = self.lp_A @ dx
        pos = ds > 0
        if np.any(pos):
            amax = min(amax, np.min(s[pos] / ds[pos]))
        return amax


def _newton_solve(H, g):
    """Solve H dx = -g with Jacobi scaling and escalating diagonal regularization."""
    dg = np.diag(H)
    d = np.sqrt(np.where(dg > 0, dg, 1.0))
    Hs = H / d[:, None] / d[None, :]
    gs = g / d
    reg = 0.0
    for attempt in range(4):
        try:
            cf = scipy.linalg.cho_factor(Hs + reg * np.eye(len(g)), lower=True, check_finite=False)
            return scipy.linalg.cho_solve(cf, -gs, check_finite=False) / d
        except scipy.linalg.LinAlgError:
            reg = 1e-12 if reg == 0.0 else reg * 1e3
    raise _NumericalFailure("Newton system could not be factorized after 3 regularizations")


def _run_barrier(bar, x0, settings, budget, stop_below=None, stop_bound_above=None, tau0=1.0):
    """Barrier path following from strictly feasible `x0`.

    After each centering the iterate is pushed along the central-path
    tangent ``-H^{-1} c`` to the next weight before re-centering.

    Returns (x, tau, iterations, converged, history), where history holds
    ``c @ x`` at every center.  ``stop_below`` ends the run as soon as
    ``c @ x`` drops below it; ``stop_bound_above`` ends it once the lower
    bound ``c @ x - N / tau`` at a center exceeds it.
    """
    x = np.array(x0, dtype=float)
    sl = bar.slacks(x)
    if sl is None:
        raise ValueError("starting point is not strictly feasible")
    tau = tau0
    iters = 0
    history = []
    scale_x = 1.0 + np.max(np.abs(x), initial=0.0)
    while True:
        H = None
        centered = False
        for _ in range(50):
            if iters >= budget:
                return x, tau, iters, False, history
            g, H = bar.derivatives(sl)
            g = g + tau * bar.c
            dx = _newton_solve(H, g)
            lam2 = abs(float(g @ dx))
            if lam2 / 2.0 <= 1e-8:
                centered = True
                break
            a = min(1.0, settings.step_fraction * bar.max_step(sl, dx))
            phi0 = tau * float(bar.c @ x) + bar.barrier_value(sl)
            sln = None
            while a >= 1e-14:
                xn = x + a * dx
                sln = bar.slacks(xn)
                if sln is not None:
                    phin = tau * float(bar.c @ xn) + bar.barrier_value(sln)
                    if phin <= phi0 - 0.25 * a * lam2:
                        break
                a *= 0.5
                sln = None
            iters += 1
            if sln is None:
                # round-off limits further progress at this weight
                centered = True
                break
            x, sl = xn, sln
            if stop_below is not None and float(bar.c @ x) < stop_below:
                history.append(float(bar.c @ x))
                return x, tau, iters, True, history
            if np.max(np.abs(x)) > 1e10 * scale_x:
                raise _Unbounded("iterates diverge")
            if a * np.max(np.abs(dx)) < 1e-15 * scale_x:
                # no further progress possible at this weight
                centered = True
                break
        if not centered:
            continue
        obj = float(bar.c @ x)
        history.append(obj)
        if bar.N / tau <= settings.duality_gap_tol * (1.0 + abs(obj)):
            return x, tau, iters, True, history
        if stop_bound_above is not None and obj - bar.N / tau >= stop_bound_above:
            return x, tau, iters, True, history
        if obj < -1e10 * scale_x:
            raise _Unbounded("objective unbounded below")
        new_tau = tau * settings.barrier_growth
        if H is not None:
            dx = _newton_solve(H, (new_tau - tau) * bar.c)
            a = min(1.0, 0.9 * bar.max_step(sl, dx))
            if a > 0:
                xn = x + a * dx
                sln = bar.slacks(xn)
                if sln is not None:
                    x, sl = xn, sln
                    if stop_below is not None and float(bar.c @ x) < stop_below:
                        history.append(float(bar.c @ x))
                        return x, new_tau, iters, True, history
        tau = new_tau


def _augment_margin(blocks, lp_a0, lp_A, strict_blocks, strict_rows):
    """Add a trailing variable t with -t I on the selected blocks/rows."""
    nb = []
    for (G0, G), st in zip(blocks, strict_blocks):
        d = G0.shape[0]
        Gt = (-np.eye(d) if st else np.zeros((d, d)))[None]
        nb.append((G0, np.concatenate([G, Gt], axis=0)))
    col = np.where(strict_rows, -1.0, 0.0)[:, None]
    nA = np.hstack([lp_A, col]) if len(lp_a0) else np.zeros((0, lp_A.shape[1] + 1))
    return nb, lp_a0, nA


def _interior_for(blocks, lp_a0, lp_A, x0, settings, budget):
    """Return a point strictly inside all given blocks/rows, or None."""
    bar0 = _Barrier(blocks, lp_a0, lp_A, np.zeros(len(x0)))
    if bar0.slacks(x0) is not None:
        return x0, 0
    nb, na0, nA = _augment_margin(blocks, lp_a0, lp_A, [True] * len(blocks),
                                  np.ones(len(lp_a0), dtype=bool))
    t0 = _initial_t(nb, na0, nA, x0)
    c = np.zeros(len(x0) + 1)
    c[-1] = 1.0
    bar = _Barrier(nb, na0, nA, c)
    start = np.append(x0, t0)
    x, _, it, _, _ = _run_barrier(bar, start, settings, budget, stop_below=-1e-8)
    t = x[-1]
    if t >= 0:
        return None, it
    # the last step may have run far along an unbounded direction; stay
    # close to the start on the segment, where the margin is still negative
    target = -min(1.0, -t) / 2.0
    lam = (t0 - target) / (t0 - t)
    return (start + lam * (x - start))[:-1], it


def _initial_t(blocks, lp_a0, lp_A, x):
    """Margin value making (x, t) strictly feasible for augmented data."""
    xt = np.append(x, 0.0)
    t = 0.0
    for G0, G in blocks:
        if np.any(G[-1]):
            F = G0 + np.tensordot(xt, G, axes=1)
            t = max(t, np.linalg.eigvalsh(F)[-1])
    if len(lp_a0):
        rows = lp_a0 + lp_A @ xt
        mask = lp_A[:, -1] != 0
        if np.any(mask):
            t = max(t, np.max(rows[mask]))
    return t + 1.0


def _solution(form, x, status, obj, lower, iters, history, feasible=None, message=""):
    return Solution(
        status=status,
        x=x,
        assignment=form.assignment(x),
        objective_value=obj,
        block_max_eigs=form.max_eigs(x),
        lower_bound=lower,
        feasible=feasible,
        iterations=iters,
        history=history,
        message=message,
    )


def solve(form, settings=None, x0=None, early_exit=False):
    """Solve a compiled :class:`~delaylmi.lmi.StandardForm`.

    Without an objective this answers the strict-feasibility question through
    the margin problem ``min t  s.t.  F_k(x) <= t I`` (strict blocks) and sets
    ``feasible`` iff the optimal ``t < -feasibility_margin``.  With
    ``early_exit`` the margin run stops as soon as the answer is decided
    (a point with ``t < -eps``, or a lower bound ``>= -eps``); the reported
    objective is then only an upper bound on the optimal margin.

    With an objective it minimizes ``form.c @ x`` over the strict interior.
    """
    settings = settings or SolverSettings()
    blocks = [(B.G0, B.G) for B in form.blocks]
    strict_blocks = [B.strict for B in form.blocks]
    nx = form.nx
    x_start = np.zeros(nx) if x0 is None else np.asarray(x0, dtype=float)
    budget = settings.max_iterations
    used = 0
    try:
        # non-strict constraints need an interior start before any margin run
        ns_blocks = [b for b, st in zip(blocks, strict_blocks) if not st]
        ns_rows = ~form.lp_strict
        xs, it = _interior_for(ns_blocks, form.lp_a0[ns_rows], form.lp_A[ns_rows],
                               x_start, settings, budget)
        used += it
        if xs is None:
            return _solution(form, x_start, INFEASIBLE, np.inf, 0.0, used, [],
                             feasible=False, message="non-strict constraints have no interior")

        nb, na0, nA = _augment_margin(blocks, form.lp_a0, form.lp_A, strict_blocks, form.lp_strict)
        t0 = _initial_t(nb, na0, nA, xs)
        cm = np.zeros(nx + 1)
        cm[-1] = 1.0
        bar = _Barrier(nb, na0, nA, cm)

        if not form.has_objective:
            eps = settings.feasibility_margin
            stops = dict(stop_below=-eps, stop_bound_above=-eps) if early_exit else {}
            xt, tau, it, conv, hist = _run_barrier(bar, np.append(xs, t0), settings, budget - used,
                                                   **stops)
            used += it
            x, t = xt[:-1], float(xt[-1])
            lower = t - bar.N / tau
            feasible = t < -eps
            if not conv:
                status = MAX_ITER
            elif feasible:
                status = OPTIMAL
            else:
                status = INFEASIBLE if lower >= -eps else OPTIMAL
            return _solution(form, x, status, t, lower, used, hist, feasible=feasible)

        xt, tau, it, conv, _ = _run_barrier(bar, np.append(xs, t0), settings, budget - used,
                                            stop_below=0.0)
        used += it
        if xt[-1] >= 0.0:
            status = INFEASIBLE if conv else MAX_ITER
            return _solution(form, xt[:-1], status, np.inf, float(xt[-1]), used, [],
                             feasible=False, message="no strictly feasible point")
        bar2 = _Barrier(blocks, form.lp_a0, form.lp_A, form.c)
        x, tau, it, conv, hist = _run_barrier(bar2, xt[:-1], settings, budget - used)
        used += it
        obj = float(form.c @ x)
        status = OPTIMAL if conv else MAX_ITER
        return _solution(form, x, status, obj, obj - bar2.N / tau, used, hist, feasible=True)
    except _Unbounded as exc:
        return _solution(form, x_start, UNBOUNDED, -np.inf, -np.inf, used, [],
                         feasible=None, message=str(exc))
    except _NumericalFailure as exc:
        return _solution(form, x_start, NUMERICAL_FAILURE, np.nan, -np.inf, used, [],
                         feasible=None, message=str(exc))


def maximize(form, settings=None, x0=None):
    """Maximize the problem's objective; ``objective_value`` is reported as maximized."""
    if not form.has_objective:
        raise ValueError("problem has no objective")
    sol = solve(form, settings, x0)
    if np.isfinite(sol.objective_value):
        sol.objective_value = -sol.objective_value
        sol.lower_bound = -sol.lower_bound
        sol.history = [-v for v in sol.history]
    return sol
