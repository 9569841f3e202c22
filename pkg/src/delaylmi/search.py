"""Delay intervals, maximal decay rates and (h, alpha) feasibility grids."""

import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .io import write_csv
from .sdp import SolverSettings
from .stability import COROLLARY1, FREE_Y, MODES, is_feasible
from .systems import ControlledSystem, DelaySystem

log = logging.getLogger(__name__)

ANALYSIS = "analysis"
CONTROLLER = "controller"
OBSERVER = "observer"


@dataclass(frozen=True)
class LmiOracle:
    """Picklable feasibility query ``(h, alpha) -> bool``.

    Parameters
    ----------
    system : DelaySystem or ControlledSystem
        The delay stored in the system is ignored; each call substitutes `h`.
    kind : str
        ``"analysis"`` (stability LMIs in `mode`), ``"controller"`` or
        ``"observer"`` (synthesis LMIs).
    """

    system: object
    kind: str = ANALYSIS
    mode: str = FREE_Y
    profile: object = None
    settings: SolverSettings = None

    def __post_init__(self):
        if self.kind == ANALYSIS:
            if not isinstance(self.system, DelaySystem):
                raise TypeError("analysis oracle needs a DelaySystem")
            if self.mode not in MODES:
                raise ValueError(f"unknown mode {self.mode!r}")
        elif self.kind in (CONTROLLER, OBSERVER):
            if not isinstance(self.system, ControlledSystem):
                raise TypeError("synthesis oracle needs a ControlledSystem")
        else:
            raise ValueError(f"unknown oracle kind {self.kind!r}")

    def __call__(self, h, alpha):
        if self.kind == ANALYSIS:
            return is_feasible(self.system.with_delay(h), alpha, self.mode, self.profile, self.settings)
        from .synthesis import synthesize_controller, synthesize_observer

        s = self.system
        if self.kind == CONTROLLER:
            r = synthesize_controller(s.A, s.B, h, alpha, self.profile, C=s.C,
                                      settings=self.settings, recertify=False)
        else:
            r = synthesize_observer(s.A, s.C, h, alpha, self.profile, settings=self.settings,
                                    recertify=False)
        return r is not None


@dataclass
class IntervalResult:
    """Feasible delay interval with the brackets that located its ends.

    ``low_bracket = (infeasible h, feasible h)`` and
    ``high_bracket = (feasible h, infeasible h)``; a None entry means the
    interval reaches the end of the search range.
    """

    h_min: float
    h_max: float
    low_bracket: tuple
    high_bracket: tuple
    alpha: float
    evaluations: int
    extra_runs: list = field(default_factory=list)


def _bisect(oracle, alpha, good, bad, tol, count):
    """Shrink ``|good - bad|`` below tol keeping oracle(good) true, oracle(bad) false."""
    while abs(bad - good) > tol:
        mid = 0.5 * (good + bad)
        count[0] += 1
        if oracle(mid, alpha):
            good = mid
        else:
            bad = mid
    return good, bad


def bisect_interval(oracle, alpha=0.0, h_lo=1e-3, h_hi=10.0, tol=1e-4, n_scan=64):
    """Feasible delay interval ``(h_min, h_max)`` for decay rate `alpha`.

    A uniform scan of `n_scan` points seeds the search; the longest feasible
    run is then refined by bisection on both sides.  Further disjoint runs
    trigger a warning and are listed in ``extra_runs``.

    Returns
    -------
    IntervalResult or None
        None when no scanned delay is feasible.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if not 0 < h_lo < h_hi:
        raise ValueError("need 0 < h_lo < h_hi")
    grid = np.linspace(h_lo, h_hi, n_scan)
    feas = np.array([bool(oracle(h, alpha)) for h in grid])
    count = [n_scan]
    if not feas.any():
        return None
    runs = []
    i = 0
    while i < n_scan:
        if feas[i]:
            j = i
            while j + 1 < n_scan and feas[j + 1]:
                j += 1
            runs.append((i, j))
            i = j + 1
        else:
            i += 1
    runs.sort(key=lambda r: (r[1] - r[0], -r[0]), reverse=True)
    i0, i1 = runs[0]
    extra = [(float(grid[a]), float(grid[b])) for a, b in runs[1:]]
    if extra:
        warnings.warn(f"feasible delays form several runs; extra runs {extra} ignored",
                      RuntimeWarning, stacklevel=2)
    if i0 == 0:
        h_min, low = float(grid[0]), (None, float(grid[0]))
    else:
        good, bad = _bisect(oracle, alpha, grid[i0], grid[i0 - 1], tol, count)
        h_min, low = float(good), (float(bad), float(good))
    if i1 == n_scan - 1:
        h_max, high = float(grid[-1]), (float(grid[-1]), None)
    else:
        good, bad = _bisect(oracle, alpha, grid[i1], grid[i1 + 1], tol, count)
        h_max, high = float(good), (float(good), float(bad))
    return IntervalResult(h_min, h_max, low, high, alpha, count[0], extra)


def max_alpha_for_h(oracle, h, alpha_hi=None, tol=1e-4):
    """Largest feasible decay rate at delay `h` (to within `tol`), or None.

    Without `alpha_hi` an infeasible upper bracket is found by doubling from 1.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if not oracle(h, 0.0):
        return None
    if alpha_hi is None:
        alpha_hi = 1.0
        while oracle(h, alpha_hi):
            alpha_hi *= 2.0
            if alpha_hi > 1e6:
                raise RuntimeError("decay rate appears unbounded")
    elif oracle(h, alpha_hi):
        return float(alpha_hi)
    good, bad = 0.0, float(alpha_hi)
    while bad - good > tol:
        mid = 0.5 * (good + bad)
        if oracle(h, mid):
            good = mid
        else:
            bad = mid
    return good


@dataclass
class SweepResult:
    """Feasibility table over ``h_grid x alpha_grid``.

    ``feasible[i, j]`` refers to ``(h_grid[i], alpha_grid[j])``; points whose
    evaluation raised are False in the table and listed in ``errors``.
    """

    h_grid: np.ndarray
    alpha_grid: np.ndarray
    feasible: np.ndarray
    errors: dict = field(default_factory=dict)

    def frontier(self):
        """``{h: largest feasible grid alpha}`` for every h with a feasible alpha."""
        out = {}
        for i, h in enumerate(self.h_grid):
            ok = np.flatnonzero(self.feasible[i])
            if len(ok):
                out[float(h)] = float(self.alpha_grid[ok].max())
        return out

    def records(self):
        return [(float(h), float(a), bool(self.feasible[i, j]))
                for i, h in enumerate(self.h_grid) for j, a in enumerate(self.alpha_grid)]

    def to_csv(self, path):
        write_csv(path, ["h", "alpha", "feasible"], self.records())

    def frontier_to_csv(self, path):
        write_csv(path, ["h", "alpha_star"], sorted(self.frontier().items()))


def _evaluate(args):
    oracle, h, a = args
    try:
        return bool(oracle(h, a)), None
    except Exception as exc:  # recorded per point, the sweep goes on
        return False, f"{type(exc).__name__}: {exc}"


def sweep(oracle, h_grid, alpha_grid, workers=None):
    """Evaluate `oracle` on every grid point.

    ``workers > 1`` evaluates points in a process pool (the oracle must be
    picklable, as :class:`LmiOracle` is).
    """
    h_grid = np.atleast_1d(np.asarray(h_grid, dtype=float))
    alpha_grid = np.atleast_1d(np.asarray(alpha_grid, dtype=float))
    if h_grid.size == 0 or alpha_grid.size == 0:
        raise ValueError("sweep grids must be nonempty")
    jobs = [(oracle, h, a) for h in h_grid for a in alpha_grid]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_evaluate, jobs, chunksize=4))
    else:
        results = [_evaluate(j) for j in jobs]
    feas = np.zeros((h_grid.size, alpha_grid.size), dtype=bool)
    errors = {}
    for k, (ok, err) in enumerate(results):
        i, j = divmod(k, alpha_grid.size)
        feas[i, j] = ok
        if err is not None:
            errors[(float(h_grid[i]), float(alpha_grid[j]))] = err
            log.warning("sweep point h=%g alpha=%g failed: %s", h_grid[i], alpha_grid[j], err)
    return SweepResult(h_grid, alpha_grid, feas, errors)
