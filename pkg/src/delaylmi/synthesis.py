"""Gain synthesis through a congruence change of variables.

Controller: ``x' = A x + (1/h) B K int_{t-h}^t x`` (the averaged full state
is fed back).  Observer: the estimation error obeys
``e' = A e - (1/h) L C int_{t-h}^t e``.  Both use the structured slack
``Z F_eps`` so the products with the unknown gain become linear.
"""

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import lmi
from .lmi import LmiConstraint, LmiProblem, Variable, bmat, he
from .matrix_core import MatrixError, as_mat, min_singular_value, spectral_abscissa
from .sdp import SolverSettings
from .stability import (
    FREE_Y,
    SLACK_BOUND,
    SolverFailure,
    StabilityCertificate,
    lyapunov_variables,
    _solve_checked,
    certify,
    phi_expr,
    phi_matrix,
    positivity_expr,
)
from .systems import EPS_NEQ_ONE, DelaySystem

log = logging.getLogger(__name__)

CONTROLLER = "controller"
OBSERVER = "observer"
COND_WARN = 1e8


class SynthesisError(RuntimeError):
    """The LMIs were feasible but the gain could not be recovered."""


@dataclass
class GainResult:
    """Synthesized gain with the data needed to re-check it.

    Attributes
    ----------
    kind : str
        ``"controller"`` (gain K, m x n) or ``"observer"`` (gain L, n x p).
    gain : ndarray
        K or L.
    congruence : ndarray
        The solved X (controller) or Z (observer).
    transformed_gain : ndarray
        Kbar = K X or Lbar = Z.T L as returned by the solver.
    system : DelaySystem
        Closed loop (controller) or error system (observer).
    certificate : StabilityCertificate or None
        Independent certificate of `system` at the same (alpha, h); None if
        re-certification failed.
    """

    kind: str
    gain: np.ndarray
    congruence: np.ndarray
    transformed_gain: np.ndarray
    profile: object
    alpha: float
    h: float
    system: DelaySystem
    certificate: StabilityCertificate = None
    condition_number: float = np.nan
    values: dict = field(default_factory=dict)
    feasibility_margin: float = np.nan

    @property
    def recertified(self):
        return self.certificate is not None


def _check_profile(profile):
    return (profile or EPS_NEQ_ONE).check()


def _assemble(n, h, alpha, p_definite, extra, decay_of):
    """Problem with the Lyapunov variables, positivity LMI and ``decay_of(P, S, R)``."""
    lyap_vars, (P, S, R), norm_cons = lyapunov_variables(n, h, p_definite)
    beta1 = Variable("beta1", lmi.SCALAR, 1, lmi.POSITIVE_SCALAR)
    cons = [
        LmiConstraint(positivity_expr(P, S, R, beta1, alpha, h, n), lmi.POSITIVE_DEFINITE_SENSE, "positivity"),
        LmiConstraint(decay_of(P, S, R), lmi.NEGATIVE_DEFINITE, "decay"),
    ] + norm_cons
    return LmiProblem(lyap_vars + [beta1] + extra, cons)


def build_controller_problem(A, B, h, alpha, profile=None):
    """LMIs in (P > 0, S, R, X, Kbar, beta1) for the averaged-state feedback."""
    A = as_mat(A, "A")
    B = as_mat(B, "B")
    n, m = B.shape
    if A.shape != (n, n):
        raise MatrixError(f"A must be {n}x{n}, got {A.shape}")
    profile = _check_profile(profile)
    X = Variable("X", lmi.RECTANGULAR, (n, n), bound=SLACK_BOUND)
    Kbar = Variable("Kbar", lmi.RECTANGULAR, (m, n), bound=SLACK_BOUND)
    Xe = X.expr()
    row = bmat([[A @ Xe, np.zeros((n, n)), -Xe, B @ Kbar.expr()]])
    slack = he(row.T @ profile.matrix(n))

    def decay(P, S, R):
        return phi_expr(P, S, R, alpha, h, n) + slack

    return _assemble(n, h, alpha, True, [X, Kbar], decay), profile


def build_observer_problem(A, C, h, alpha, profile=None):
    """LMIs in (P, S, R, Z, Lbar, beta1) for the error system."""
    A = as_mat(A, "A")
    C = as_mat(C, "C")
    p, n = C.shape
    if A.shape != (n, n):
        raise MatrixError(f"A must be {n}x{n}, got {A.shape}")
    profile = _check_profile(profile)
    Z = Variable("Z", lmi.RECTANGULAR, (n, n), bound=SLACK_BOUND)
    Lbar = Variable("Lbar", lmi.RECTANGULAR, (n, p), bound=SLACK_BOUND)
    N = np.hstack([A, np.zeros((n, n)), -np.eye(n), np.zeros((n, n))])
    Fe = profile.matrix(n)
    row = bmat([[np.zeros((n, 3 * n)), -(Lbar.expr() @ C)]])
    slack = he(N.T @ Z.expr() @ Fe) + he(row.T @ Fe)

    def decay(P, S, R):
        return phi_expr(P, S, R, alpha, h, n) + slack

    return _assemble(n, h, alpha, False, [Z, Lbar], decay), profile


def _invertible(M, name):
    smin = min_singular_value(M)
    norm = np.linalg.norm(M, 2)
    if not smin > 1e-9 * norm:
        raise SynthesisError(f"{name} is numerically singular (sigma_min={smin:.3e}, norm={norm:.3e})")
    cond = norm / smin
    if cond > COND_WARN:
        warnings.warn(f"{name} is ill-conditioned (cond={cond:.3e}); check the re-certification",
                      RuntimeWarning, stacklevel=3)
    return cond


def _recertify(system, alpha, settings):
    try:
        return certify(system, alpha, FREE_Y, settings=settings)
    except SolverFailure as exc:
        log.warning("re-certification failed: %s", exc)
        return None


def synthesize_controller(A, B, h, alpha=0.0, profile=None, C=None, settings=None, recertify=True):
    """State-feedback gain K for ``x' = A x + (1/h) B K int x``.

    Parameters
    ----------
    A, B : array_like
        System matrices (n x n, n x m).
    h : float
        Delay window length.
    alpha : float
        Decay rate to guarantee.
    profile : EpsilonProfile, optional
        Slack structure; defaults to ``e2 = 0``.
    C : array_like, optional
        Output matrix.  Only the identity is supported here; use an
        observer for partial measurements.

    Returns
    -------
    GainResult or None
        None when the LMIs are infeasible.
    """
    n = np.shape(A)[0]
    if C is not None and not np.array_equal(as_mat(C, "C"), np.eye(n)):
        raise ValueError("controller synthesis needs C = I; use an observer-based design otherwise")
    settings = settings or SolverSettings()
    problem, profile = build_controller_problem(A, B, h, alpha, profile)
    sol = _solve_checked(lmi.compile(problem), settings, np.shape(A)[0], h)
    if not sol.feasible:
        return None
    X, Kbar = sol.assignment["X"], sol.assignment["Kbar"]
    cond = _invertible(X, "X")
    K = np.linalg.solve(X.T, Kbar.T).T
    B = as_mat(B, "B")
    closed = DelaySystem(as_mat(A, "A"), None, B @ K / h, h)
    cert = _recertify(closed, alpha, settings) if recertify else None
    return GainResult(CONTROLLER, K, X, Kbar, profile, alpha, h, closed, cert, cond,
                      dict(sol.assignment), sol.objective_value)


def synthesize_observer(A, C, h, alpha=0.0, profile=None, settings=None, recertify=True):
    """Observer gain L making ``e' = A e - (1/h) L C int e`` alpha-stable.

    Returns
    -------
    GainResult or None
        None when the LMIs are infeasible.
    """
    settings = settings or SolverSettings()
    problem, profile = build_observer_problem(A, C, h, alpha, profile)
    sol = _solve_checked(lmi.compile(problem), settings, np.shape(A)[0], h)
    if not sol.feasible:
        return None
    Z, Lbar = sol.assignment["Z"], sol.assignment["Lbar"]
    cond = _invertible(Z, "Z")
    L = np.linalg.solve(Z.T, Lbar)
    error_sys = DelaySystem(as_mat(A, "A"), None, -L @ as_mat(C, "C") / h, h)
    cert = _recertify(error_sys, alpha, settings) if recertify else None
    return GainResult(OBSERVER, L, Z, Lbar, profile, alpha, h, error_sys, cert, cond,
                      dict(sol.assignment), sol.objective_value)


def pre_congruence_decay(result, A, B):
    """Decay matrix of the structured-slack analysis LMI before the change of variables.

    With ``Z = X^{-1}``, ``P = Xb^{-T} P2 Xb^{-1}`` (``Xb = diag(X, X)``),
    ``S = X^{-T} S2 X^{-1}`` and ``R = X^{-T} R2 X^{-1}`` this is the matrix
    the congruence by ``diag(X, X, X, X)`` maps onto the synthesis LMI.
    """
    if result.kind != CONTROLLER:
        raise ValueError("only controller results carry a congruence X")
    X = result.congruence
    n = X.shape[0]
    Xi = np.linalg.inv(X)
    Xbi = np.kron(np.eye(2), Xi)
    v = result.values
    P = Xbi.T @ v["P"] @ Xbi
    S = Xi.T @ v["S"] @ Xi
    R = Xi.T @ v["R"] @ Xi
    K = result.gain
    F4 = np.hstack([as_mat(A), np.zeros((n, n)), -np.eye(n), as_mat(B) @ K])
    T = F4.T @ Xi @ result.profile.matrix(n)
    M = phi_matrix(0.5 * (P + P.T), 0.5 * (S + S.T), 0.5 * (R + R.T), result.alpha, result.h) + T + T.T
    return M


def assemble_closed_loop(A, B, C, K, L, h):
    """Observer-based loop in the state ``[x; e]``.

    ``X' = [[A - B K, B K], [0, A]] X + [[0, 0], [0, -(1/h) L C]] int X``.
    """
    A = as_mat(A, "A")
    B = as_mat(B, "B")
    C = as_mat(C, "C")
    K = as_mat(K, "K")
    L = as_mat(L, "L")
    n = A.shape[0]
    if B.shape[0] != n or K.shape != (B.shape[1], n) or C.shape[1] != n or L.shape != (n, C.shape[0]):
        raise MatrixError("non-conformal A, B, C, K, L")
    Z = np.zeros((n, n))
    Aa = np.block([[A - B @ K, B @ K], [Z, A]])
    ADa = np.block([[Z, Z], [Z, -L @ C / h]])
    return DelaySystem(Aa, None, ADa, h)


def separation_check(A, B, K, observer_cert):
    """True iff ``A - B K`` is Hurwitz and the observer certificate re-verifies."""
    if observer_cert is None:
        return False
    ok, _ = observer_cert.verify()
    return bool(ok) and spectral_abscissa(as_mat(A) - as_mat(B) @ as_mat(K)) < 0.0
