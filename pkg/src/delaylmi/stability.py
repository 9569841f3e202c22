"""Exponential-stability certificates from Wirtinger-based LMIs.

The extended state used by every block matrix below is

    xi = [x(t), x(t-h), x'(t), (1/h) integral_{t-h}^{t} x(s) ds]

and the system constraint reads ``F4 @ xi = 0``.  Three formulations of the
decay condition are available:

``freeY``
    ``Phi(alpha, h) + He(F4.T Y) < 0`` with a free slack ``Y`` (n x 4n).
``corollary1``
    the same with the structured slack ``Y = Z F_eps``.
``nullspace``
    the slack eliminated: ``N.T Phi N < 0`` with ``N`` spanning ker F4.

Each is paired with the lower-bound LMI on the functional that yields beta1.
"""

import dataclasses
import logging
from dataclasses import dataclass, field

import numpy as np

from . import lmi
from .lmi import Affine, LmiConstraint, LmiProblem, Variable, blockdiag, bmat, he
from .matrix_core import block, null_space_basis, min_singular_value
from .sdp import INFEASIBLE, OPTIMAL, MAX_ITER, SolverSettings, maximize, solve
from .systems import DelaySystem, EpsilonProfile, EPS_NEQ_ONE

log = logging.getLogger(__name__)

FREE_Y = "freeY"
COROLLARY1 = "corollary1"
NULLSPACE = "nullspace"
MODES = (FREE_Y, COROLLARY1, NULLSPACE)

SLACK_BOUND = 1e3


class SolverFailure(RuntimeError):
    """The SDP solver ended without a usable answer."""


def expm1_minus_x(x):
    """``exp(x) - 1 - x`` without cancellation for small ``x >= 0``."""
    if x < 0.1:
        term = x * x / 2.0
        total = 0.0
        k = 2
        while abs(term) > 1e-18 * abs(total) or k < 4:
            total += term
            k += 1
            term *= x / k
        return total
    return np.expm1(x) - x


def expm1_minus_x_ratio(x):
    """``(exp(x) - 1 - x) / (x^2 / 2)``, equal to 1 at x = 0 and safe for tiny x."""
    if x < 0.1:
        term, total, k = 1.0, 0.0, 0
        while term > 1e-18 * total or k < 2:
            total += term
            k += 1
            term *= x / (k + 2)
        return total
    return expm1_minus_x(x) / (0.5 * x * x)


def exp_factor(alpha, h):
    """``4 alpha^2 h / (exp(2 alpha h) - 2 alpha h - 1)``, equal to 2/h at alpha = 0."""
    if alpha < 0 or h <= 0:
        raise ValueError("need alpha >= 0 and h > 0")
    return 2.0 / (h * expm1_minus_x_ratio(2.0 * alpha * h))


def build_F_matrices(n, h):
    """F0, F1(h), F2, F3 in the ``xi`` column convention."""
    if n < 1 or h <= 0:
        raise ValueError("need n >= 1 and h > 0")
    I = np.eye(n)
    O = np.zeros((n, n))
    F0 = block([[O, O, I, O], [I, -I, O, O]])
    F1 = block([[I, O, O, O], [O, O, O, h * I]])
    F2 = block([[I, -I, O, O], [I, I, O, -2.0 * I]])
    F3 = block([[O, O, I, O]])
    return {"F0": F0, "F1": F1, "F2": F2, "F3": F3}


def build_F4(sys):
    """System constraint ``[A, Ad, -I, h AD]``."""
    return np.hstack([sys.A, sys.Ad, -np.eye(sys.n), sys.h * sys.AD])


def phi_expr(P, S, R, alpha, h, n):
    """``Phi(alpha, h)`` as an affine expression in P, S, R (variables or expressions)."""
    P, S, R = Affine.lift(P), Affine.lift(S), Affine.lift(R)
    F = build_F_matrices(n, h)
    F0, F1, F2, F3 = F["F0"], F["F1"], F["F2"], F["F3"]
    w = np.exp(-2.0 * alpha * h)
    term_p = he(F1.T @ P @ (F0 + alpha * F1))
    S_bar = blockdiag(S, -w * S, np.zeros((2 * n, 2 * n)))
    R_tilde = blockdiag(R, 3.0 * R)
    return term_p + S_bar + (h * h) * (F3.T @ R @ F3) - w * (F2.T @ R_tilde @ F2)


def phi_matrix(P, S, R, alpha, h):
    """Numeric ``Phi(alpha, h)``; kept separate from :func:`phi_expr` on purpose."""
    n = S.shape[0]
    F = build_F_matrices(n, h)
    F0, F1, F2, F3 = F["F0"], F["F1"], F["F2"], F["F3"]
    w = np.exp(-2.0 * alpha * h)
    T = F1.T @ P @ (F0 + alpha * F1)
    Z2 = np.zeros((2 * n, 2 * n))
    S_bar = block([[S, np.zeros((n, 3 * n))],
                   [np.zeros((n, n)), -w * S, np.zeros((n, 2 * n))],
                   [np.zeros((2 * n, 2 * n)), Z2]])
    R_tilde = block([[R, np.zeros((n, n))], [np.zeros((n, n)), 3.0 * R]])
    return T + T.T + S_bar + h * h * F3.T @ R @ F3 - w * F2.T @ R_tilde @ F2


def positivity_expr(P, S, R, beta1, alpha, h, n):
    """Lower-bound LMI on the functional (must be positive definite)."""
    P, S, R = Affine.lift(P), Affine.lift(S), Affine.lift(R)
    w = np.exp(-2.0 * alpha * h)
    k = exp_factor(alpha, h)
    Rblk = bmat([[(h * h) * R, (-h) * R], [(-h) * R, R]])
    Sblk = blockdiag(np.zeros((n, n)), S)
    E = np.zeros((2 * n, 2 * n))
    E[:n, :n] = np.eye(n)
    return P + (w / h) * Sblk + k * Rblk - _scaled(beta1, E)


def _scaled(v, M):
    """``v * M`` for a scalar variable ``v`` and constant matrix ``M``."""
    return Affine(np.zeros(M.shape), {v: v.basis()[:, 0, 0][:, None, None] * M[None]})


def _scalar_times_identity(v, d):
    return _scaled(v, np.eye(d))


def positivity_matrix(P, S, R, beta1, alpha, h):
    n = S.shape[0]
    w = np.exp(-2.0 * alpha * h)
    k = exp_factor(alpha, h)
    M = P.copy()
    M[n:, n:] += (w / h) * S
    M += k * block([[h * h * R, -h * R], [-h * R, R]])
    M[:n, :n] -= beta1 * np.eye(n)
    return M


@dataclass
class TheoremProblem:
    """An assembled LMI problem with handles to its named variables."""

    problem: LmiProblem
    vars: dict
    alpha: float
    h: float
    mode: str
    profile: EpsilonProfile = None
    nullspace: np.ndarray = None


def _normalization(Ph, Sh, Rh):
    """Scale fixing ``Ph <= p I, Sh <= s I, Rh <= r I`` with ``p + s + r = 1``, ``p >= 0``.

    The LMIs are homogeneous, so some scale must be fixed; this one excludes
    the zero solution, and infeasible problems keep a positive optimal margin.
    """
    s_ = Variable("_s", lmi.SCALAR, 1)
    r_ = Variable("_r", lmi.SCALAR, 1)
    p_ = 1.0 - s_.expr() - r_.expr()
    cons = [
        LmiConstraint(Ph.expr() - _affine_times_identity(p_, Ph.shape[0]),
                      lmi.NEGATIVE_SEMIDEFINITE, "P<=pI"),
        LmiConstraint(Sh.expr() - _scalar_times_identity(s_, Sh.shape[0]),
                      lmi.NEGATIVE_SEMIDEFINITE, "S<=sI"),
        LmiConstraint(Rh.expr() - _scalar_times_identity(r_, Rh.shape[0]),
                      lmi.NEGATIVE_SEMIDEFINITE, "R<=rI"),
        LmiConstraint(-p_, lmi.NEGATIVE_SEMIDEFINITE, "p>=0"),
    ]
    return [s_, r_], cons


def _delay_scaling(n, h):
    """``diag(I, h I)``: the second half of ``[x; int x]`` is O(h)."""
    return np.diag(np.concatenate([np.ones(n), np.full(n, h)]))


def lyapunov_variables(n, h, p_definite=False):
    """Decision variables for P, S, R in delay-scaled form.

    The solver works with ``P_hat = D P D`` (``D = diag(I, hI)``),
    ``S_hat = h S`` and ``R_hat = h^2 R``, which keeps all three of comparable
    size for small and large delays alike.

    Returns
    -------
    variables : list
        ``[P_hat, S_hat, R_hat, _s, _r]``.
    exprs : tuple
        Affine expressions for the unscaled ``(P, S, R)``.
    constraints : list
        The scale-fixing constraints.
    """
    Ph = Variable("P_hat", lmi.SYMMETRIC, 2 * n, lmi.POSITIVE_DEFINITE if p_definite else lmi.FREE)
    Sh = Variable("S_hat", lmi.SYMMETRIC, n, lmi.POSITIVE_DEFINITE)
    Rh = Variable("R_hat", lmi.SYMMETRIC, n, lmi.POSITIVE_DEFINITE)
    Di = np.linalg.inv(_delay_scaling(n, h))
    exprs = (Di @ Ph.expr() @ Di, (1.0 / h) * Sh.expr(), (1.0 / (h * h)) * Rh.expr())
    norm_vars, cons = _normalization(Ph, Sh, Rh)
    return [Ph, Sh, Rh] + norm_vars, exprs, cons


def natural_values(values, n, h):
    """Add the unscaled ``P, S, R`` to a solver assignment holding the scaled ones."""
    out = dict(values)
    if "P_hat" in values:
        Di = np.linalg.inv(_delay_scaling(n, h))
        out["P"] = Di @ values["P_hat"] @ Di
        out["S"] = values["S_hat"] / h
        out["R"] = values["R_hat"] / (h * h)
    return out


def _affine_times_identity(e, d):
    """``e * I_d`` for a 1x1 affine expression ``e``."""
    I = np.eye(d)
    return Affine(e.const[0, 0] * I, {v: C[:, 0, 0][:, None, None] * I[None] for v, C in e.terms.items()})


def build_theorem1(sys, alpha, mode=FREE_Y, profile=None, objective=False, p_definite=False):
    """Assemble the decay-rate LMIs for `sys` at decay rate `alpha`.

    ``objective=True`` adds "maximize beta1".  ``p_definite`` additionally
    requires P > 0.
    """
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    n, h = sys.n, sys.h
    lyap_vars, (P, S, R), norm_cons = lyapunov_variables(n, h, p_definite)
    beta1 = Variable("beta1", lmi.SCALAR, 1, lmi.POSITIVE_SCALAR)
    Phi = phi_expr(P, S, R, alpha, h, n)
    F4 = build_F4(sys)
    variables = lyap_vars + [beta1]
    N = None
    if mode == FREE_Y:
        Y = Variable("Y", lmi.RECTANGULAR, (n, 4 * n), bound=SLACK_BOUND)
        variables.append(Y)
        main = Phi + he(F4.T @ Y.expr())
    elif mode == COROLLARY1:
        profile = (profile or EPS_NEQ_ONE).check()
        Z = Variable("Z", lmi.RECTANGULAR, (n, n), bound=SLACK_BOUND)
        variables.append(Z)
        main = Phi + he(F4.T @ Z.expr() @ profile.matrix(n))
    else:
        N = null_space_basis(F4)
        main = lmi.congruence(Phi, N)
    cons = [
        LmiConstraint(positivity_expr(P, S, R, beta1, alpha, h, n), lmi.POSITIVE_DEFINITE_SENSE, "positivity"),
        LmiConstraint(main, lmi.NEGATIVE_DEFINITE, "decay"),
    ] + norm_cons
    problem = LmiProblem(variables, cons, beta1.expr() if objective else None)
    return TheoremProblem(problem, {v.name: v for v in variables}, alpha, h, mode, profile, N)


@dataclass
class StabilityCertificate:
    """Solved certificate of alpha-exponential stability for one system and delay."""

    mode: str
    alpha: float
    h: float
    system: DelaySystem
    P: np.ndarray
    S: np.ndarray
    R: np.ndarray
    beta1: float
    beta2: float
    gamma: float
    slack: np.ndarray = None
    profile: EpsilonProfile = None
    margins: dict = field(default_factory=dict)
    feasibility_margin: float = None

    def lmi_values(self):
        """Numeric values of the two LMIs, evaluated without the LMI model."""
        Phi = phi_matrix(self.P, self.S, self.R, self.alpha, self.h)
        F4 = build_F4(self.system)
        n = self.system.n
        if self.mode == FREE_Y:
            T = F4.T @ self.slack
            main = Phi + T + T.T
        elif self.mode == COROLLARY1:
            T = F4.T @ self.slack @ self.profile.matrix(n)
            main = Phi + T + T.T
        else:
            N = null_space_basis(F4)
            main = N.T @ Phi @ N
        pos = positivity_matrix(self.P, self.S, self.R, self.beta1, self.alpha, self.h)
        return {"decay": 0.5 * (main + main.T), "positivity": 0.5 * (pos + pos.T)}

    def verify(self, eps=1e-7):
        """Independent eigenvalue re-check of every strict inequality with margin `eps`."""
        vals = self.lmi_values()
        checks = {
            "decay": np.linalg.eigvalsh(vals["decay"])[-1] <= -eps,
            "positivity": np.linalg.eigvalsh(vals["positivity"])[0] >= eps,
            "S>0": np.linalg.eigvalsh(self.S)[0] >= eps,
            "R>0": np.linalg.eigvalsh(self.R)[0] >= eps,
            "beta1>0": self.beta1 >= eps,
            "gamma>=1": self.gamma >= 1.0,
        }
        return all(checks.values()), checks


def beta2_value(P, S, R, h):
    lp = np.linalg.eigvalsh(P)[-1]
    ls = np.linalg.eigvalsh(S)[-1]
    lr = np.linalg.eigvalsh(R)[-1]
    return (1.0 + h * h) * lp + h * ls + (h ** 3 / 2.0) * lr


def _solve_checked(form, settings, n, h):
    sol = solve(form, settings, early_exit=True)
    if sol.status not in (OPTIMAL, INFEASIBLE, MAX_ITER):
        raise SolverFailure(f"solver returned {sol.status}: {sol.message}")
    if sol.status == MAX_ITER and not sol.feasible:
        log.warning("solver hit its iteration cap; treating point as infeasible")
    sol.assignment = natural_values(sol.assignment, n, h)
    return sol


def feasibility(sys, alpha, mode=FREE_Y, profile=None, settings=None):
    """Stage-one margin solve; returns the solver :class:`~delaylmi.sdp.Solution`.

    The assignment holds the unscaled ``P, S, R`` next to the solver's own
    scaled variables.
    """
    settings = settings or SolverSettings()
    tp = build_theorem1(sys, alpha, mode, profile)
    return _solve_checked(lmi.compile(tp.problem), settings, sys.n, sys.h)


def is_feasible(sys, alpha, mode=FREE_Y, profile=None, settings=None):
    return bool(feasibility(sys, alpha, mode, profile, settings).feasible)


def certificate_from_values(sys, alpha, mode, values, profile=None, margins=None, t_star=None):
    P, S, R = values["P"], values["S"], values["R"]
    beta1 = float(values["beta1"])
    beta2 = beta2_value(P, S, R, sys.h)
    gamma = float(np.sqrt(beta2 / beta1)) if beta1 > 0 and beta2 > 0 else np.inf
    slack = values.get("Y") if mode == FREE_Y else values.get("Z") if mode == COROLLARY1 else None
    return StabilityCertificate(mode, alpha, sys.h, sys, P, S, R, beta1, beta2, gamma,
                                slack, profile, margins or {}, t_star)


def certify(sys, alpha, mode=FREE_Y, profile=None, settings=None):
    """Certificate with maximized beta1, or None when the LMIs are infeasible.

    Stage one decides strict feasibility.  Stage two maximizes beta1 under
    the same scale normalization with every strict LMI tightened by a margin
    ``m = max(eps, |t*| / 2)`` so the returned point keeps a verified margin.
    """
    settings = settings or SolverSettings()
    if mode == COROLLARY1:
        profile = (profile or EPS_NEQ_ONE).check()
    first = feasibility(sys, alpha, mode, profile, settings)
    if not first.feasible:
        return None
    eps = settings.feasibility_margin
    t_star = first.objective_value
    m = max(eps, 0.5 * abs(t_star))
    tp = build_theorem1(sys, alpha, mode, profile, objective=True)
    form = lmi.compile(tp.problem, margin=m)
    # beta1 only sets the overshoot bound gamma; a loose gap is plenty
    loose = dataclasses.replace(settings, duality_gap_tol=max(settings.duality_gap_tol, 1e-6))
    second = maximize(form, loose)
    values = natural_values(second.assignment, sys.n, sys.h) if second.feasible and second.status in (OPTIMAL, MAX_ITER) else None
    cert = None
    if values is not None:
        cert = certificate_from_values(sys, alpha, mode, values, profile, second.block_max_eigs, t_star)
        if not cert.verify(eps)[0]:
            cert = None
    if cert is None:
        log.info("beta1 maximization unusable (%s); keeping stage-one point", second.status)
        cert = certificate_from_values(sys, alpha, mode, first.assignment, profile,
                                       first.block_max_eigs, t_star)
        if not cert.verify(eps)[0]:
            raise SolverFailure("feasible solution failed independent re-verification")
    return cert


def corollary_slack_nonsingular(cert):
    if cert.mode != COROLLARY1:
        raise ValueError("certificate is not in corollary1 mode")
    Z = np.asarray(cert.slack)
    return min_singular_value(Z) > 1e-9 * np.linalg.norm(Z, 2)
