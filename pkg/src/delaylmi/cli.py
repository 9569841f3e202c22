"""Command line interface.

Exit codes: 0 success (feasible), 2 infeasible, 1 error.
"""

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import __version__, io
from .sdp import SolverSettings
from .stability import COROLLARY1, FREE_Y, NULLSPACE, SolverFailure, certify
from .systems import ControlledSystem, DelaySystem, PROFILES

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INFEASIBLE = 2

SETTINGS_ENV = "DELAYLMI_SOLVER_SETTINGS"

MODES = {
    "th1": (FREE_Y, None),
    "cor1-eps1": (COROLLARY1, PROFILES["eps1"]),
    "cor1-epsneq1": (COROLLARY1, PROFILES["epsneq1"]),
    "nullspace": (NULLSPACE, None),
}

log = logging.getLogger("delaylmi")


class CliError(Exception):
    pass


def _settings(args):
    path = args.settings or os.environ.get(SETTINGS_ENV)
    if not path:
        return SolverSettings()
    try:
        with open(path) as f:
            return SolverSettings.from_dict(json.load(f))
    except (OSError, ValueError, TypeError) as exc:
        raise CliError(f"cannot read solver settings {path}: {exc}") from exc


def _load(path, want=None):
    sysobj = io.load_system(path)
    if want is DelaySystem and not isinstance(sysobj, DelaySystem):
        raise CliError(f"{path} holds a controlled system; this command needs A, Ad, AD")
    if want is ControlledSystem and not isinstance(sysobj, ControlledSystem):
        raise CliError(f"{path} holds an analysis system; this command needs A, B, C")
    return sysobj


def parse_grid(text):
    """``start:stop:num`` (inclusive linspace) or a comma-separated list."""
    text = text.strip()
    if not text:
        return np.array([])
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise CliError(f"grid {text!r} must look like start:stop:num")
        a, b, num = float(parts[0]), float(parts[1]), int(parts[2])
        if num < 0:
            raise CliError("grid size must be nonnegative")
        return np.linspace(a, b, num)
    return np.array([float(v) for v in text.split(",") if v.strip()])


def parse_history(text, n):
    """``constant:v1,...,vn`` or ``poly:c0_1,...,c0_n;c1_1,...`` (coefficients of theta**k)."""
    from .dde import PolynomialHistory

    kind, _, body = text.partition(":")
    try:
        if kind == "constant":
            vals = [float(v) for v in body.split(",")]
            hist = PolynomialHistory.constant(vals)
        elif kind == "poly":
            rows = [[float(v) for v in row.split(",")] for row in body.split(";")]
            hist = PolynomialHistory(rows)
        else:
            raise CliError(f"unknown history kind {kind!r} (use constant: or poly:)")
    except ValueError as exc:
        raise CliError(f"bad history {text!r}: {exc}") from exc
    if hist.n != n:
        raise CliError(f"history has {hist.n} components, system needs {n}")
    return hist


def _summary(cert):
    return (f"feasible: mode={cert.mode} alpha={cert.alpha:g} h={cert.h:g} "
            f"beta1={cert.beta1:.6g} beta2={cert.beta2:.6g} gamma={cert.gamma:.6g}")


def cmd_analyze(args):
    sysobj = _load(args.system, DelaySystem)
    if args.h is not None:
        sysobj = sysobj.with_delay(args.h)
    mode, profile = MODES[args.mode]
    cert = certify(sysobj, args.alpha, mode, profile, _settings(args))
    if cert is None:
        print(f"infeasible: mode={args.mode} alpha={args.alpha:g} h={sysobj.h:g}")
        return EXIT_INFEASIBLE
    print(_summary(cert))
    if args.out:
        io.save_certificate(args.out, cert)
        print(f"certificate written to {args.out}")
    return EXIT_OK


def _oracle(sysobj, args, settings):
    from .search import ANALYSIS, LmiOracle

    if isinstance(sysobj, ControlledSystem):
        kind = args.kind or "controller"
        return LmiOracle(sysobj, kind, profile=PROFILES[args.profile], settings=settings)
    if args.kind not in (None, ANALYSIS):
        raise CliError("controller/observer searches need a controlled system file")
    mode, profile = MODES["th1" if args.mode == "spectral" else args.mode]
    return LmiOracle(sysobj, ANALYSIS, mode, profile, settings)


def cmd_interval(args):
    from .search import bisect_interval

    sysobj = _load(args.system)
    res = bisect_interval(_oracle(sysobj, args, _settings(args)), args.alpha,
                          args.h_lo, args.h_hi, args.tol)
    if res is None:
        print(f"infeasible: no delay in [{args.h_lo:g}, {args.h_hi:g}] passes at alpha={args.alpha:g}")
        return EXIT_INFEASIBLE
    print(f"h_min={res.h_min:.6f} h_max={res.h_max:.6f} (alpha={args.alpha:g}, tol={args.tol:g})")
    for a, b in res.extra_runs:
        print(f"warning: additional feasible run [{a:.4f}, {b:.4f}] ignored")
    if args.out:
        io.write_csv(args.out, ["alpha", "h_min", "h_max"], [(args.alpha, res.h_min, res.h_max)])
    return EXIT_OK


def cmd_sweep(args):
    from .search import sweep

    sysobj = _load(args.system)
    hg, ag = parse_grid(args.h_grid), parse_grid(args.alpha_grid)
    if hg.size == 0 or ag.size == 0:
        raise CliError("h and alpha grids must be nonempty")
    res = sweep(_oracle(sysobj, args, _settings(args)), hg, ag, workers=args.workers)
    res.to_csv(args.out)
    front = res.frontier()
    cols, rows = ["h", "alpha_star"], [(h, front.get(float(h), float("nan"))) for h in hg]
    if args.mode == "spectral":
        from .spectral import spectral_abscissa_frontier

        if not isinstance(sysobj, DelaySystem):
            raise CliError("the spectral column needs an analysis system file")
        spec = spectral_abscissa_frontier(sysobj, hg)
        cols.append("alpha_spec")
        rows = [r + (float(a),) for r, a in zip(rows, spec.alpha_spec)]
    if args.frontier_out:
        io.write_csv(args.frontier_out, cols, rows)
    print(f"{int(res.feasible.sum())} of {res.feasible.size} grid points feasible; table in {args.out}")
    for k, msg in res.errors.items():
        print(f"warning: point h={k[0]:g} alpha={k[1]:g} failed: {msg}")
    return EXIT_OK


def cmd_synthesize(args):
    from .synthesis import synthesize_controller, synthesize_observer

    sysobj = _load(args.system, ControlledSystem)
    if args.h is not None:
        sysobj = sysobj.with_delay(args.h)
    profile = PROFILES[args.profile]
    settings = _settings(args)
    if args.kind == "controller":
        res = synthesize_controller(sysobj.A, sysobj.B, sysobj.h, args.alpha, profile, C=sysobj.C,
                                    settings=settings)
    else:
        res = synthesize_observer(sysobj.A, sysobj.C, sysobj.h, args.alpha, profile, settings=settings)
    if res is None:
        print(f"infeasible: {args.kind} synthesis at alpha={args.alpha:g} h={sysobj.h:g}")
        return EXIT_INFEASIBLE
    name = "K" if args.kind == "controller" else "L"
    print(f"{name} = {np.array2string(res.gain, precision=6)}")
    print(f"cond({'X' if name == 'K' else 'Z'}) = {res.condition_number:.3g}")
    if res.certificate is None:
        print("warning: the resulting delay system did not re-certify")
    else:
        print("re-certified: " + _summary(res.certificate))
    if args.out:
        doc = {
            "kind": res.kind,
            "gain": res.gain.tolist(),
            "transformed_gain": res.transformed_gain.tolist(),
            "congruence": res.congruence.tolist(),
            "condition_number": res.condition_number,
            "alpha": res.alpha,
            "h": res.h,
            "profile": list(res.profile.values),
            "recertified": res.recertified,
            "version": __version__,
        }
        io.save_json(args.out, doc)
        print(f"gain written to {args.out}")
    if args.certificate_out and res.certificate is not None:
        io.save_certificate(args.certificate_out, res.certificate)
    return EXIT_OK


def _load_gain(path, kinds):
    try:
        with open(path) as f:
            doc = json.load(f)
        if doc.get("kind") not in kinds:
            raise CliError(f"{path} holds a {doc.get('kind')!r} gain, expected one of {kinds}")
        return doc["kind"], np.array(doc["gain"], dtype=float)
    except (OSError, ValueError, KeyError, AttributeError) as exc:
        raise CliError(f"cannot read gain file {path}: {exc}") from exc


def static_feedback_gain(kind, K):
    """Gain for the reconstructed-state law ``u = -K xhat``.

    A synthesized controller acts as ``u = (1/h) K int x``, i.e. ``+K`` on the
    window average, so its static counterpart is ``-K``.  Gains of kind
    ``static_feedback`` are taken as they are.
    """
    return -K if kind == "controller" else K


def cmd_simulate(args):
    from .dde import envelope_check, integrate

    sysobj = _load(args.system)
    if args.h is not None:
        sysobj = sysobj.with_delay(args.h)
    if isinstance(sysobj, ControlledSystem):
        from .matrix_core import spectral_abscissa
        from .spectral import rightmost_root
        from .synthesis import assemble_closed_loop

        if not (args.controller and args.observer):
            raise CliError("a controlled system needs --controller and --observer gain files")
        K = static_feedback_gain(*_load_gain(args.controller, ("controller", "static_feedback")))
        _, L = _load_gain(args.observer, ("observer",))
        plant = sysobj
        sysobj = assemble_closed_loop(plant.A, plant.B, plant.C, K, L, plant.h)
        hurwitz = spectral_abscissa(plant.A - plant.B @ K) < 0.0
        err = DelaySystem(plant.A, None, -L @ plant.C / plant.h, plant.h)
        print(f"separation check: A-BK {'Hurwitz' if hurwitz else 'NOT Hurwitz'}, "
              f"rightmost error-system root real part {rightmost_root(err).real:.6g}")
    hist = parse_history(args.history, sysobj.n)
    rec = integrate(sysobj, hist, args.T, args.dt)
    if args.out:
        rec.to_csv(args.out, derivatives=args.derivatives)
    print(f"simulated {len(rec.t)} samples, dt={rec.dt:.6g}, |phi|_W={rec.phi_norm_w:.6g}")
    if rec.diverged:
        print("DIVERGED: " + "; ".join(rec.notes))
    else:
        print(f"final |x| = {np.linalg.norm(rec.x[-1]):.6g}")
    if args.certificate:
        cert = io.load_certificate(args.certificate)
        if abs(cert.h - sysobj.h) > 1e-12 or cert.system.n != sysobj.n:
            print("warning: certificate was issued for a different delay or dimension")
        env = envelope_check(rec, cert.gamma, cert.alpha)
        verdict = "ENVELOPE HOLDS" if env.holds else "ENVELOPE VIOLATED"
        print(f"{verdict} (worst margin {env.worst_margin:.6g} at t={env.worst_time:.4g})")
    return EXIT_OK


def cmd_verify_inequalities(args):
    from .inequalities import run_trials

    rep = run_trials(args.trials, args.seed)
    text = rep.text()
    if args.out:
        io.atomic_write_text(args.out, text)
    sys.stdout.write(text)
    return EXIT_OK if rep.ok else EXIT_ERROR


def cmd_verify_certificate(args):
    cert = io.load_certificate(args.certificate)
    ok, checks = cert.verify(args.eps)
    for k, v in checks.items():
        print(f"{k}: {'ok' if v else 'FAILED'}")
    return EXIT_OK if ok else EXIT_INFEASIBLE


def build_parser():
    p = argparse.ArgumentParser(prog="delaylmi", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--settings", help=f"solver settings JSON (default: ${SETTINGS_ENV})")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="certify alpha-stability at the file's delay")
    a.add_argument("system")
    a.add_argument("--alpha", type=float, default=0.0)
    a.add_argument("--mode", choices=sorted(MODES), default="th1")
    a.add_argument("--h", type=float, help="override the delay in the file")
    a.add_argument("--out", help="certificate JSON to write")
    a.set_defaults(func=cmd_analyze)

    i = sub.add_parser("interval", help="feasible delay interval")
    i.add_argument("system")
    i.add_argument("--alpha", type=float, default=0.0)
    i.add_argument("--mode", choices=sorted(MODES), default="th1")
    i.add_argument("--kind", choices=["analysis", "controller", "observer"])
    i.add_argument("--profile", choices=sorted(PROFILES), default="epsneq1")
    i.add_argument("--tol", type=float, default=1e-4)
    i.add_argument("--h-lo", type=float, default=1e-3)
    i.add_argument("--h-hi", type=float, default=10.0)
    i.add_argument("--out", help="CSV row alpha,h_min,h_max")
    i.set_defaults(func=cmd_interval)

    s = sub.add_parser("sweep", help="feasibility over an (h, alpha) grid")
    s.add_argument("system")
    s.add_argument("--h-grid", required=True, help="start:stop:num or comma list")
    s.add_argument("--alpha-grid", required=True, help="start:stop:num or comma list")
    s.add_argument("--mode", choices=sorted(MODES) + ["spectral"], default="th1",
                   help="'spectral' runs th1 and adds the spectral frontier column")
    s.add_argument("--kind", choices=["analysis", "controller", "observer"])
    s.add_argument("--profile", choices=sorted(PROFILES), default="epsneq1")
    s.add_argument("--out", required=True, help="grid CSV h,alpha,feasible")
    s.add_argument("--frontier-out", help="frontier CSV h,alpha_star[,alpha_spec]")
    s.add_argument("--workers", type=int, default=None)
    s.set_defaults(func=cmd_sweep)

    y = sub.add_parser("synthesize", help="controller or observer gain")
    y.add_argument("system")
    y.add_argument("--alpha", type=float, default=0.0)
    y.add_argument("--kind", choices=["controller", "observer"], default="controller")
    y.add_argument("--profile", choices=sorted(PROFILES), default="epsneq1")
    y.add_argument("--h", type=float, help="override the delay in the file")
    y.add_argument("--out", help="gain JSON to write")
    y.add_argument("--certificate-out", help="certificate of the resulting delay system")
    y.set_defaults(func=cmd_synthesize)

    m = sub.add_parser("simulate", help="integrate from an initial history")
    m.add_argument("system")
    m.add_argument("--history", required=True, help="constant:1,1 or poly:c0;c1;...")
    m.add_argument("--T", type=float, default=20.0)
    m.add_argument("--dt", type=float, default=None)
    m.add_argument("--h", type=float, help="override the delay in the file")
    m.add_argument("--certificate", help="certificate JSON for the envelope check")
    m.add_argument("--controller", help="controller gain JSON (controlled systems); "
                   "a synthesized gain K is applied as u = -K xhat")
    m.add_argument("--observer", help="observer gain JSON (controlled systems)")
    m.add_argument("--derivatives", action="store_true", help="add derivative columns")
    m.add_argument("--out", help="trajectory CSV")
    m.set_defaults(func=cmd_simulate)

    q = sub.add_parser("verify-inequalities", help="randomized integral-inequality checks")
    q.add_argument("--trials", type=int, default=200)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--out", help="report text file")
    q.set_defaults(func=cmd_verify_inequalities)

    c = sub.add_parser("verify-certificate", help="re-check a certificate file without solving")
    c.add_argument("certificate")
    c.add_argument("--eps", type=float, default=1e-7, help="required margin on every strict LMI")
    c.set_defaults(func=cmd_verify_certificate)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (CliError, io.FileFormatError, SolverFailure, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
