"""System and certificate files (JSON) and CSV output.

Every write goes to a temporary file in the target directory and is then
renamed over the destination, so readers never see a partial file.
"""

import csv
import datetime
import io
import json
import os
import tempfile

import numpy as np

from .systems import ControlledSystem, DelaySystem, EpsilonProfile

ANALYSIS_KEYS = {"n", "A", "Ad", "AD", "h"}
CONTROLLED_KEYS = {"n", "A", "B", "C", "h"}


class FileFormatError(ValueError):
    pass


def atomic_write_text(path, text):
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(columns, rows, timestamp=None):
    """CSV document whose first line is a ``# generated`` comment."""
    stamp = timestamp or datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
    buf = io.StringIO()
    buf.write(f"# generated {stamp}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_csv(path, columns, rows):
    atomic_write_text(path, csv_text(columns, rows))


def read_csv(path):
    """Rows of a CSV written by :func:`write_csv` (comment lines skipped)."""
    with open(path, newline="") as f:
        lines = [ln for ln in f if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    return header, [row for row in reader]


def _matrix(doc, key, n_rows=None, n_cols=None):
    try:
        M = np.array(doc[key], dtype=float)
    except (TypeError, ValueError) as exc:
        raise FileFormatError(f"{key!r} is not a numeric matrix") from exc
    if M.ndim != 2:
        raise FileFormatError(f"{key!r} must be a nested list of rows")
    if n_rows is not None and M.shape[0] != n_rows:
        raise FileFormatError(f"{key!r} must have {n_rows} rows, got {M.shape[0]}")
    if n_cols is not None and M.shape[1] != n_cols:
        raise FileFormatError(f"{key!r} must have {n_cols} columns, got {M.shape[1]}")
    return M


def system_from_dict(doc):
    """Build a DelaySystem or ControlledSystem from a parsed system document."""
    if not isinstance(doc, dict):
        raise FileFormatError("system file must hold a JSON object")
    keys = set(doc)
    if "B" in keys or "C" in keys:
        allowed, required = CONTROLLED_KEYS, CONTROLLED_KEYS
    else:
        allowed, required = ANALYSIS_KEYS, {"n", "A", "h"}
    unknown = keys - allowed
    if unknown:
        raise FileFormatError(f"unknown keys {sorted(unknown)}")
    missing = required - keys
    if missing:
        raise FileFormatError(f"missing keys {sorted(missing)}")
    n = doc["n"]
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise FileFormatError("'n' must be a positive integer")
    h = doc["h"]
    if not isinstance(h, (int, float)) or isinstance(h, bool):
        raise FileFormatError("'h' must be a number")
    A = _matrix(doc, "A", n, n)
    try:
        if allowed is CONTROLLED_KEYS:
            return ControlledSystem(A, _matrix(doc, "B", n), _matrix(doc, "C", None, n), h)
        Ad = _matrix(doc, "Ad", n, n) if "Ad" in doc else None
        AD = _matrix(doc, "AD", n, n) if "AD" in doc else None
        return DelaySystem(A, Ad, AD, h)
    except ValueError as exc:
        raise FileFormatError(str(exc)) from exc


def load_system(path):
    try:
        with open(path) as f:
            doc = json.load(f)
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"{path}: malformed JSON ({exc})") from exc
    return system_from_dict(doc)


def system_to_dict(sys):
    d = {"n": sys.n}
    if isinstance(sys, ControlledSystem):
        d.update(A=sys.A.tolist(), B=sys.B.tolist(), C=sys.C.tolist(), h=sys.h)
    else:
        d.update(A=sys.A.tolist(), Ad=sys.Ad.tolist(), AD=sys.AD.tolist(), h=sys.h)
    return d


def certificate_to_dict(cert):
    from . import __version__

    return {
        "mode": cert.mode,
        "alpha": cert.alpha,
        "h": cert.h,
        "system": system_to_dict(cert.system),
        "P": cert.P.tolist(),
        "S": cert.S.tolist(),
        "R": cert.R.tolist(),
        "slack": None if cert.slack is None else np.asarray(cert.slack).tolist(),
        "profile": None if cert.profile is None else list(cert.profile.values),
        "beta1": cert.beta1,
        "beta2": cert.beta2,
        "gamma": cert.gamma,
        "margins": {k: float(v) for k, v in cert.margins.items()},
        "feasibility_margin": cert.feasibility_margin,
        "version": __version__,
    }


def certificate_from_dict(doc):
    from .stability import StabilityCertificate

    try:
        sys = system_from_dict(doc["system"])
        prof = doc.get("profile")
        return StabilityCertificate(
            mode=doc["mode"],
            alpha=float(doc["alpha"]),
            h=float(doc["h"]),
            system=sys,
            P=np.array(doc["P"], dtype=float),
            S=np.array(doc["S"], dtype=float),
            R=np.array(doc["R"], dtype=float),
            beta1=float(doc["beta1"]),
            beta2=float(doc["beta2"]),
            gamma=float(doc["gamma"]),
            slack=None if doc.get("slack") is None else np.array(doc["slack"], dtype=float),
            profile=None if prof is None else EpsilonProfile(*prof),
            margins=dict(doc.get("margins") or {}),
            feasibility_margin=doc.get("feasibility_margin"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FileFormatError(f"bad certificate document: {exc}") from exc


def save_json(path, doc):
    atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def save_certificate(path, cert):
    save_json(path, certificate_to_dict(cert))


def load_certificate(path):
    try:
        with open(path) as f:
            doc = json.load(f)
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"{path}: malformed JSON ({exc})") from exc
    return certificate_from_dict(doc)
