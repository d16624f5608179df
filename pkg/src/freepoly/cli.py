"""
Command-line front end.

Every artifact embeds the full run configuration (measures inline), so
``freepoly replay FILE`` reproduces it.  Exit codes: 0 success,
2 invalid input (nothing written), 3 solver failure (partial results
written, failing rows flagged).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .linearize import linearize_selfadjoint, pencil_to_dict
from .ncpoly import PolynomialSyntaxError, parse, to_string
from .rmt import approx_subordination, deloc_experiment, local_law_experiment
from .spectra import ScalarMeasure, SpectralPoint
from .subordination import (
    THREADS_ENV,
    SubordinationError,
    default_workers,
    eta_continuation,
    polynomial_density,
)

log = logging.getLogger("freepoly")

EXIT_OK, EXIT_INVALID, EXIT_SOLVER = 0, 2, 3
CONFIG_PREFIX = "# config: "

DENSITY_COLUMNS = ["x", "rho", "residual", "condA_min_sv", "condB_min_sv", "regular_flag"]
LOCALLAW_COLUMNS = ["N", "x", "eta_star", "half_width", "mean_ratio", "median_ratio",
                    "std_ratio", "rho", "median_rel_error", "trials"]
DELOC_COLUMNS = ["N", "trials", "present", "median_stat", "max_stat", "threshold",
                 "below_threshold"]


class ValidationError(ValueError):
    pass


@dataclass
class RunConfig:
    """Subcommand plus its parameters; measures are stored as inline specs."""

    subcommand: str
    params: dict = field(default_factory=dict)
    out: str | None = None
    threads: int = 1

    def to_dict(self) -> dict:
        return {"subcommand": self.subcommand, "version": __version__, **self.params}

    @classmethod
    def from_dict(cls, d: dict, out=None, threads=1) -> "RunConfig":
        d = dict(d)
        d.pop("version", None)
        return cls(d.pop("subcommand"), d, out, threads)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def _measure_dict(value) -> dict:
    """Measure description from a JSON file path, inline JSON text or a dict."""
    try:
        if isinstance(value, dict):
            desc = value
        elif str(value).lstrip().startswith("{"):
            desc = json.loads(value)
        else:
            desc = json.loads(Path(value).read_text())
        return ScalarMeasure.from_dict(desc).to_dict()
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"cannot read measure {value!r}: {exc}") from exc


def _check(cond, msg):
    if not cond:
        raise ValidationError(msg)


def validate(cfg: RunConfig) -> RunConfig:
    """Check every parameter before any computation; normalizes measures and text."""
    p = dict(cfg.params)
    sub = cfg.subcommand
    _check(sub in HANDLERS, f"unknown subcommand {sub!r}")
    try:
        poly = parse(p["poly"])
    except PolynomialSyntaxError as exc:
        raise ValidationError(f"cannot parse polynomial: {exc}") from exc
    except KeyError as exc:
        raise ValidationError("missing polynomial") from exc
    _check(not poly.is_zero(), "polynomial is zero")
    _check(poly.is_selfadjoint(), f"polynomial {to_string(poly)} is not self-adjoint")
    p["poly"] = to_string(poly)
    if sub == "linearize":
        return RunConfig(sub, p, cfg.out, cfg.threads)
    for key in ("mu_c", "mu_d"):
        _check(key in p, f"missing measure {key}")
        p[key] = _measure_dict(p[key])
    if "alpha" in p:
        _check(0 < p["alpha"] < 1, f"alpha must lie in (0, 1), got {p['alpha']}")
    if "interval" in p:
        a, b = p["interval"]
        _check(np.isfinite([a, b]).all() and a < b, f"invalid interval {p['interval']}")
    for key in ("eta_min", "tol", "tau", "eta", "c"):
        if key in p:
            _check(np.isfinite(p[key]) and p[key] > 0, f"{key} must be positive")
    if "eta_min" in p:
        _check(p["eta_min"] < 1, "eta_min must be below 1")
    if "grid" in p:
        _check(p["grid"] >= 2, "grid must have at least 2 points")
    if "N" in p:
        _check(len(p["N"]) > 0 and all(n >= 2 for n in p["N"]), "N values must be at least 2")
    if "trials" in p:
        _check(p["trials"] >= (2 if sub == "mcsub" else 1), "too few trials")
    if "seed" in p:
        _check(0 <= p["seed"] < 2 ** 63, "seed must be a nonnegative 63-bit integer")
    return RunConfig(sub, p, cfg.out, cfg.threads)


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def _num(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _csv_text(cfg: RunConfig, columns, rows) -> str:
    buf = io.StringIO()
    buf.write(CONFIG_PREFIX + json.dumps(cfg.to_dict(), sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_num(r[c]) for c in columns])
    return buf.getvalue()


def _json_text(cfg: RunConfig, payload: dict) -> str:
    return json.dumps({"config": cfg.to_dict(), **payload}, indent=2, sort_keys=True) + "\n"


def _matrix(m) -> list:
    return [[[float(v.real), float(v.imag)] for v in row] for row in np.asarray(m, complex)]


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _measures(p):
    return ScalarMeasure.from_dict(p["mu_c"]), ScalarMeasure.from_dict(p["mu_d"])


def cmd_linearize(cfg):
    poly = parse(cfg.params["poly"])
    L = linearize_selfadjoint(poly)
    payload = {"pencil": pencil_to_dict(L), "hermiticity_defect": float(L.hermiticity_defect())}
    return _json_text(cfg, payload), EXIT_OK


def cmd_density(cfg):
    p = cfg.params
    mu_c, mu_d = _measures(p)
    curve = polynomial_density(parse(p["poly"]), mu_c, mu_d, p["interval"], p["grid"],
                               eta_min=p["eta_min"], alpha=p["alpha"], tol=p["tol"],
                               tau=p["tau"], workers=cfg.threads)
    rows = [dict(zip(DENSITY_COLUMNS, vals)) for vals in zip(
        curve.x_grid, curve.rho, curve.residual, curve.condA_min_sv, curve.condB_min_sv,
        curve.regularity_flags)]
    if curve.clamped:
        log.warning("%d negative density values clamped to 0", curve.clamped)
    code = EXIT_SOLVER if curve.failures else EXIT_OK
    if curve.failures:
        log.error("solver failed at %d of %d grid points", curve.failures, len(rows))
    return _csv_text(cfg, DENSITY_COLUMNS, rows), code


def cmd_locallaw(cfg):
    p = cfg.params
    mu_c, mu_d = _measures(p)
    poly = parse(p["poly"])
    x = np.asarray(p["x"], dtype=float)
    ref = polynomial_density(poly, mu_c, mu_d, None, x_grid=x, workers=cfg.threads)
    rep = local_law_experiment(poly, mu_c, mu_d, x, p["N"], p["alpha"], p["trials"], p["seed"],
                               c=p["c"], rho=ref.rho, progress=log.info)
    code = EXIT_SOLVER if ref.failures else EXIT_OK
    return _csv_text(cfg, LOCALLAW_COLUMNS, rep.rows), code


def cmd_deloc(cfg):
    p = cfg.params
    mu_c, mu_d = _measures(p)
    rep = deloc_experiment(parse(p["poly"]), mu_c, mu_d, p["interval"], p["N"], p["alpha"],
                           p["trials"], p["seed"], progress=log.info)
    return _csv_text(cfg, DELOC_COLUMNS, rep.rows), EXIT_OK


def cmd_mcsub(cfg):
    p = cfg.params
    mu_c, mu_d = _measures(p)
    L = linearize_selfadjoint(parse(p["poly"]))
    point = SpectralPoint(p["x"], p["eta"], L.gamma0)
    try:
        lim = eta_continuation(L.gamma1, mu_c, L.gamma2, mu_d, p["x"], [p["eta"]],
                               gamma0=L.gamma0)
    except SubordinationError as exc:
        log.error("limit solve failed: %s", exc)
        return _json_text(cfg, {"error": str(exc)}), EXIT_SOLVER
    results = []
    code = EXIT_OK
    for N in p["N"]:
        log.info("mcsub N=%d", N)
        try:
            a = approx_subordination(L, mu_c, mu_d, N, point, p["trials"], p["seed"],
                                     delta=p["delta"])
        except np.linalg.LinAlgError as exc:
            log.error("N=%d: %s", N, exc)
            results.append({"N": N, "error": str(exc)})
            code = EXIT_SOLVER
            continue
        errs = np.linalg.norm(a.omega1_samples - lim.omega1, 2, axis=(1, 2))
        results.append({
            "N": N,
            "omega1N": _matrix(a.omega1N),
            "omega2N": _matrix(a.omega2N),
            "omega1_error": float(np.linalg.norm(a.omega1N - lim.omega1, 2)),
            "omega2_error": float(np.linalg.norm(a.omega2N - lim.omega2, 2)),
            "median_sample_omega1_error": float(np.median(errs)),
            "identity_f_defect": a.identity_f_defect,
            "identity_omega_defect": a.identity_omega_defect,
            "resolvent_norm_eta": a.resolvent_norm_eta,
            "delta1_norm": a.delta1_norm if p["delta"] else None,
            "delta2_norm": a.delta2_norm if p["delta"] else None,
        })
    payload = {"limit": {"omega1": _matrix(lim.omega1), "omega2": _matrix(lim.omega2),
                         "residual": lim.residual}, "results": results}
    return _json_text(cfg, payload), code


HANDLERS = {
    "linearize": cmd_linearize,
    "density": cmd_density,
    "locallaw": cmd_locallaw,
    "deloc": cmd_deloc,
    "mcsub": cmd_mcsub,
}


def run(cfg: RunConfig) -> int:
    """Validate, dispatch and write the artifact; returns the exit code."""
    try:
        cfg = validate(cfg)
    except ValidationError as exc:
        log.error("error: %s", exc)
        return EXIT_INVALID
    try:
        text, code = HANDLERS[cfg.subcommand](cfg)
    except SubordinationError as exc:
        log.error("solver failure: %s", exc)
        return EXIT_SOLVER
    if cfg.out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(cfg.out).write_text(text)
        log.info("wrote %s", cfg.out)
    return code


def read_config(path) -> dict:
    """Configuration embedded in a CSV or JSON artifact."""
    text = Path(path).read_text()
    if text.startswith(CONFIG_PREFIX):
        return json.loads(text.splitlines()[0][len(CONFIG_PREFIX):])
    return json.loads(text)["config"]


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _add_common(sp, measures=True):
    sp.add_argument("--poly", required=True, help="self-adjoint polynomial, e.g. 'x*y + y*x'")
    if measures:
        sp.add_argument("--mu-c", required=True, help="measure JSON file (or inline JSON)")
        sp.add_argument("--mu-d", required=True, help="measure JSON file (or inline JSON)")
    sp.add_argument("--out", default=None, help="output file (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="freepoly", description=(
        "Spectra of polynomials in free variables: linearization, subordination "
        "densities and random-matrix experiments."))
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-q", "--quiet", action="store_true", help="only report errors")
    ap.add_argument("--threads", type=int, default=None,
                    help=f"worker threads for grid solves (default ${THREADS_ENV} or 1)")
    sub = ap.add_subparsers(dest="subcommand", required=True)

    sp = sub.add_parser("linearize", help="self-adjoint linear pencil as JSON")
    _add_common(sp, measures=False)

    sp = sub.add_parser("density", help="density of p(c, d) on a grid (CSV)")
    _add_common(sp)
    sp.add_argument("--interval", type=float, nargs=2, required=True, metavar=("A", "B"))
    sp.add_argument("--grid", type=int, default=241)
    sp.add_argument("--eta-min", type=float, default=1e-6)
    sp.add_argument("--alpha", type=float, default=0.5)
    sp.add_argument("--tol", type=float, default=1e-11)
    sp.add_argument("--tau", type=float, default=1e-3)

    for name, hlp in (("locallaw", "window-count ratios against the density (CSV)"),
                      ("deloc", "eigenvector delocalization statistics (CSV)"),
                      ("mcsub", "Monte-Carlo approximate subordination (JSON)")):
        sp = sub.add_parser(name, help=hlp)
        _add_common(sp)
        sp.add_argument("--N", type=int, action="append", required=True,
                        help="matrix size (repeatable)")
        sp.add_argument("--trials", type=int, default={"locallaw": 5, "deloc": 10}.get(name, 30))
        sp.add_argument("--seed", type=int, default=0)
        if name == "locallaw":
            sp.add_argument("--x", type=float, action="append", default=None,
                            help="window centre (repeatable, default 0)")
            sp.add_argument("--alpha", type=float, default=0.5)
            sp.add_argument("--c", type=float, default=1.0,
                            help="constant in eta* = c N^(-1/12) log N")
        elif name == "deloc":
            sp.add_argument("--interval", type=float, nargs=2, required=True, metavar=("A", "B"))
            sp.add_argument("--alpha", type=float, default=0.5)
        else:
            sp.add_argument("--x", type=float, default=0.0, help="real part of z")
            sp.add_argument("--eta", type=float, default=0.2)
            sp.add_argument("--delta", action="store_true",
                            help="also estimate Delta_j and delta_j (two passes)")

    sp = sub.add_parser("replay", help="rerun the configuration embedded in an artifact")
    sp.add_argument("artifact")
    sp.add_argument("--out", default=None)
    return ap


_ARG_KEYS = {
    "linearize": ["poly"],
    "density": ["poly", "mu_c", "mu_d", "interval", "grid", "eta_min", "alpha", "tol", "tau"],
    "locallaw": ["poly", "mu_c", "mu_d", "x", "N", "alpha", "trials", "seed", "c"],
    "deloc": ["poly", "mu_c", "mu_d", "interval", "N", "alpha", "trials", "seed"],
    "mcsub": ["poly", "mu_c", "mu_d", "x", "eta", "N", "trials", "seed", "delta"],
}


def config_from_args(args) -> RunConfig:
    threads = args.threads or default_workers()
    if args.subcommand == "replay":
        try:
            d = read_config(args.artifact)
        except (OSError, ValueError, KeyError) as exc:
            raise ValidationError(f"cannot read configuration from {args.artifact}: {exc}") from exc
        return RunConfig.from_dict(d, args.out, threads)
    params = {k: getattr(args, k) for k in _ARG_KEYS[args.subcommand]}
    if args.subcommand == "locallaw" and params["x"] is None:
        params["x"] = [0.0]
    if "interval" in params:
        params["interval"] = list(params["interval"])
    return RunConfig(args.subcommand, params, args.out, threads)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(stream=sys.stderr, format="%(message)s",
                        level=logging.ERROR if args.quiet else logging.INFO)
    try:
        cfg = config_from_args(args)
    except ValidationError as exc:
        log.error("error: %s", exc)
        return EXIT_INVALID
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
