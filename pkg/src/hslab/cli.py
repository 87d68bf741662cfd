"""Command line entry point: ``hslab {classify,solve,analyze,sweep,hls-check}``.

Exit codes: 0 success, 2 usage or validation error, 3 no fixed point,
4 iteration limit reached.
"""
import argparse
import configparser
from concurrent.futures import ThreadPoolExecutor
import csv
import io
import itertools
import json
import logging
import math
import os
import sys

from . import exponents as ex
from . import jsonio
from .analysis import RATE_TOL, full_report, profile_csv, rate_report, pohozaev_report
from .errors import DomainError, FitError, HslabError
from .hls import DILATIONS, HlsIndices, brute_j, check_indices, dilation_test, j_functional
from .kernel import get_profile
from .radial import RadialField, make_grid
from .solver import SCHEMA_VERSION, SolutionBundle, SolverOptions, Status, solve

logger = logging.getLogger("hslab")

EXIT_OK, EXIT_USAGE, EXIT_NO_FIXED_POINT, EXIT_MAX_ITER = 0, 2, 3, 4

PARAM_KEYS = ("n", "alpha", "p", "q", "sigma1", "sigma2")
SCHEMA = {
    "params": {k: float for k in PARAM_KEYS},
    "grid": {"r_min": float, "r_max": float, "N": int},
    "solver": {"omega": float, "max_iterations": int, "tol": float, "pivot": float,
               "blowup": float, "collapse": float, "drift_tol": float,
               "init": str},
    "analysis": {"rate_tol": float, "window_lo": float, "window_hi": float,
                 "exponents": "floats", "solution": str},
    "output": {"json": str, "csv": str},
    "sweep": {**{k: "floats" for k in PARAM_KEYS}, "solve": bool},
    "hls": {"n": int, "alpha": float, "sigma1": float, "sigma2": float, "r": float,
            "s": float, "lambdas": "floats", "brute": bool},
}


class UsageError(Exception):
    """Bad command line or configuration; maps to exit code 2."""


def _convert(kind, raw, where):
    raw = raw.strip()
    try:
        if kind is float:
            return float(raw)
        if kind is int:
            return int(raw)
        if kind is bool:
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if kind == "floats":
            return [float(x) for x in raw.split(",") if x.strip()]
        return raw
    except ValueError:
        raise UsageError(f"{where}: cannot parse {raw!r}") from None


def load_config(path):
    """Parse a ``key = value`` file with ``[section]`` headers.

    Unknown sections or keys are rejected.  Returns ``{section: {key: value}}``.
    """
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",),
                                   comment_prefixes=("#", ";"), strict=True)
    cp.optionxform = str
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    except configparser.Error as exc:
        raise UsageError(f"config parse error: {exc}") from None
    out = {}
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise UsageError(f"unknown config section [{sec}]")
        out[sec] = {}
        for key, raw in cp.items(sec):
            if key not in SCHEMA[sec]:
                raise UsageError(f"unknown key {key!r} in [{sec}]")
            out[sec][key] = _convert(SCHEMA[sec][key], raw, f"[{sec}] {key}")
    return out


def _require(cfg, section, keys):
    sec = cfg.get(section)
    if sec is None:
        raise UsageError(f"missing config section [{section}]")
    missing = [k for k in keys if k not in sec]
    if missing:
        raise UsageError(f"missing key(s) in [{section}]: {', '.join(missing)}")
    return sec


def _params(cfg):
    sec = _require(cfg, "params", PARAM_KEYS)
    return ex.validate(*(sec[k] for k in PARAM_KEYS))


def _grid(cfg):
    g = cfg.get("grid", {})
    return make_grid(g.get("r_min", 1e-4), g.get("r_max", 1e4), g.get("N", 1024))


def _solver(cfg):
    s = dict(cfg.get("solver", {}))
    init = s.pop("init", "fast")
    if init not in ("slow", "fast", "bubble"):
        raise UsageError(f"[solver] init must be slow, fast or bubble, got {init!r}")
    return SolverOptions(**s), init


def _window(cfg):
    a = cfg.get("analysis", {})
    if ("window_lo" in a) != ("window_hi" in a):
        raise UsageError("[analysis] window_lo and window_hi go together")
    if "window_lo" in a:
        return (a["window_lo"], a["window_hi"])
    return None


def _check_writable(path):
    if path is None:
        return
    parent = os.path.dirname(os.path.abspath(path)) or "."
    if os.path.isdir(path) or not os.path.isdir(parent) or not os.access(parent, os.W_OK):
        raise UsageError(f"output path {path} is not writable")
    if os.path.exists(path) and not os.access(path, os.W_OK):
        raise UsageError(f"output path {path} is not writable")


def _emit(text, path):
    if path is None:
        sys.stdout.write(text)
        return
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc.strerror}") from None


def _out_path(args, cfg, key="json"):
    return args.out or cfg.get("output", {}).get(key)


def classify_payload(params):
    d = ex.derive(params)
    reg = ex.classify(params)
    return {
        "schema_version": SCHEMA_VERSION,
        "params": params.as_dict(),
        "exponents": d.as_dict(),
        "rate_laws": {
            "slow": {"u": d.q0, "v": d.p0},
            "fast": {"u": d.fast_u, "v": d.fast_v, "v_log": d.fast_v_log,
                     "v_case": d.v_case.value},
        },
        "regime": reg.as_dict(),
    }


def cmd_classify(args, cfg):
    _emit(jsonio.dumps(classify_payload(_params(cfg))), _out_path(args, cfg))
    return EXIT_OK


def cmd_solve(args, cfg):
    params = ex.validate(*_params(cfg).as_tuple(), for_solver=True)
    out = _out_path(args, cfg)
    _check_writable(out)
    opts, init = _solver(cfg)
    bundle = solve(params, init, opts, _grid(cfg), cache_dir=args.cache)
    _emit(jsonio.dumps(bundle.to_dict()), out)
    msg = f"{bundle.status.value} after {bundle.iterations} iterations"
    if bundle.cause:
        msg += f": {bundle.cause}"
    print(msg, file=sys.stderr)
    if bundle.status is Status.CONVERGED:
        return EXIT_OK
    if bundle.status is Status.MAX_ITERATIONS:
        return EXIT_MAX_ITER
    return EXIT_NO_FIXED_POINT


def read_bundle(path):
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        return SolutionBundle.from_dict(data)
    except OSError as exc:
        raise UsageError(f"cannot read solution file {path}: {exc.strerror}") from None
    except (ValueError, KeyError, TypeError, HslabError) as exc:
        raise UsageError(f"malformed solution file {path}: {type(exc).__name__}: {exc}") from None


def cmd_analyze(args, cfg):
    a = cfg.get("analysis", {})
    path = args.solution or a.get("solution")
    if path is None:
        raise UsageError("analyze needs a solution file (argument or [analysis] solution)")
    bundle = read_bundle(path)
    out = _out_path(args, cfg)
    csv_path = cfg.get("output", {}).get("csv")
    if csv_path is None and out is not None:
        csv_path = os.path.splitext(out)[0] + ".csv"
    _check_writable(out)
    _check_writable(csv_path)
    report = {"schema_version": SCHEMA_VERSION, "params": bundle.params.as_dict(),
              "status": bundle.status.value}
    if bundle.converged:
        report.update(full_report(bundle, _window(cfg), a.get("rate_tol", RATE_TOL),
                                  a.get("exponents")))
    else:
        report["error"] = "analysis needs a Converged bundle"
    _emit(jsonio.dumps(report), out)
    if csv_path is not None:
        _emit(profile_csv(bundle), csv_path)
    return EXIT_OK


SWEEP_COLUMNS = ("n", "alpha", "p", "q", "sigma1", "sigma2", "regime", "theorem_a",
                 "status", "iterations", "theta_u", "theta_v", "verdict", "pohozaev_gap",
                 "error")


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, bool):
        return str(x)
    if isinstance(x, float):
        return repr(float(x)) if math.isfinite(x) else ""
    return str(x)


def sweep_row(tup, opts, init, grid, do_solve, window, rate_tol, cache):
    row = dict(zip(PARAM_KEYS, tup))
    if float(tup[0]).is_integer():
        row["n"] = int(tup[0])
    try:
        n = tup[0]
        if float(n).is_integer():
            n = int(n)
        params = ex.validate(n, *tup[1:])
        reg = ex.classify(params)
        row["regime"] = reg.kind.value
        row["theorem_a"] = reg.theorem_a_nonexistence
        if do_solve:
            params = ex.validate(*params.as_tuple(), for_solver=True)
            b = solve(params, init, opts, grid, cache_dir=cache)
            row["status"] = b.status.value
            row["iterations"] = b.iterations
            if b.converged:
                rr = rate_report(b, window, rate_tol)
                row.update(theta_u=rr.theta_u, theta_v=rr.theta_v, verdict=rr.verdict.value)
                row["pohozaev_gap"] = pohozaev_report(b).energy_gap
    except (HslabError, ArithmeticError) as exc:
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def cmd_sweep(args, cfg):
    sec = _require(cfg, "sweep", PARAM_KEYS)
    lists = [sec[k] for k in PARAM_KEYS]
    do_solve = sec.get("solve", True)
    opts, init = _solver(cfg)
    grid = _grid(cfg)
    out = _out_path(args, cfg, "csv")
    _check_writable(out)
    a = cfg.get("analysis", {})
    tuples = list(itertools.product(*lists))
    work = lambda t: sweep_row(t, opts, init, grid, do_solve, _window(cfg),
                               a.get("rate_tol", RATE_TOL), args.cache)
    if args.jobs > 1 and len(tuples) > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(work, tuples))
    else:
        rows = [work(t) for t in tuples]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["schema_version", *SWEEP_COLUMNS])
    for row in rows:
        w.writerow([SCHEMA_VERSION, *(_fmt(row.get(c)) for c in SWEEP_COLUMNS)])
    _emit(buf.getvalue(), out)
    return EXIT_OK


def _bump(n):
    return lambda r: (1.0 + r * r) ** (-float(n))


def cmd_hls_check(args, cfg):
    sec = _require(cfg, "hls", ("n", "alpha", "sigma1", "sigma2", "r"))
    n, alpha = sec["n"], sec["alpha"]
    if "s" in sec:
        ix = HlsIndices(n, alpha, sec["sigma1"], sec["sigma2"], sec["r"], sec["s"])
    else:
        try:
            ix = HlsIndices.conjugate(n, alpha, sec["sigma1"], sec["sigma2"], sec["r"])
        except DomainError as exc:
            raise UsageError(f"invalid indices: {exc}") from None
    chk = check_indices(ix)
    if not chk.valid:
        raise UsageError("invalid indices: " + "; ".join(chk.failures))
    if not 1.0 < alpha < n:
        raise UsageError("hls-check evaluates J only for alpha in (1, n)")
    out = _out_path(args, cfg)
    _check_writable(out)
    grid = _grid(cfg)
    profile = get_profile(n, alpha, args.cache)
    fn = _bump(n)
    f = RadialField.from_function(grid, fn, theta=2.0 * n)
    dil = dilation_test(f, f, ix, tuple(sec.get("lambdas", DILATIONS)), profile)
    J = j_functional(f, f, ix, profile)
    report = {"schema_version": SCHEMA_VERSION, "indices": ix.to_dict(),
              "check": chk.to_dict(), "sample": f"(1+r^2)^-{n}", "J": J,
              "dilation": dil.to_dict()}
    if sec.get("brute", False):
        Jb = brute_j(fn, fn, ix, profile)
        report["brute"] = {"J": Jb, "rel_err": abs(J / Jb - 1.0)}
    _emit(jsonio.dumps(report), out)
    return EXIT_OK


COMMANDS = {"classify": cmd_classify, "solve": cmd_solve, "analyze": cmd_analyze,
            "sweep": cmd_sweep, "hls-check": cmd_hls_check}


def build_parser():
    ap = argparse.ArgumentParser(prog="hslab", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="key=value config file")
    common.add_argument("--out", metavar="PATH", help="output file (stdout if omitted)")
    common.add_argument("--jobs", metavar="N", type=int, default=1, help="parallel sweep workers")
    common.add_argument("--seed", metavar="N", type=int, default=None,
                        help="reserved; all commands are deterministic")
    common.add_argument("--cache", metavar="DIR", help="kernel table cache directory")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name == "analyze":
            p.add_argument("solution", nargs="?", help="solution JSON written by solve")
    return ap


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.jobs < 1:
            raise UsageError("--jobs must be >= 1")
        cfg = load_config(args.config) if args.config else {}
        return COMMANDS[args.command](args, cfg)
    except (UsageError, DomainError, FitError) as exc:
        print(f"hslab {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
