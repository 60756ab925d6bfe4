"""Command line front end.

Every subcommand resolves its flags into a config dict, runs one library
call, and writes a report that embeds the config and the package
version. JSON reports carry ``{"version", "command", "config", "result"}``;
CSV reports start with two ``#`` lines (version, then the config as JSON)
followed by the column header. Wall-clock time is only added with
``--timing``, so repeated runs produce identical bytes.

Exit codes: 0 success, 1 refuted or no witness, 2 usage error,
3 budget or precision failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
from fractions import Fraction

import numpy as np

from . import __version__
from .constructor import DeltaSchedule, SurfaceSpec, construct, format_decimal, verify_certificate
from .diophantine import DEFAULT_Q_CAP, default_grid, find_witness, sandwich_check, sing_scan
from .dynamics import UnimodularLattice, systole, trajectory
from .exceptions import BudgetExceededError, BoundViolationError, RefinementStallError, SinglatError
from .measures import AffineHyperplane, Box, decay_probe, escape_sweep, federer_probe, parse_sampler
from .weights import as_weights

EXIT_OK, EXIT_REFUTED, EXIT_USAGE, EXIT_BUDGET = 0, 1, 2, 3
THREADS_ENV = "SINGLAT_THREADS"


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# flag parsing


def rational(text: str) -> Fraction:
    try:
        return Fraction(text.strip())
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a decimal or a/b number: {text!r}")


def real(text: str) -> float:
    return float(rational(text))


def rational_list(text: str) -> list[Fraction]:
    return [rational(p) for p in text.split(",") if p.strip()]


def real_list(text: str) -> list[float]:
    return [float(v) for v in rational_list(text)]


def integer(text: str) -> int:
    v = rational(text)
    if v.denominator != 1:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    return int(v)


def _threads() -> int:
    raw = os.environ.get(THREADS_ENV, "").strip()
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    if n < 1:
        raise UsageError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n


def _fr(v) -> str:
    v = Fraction(v)
    return str(v)


def _read_points(path: str) -> list[list[Fraction]]:
    pts = []
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                pts.append([rational(p) for p in line.replace(" ", ",").split(",") if p])
    return pts


# ---------------------------------------------------------------------------
# emission


def emit(report: dict, fmt: str = "json") -> bytes:
    """Serialize a report deterministically.

    For ``csv`` the report must carry ``columns`` and ``rows``; the config
    goes into the comment preamble.
    """
    if fmt == "json":
        return (json.dumps(report, sort_keys=True, indent=2) + "\n").encode()
    if fmt == "csv":
        buf = io.StringIO()
        buf.write(f"# singlat {report['version']} {report['command']}\n")
        buf.write("# config " + json.dumps(report["config"], sort_keys=True) + "\n")
        if "wall_clock_s" in report:
            buf.write(f"# wall_clock_s {report['wall_clock_s']!r}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(report["result"]["columns"])
        w.writerows(report["result"]["rows"])
        return buf.getvalue().encode()
    raise ValueError(f"unknown format {fmt!r}")


def read_csv_report(text: str) -> tuple[dict, list[str], list[list[str]]]:
    """Inverse of the CSV branch of :func:`emit`: ``(config, columns, rows)``."""
    config = {}
    lines = []
    for line in text.splitlines():
        if line.startswith("# config "):
            config = json.loads(line[len("# config "):])
        elif not line.startswith("#"):
            lines.append(line)
    rows = list(csv.reader(lines))
    return config, rows[0], rows[1:]


# ---------------------------------------------------------------------------
# subcommands; each returns (result, exit code, default format)


def _positive(name, v):
    if v <= 0:
        raise UsageError(f"--{name} must be positive")


def cmd_witness(a, cfg):
    _positive("delta", a.delta)
    _positive("T", a.T)
    w = as_weights(a.r)
    if len(a.x) != w.n:
        raise UsageError("--x and --r must have the same length")
    wit = find_witness(a.x, w, a.T, a.delta, cap=a.cap)
    if wit is None:
        return {"witness": None}, EXIT_REFUTED
    return {"witness": wit.to_dict()}, EXIT_OK


def _witness_text(result) -> str:
    wit = result["witness"]
    if wit is None:
        return "NONE\n"
    return f"q={wit['q']} p={','.join(str(p) for p in wit['p'])} quasinorm={wit['quasinorm']!r}\n"


def cmd_scan(a, cfg):
    if any(d <= 0 for d in a.deltas):
        raise UsageError("--deltas must be positive")
    grid = default_grid(a.tmin, a.tmax, a.ratio)
    cfg["grid"] = grid
    rep = sing_scan(a.x, as_weights(a.r), grid=grid, delta_schedule=a.deltas, cap=a.cap)
    result = rep.to_dict()
    refuted = any(rep.t0(i) is None for i in range(len(rep.delta_schedule)))
    return result, EXIT_REFUTED if refuted else EXIT_OK


def _times(a):
    if a.times:
        return a.times
    if a.tmax is None:
        raise UsageError("give --times or --tmax")
    return [float(t) for t in np.linspace(a.tmin, a.tmax, a.steps)]


def cmd_traj(a, cfg):
    times = _times(a)
    cfg["times"] = times
    prof = trajectory(a.x, as_weights(a.r), times, norm=a.norm)
    rows = [[repr(float(t)), repr(float(s)), ";".join(str(c) for c in v)]
            for t, s, v in zip(prof.times, prof.systoles, prof.shortest_vectors)]
    return {"columns": ["t", "systole", "witness"], "rows": rows, "profile": prof.to_dict()}, EXIT_OK


def cmd_systole(a, cfg):
    if a.basis:
        rows = [[rational(c) for c in row.split(",")] for row in a.basis.split(";")]
        L = UnimodularLattice(np.array([[float(c) for c in row] for row in rows]))
    else:
        if a.x is None or a.r is None:
            raise UsageError("give --basis, or --x and --r")
        L = UnimodularLattice.from_flow(a.x, as_weights(a.r), a.t)
    s = systole(L, norm=a.norm)
    return {"length": s.length, "witness": list(s.witness), "norm": s.norm}, EXIT_OK


def _region(a, dim):
    if a.box is None:
        return None
    lows, highs = [], []
    for iv in a.box.split("x"):
        lo, hi = iv.split(",")
        lows.append(real(lo))
        highs.append(real(hi))
    if len(lows) != dim:
        raise UsageError("--box dimension does not match the sampler")
    return Box(tuple(lows), tuple(highs))


def cmd_mc_escape(a, cfg):
    s = parse_sampler(a.sampler, seed=a.seed)
    w = as_weights(a.r)
    if s.dim != w.n:
        raise UsageError("sampler dimension does not match --r")
    if any(t < 0 for t in a.t):
        raise UsageError("--t must be >= 0")
    if any(e <= 0 for e in a.eps):
        raise UsageError("--eps must be positive")
    B = _region(a, s.dim)
    rows = []
    for t in a.t:
        for est in escape_sweep(s, B, w, t, a.eps, a.n, method=a.method, norm=a.norm, threads=_threads()):
            rows.append(est.row())
    from .measures import EscapeEstimate

    return {"columns": list(EscapeEstimate.CSV_HEADER), "rows": rows}, EXIT_OK


def cmd_decay(a, cfg):
    s = parse_sampler(a.sampler, seed=a.seed)
    if a.normal is not None:
        L = AffineHyperplane(tuple(a.normal), a.offset)
    else:
        L = AffineHyperplane.coordinate(s.dim, a.coord - 1, a.value)
    B = _region(a, s.dim) or Box.unit(s.dim)
    rows = []
    for e in a.eps:
        p = decay_probe(s, B, L, e, a.n)
        rows.append([repr(e), repr(p.fraction), repr(p.stderr), repr(p.sup_distance), str(p.count)])
    return {"columns": ["eps", "fraction", "stderr", "sup_distance", "count"], "rows": rows}, EXIT_OK


def cmd_federer(a, cfg):
    s = parse_sampler(a.sampler, seed=a.seed)
    rows = []
    for pt in a.point:
        if len(pt) != s.dim:
            raise UsageError("--point dimension does not match the sampler")
        for rad in a.rad:
            ratio = federer_probe(s, pt, rad, a.n)
            rows.append([";".join(repr(c) for c in pt), repr(rad), repr(ratio)])
    return {"columns": ["point", "rad", "ratio"], "rows": rows}, EXIT_OK


def _surface(text):
    M = SurfaceSpec.parse(text)
    M.validate()
    return M


def cmd_construct(a, cfg):
    M = _surface(a.surface)
    avoid = _read_points(a.avoid) if a.avoid else []
    cfg["avoid_points"] = [[_fr(c) for c in p] for p in avoid]
    schedule = DeltaSchedule(a.schedule)
    grid = default_grid(2.0, a.tmax, a.ratio)
    x, state = construct(M, as_weights(a.r), schedule=schedule, depth=a.depth, grid=grid,
                         H_exclude=a.exclude_height, avoid=avoid, T_max=a.tmax, margin=a.margin)
    return {"x": [format_decimal(c) for c in x], "certificate": state.to_dict()}, EXIT_OK


def cmd_verify(a, cfg):
    grid = default_grid(2.0, a.tmax, a.ratio)
    rep = verify_certificate(a.x, as_weights(a.r), schedule=DeltaSchedule(a.schedule), grid=grid, T1=a.t1)
    return rep.to_dict(), EXIT_OK if rep.passed else EXIT_REFUTED


def cmd_sandwich(a, cfg):
    res = sandwich_check(a.x, as_weights(a.r), a.t, a.eps)
    out = {"lhs": res.lhs, "mid": res.mid, "rhs": res.rhs, "consistent": res.consistent}
    return out, EXIT_OK if res.consistent else EXIT_REFUTED


# ---------------------------------------------------------------------------
# parser


def _common(p, fmt="json", choices=("json",)):
    p.add_argument("--format", choices=choices, default=fmt)
    p.add_argument("--out", default=None, help="output file (default stdout)")
    p.add_argument("--timing", action="store_true", help="add wall-clock seconds to the report")


def _point_args(p, need_x=True):
    p.add_argument("--x", type=rational_list, required=need_x, help="point, comma separated")
    p.add_argument("--r", type=rational_list, required=need_x, help="weights summing to 1")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="singlat", description="Weighted singular vectors and diagonal flows on lattices.")
    ap.add_argument("--version", action="version", version=f"singlat {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("witness", help="smallest-q solution of the weighted approximation system")
    _point_args(p)
    p.add_argument("--T", type=real, required=True)
    p.add_argument("--delta", type=real, required=True)
    p.add_argument("--cap", type=integer, default=DEFAULT_Q_CAP)
    _common(p, "text", ("text", "json"))
    p.set_defaults(func=cmd_witness)

    p = sub.add_parser("scan", help="witness search over a geometric T grid for several delta")
    _point_args(p)
    p.add_argument("--deltas", type=real_list, default=[0.5, 0.2, 0.1])
    p.add_argument("--tmin", type=real, default=2.0)
    p.add_argument("--tmax", type=real, default=1e6)
    p.add_argument("--ratio", type=real, default=2.0)
    p.add_argument("--cap", type=integer, default=DEFAULT_Q_CAP)
    _common(p)
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("traj", help="systole along the flow trajectory of tau(x) Z^{n+1}")
    _point_args(p)
    p.add_argument("--times", type=real_list, default=None)
    p.add_argument("--tmin", type=real, default=0.0)
    p.add_argument("--tmax", type=real, default=None)
    p.add_argument("--steps", type=integer, default=21)
    p.add_argument("--norm", choices=("euclidean", "sup"), default="euclidean")
    _common(p, "csv", ("csv", "json"))
    p.set_defaults(func=cmd_traj)

    p = sub.add_parser("systole", help="shortest nonzero vector of a lattice")
    _point_args(p, need_x=False)
    p.add_argument("--t", type=real, default=0.0)
    p.add_argument("--basis", default=None, help="rows separated by ';', entries by ','")
    p.add_argument("--norm", choices=("euclidean", "sup"), default="euclidean")
    _common(p)
    p.set_defaults(func=cmd_systole)

    p = sub.add_parser("mc-escape", help="Monte Carlo escape fractions, one row per (t, eps)")
    p.add_argument("--sampler", required=True)
    p.add_argument("--r", type=rational_list, required=True)
    p.add_argument("--t", type=real_list, required=True)
    p.add_argument("--eps", type=real_list, required=True)
    p.add_argument("--n", type=integer, default=10**4)
    p.add_argument("--seed", type=integer, default=0)
    p.add_argument("--box", default=None, help="region B as a1,b1xa2,b2 (default: whole support)")
    p.add_argument("--method", choices=("scan", "systole"), default="scan")
    p.add_argument("--norm", choices=("euclidean", "sup"), default="euclidean")
    _common(p, "csv", ("csv", "json"))
    p.set_defaults(func=cmd_mc_escape)

    p = sub.add_parser("decay", help="mass near an affine hyperplane")
    p.add_argument("--sampler", required=True)
    p.add_argument("--coord", type=integer, default=1, help="1-based coordinate for x_i = value")
    p.add_argument("--value", type=real, default=0.0)
    p.add_argument("--normal", type=real_list, default=None)
    p.add_argument("--offset", type=real, default=0.0)
    p.add_argument("--eps", type=real_list, required=True)
    p.add_argument("--n", type=integer, default=10**4)
    p.add_argument("--seed", type=integer, default=0)
    p.add_argument("--box", default=None)
    _common(p, "csv", ("csv", "json"))
    p.set_defaults(func=cmd_decay)

    p = sub.add_parser("federer", help="doubling ratio mu(B(x,3r))/mu(B(x,r))")
    p.add_argument("--sampler", required=True)
    p.add_argument("--point", type=real_list, action="append", required=True)
    p.add_argument("--rad", type=real_list, required=True)
    p.add_argument("--n", type=integer, default=10**4)
    p.add_argument("--seed", type=integer, default=0)
    _common(p, "csv", ("csv", "json"))
    p.set_defaults(func=cmd_federer)

    p = sub.add_parser("construct", help="nested-box construction of a singular point on a surface")
    p.add_argument("--surface", default="plane", help="'plane' or 'f=..,..;dom=a,bxc,d;k=1;l=2'")
    p.add_argument("--r", type=rational_list, required=True)
    p.add_argument("--depth", type=integer, default=6)
    p.add_argument("--tmax", type=real, default=1e3)
    p.add_argument("--ratio", type=real, default=2.0)
    p.add_argument("--exclude-height", type=integer, default=12)
    p.add_argument("--avoid", default=None, help="file with one point per line")
    p.add_argument("--schedule", default="1/log(T + E)")
    p.add_argument("--margin", type=real, default=0.1)
    _common(p)
    p.set_defaults(func=cmd_construct)

    p = sub.add_parser("verify", help="re-check escape and witnesses for a constructed point")
    _point_args(p)
    p.add_argument("--schedule", default="1/log(T + E)")
    p.add_argument("--tmax", type=real, default=1e3)
    p.add_argument("--ratio", type=real, default=2.0)
    p.add_argument("--t1", type=real, default=None, help="first T to check (default: grid start)")
    _common(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sandwich", help="lattice/approximation implication chain at one (t, eps)")
    _point_args(p)
    p.add_argument("--t", type=real, required=True)
    p.add_argument("--eps", type=real, required=True)
    _common(p)
    p.set_defaults(func=cmd_sandwich)
    return ap


def _config(a) -> dict:
    cfg = {}
    for k, v in sorted(vars(a).items()):
        if k in ("func", "out", "timing", "format"):
            continue
        if isinstance(v, Fraction):
            v = _fr(v)
        elif isinstance(v, list):
            v = [[_fr(c) for c in e] if isinstance(e, list) else (_fr(e) if isinstance(e, Fraction) else e) for e in v]
        cfg[k] = v
    cfg["format"] = a.format
    return cfg


def dispatch(argv=None) -> int:
    ap = build_parser()
    try:
        a = ap.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_OK
    cfg = _config(a)
    start = time.perf_counter()
    try:
        result, code = a.func(a, cfg)
    except UsageError as e:
        ap.print_usage(sys.stderr)
        print(f"singlat {a.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (BudgetExceededError, RefinementStallError, BoundViolationError) as e:
        print(f"singlat {a.command}: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_BUDGET
    except (ValueError, SinglatError) as e:
        print(f"singlat {a.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    report = {"version": __version__, "command": a.command, "config": cfg, "result": result}
    if a.timing:
        report["wall_clock_s"] = time.perf_counter() - start
    if a.format == "text":
        data = _witness_text(result).encode()
    else:
        data = emit(report, a.format)
    if a.out:
        with open(a.out, "wb") as fh:
            fh.write(data)
    else:
        sys.stdout.buffer.write(data)
        sys.stdout.flush()
    return code


def main(argv=None):
    sys.exit(dispatch(argv))


if __name__ == "__main__":
    main()
