"""``exmarkov`` command line.

Exit codes: 0 success, 1 validation or tolerance failure (JSON report on
stdout or ``--out``), 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, acceptance, fixtures, rng
from .discrete import fixed_sampler, identity_sampler, mixture_sampler, simulate_discrete, verify_discrete
from .ensemble import read_jsonl, write_jsonl
from .meanfield import (
    IsingParams,
    RateField,
    ReedFrostParams,
    constant_field,
    glauber_field,
    reed_frost_field,
    simulate_finite,
    simulate_limit,
    solve_ode,
)
from .projection import classify_discontinuities, estimate_transition, mass_transfer, transition_counts
from .semigroup import build_minimal_semigroup, check_semigroup, read_table, sample_inhomogeneous_chain, write_table
from .simplex import SimplexPath, SimplexPoint

OUTDIR_ENV = "EXMARKOV_OUTDIR"


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# helpers


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def _out(path: str | None) -> Path | None:
    if path is None or path == "-":
        return None
    p = Path(path)
    base = os.environ.get(OUTDIR_ENV)
    if base and not p.is_absolute():
        p = Path(base) / p
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _emit_text(text: str, path: str | None) -> Path | None:
    p = _out(path)
    if p is None:
        sys.stdout.write(text)
    else:
        p.write_text(text)
    return p


def _dumps(obj) -> str:
    return json.dumps(acceptance._clean(obj), indent=2, sort_keys=True) + "\n"


def _num(x: float) -> str:
    return repr(float(x))


def path_csv(times, values) -> str:
    values = np.atleast_2d(values)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", *(f"y{i + 1}" for i in range(values.shape[1]))])
    for t, row in zip(times, values):
        w.writerow([_num(t), *(_num(v) for v in row)])
    return buf.getvalue()


def tidy_csv(times, values) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "color", "frequency"])
    for t, row in zip(times, np.atleast_2d(values)):
        for i, v in enumerate(row):
            w.writerow([_num(t), i, _num(v)])
    return buf.getvalue()


def read_path_csv(path: str, interp: str = "step") -> SimplexPath:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0].strip() != "t":
        raise ValueError(f"{path}: expected header t,y1,...,yk")
    data = np.array([[float(x) for x in r] for r in rows[1:] if r], dtype=float)
    if data.shape[0] < 2:
        raise ValueError(f"{path}: need at least two rows")
    times, pts = data[:, 0], data[:, 1:]
    if np.any(np.diff(times) <= 0):
        raise ValueError(f"{path}: times must strictly increase")
    if interp == "linear":
        return SimplexPath.piecewise_linear(times, pts)
    return SimplexPath.step(times, pts, times[-1])


def _manifest(args, outputs, seeds=None) -> None:
    """Write ``<output>.manifest.json`` next to every output file."""
    config = {
        k: v for k, v in sorted(vars(args).items())
        if k not in {"func", "threads", "config"} and not k.startswith("out")
    }
    body = {"exmarkov": __version__, "config": config, "seeds": seeds if seeds is not None else {"seed": getattr(args, "seed", None)}}
    for p in outputs:
        if p is not None:
            Path(str(p) + ".manifest.json").write_text(_dumps(body))


def _field(args) -> RateField:
    if args.model == "glauber":
        return glauber_field(IsingParams(args.beta, args.h, args.J))
    if args.model == "reedfrost":
        return reed_frost_field(ReedFrostParams(args.beta, args.rho))
    if not args.rates:
        raise UsageError("--model custom needs --rates FILE")
    table = json.loads(Path(args.rates).read_text())
    return constant_field(table["rates"] if isinstance(table, dict) else table)


def _y0(args, k: int) -> np.ndarray:
    if args.y0 is None:
        y = np.zeros(k)
        y[0] = 1.0
        return y
    y = np.array(_floats(args.y0))
    if y.size != k:
        raise UsageError(f"--y0 needs {k} entries")
    return y


def _check_horizon(e, times):
    bad = [t for t in times if not 0.0 <= t <= e.horizon]
    if bad:
        raise UsageError(f"times {bad} outside [0, {e.horizon}]")


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(args):
    field = _field(args)
    y0 = _y0(args, field.k)
    if args.scheme == "limit":
        e = simulate_limit(field, args.n, y0, args.horizon, tol=args.tol, seed=args.seed, threads=args.threads)
    else:
        e = simulate_finite(field, args.n, SimplexPoint(y0), args.horizon, args.seed)
    p = _out(args.out)
    if p is None:
        raise UsageError("simulate needs --out")
    write_jsonl(e, p)
    outs = [p]
    if args.emit_plot_data:
        grid = np.linspace(0.0, e.horizon, 101)
        q = Path(str(p) + ".plot.csv")
        q.write_text(tidy_csv(grid, [e.counts_at(t) / e.n for t in grid]))
        outs.append(q)
    _manifest(args, outs)
    return 0


def cmd_ode(args):
    field = _field(args)
    y0 = _y0(args, field.k)
    grid = np.linspace(0.0, args.horizon, args.points)
    path = solve_ode(field, y0, args.horizon, tol=args.tol, times=grid)
    p = _emit_text(path_csv(grid, path.values(grid)), args.out)
    _manifest(args, [p])
    return 0


def cmd_project(args):
    e = read_jsonl(args.input)
    times = _floats(args.times)
    _check_horizon(e, times)
    times = sorted(set(times))
    vals = [e.counts_at(t, left=args.left) / e.n for t in times]
    p = _emit_text(path_csv(times, vals), args.out)
    if args.emit_plot_data and p is not None:
        Path(str(p) + ".plot.csv").write_text(tidy_csv(times, vals))
    _manifest(args, [p])
    return 0


def cmd_qhat(args):
    e = read_jsonl(args.input)
    _check_horizon(e, [args.s, args.t])
    if args.s > args.t:
        raise UsageError("--s must not exceed --t")
    q = estimate_transition(e, args.s, args.t, left_s=args.left_s)
    report = {
        "s": args.s,
        "t": args.t,
        "left_s": args.left_s,
        "Q": q.entries,
        "counts": transition_counts(e, args.s, args.t, left_s=args.left_s),
        "transfer": mass_transfer(e, args.s, args.t, left_s=args.left_s),
    }
    p = _emit_text(_dumps(report), args.out)
    _manifest(args, [p])
    return 0


def cmd_jumps(args):
    e = read_jsonl(args.input)
    if not 0 < args.theta <= 1:
        raise UsageError("--theta must be in (0, 1]")
    p = _emit_text(_dumps(classify_discontinuities(e, args.theta).to_dict()), args.out)
    _manifest(args, [p])
    return 0


def cmd_semigroup_build(args):
    path = read_path_csv(args.path, args.interp)
    grid = _floats(args.grid) if args.grid else None
    tab = build_minimal_semigroup(path, grid, method=args.method)
    p = _out(args.out)
    if p is None:
        sys.stdout.write(_dumps(tab.to_dict()))
    else:
        write_table(tab, p)
    _manifest(args, [p])
    return 0


def cmd_semigroup_check(args):
    tab = read_table(args.table)
    path = read_path_csv(args.path, args.interp)
    rep = check_semigroup(tab, path, tol=args.tol)
    report = rep.to_dict()
    if not rep.passed:
        failed = [k for k in ("cocycle_residual", "compatibility_residual", "minimality_gap", "transfer_excess") if report[k] > args.tol]
        if rep.subadditivity_violations:
            failed.append("subadditivity_violations")
        report["failed"] = failed
    p = _emit_text(_dumps(report), args.out)
    _manifest(args, [p])
    return 0 if rep.passed else 1


def cmd_semigroup_sample(args):
    tab = read_table(args.table)
    y0 = _floats(args.y0) if args.y0 else tab.initial
    if y0 is None:
        raise UsageError("table has no initial marginal; pass --y0")
    e = sample_inhomogeneous_chain(tab, y0, args.n, args.seed, threads=args.threads)
    p = _out(args.out)
    if p is None:
        raise UsageError("semigroup sample needs --out")
    write_jsonl(e, p)
    _manifest(args, [p])
    return 0


def _sampler(text: str):
    if text.startswith("identity"):
        _, _, k = text.partition(":")
        return identity_sampler(int(k) if k else 2)
    kind, sep, file = text.partition(":")
    if not sep or kind not in {"fixed", "mix"}:
        raise UsageError(f"unknown sampler {text!r}")
    data = json.loads(Path(file).read_text())
    if kind == "fixed":
        return fixed_sampler(data["Q"] if isinstance(data, dict) else data)
    if isinstance(data, dict):
        return mixture_sampler(data["matrices"], data.get("weights"))
    return mixture_sampler(data)


def cmd_discrete(args):
    G = _sampler(args.sampler)
    y0 = _y0(args, G.k)
    trace, e = simulate_discrete(G, y0, args.n, args.steps, args.seed, threads=args.threads)
    report = verify_discrete(trace, e, sampler=G)
    outs = []
    body = {**trace.to_dict(), "verification": report}
    outs.append(_emit_text(_dumps(body), args.out_trace))
    if args.out_ensemble:
        p = _out(args.out_ensemble)
        write_jsonl(e, p)
        outs.append(p)
    _manifest(args, outs)
    return 0 if report["passed"] else 1


def cmd_fixtures(args):
    name = args.fixture
    outs = []
    if name == "cantor":
        pairs = [("", fixtures.singular_clock_process(fixtures.MonotoneClock.cantor(), args.n, args.seed))]
    elif name == "threshold":
        pairs = [("", fixtures.threshold_process(args.y0, args.n, args.seed, horizon=args.horizon))]
    elif name == "recolor-pair":
        x, z = fixtures.poisson_recolor_pair(args.n, args.horizon, args.seed)
        pairs = [("-X", x), ("-Z", z)]
    else:
        a, b = fixtures.feller_degenerate_pair(args.p, args.n, args.horizon, args.seed)
        pairs = [("-A", a), ("-B", b)]
    base = args.out or f"{name}.jsonl"
    stem = base[:-6] if base.endswith(".jsonl") else base
    for suffix, e in pairs:
        p = _out(f"{stem}{suffix}.jsonl")
        write_jsonl(e, p)
        outs.append(p)
        if args.emit_plot_data:
            grid = np.linspace(0.0, e.horizon, 101)
            q = Path(str(p) + ".plot.csv")
            q.write_text(tidy_csv(grid, [e.counts_at(t) / e.n for t in grid]))
            outs.append(q)
    _manifest(args, outs)
    return 0


def cmd_verify_all(args):
    only = {int(x) for x in _floats(args.only)} if args.only else None
    results = acceptance.run_suite(args.seed, quick=args.quick, only=only, echo=lambda s: print(s, file=sys.stderr))
    ok = all(r.passed for r in results)
    report = {"seed": args.seed, "quick": args.quick, "passed": ok, "criteria": [r.to_dict() for r in results]}
    p = _emit_text(_dumps(report), args.out)
    _manifest(args, [p])
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(2)


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _model_args(p):
    p.add_argument("--model", choices=["glauber", "reedfrost", "custom"], default="glauber")
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--h", type=float, default=0.0)
    p.add_argument("--J", type=float, default=1.0)
    p.add_argument("--rho", type=float, default=1.0)
    p.add_argument("--rates", help="JSON file with a k x k constant rate table (custom model)")
    p.add_argument("--y0", help="initial frequencies, comma separated")
    p.add_argument("--horizon", type=float, default=1.0)
    p.add_argument("--tol", type=float, default=1e-9)


def build_parser():
    top = _Parser(prog="exmarkov", description="Exchangeable Markov processes on the simplex.")
    top.add_argument("--version", action="version", version=f"exmarkov {__version__}")
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON file of flag defaults; explicit flags win")
    common.add_argument("--threads", type=_positive_int, default=None)
    sub = top.add_subparsers(dest="command", required=True, parser_class=_Parser)
    subs = {}

    def add(name, func, parent=sub, **kw):
        p = parent.add_parser(name, parents=[common], **kw)
        p.set_defaults(func=func)
        subs[name] = p
        return p

    p = add("simulate", cmd_simulate, help="simulate a mean-field chain to JSONL")
    _model_args(p)
    p.add_argument("--n", type=_positive_int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scheme", choices=["finite", "limit"], default="finite")
    p.add_argument("--out")
    p.add_argument("--emit-plot-data", action="store_true")

    p = add("ode", cmd_ode, help="solve the fluid-limit ODE to CSV")
    _model_args(p)
    p.add_argument("--points", type=_positive_int, default=101)
    p.add_argument("--out")

    p = add("project", cmd_project, help="occupancy frequencies at given times")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--times", required=True)
    p.add_argument("--left", action="store_true", help="use left limits")
    p.add_argument("--out")
    p.add_argument("--emit-plot-data", action="store_true")

    p = add("qhat", cmd_qhat, help="empirical transition matrix between two times")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--s", type=float, required=True)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--left-s", action="store_true")
    p.add_argument("--out")

    p = add("jumps", cmd_jumps, help="classify discontinuities")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--theta", type=float, default=0.05)
    p.add_argument("--out")

    sg = sub.add_parser("semigroup", help="build, check or sample semigroup tables")
    subs["semigroup"] = sg
    sgsub = sg.add_subparsers(dest="action", required=True, parser_class=_Parser)
    p = add("build", cmd_semigroup_build, parent=sgsub)
    p.add_argument("--path", required=True)
    p.add_argument("--interp", choices=["step", "linear"], default="step")
    p.add_argument("--grid")
    p.add_argument("--method", choices=["chord", "expm"], default="chord")
    p.add_argument("--out")
    p = add("check", cmd_semigroup_check, parent=sgsub)
    p.add_argument("--table", required=True)
    p.add_argument("--path", required=True)
    p.add_argument("--interp", choices=["step", "linear"], default="step")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--out")
    p = add("sample", cmd_semigroup_sample, parent=sgsub)
    p.add_argument("--table", required=True)
    p.add_argument("--n", type=_positive_int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--y0")
    p.add_argument("--out")

    p = add("discrete", cmd_discrete, help="discrete-time chain with a random matrix per step")
    p.add_argument("--sampler", default="identity", help="identity[:k] | fixed:Q.json | mix:M.json")
    p.add_argument("--y0")
    p.add_argument("--n", type=_positive_int, default=1000)
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-trace")
    p.add_argument("--out-ensemble")

    p = add("fixtures", cmd_fixtures, help="generate a reference process")
    p.add_argument("fixture", choices=["cantor", "threshold", "recolor-pair", "feller-pair"])
    p.add_argument("--n", type=_positive_int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--y0", type=float, default=0.501, help="threshold starting frequency")
    p.add_argument("--p", type=float, default=0.3, help="feller-pair frequency")
    p.add_argument("--horizon", type=float, default=None)
    p.add_argument("--out")
    p.add_argument("--emit-plot-data", action="store_true")

    p = add("verify-all", cmd_verify_all, help="run the acceptance suite")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--quick", action="store_true")
    p.add_argument("--only", help="comma-separated criterion ids")
    p.add_argument("--out")
    return top, subs


def _apply_config(argv, top, subs):
    args = top.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    try:
        cfg = json.loads(Path(args.config).read_text())
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read config {args.config}: {exc}") from None
    if not isinstance(cfg, dict):
        raise UsageError("config must be a JSON object")
    name = getattr(args, "action", None) or args.command
    subs[name].set_defaults(**{k.replace("-", "_"): v for k, v in cfg.items()})
    return top.parse_args(argv)


def main(argv=None) -> int:
    top, subs = build_parser()
    try:
        args = _apply_config(argv, top, subs)
    except SystemExit as exc:
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"exmarkov: error: {exc}", file=sys.stderr)
        return 2
    if args.command == "fixtures" and args.horizon is None:
        args.horizon = {"cantor": 1.0, "threshold": 2.0}.get(args.fixture, 3.0)
    if args.threads:
        rng.set_threads(args.threads)
    t0 = time.perf_counter()
    try:
        code = args.func(args)
    except UsageError as exc:
        print(f"exmarkov: error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, OSError, KeyError) as exc:
        sys.stdout.write(_dumps({"passed": False, "error": type(exc).__name__, "message": str(exc)}))
        return 1
    print(f"exmarkov: {args.command} finished in {time.perf_counter() - t0:.2f}s", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
