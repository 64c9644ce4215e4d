"""Command-line front end.

Every subcommand reads one model file, writes CSV/JSON/DOT outputs into
``--out`` and records a ``manifest.json`` next to them.  Exit codes: 0 on
success, 1 when a solver fails, 2 for usage errors (nothing is written).
"""
from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ModelError, SolverError
from .linear import default_frequencies, frequency_response, linearize
from .model import load_model, model_from_dict, rad_couplings_to_dict, serialize_model, with_rad_couplings
from .network import Network, flows_to_dot, heat_flow_report
from .radiative import DEFAULT_SEED, compute_exchange_factors, diagnostics_rows, to_rad_couplings
from .solvers import SolveOptions, solve_steady_iterative, solve_steady_newton, solve_transient

DAY = 86400.0


class UsageError(Exception):
    """Bad flags or inputs; mapped to exit code 2."""


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("THERMNET_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise UsageError(f"THERMNET_THREADS must be a positive integer, got {env!r}") from None
        if n < 1:
            raise UsageError(f"THERMNET_THREADS must be a positive integer, got {env!r}")
        return n
    return 1


def _positive_int(text):
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return n


def _seed(text):
    n = int(text)
    if not 0 <= n < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return n


def _load(args):
    path = getattr(args, "model", None)
    if path is None:
        raise UsageError("no model file given (use --model <path>)")
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"model file not found: {p}")
    try:
        return load_model(p), p
    except ModelError as exc:
        raise UsageError(f"invalid model file {p}: {exc}") from None


def _write_csv(path: Path, header, rows, comment: str | None = None):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _num(x: float) -> str:
    return repr(float(x))


def _long_rows(net: Network, times, T):
    for t, row in zip(times, T):
        for nid, v in zip(net.ids, row):
            yield _num(t), nid, _num(v)


# subcommands: each returns (outputs dict name -> writer, options for the manifest)
# so that nothing touches the output directory before the computation succeeded.

def cmd_radk(args, model):
    rays = args.rays
    m = compute_exchange_factors(model, rays_per_face=rays, master_seed=args.seed, threads=_threads(args))
    block = rad_couplings_to_dict(to_rad_couplings(m))
    files = {
        "rad_couplings.json": json.dumps(block, indent=2) + "\n",
        "radk_diagnostics.csv": (("entry", "GR", "stderr", "rays"),
                                 [(e, _num(g), _num(s), r) for e, g, s, r in diagnostics_rows(m)]),
    }
    if args.write_model:
        files["model_with_radk.json"] = serialize_model(with_rad_couplings(model, to_rad_couplings(m)))
    return files, {"rays": rays, "seed": args.seed, "capped_rays": int(m.capped.sum())}


def _steady(args, net, extra=None):
    opts = SolveOptions(tol_residual=args.tol, method=args.method)
    solver = solve_steady_newton if args.method == "newton" else solve_steady_iterative
    return solver(net, None, opts, extra=extra), opts


def cmd_solve_steady(args, model):
    net = Network(model)
    sol, opts = _steady(args, net)
    rows = [(nid, _num(v)) for nid, v in zip(net.ids, sol.T)]
    files = {"temperatures.csv": (("node_id", "temperature_K"), rows)}
    return files, {"method": args.method, "tol_residual": opts.tol_residual, "iterations": sol.iterations,
                   "residual_norm": sol.residual_norm}


def _initial(net: Network, uniform: float | None):
    if uniform is None:
        return None
    T = net.T_init.copy()
    T[~net.boundary] = uniform
    return T


def cmd_solve_transient(args, model):
    net = Network(model)
    t_end = args.t_end
    opts = SolveOptions(method=args.method, dt_initial=args.dt0, error_tol_abs=args.tol,
                        error_tol_rel=args.tol_rel)
    t_eval = None
    if args.output_every is not None:
        k = max(1, int(math.ceil(t_end / args.output_every - 1e-9)))
        t_eval = np.minimum(np.arange(k + 1) * args.output_every, t_end)
    res = solve_transient(net, _initial(net, args.initial_temperature), (0.0, t_end), opts, t_eval=t_eval,
                          steady_rate=args.steady_rate)
    files = {"temperatures.csv": (("time_s", "node_id", "temperature_K"), list(_long_rows(net, res.times, res.T)))}
    return files, {"method": args.method, "t_end": t_end, "dt0": args.dt0, "error_tol_abs": args.tol,
                   "error_tol_rel": args.tol_rel, "output_every": args.output_every,
                   "steady_rate": args.steady_rate, "initial_temperature": args.initial_temperature,
                   "diagnostics": res.diagnostics}


def cmd_transfer(args, model):
    net = Network(model)
    try:
        freqs = default_frequencies(args.fmin, args.fmax, args.points)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if not (0 < args.fmin < args.fmax):
        raise UsageError("need 0 < --fmin < --fmax")
    sol = solve_steady_newton(net, None, SolveOptions(tol_residual=1e-12, tol_dT=1e-10))
    sys_ = linearize(net, sol.T)
    try:
        sys_.input_vector(args.input)
    except (KeyError, ValueError) as exc:
        raise UsageError(str(exc.args[0] if exc.args else exc)) from None
    spec = frequency_response(sys_, args.input, freqs)
    rows = []
    for r, f in enumerate(spec.frequencies):
        for c, nid in enumerate(spec.node_ids):
            rows.append((_num(f), nid, _num(spec.gain[r, c]), _num(spec.phase[r, c])))
    files = {"transfer.csv": (("frequency_hz", "node_id", "gain", "phase_rad"), rows,
                              f"input={args.input} gain_units={spec.units}")}
    return files, {"input": args.input, "units": spec.units, "fmin": args.fmin, "fmax": args.fmax,
                   "points": args.points}


def cmd_heatflow(args, model):
    net = Network(model)
    sol, _ = _steady(args, net)
    chain = args.chain.split(",") if args.chain else None
    try:
        rep = heat_flow_report(net, sol.T, chain=chain)
    except KeyError as exc:
        raise UsageError(str(exc.args[0])) from None
    rows = [(f.source, f.target, f.kind, _num(f.watts)) for f in rep.flows]
    group_rows = [(a, b, _num(w)) for (a, b), w in sorted(rep.group_flows.items())]
    files = {
        "flows.csv": (("from", "to", "kind", "watts"), rows),
        "group_flows.csv": (("from", "to", "watts"), group_rows),
        "heatflow.dot": flows_to_dot(rep, by_group=not args.by_node),
        "temperatures.csv": (("node_id", "temperature_K"), [(n, _num(v)) for n, v in zip(net.ids, sol.T)]),
    }
    if chain:
        files["chain.csv"] = (("from", "to", "watts"), [(a, b, _num(w)) for a, b, w in rep.chain])
    return files, {"method": args.method, "chain": chain}


def cmd_orbit(args, model):
    from .orbit import quasi_stationary_run

    net = Network(model)
    if args.scenario == "l2":
        T0 = net.T_init.copy()
        T0[~net.boundary] = args.initial_temperature
        opts = SolveOptions(method=args.method, dt_initial=10.0, error_tol_abs=args.error_tol)
        t_end = args.t_end_days * DAY
        t_eval = np.linspace(0.0, t_end, int(round(args.t_end_days * 4)) + 1)
        res = solve_transient(net, T0, (0.0, t_end), opts, t_eval=t_eval, steady_rate=args.steady_rate)
        if not res.diagnostics["steady_reached"]:
            raise SolverError(f"no steady state within {args.t_end_days} days")
        files = {"temperatures.csv": (("time_s", "node_id", "temperature_K"),
                                      list(_long_rows(net, res.times, res.T)))}
        return files, {"scenario": "l2", "method": args.method, "initial_temperature": args.initial_temperature,
                       "steady_rate": args.steady_rate, "diagnostics": res.diagnostics}
    if model.orbit is None:
        raise UsageError("model has no orbit section; the heo scenario needs one")
    q = quasi_stationary_run(model, cycles_max=args.cycles_max, tol=args.tol, start=args.start)
    rows = []
    for c in q.cycles:
        for nid in net.ids:
            rows.append((c.cycle, nid, _num(c.T_reference[nid]), _num(c.T_max[nid]), _num(c.T_min[nid])))
    files = {
        "orbit_summary.csv": (("cycle", "node_id", "T_at_reference_K", "max_T_K", "min_T_K"), rows),
        "temperatures.csv": (("time_s", "node_id", "temperature_K"),
                             list(_long_rows(net, q.result.times, q.result.T))),
    }
    return files, {"scenario": "heo", "cycles_max": args.cycles_max, "tol": args.tol, "start": args.start,
                   "period_s": q.period, "cycles": q.n_cycles}


# sweeps

def _resolve(data, path: str):
    """Container and key addressed by a dotted path such as ``loads.detector_dissipation.power``.

    List elements are selected by their ``id`` (or ``name`` for materials)
    or by an integer index.
    """
    parts = path.split(".")
    if len(parts) < 2:
        raise UsageError(f"invalid parameter path {path!r}")
    obj = data
    for depth, part in enumerate(parts[:-1]):
        if isinstance(obj, list):
            match = [o for o in obj if isinstance(o, dict) and part in (o.get("id"), o.get("name"))]
            if not match and part.lstrip("-").isdigit() and -len(obj) <= int(part) < len(obj):
                match = [obj[int(part)]]
            if not match:
                raise UsageError(f"invalid parameter path {path!r}: no element {part!r}")
            obj = match[0]
        elif isinstance(obj, dict) and part in obj:
            obj = obj[part]
        else:
            raise UsageError(f"invalid parameter path {path!r}: no field {'.'.join(parts[:depth + 1])!r}")
    key = parts[-1]
    if not isinstance(obj, dict) or key not in obj:
        raise UsageError(f"invalid parameter path {path!r}: no field {key!r}")
    if isinstance(obj[key], bool) or not isinstance(obj[key], (int, float, str)):
        raise UsageError(f"invalid parameter path {path!r}: not a numeric or enum field")
    return obj, key


def _parse_value(text: str, current):
    if isinstance(current, str):
        return text
    try:
        return float(text)
    except ValueError:
        raise UsageError(f"value {text!r} is not numeric") from None


def _run_inner(job):
    argv, = job
    return main(argv)


def cmd_sweep(args, model, model_path: Path, out: Path):
    """Returns per-value outputs written by the inner runs plus the summary."""
    inner = list(args.inner)
    if inner and inner[0] == "--":
        inner = inner[1:]
    if not inner or inner[0] not in ("solve-steady", "solve-transient", "heatflow", "transfer", "orbit", "radk"):
        raise UsageError("sweep needs an inner command after '--', e.g. '-- solve-steady'")
    data = json.loads(model_path.read_text(encoding="utf-8"))
    _, key = _resolve(data, args.param)
    current = _resolve(data, args.param)[0][key]
    values = sorted({_parse_value(v, current) for v in args.values}, key=lambda v: (isinstance(v, str), v))
    report = args.report.split(",") if args.report else []
    ids = {n["id"] for n in data["nodes"]}
    for nid in report:
        if nid not in ids:
            raise UsageError(f"unknown node {nid!r} in --report")
    variants = []
    for v in values:
        d = copy.deepcopy(data)
        obj, k = _resolve(d, args.param)
        obj[k] = v
        try:
            model_from_dict(d)
        except ModelError as exc:
            raise UsageError(f"value {v!r} gives an invalid model: {exc}") from None
        variants.append((v, d))

    out.mkdir(parents=True, exist_ok=True)
    jobs = []
    for idx, (v, d) in enumerate(variants):
        sub = out / f"value_{idx:03d}"
        sub.mkdir(exist_ok=True)
        mp = sub / "model.json"
        mp.write_text(json.dumps(d, indent=2) + "\n", encoding="utf-8")
        argv = ["--model", str(mp), "--out", str(sub / "run"), "--seed", str(args.seed),
                "--threads", str(_threads(args)), *inner]
        jobs.append((argv,))
    workers = min(args.jobs, len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            codes = list(pool.map(_run_inner, jobs))
    else:
        codes = [_run_inner(j) for j in jobs]

    rows = []
    for idx, ((v, _), code) in enumerate(zip(variants, codes)):
        temps = _final_temperatures(out / f"value_{idx:03d}" / "run" / "temperatures.csv")
        for nid in report or [None]:
            T = temps.get(nid) if nid else None
            rows.append((v if isinstance(v, str) else _num(v), code, nid or "", "" if T is None else T))
    _write_csv(out / "sweep_summary.csv", ("value", "exit_code", "node_id", "temperature_K"), rows)
    return 1 if any(codes) else 0, {"param": args.param, "values": values, "inner": inner, "report": report,
                                    "exit_codes": codes}


def _final_temperatures(path: Path) -> dict[str, str]:
    if not path.is_file():
        return {}
    with open(path, encoding="utf-8") as fh:
        rows = list(csv.reader(line for line in fh if not line.startswith("#")))
    header, body = rows[0], rows[1:]
    if header[0] == "time_s":
        last = body[-1][0]
        return {r[1]: r[2] for r in body if r[0] == last}
    return {r[0]: r[1] for r in body}


# plumbing

def _manifest(args, argv, model_path, options, outputs, started, status):
    digest = hashlib.sha256(Path(model_path).read_bytes()).hexdigest() if model_path else None
    return {
        "tool": "thermnet",
        "version": __version__,
        "command": args.command,
        "argv": list(argv),
        "model": str(model_path) if model_path else None,
        "model_sha256": digest,
        "seed": args.seed,
        "threads": _threads(args),
        "options": options,
        "outputs": sorted(outputs),
        "status": status,
        "started": time.strftime("%Y-%m-%dT%H:%M:%S%z", time.localtime(started)),
        "wall_clock_s": round(time.time() - started, 3),
    }


def _write_outputs(out: Path, files: dict):
    out.mkdir(parents=True, exist_ok=True)
    for name, content in files.items():
        if isinstance(content, str):
            (out / name).write_text(content, encoding="utf-8")
        else:
            _write_csv(out / name, *content)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    return x


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", default=argparse.SUPPRESS, help="model file (JSON)")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    common.add_argument("--seed", type=_seed, default=argparse.SUPPRESS, help="master seed for ray tracing")
    common.add_argument("--threads", type=_positive_int, default=argparse.SUPPRESS,
                        help="worker threads (default: $THERMNET_THREADS or 1)")

    p = argparse.ArgumentParser(prog="thermnet", description="Lumped-parameter thermal network analysis.")
    p.add_argument("--version", action="version", version=f"thermnet {__version__}")
    p.add_argument("--model", default=None, help="model file (JSON)")
    p.add_argument("--out", default="thermnet_out", help="output directory (default: thermnet_out)")
    p.add_argument("--seed", type=_seed, default=DEFAULT_SEED, help=f"master seed (default: {DEFAULT_SEED})")
    p.add_argument("--threads", type=_positive_int, default=None,
                   help="worker threads (default: $THERMNET_THREADS or 1)")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help_, positional=True):
        sp = sub.add_parser(name, parents=[common], help=help_)
        if positional:
            sp.add_argument("model", nargs="?", default=argparse.SUPPRESS, help="model file (same as --model)")
        return sp

    sp = add("radk", "Monte Carlo radiative exchange factors")
    sp.add_argument("--rays", type=_positive_int, default=None,
                    help="rays per face (default: 100000 for high-accuracy faces, 10000 otherwise)")
    sp.add_argument("--write-model", action="store_true", help="also write the model with the new block")

    for name, help_ in (("solve-steady", "steady-state temperatures"), ("heatflow", "steady heat-flow report")):
        sp = add(name, help_)
        sp.add_argument("--method", choices=("newton", "iterative"), default="newton")
        sp.add_argument("--tol", type=float, default=1e-9, help="residual tolerance in W")
        if name == "heatflow":
            sp.add_argument("--chain", default=None, help="comma-separated group chain, e.g. spacecraft,shield1")
            sp.add_argument("--by-node", action="store_true", help="DOT graph per node instead of per group")

    sp = add("solve-transient", "transient integration")
    sp.add_argument("--method", choices=("crank_nicolson", "bdf"), default="crank_nicolson")
    sp.add_argument("--t-end", type=float, required=True, help="end time in s")
    sp.add_argument("--dt0", type=float, default=1.0, help="initial step in s")
    sp.add_argument("--output-every", type=float, default=None, help="output interval in s (default: every step)")
    sp.add_argument("--tol", type=float, default=1e-4, help="absolute error tolerance in K")
    sp.add_argument("--tol-rel", type=float, default=1e-6, help="relative error tolerance")
    sp.add_argument("--initial-temperature", type=float, default=None,
                    help="uniform start temperature for non-boundary nodes in K")
    sp.add_argument("--steady-rate", type=float, default=None, help="stop once max |dT/dt| falls below this (K/s)")

    sp = add("transfer", "frequency response about the steady state")
    sp.add_argument("--input", required=True, help="boundary:<node> or power:<node>")
    sp.add_argument("--fmin", type=float, default=1e-6)
    sp.add_argument("--fmax", type=float, default=1e-1)
    sp.add_argument("--points", type=_positive_int, default=61)

    sp = add("orbit", "orbital scenarios: L2 cool-down or quasi-stationary elliptical orbit")
    sp.add_argument("--scenario", choices=("l2", "heo"), required=True)
    sp.add_argument("--cycles-max", type=_positive_int, default=20)
    sp.add_argument("--tol", type=float, default=0.1, help="quasi-stationary criterion in K")
    sp.add_argument("--start", choices=("initial", "mean"), default="initial",
                    help="heo start state: model temperatures or the orbit-mean steady state")
    sp.add_argument("--method", choices=("crank_nicolson", "bdf"), default="crank_nicolson")
    sp.add_argument("--error-tol", type=float, default=1e-4, help="l2 integration tolerance in K")
    sp.add_argument("--initial-temperature", type=float, default=293.15, help="l2 start temperature in K")
    sp.add_argument("--steady-rate", type=float, default=1e-8, help="l2 stop criterion in K/s")
    sp.add_argument("--t-end-days", type=float, default=400.0, help="l2 time limit in days")

    sp = add("sweep", "run an inner command for several values of one model field", positional=False)
    sp.add_argument("--param", required=True, help="dotted field path, e.g. loads.detector_dissipation.power")
    sp.add_argument("--values", nargs="+", required=True)
    sp.add_argument("--report", default=None, help="comma-separated node ids for the summary")
    sp.add_argument("--jobs", type=_positive_int, default=1, help="parallel worker processes")
    sp.add_argument("inner", nargs=argparse.REMAINDER, help="-- <inner command and flags>")
    return p


COMMANDS = {
    "radk": cmd_radk,
    "solve-steady": cmd_solve_steady,
    "solve-transient": cmd_solve_transient,
    "transfer": cmd_transfer,
    "heatflow": cmd_heatflow,
    "orbit": cmd_orbit,
}


def _check_args(args):
    for name in ("tol", "tol_rel", "error_tol", "dt0", "t_end", "output_every", "steady_rate", "t_end_days"):
        v = getattr(args, name, None)
        if v is not None and not (v > 0 and math.isfinite(v)):
            if name == "tol" and args.command == "orbit" and v == math.inf:
                continue
            raise UsageError(f"--{name.replace('_', '-')} must be a positive finite number")


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    started = time.time()
    out = Path(args.out)
    try:
        _check_args(args)
        model, model_path = _load(args)
        _threads(args)
        if args.command == "sweep":
            code, options = cmd_sweep(args, model, model_path, out)
            man = _manifest(args, argv, model_path, _jsonable(options), ["sweep_summary.csv"], started,
                            "ok" if code == 0 else "inner failure")
            (out / "manifest.json").write_text(json.dumps(man, indent=2) + "\n", encoding="utf-8")
            return code
        files, options = COMMANDS[args.command](args, model)
    except UsageError as exc:
        print(f"thermnet: error: {exc}", file=sys.stderr)
        return 2
    except (SolverError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"thermnet: solver failure: {exc}", file=sys.stderr)
        return 1
    except (ValueError, KeyError, ModelError) as exc:
        print(f"thermnet: error: {exc}", file=sys.stderr)
        return 2
    _write_outputs(out, files)
    man = _manifest(args, argv, model_path, _jsonable(options), list(files), started, "ok")
    (out / "manifest.json").write_text(json.dumps(man, indent=2) + "\n", encoding="utf-8")
    return 0


if __name__ == "__main__":
    sys.exit(main())
