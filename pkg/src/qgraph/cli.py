"""Command-line front end.

Subcommands: spectrum, continue, classify, bowtie, enumerate, render.
Every run writes a manifest (JSON) recording the effective parameters and the
tool version.  Exit codes: 0 success, 2 invalid configuration, 3 numerical
failure (a diagnostic JSON file is written next to the outputs).
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import traceback
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .graphs import GraphFunction, ResonanceWarning, build_graph, graph_from_json, graph_to_dict

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class ConfigError(ValueError):
    """Invalid command-line configuration."""


@dataclass
class RunConfig:
    subcommand: str
    params: dict
    out: Path | None = None
    plot: bool = False
    outputs: list = field(default_factory=list)


def threads() -> int:
    """Worker cap from QGRAPH_THREADS (default 1)."""
    raw = os.environ.get("QGRAPH_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"QGRAPH_THREADS must be an integer, got {raw!r}")
    if n < 1:
        raise ConfigError("QGRAPH_THREADS must be at least 1")
    return n


def _pmap(func, items):
    items = list(items)
    n = min(threads(), max(1, len(items)))
    if n == 1:
        return [func(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(func, items))


def parse_window(text: str) -> tuple[float, float]:
    try:
        a, b = (float(v) for v in text.split(":"))
    except ValueError:
        raise ConfigError(f"window must look like lo:hi, got {text!r}")
    if not (math.isfinite(a) and math.isfinite(b)) or not a < b:
        raise ConfigError(f"empty or invalid window {text!r}")
    return a, b


def _graph(args):
    if getattr(args, "graph_file", None):
        try:
            return graph_from_json(Path(args.graph_file).read_text())
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"cannot read graph file: {exc}")
    if args.L is None or not args.L > 0:
        raise ConfigError("--L must be given and positive")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ResonanceWarning)
        try:
            return build_graph(args.graph, args.L)
        except ValueError as exc:
            raise ConfigError(str(exc))


def _positive(name, v):
    if v is None or not v > 0 or not math.isfinite(v):
        raise ConfigError(f"{name} must be positive")
    return v


# ---------------------------------------------------------------------------
# output helpers


def _write_csv(path: Path, header, rows, cfg: RunConfig):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_cell(v) for v in r])
    cfg.outputs.append(str(path))


def _cell(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _write_text(path: Path, text: str, cfg: RunConfig):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    cfg.outputs.append(str(path))


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def _manifest_path(cfg: RunConfig) -> Path:
    out = cfg.out
    if out is None:
        return Path(f"qgraph-{cfg.subcommand}.manifest.json")
    if out.suffix:
        return out.with_suffix(".manifest.json")
    return out / "manifest.json"


def _write_manifest(cfg: RunConfig, extra: dict | None = None):
    doc = {"tool": "qgraph", "version": __version__, "subcommand": cfg.subcommand,
           "parameters": cfg.params, "outputs": sorted(cfg.outputs)}
    if extra:
        doc.update(extra)
    path = _manifest_path(cfg)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(_dump_json(doc))
    return path


def _solution_rows(phi: GraphFunction):
    from .discretize import snapshot_rows
    return list(snapshot_rows(phi))


def _read_solution(path: Path, graph, intervals) -> GraphFunction:
    vals = {e.name: [] for e in graph.edges}
    with open(path) as fh:
        for row in csv.DictReader(fh):
            vals[row["edge"]].append(float(row["phi"]))
    return GraphFunction(graph, tuple(np.array(vals[e.name]) for e in graph.edges))


# ---------------------------------------------------------------------------
# subcommands


def cmd_spectrum(args, cfg: RunConfig):
    from .spectrum import fd_eigenmodes, find_modes

    g = _graph(args)
    kmax = _positive("--kmax", args.kmax)
    cfg.params.update(graph=graph_to_dict(g), kmax=kmax, h=args.h)
    rows = []
    if g.family == "dumbbell":
        modes, resonant = find_modes(g.markers["L"], kmax)
        cfg.params["resonant"] = resonant
        rows = [(m.k, m.lam, m.family, m.multiplicity) for m in modes]
    else:
        h = _positive("--h", args.h)
        pairs = fd_eigenmodes(g, h, count=400)
        lams = [lam if lam > 1e-9 else 0.0 for lam, _ in pairs if lam <= kmax ** 2 * (1 + 1e-9)]
        i = 0
        while i < len(lams):
            j = i
            while j + 1 < len(lams) and abs(lams[j + 1] - lams[i]) <= 1e-6 * max(1.0, lams[i]):
                j += 1
            lam = float(np.mean(lams[i:j + 1]))
            rows.append((math.sqrt(lam), lam, "fd", j - i + 1))
            i = j + 1
    header = ["k", "lambda", "family", "multiplicity"]
    if cfg.out is None:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(header)
        w.writerows([[_cell(v) for v in r] for r in rows])
    else:
        _write_csv(cfg.out, header, rows, cfg)
    return {"modes": len(rows)}


def _branch_rows(branch):
    rows = []
    for p in branch.all_points():
        rows.append((float(p.s), float(p.lam), float(p.Q), ";".join(sorted(p.tags))))
    return rows


def cmd_continue(args, cfg: RunConfig):
    from .continuation import continue_branch, seed_point, switch_branch
    from .discretize import constant_solution, make_system
    from .svg import render_diagram, render_profile, series_from_branch

    g = _graph(args)
    lo, hi = parse_window(args.lambda_window)
    ds = _positive("--ds", args.ds)
    h = _positive("--h", args.h)
    if args.source != "constant":
        raise ConfigError("only --from constant is supported")
    if lo >= 0:
        raise ConfigError("the constant branch needs lambda < 0 inside the window")
    if cfg.out is None:
        raise ConfigError("--out is required")
    cfg.params.update(graph=graph_to_dict(g), window=[lo, hi], ds=ds, h=h, source=args.source,
                      switch=args.switch, max_steps=args.max_steps, stencil=args.stencil)
    sys_ = make_system(g, h, stencil=args.stencil)
    lam0 = min(hi, -1e-2)
    seed = seed_point(sys_, np.full(sys_.size, constant_solution(lam0)), lam0, -1.0)
    main = continue_branch(sys_, seed, -1.0, (lo, hi), ds=ds, max_steps=args.max_steps,
                           origin="constant")
    branches = [main]
    if args.switch:
        starts = []
        for bp in main.events_tagged("branch_point"):
            try:
                starts.extend(switch_branch(sys_, bp))
            except ValueError:
                continue
        branches += _pmap(lambda p: continue_branch(sys_, p, 1.0, (lo, hi), ds=ds,
                                                    max_steps=args.max_steps,
                                                    origin=f"switched at {p.lam:.6f}",
                                                    q_max=args.q_max), starts)
    paths = [cfg.out] + [cfg.out.with_name(f"{cfg.out.stem}_sw{k:02d}{cfg.out.suffix}")
                         for k in range(1, len(branches))]
    for b, path in zip(branches, paths):
        _write_csv(path, ["s", "lambda", "Q", "tags"], _branch_rows(b), cfg)
    if args.solutions:
        d = Path(args.solutions)
        for i, p in enumerate(main.all_points()):
            _write_csv(d / f"point_{i:05d}.csv", ["edge", "x", "phi"], _solution_rows(p.solution), cfg)
        cfg.params["solutions"] = str(d)
    if cfg.plot:
        _write_text(cfg.out.with_suffix(".svg"),
                    render_diagram([series_from_branch(b) for b in branches]), cfg)
        _write_text(cfg.out.with_name(cfg.out.stem + "_start.svg"),
                    render_profile(main.points[0].solution, "start"), cfg)
    return {"branches": [{"file": str(p), "origin": b.origin, "stop": b.stop_reason,
                          "events": [{"lambda": e.lam, "Q": e.Q, "tags": sorted(e.tags)}
                                     for e in b.events]}
                         for b, p in zip(branches, paths)]}


def cmd_classify(args, cfg: RunConfig):
    from .classify import SolvabilityError, classify, compute_thetas
    from .continuation import polish_branch_point
    from .discretize import constant_solution, make_system

    bpath = Path(args.branch)
    mpath = Path(args.manifest) if args.manifest else bpath.with_suffix(".manifest.json")
    try:
        rows = list(csv.DictReader(open(bpath)))
        man = json.loads(mpath.read_text())
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read branch or manifest: {exc}")
    if not 0 <= args.index < len(rows):
        raise ConfigError(f"--index must lie in [0, {len(rows) - 1}]")
    p = man["parameters"]
    from .graphs import graph_from_dict
    g = graph_from_dict(p["graph"])
    sys_ = make_system(g, p["h"], stencil=p.get("stencil", "ghost"))
    lam = float(rows[args.index]["lambda"])
    sol_dir = args.solutions or p.get("solutions")
    if sol_dir:
        phi = _read_solution(Path(sol_dir) / f"point_{args.index:05d}.csv", g, sys_.intervals)
        u = sys_.from_function(phi)
    elif p.get("source") == "constant":
        u = np.full(sys_.size, constant_solution(lam))
    else:
        raise ConfigError("no solution available for this point; rerun continue with --solutions")
    cfg.params.update(branch=str(bpath), index=args.index, manifest=str(mpath))
    u, lam = polish_branch_point(sys_, u, lam)
    th = compute_thetas(sys_, u, lam)
    c = classify(th)
    doc = {"row_tags": rows[args.index]["tags"], "lambda0": float(lam), "thetas": [float(t) for t in th.thetas], "kind": c.kind,
           "side": c.side, "normal_form_side": c.normal_form_side, "notes": list(th.notes)}
    text = _dump_json(doc)
    if cfg.out is None:
        sys.stdout.write(text)
    else:
        _write_text(cfg.out, text, cfg)
    return doc


def cmd_bowtie(args, cfg: RunConfig):
    from .bowtie import dst_branch_events, sample_branch
    from .svg import Series, Style, render_diagram

    n = int(args.samples)
    if n < 2:
        raise ConfigError("--samples must be at least 2")
    cfg.params.update(samples=n, events=args.events)
    events = dst_branch_events()
    ev_doc = [{"branches": list(e.branches), "omega": e.omega, "Q": e.Q, "kind": e.kind,
               "theta": e.theta} for e in events]
    if cfg.out is None:
        if args.events:
            sys.stdout.write(_dump_json(ev_doc))
        return {"events": len(events)}
    series = []
    rows = []
    for bid in range(1, 8):
        pts = sample_branch(bid, n)
        rows += [(p.branch_id, p.theta, p.omega, p.Q, p.a, p.b, p.c) for p in pts]
        series.append(Series(f"branch {bid}", tuple(p.omega for p in pts), tuple(p.Q for p in pts)))
    _write_csv(cfg.out / "branches.csv", ["branch_id", "theta", "omega", "Q", "a", "b", "c"], rows, cfg)
    if args.events:
        _write_text(cfg.out / "events.json", _dump_json(ev_doc), cfg)
    if cfg.plot:
        marks = tuple((e.omega, e.Q, e.kind) for e in events)
        series.append(Series("events", (), (), marks))
        _write_text(cfg.out / "bowtie.svg",
                    render_diagram(series, Style(xlabel="Ω", ylabel="Q")), cfg)
    return {"events": len(events)}


def cmd_enumerate(args, cfg: RunConfig):
    from . import shooting as sh
    from .discretize import make_system, power
    from .graphs import build_dumbbell
    from .svg import render_profile

    lam = float(args.lam)
    L = _positive("--L", args.L)
    h = _positive("--h", args.h)
    if cfg.out is None:
        raise ConfigError("--out is required")
    q_range = parse_window(args.q_range)
    cfg.params.update(lam=lam, L=L, mode=args.mode, h=h, n_max=args.n_max, m_max=args.m_max,
                      q_range=list(q_range), grid=args.grid)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ResonanceWarning)
        g = build_dumbbell(L)
    sys_ = make_system(g, h)
    entries, sols = [], []
    extra = {}
    if args.mode == "shoot":
        scan = sh.find_standing_waves(lam, L, q_range, args.grid)
        for k, r in enumerate(scan.roots):
            sols.append((f"root_{k:03d}", r.function(sys_)))
            entries.append({"id": f"root_{k:03d}", "q": r.q, "f": r.f, "Q": r.Q})
        extra["divergent_gaps"] = [list(gp) for gp in scan.gaps]
    elif args.mode == "complete":
        for k, t in enumerate(sh.enumerate_complete(lam, L, args.n_max, args.m_max)):
            c = sh.materialize(t, lam, L)
            phi = c.function(sys_)
            sols.append((f"triple_{k:03d}", phi))
            entries.append({"id": f"triple_{k:03d}", "triple": str(t), "Q": power(phi)})
        extra["schedule"] = [{"lambda": e.lam, "parent": str(e.parent), "child": str(e.child),
                              "rule": e.rule}
                             for e in sh.complete_bifurcation_schedule(L, args.n_max, args.m_max)]
    else:
        for k, r in enumerate(sh.hybrid_solutions_at(lam, L, args.n_max, h, q_range=q_range)):
            sols.append((f"hybrid_{k:03d}", r.solution))
            entries.append({"id": f"hybrid_{k:03d}", "label": r.label, "Q": power(r.solution)})
    reports = _pmap(lambda s: sh.fd_oracle(g, [lambda x, a=v: a for v in s[1].values], lam, h), sols)
    for e, rep in zip(entries, reports):
        e["fd_residual"] = rep.residual
        e["fd_correction"] = rep.correction
    for (name, phi), e in zip(sols, entries):
        _write_csv(cfg.out / f"{name}.csv", ["edge", "x", "phi"], _solution_rows(phi), cfg)
        if cfg.plot:
            _write_text(cfg.out / f"{name}.svg", render_profile(phi, name), cfg)
    extra["solutions"] = entries
    return extra


def _read_branch_csv(path: Path):
    from .svg import Series
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    if rows and "branch_id" in rows[0]:
        out = []
        for bid in sorted({int(r["branch_id"]) for r in rows}):
            rs = [r for r in rows if int(r["branch_id"]) == bid]
            out.append(Series(f"branch {bid}", tuple(float(r["omega"]) for r in rs),
                              tuple(float(r["Q"]) for r in rs)))
        return out
    plain = [r for r in rows if not r["tags"] or r["tags"] == "start"]
    marks = tuple((float(r["lambda"]), float(r["Q"]), r["tags"].split(";")[0])
                  for r in rows if r["tags"] and r["tags"] != "start")
    return [Series(path.stem, tuple(float(r["lambda"]) for r in plain),
                   tuple(float(r["Q"]) for r in plain), marks)]


def cmd_render(args, cfg: RunConfig):
    from .svg import render_diagram
    if cfg.out is None:
        raise ConfigError("--out is required")
    series = []
    try:
        for p in args.branch:
            series += _read_branch_csv(Path(p))
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError(f"cannot read branch CSV: {exc}")
    if not series:
        raise ConfigError("nothing to render")
    cfg.params.update(branch=list(args.branch))
    _write_text(cfg.out, render_diagram(series), cfg)
    return {}


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qgraph", description="Standing waves on quantum graphs.")
    p.add_argument("--version", action="version", version=f"qgraph {__version__}")
    sub = p.add_subparsers(dest="subcommand", required=True)

    def common(sp, out_help):
        sp.add_argument("--out", default=None, help=out_help)
        sp.add_argument("--plot", action="store_true", help="also write SVG plots")

    sp = sub.add_parser("spectrum", help="linear spectrum")
    sp.add_argument("--graph", choices=["dumbbell", "lollipop", "interval"], default="dumbbell")
    sp.add_argument("--graph-file", help="JSON graph description")
    sp.add_argument("--L", type=float, default=None)
    sp.add_argument("--kmax", type=float, required=True)
    sp.add_argument("--h", type=float, default=0.01, help="grid step for the FD fallback")
    common(sp, "CSV file (default stdout)")

    sp = sub.add_parser("continue", help="continue the constant branch")
    sp.add_argument("--graph", choices=["dumbbell", "lollipop", "interval"], default="dumbbell")
    sp.add_argument("--graph-file")
    sp.add_argument("--L", type=float, default=None)
    sp.add_argument("--from", dest="source", default="constant")
    sp.add_argument("--lambda-window", default="-3:0")
    sp.add_argument("--ds", type=float, default=0.01)
    sp.add_argument("--h", type=float, default=0.05)
    sp.add_argument("--stencil", choices=["ghost", "one-sided"], default="ghost")
    sp.add_argument("--max-steps", type=int, default=5000)
    sp.add_argument("--q-max", type=float, default=20.0, help="power limit for switched branches")
    sp.add_argument("--switch", action="store_true", help="also follow branches from branch points")
    sp.add_argument("--solutions", default=None, help="directory for per-point solution CSVs")
    common(sp, "branch CSV file")

    sp = sub.add_parser("classify", help="classify a branch point")
    sp.add_argument("--branch", required=True)
    sp.add_argument("--index", type=int, required=True)
    sp.add_argument("--manifest", default=None)
    sp.add_argument("--solutions", default=None)
    common(sp, "JSON file (default stdout)")

    sp = sub.add_parser("bowtie", help="bowtie DST branches and events")
    sp.add_argument("--events", action="store_true")
    sp.add_argument("--samples", type=int, default=200)
    common(sp, "output directory (events go to stdout without it)")

    sp = sub.add_parser("enumerate", help="enumerate dumbbell standing waves at one lambda")
    sp.add_argument("--lambda", dest="lam", type=float, required=True)
    sp.add_argument("--L", type=float, required=True)
    sp.add_argument("--mode", choices=["shoot", "complete", "hybrid"], required=True)
    sp.add_argument("--h", type=float, default=0.05)
    sp.add_argument("--n-max", type=int, default=2)
    sp.add_argument("--m-max", type=int, default=2)
    sp.add_argument("--q-range", default="0:1.3")
    sp.add_argument("--grid", type=int, default=2000)
    common(sp, "output directory")

    sp = sub.add_parser("render", help="render branch CSVs as an SVG diagram")
    sp.add_argument("--branch", nargs="+", required=True)
    common(sp, "SVG file")
    return p


COMMANDS = {"spectrum": cmd_spectrum, "continue": cmd_continue, "classify": cmd_classify,
            "bowtie": cmd_bowtie, "enumerate": cmd_enumerate, "render": cmd_render}


def run(cfg: RunConfig, args) -> int:
    from .classify import SolvabilityError
    from .continuation import NewtonError

    try:
        threads()
        extra = COMMANDS[cfg.subcommand](args, cfg)
    except ConfigError as exc:
        print(f"qgraph: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NewtonError, SolvabilityError, ArithmeticError, np.linalg.LinAlgError) as exc:
        diag = _manifest_path(cfg).with_name(f"qgraph-{cfg.subcommand}.diagnostic.json")
        diag.parent.mkdir(parents=True, exist_ok=True)
        diag.write_text(_dump_json({"error": type(exc).__name__, "message": str(exc),
                                    "parameters": cfg.params,
                                    "traceback": traceback.format_exc().splitlines()}))
        print(f"qgraph: numerical failure: {exc} (see {diag})", file=sys.stderr)
        return EXIT_NUMERIC
    _write_manifest(cfg, extra)
    return EXIT_OK


WINDOW_OPTIONS = ("--lambda-window", "--q-range")


def _join_negative(argv):
    """Let window options take values such as -3:0 without an '=' sign."""
    out, i = [], 0
    while i < len(argv):
        a = argv[i]
        if a in WINDOW_OPTIONS and i + 1 < len(argv):
            out.append(f"{a}={argv[i + 1]}")
            i += 2
        else:
            out.append(a)
            i += 1
    return out


def main(argv=None) -> int:
    parser = build_parser()
    argv = _join_negative(list(sys.argv[1:] if argv is None else argv))
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    params = {k: v for k, v in vars(args).items() if k not in ("subcommand", "out", "plot")}
    cfg = RunConfig(args.subcommand, params, Path(args.out) if args.out else None, args.plot)
    return run(cfg, args)


if __name__ == "__main__":
    sys.exit(main())
