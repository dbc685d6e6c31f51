"""Command-line interface: ``hairprism <command> ...``.

Exit codes: 0 success, 1 validation failure, 2 usage error, 3 I/O error,
4 numerical failure. ``--json`` prints one JSON document per invocation.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import kernels
from .gradcheck import CHECKS, TOLERANCE, run_gradcheck
from .io import (ConfigError, FormatError, RunConfig, atomic_write, load_config, read_hair, read_mesh,
                 write_hair, write_mesh)
from .losses import C_TARGETS, c_mean, cs_ori
from .mesh import validate_mesh
from .optimize import OptimizationError, fit_hairstyle, optimize_geometry
from .prism import FRAMES, PrismParams, default_radius, prismatize_hairstyle
from .strands import DegenerateSegmentError, Hairstyle, curvatures, synth_hairstyle

EXIT_OK, EXIT_INVALID, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3, 4
HIST_BINS = np.linspace(0.0, 0.5, 21)
CS_ORI_THRESHOLD = 0.9
HAIR_SUFFIXES = {".hair", ".data", ".bin", ".json"}

log = logging.getLogger("hairprism")


class UsageError(Exception):
    pass


@dataclass
class CommandResult:
    code: int
    report: dict = field(default_factory=dict)
    text: str = ""


# -- helpers --------------------------------------------------------------------

def _config(args) -> RunConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = RunConfig(cfg.loss, cfg.prism, cfg.schedule, cfg.hair, cfg.sources, args.seed, cfg.paths)
    return cfg


def _path(value, cfg: RunConfig, key: str, what: str) -> str:
    if value is not None:
        return value
    if key in cfg.paths:
        return cfg.paths[key]
    raise UsageError(f"missing {what} (give it on the command line or as paths.{key} in the config)")


def _read_hair(path, cfg: RunConfig) -> Hairstyle:
    return read_hair(path, n_points=cfg.hair.n_points, k=cfg.hair.neighbors_k)


def strand_curvature_means(hair: Hairstyle) -> np.ndarray:
    if hair.n_strands == 0:
        return np.zeros(0)
    return np.array([curvatures(s).mean() for s in hair.points])


def hair_stats(hair: Hairstyle) -> dict:
    per_strand = strand_curvature_means(hair)
    counts, _ = np.histogram(np.clip(per_strand, 0.0, None), bins=HIST_BINS)
    return {
        "n_strands": hair.n_strands,
        "n_points": hair.n_points,
        "cs_ori": cs_ori(hair) if hair.n_strands >= 2 else None,
        "c_mean": c_mean(hair),
        "histogram": {
            "edges": HIST_BINS.tolist(),
            "counts": counts.tolist(),
            "above_range": int(np.sum(per_strand > HIST_BINS[-1])),
        },
    }


def _fmt(v) -> str:
    if v is None:
        return "n/a"
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _stats_text(name: str, s: dict) -> str:
    lines = [f"{name}: strands={s['n_strands']} points={s['n_points']} "
             f"CS_ori={_fmt(s['cs_ori'])} C_mean={_fmt(s['c_mean'])}",
             "  per-strand curvature histogram:"]
    h = s["histogram"]
    for lo, hi, c in zip(h["edges"][:-1], h["edges"][1:], h["counts"]):
        lines.append(f"    [{lo:.3f}, {hi:.3f})  {c}")
    if h["above_range"]:
        lines.append(f"    > {h['edges'][-1]:.3f}  {h['above_range']}")
    return "\n".join(lines)


def _write_trace(trace, path) -> None:
    with atomic_write(path, "w") as fh:
        if str(path).endswith(".jsonl"):
            trace.write_jsonl(fh)
        else:
            trace.write_csv(fh)


# -- commands ---------------------------------------------------------------------

def cmd_stats(args) -> CommandResult:
    cfg = _config(args)
    target = Path(_path(args.path, cfg, "init", "hair path"))
    if target.is_dir():
        files = sorted(p for p in target.iterdir() if p.suffix.lower() in HAIR_SUFFIXES)
        rows = [{"file": p.name, **hair_stats(_read_hair(p, cfg))} for p in files]
        scored = [r for r in rows if r["cs_ori"] is not None]
        frac = (sum(r["cs_ori"] > CS_ORI_THRESHOLD for r in scored) / len(scored)) if scored else None
        report = {"directory": str(target), "hairstyles": rows, "count": len(rows),
                  "fraction_cs_ori_above_0_9": frac}
        lines = [f"{'file':30s} {'strands':>8s} {'points':>7s} {'CS_ori':>10s} {'C_mean':>10s}"]
        lines += [f"{r['file']:30s} {r['n_strands']:8d} {r['n_points']:7d} {_fmt(r['cs_ori']):>10s} "
                  f"{_fmt(r['c_mean']):>10s}" for r in rows]
        lines.append(f"fraction with CS_ori > {CS_ORI_THRESHOLD}: {_fmt(frac)} ({len(scored)} hairstyles)")
        return CommandResult(EXIT_OK, report, "\n".join(lines))
    s = hair_stats(_read_hair(target, cfg))
    return CommandResult(EXIT_OK, {"file": str(target), **s}, _stats_text(str(target), s))


def cmd_prismatize(args) -> CommandResult:
    cfg = _config(args)
    hair = _read_hair(_path(args.path, cfg, "init", "hair path"), cfg)
    out = _path(args.out, cfg, "out", "output mesh path (--out)")
    pc = cfg.prism
    k = args.k if args.k is not None else pc.k_edges
    frame = args.frame or pc.frame
    if args.radius is not None:
        radius = args.radius
    elif args.scalp_area is not None:
        radius = default_radius(args.scalp_area, max(hair.n_strands, 1))
    else:
        radius = pc.params(hair.n_strands).radius
    try:
        params = PrismParams(k, radius, pc.reference_point, frame)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    mesh = prismatize_hairstyle(hair, params)
    report = validate_mesh(mesh)
    ok = mesh.n_triangles == 0 or report.watertight
    write_mesh(mesh, out)
    summary = {"out": out, "k_edges": k, "radius": radius, "frame": frame,
               "vertices": mesh.n_vertices, "triangles": mesh.n_triangles,
               "components": len(report.components), "watertight": ok,
               "boundary_edges": report.boundary_edges, "nonmanifold_edges": report.nonmanifold_edges}
    text = (f"wrote {out}: {mesh.n_vertices} vertices, {mesh.n_triangles} triangles, "
            f"{len(report.components)} components (K={k}, R={radius:.6g})\n"
            f"watertight: {'yes' if ok else 'NO'}  boundary edges: {report.boundary_edges}  "
            f"non-manifold edges: {report.nonmanifold_edges}")
    return CommandResult(EXIT_OK if ok else EXIT_INVALID, summary, text)


def cmd_validate(args) -> CommandResult:
    mesh = read_mesh(args.mesh)
    report = validate_mesh(mesh)
    d = report.to_dict()
    ok = mesh.n_triangles > 0 and report.watertight
    d.update(file=args.mesh, vertices=mesh.n_vertices, triangles=mesh.n_triangles, passed=ok)
    bad = [c for c in report.components if not c.watertight]
    lines = [f"{args.mesh}: {mesh.n_vertices} vertices, {mesh.n_triangles} triangles, "
             f"{len(report.components)} components, {report.degenerate_triangles} degenerate triangles",
             f"watertight: {'yes' if ok else 'NO'}"]
    for i, c in enumerate(report.components):
        if not c.watertight:
            lines.append(f"  component {i}: boundary={c.boundary_edges} nonmanifold={c.nonmanifold_edges} "
                         f"inconsistent={c.inconsistent_edges} euler={c.euler}")
    if mesh.n_triangles == 0:
        lines.append("  mesh has no triangles")
    if bad:
        lines.append(f"{len(bad)} of {len(report.components)} components fail")
    return CommandResult(EXIT_OK if ok else EXIT_INVALID, d, "\n".join(lines))


def cmd_fit(args) -> CommandResult:
    cfg = _config(args)
    target = _read_hair(_path(args.target, cfg, "target", "target hair path"), cfg)
    if args.synth:
        rng = np.random.default_rng(cfg.seed)
        init = target.with_points(target.points + args.noise * rng.normal(size=target.points.shape))
    else:
        init = _read_hair(_path(args.init, cfg, "init", "initial hair path (or --synth)"), cfg)
    if init.points.shape != target.points.shape:
        raise UsageError(f"initial hairstyle {init.points.shape[:2]} and target {target.points.shape[:2]} "
                         "differ in strand or point count")
    sched = _schedule(args, cfg)
    fitted, trace = fit_hairstyle(init, target, cfg.loss, sched, freeze_roots=args.freeze_roots)
    rmse = lambda h: float(np.sqrt(np.mean(np.sum((h.points - target.points) ** 2, axis=-1)))) \
        if h.n_strands else 0.0
    outputs = _write_outputs(args, cfg, fitted, trace)
    report = {"steps": trace.records[-1]["step"], "initial_loss": trace.records[0]["loss"],
              "final_loss": trace.records[-1]["loss"], "initial_rmse": rmse(init), "final_rmse": rmse(fitted),
              "converged": trace.converged, **outputs}
    text = (f"fit: {report['steps']} steps, loss {report['initial_loss']:.6g} -> {report['final_loss']:.6g}, "
            f"RMSE {report['initial_rmse']:.6g} -> {report['final_rmse']:.6g}")
    return CommandResult(EXIT_OK, report, text)


def _schedule(args, cfg: RunConfig):
    kw = {}
    if getattr(args, "steps", None) is not None:
        kw["step_count"] = args.steps
    if getattr(args, "lr", None) is not None:
        kw["learning_rate"] = args.lr
    try:
        return replace(cfg.schedule, **kw)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _write_outputs(args, cfg: RunConfig, hair: Hairstyle, trace) -> dict:
    out = {}
    path = args.out or cfg.paths.get("out")
    if path:
        write_hair(hair, path)
        out["out"] = path
    tpath = args.trace or cfg.paths.get("trace")
    if tpath:
        _write_trace(trace, tpath)
        out["trace"] = tpath
    return out


def geometry_report(hair: Hairstyle, head) -> dict:
    s = {"cs_ori": cs_ori(hair) if hair.n_strands >= 2 else None, "c_mean": c_mean(hair)}
    if head is not None:
        s["collisions"] = int(np.sum(head.value(hair.points) < 0)) if hair.n_strands else 0
    return s


def cmd_optimize(args) -> CommandResult:
    cfg = _config(args)
    loss = cfg.loss
    if args.c_target is not None:
        value = C_TARGETS.get(args.c_target)
        if value is None:
            try:
                value = float(args.c_target)
            except ValueError:
                raise UsageError(f"--c-target must be a number or one of {list(C_TARGETS)}") from None
        try:
            loss = loss.replace(c_target=value)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    sources_spec = dict(cfg.sources)
    head_path = args.head or cfg.paths.get("head")
    if head_path:
        sources_spec["head"] = {"mesh": head_path}
    run = RunConfig(loss, cfg.prism, cfg.schedule, cfg.hair, sources_spec, cfg.seed, cfg.paths)
    if loss.lambda_colli > 0 and "head" not in sources_spec:
        raise UsageError("lambda_colli > 0 but no head source configured "
                         "(set sources.head, paths.head or --head, or lambda_colli = 0)")
    base_dir = Path(args.config).parent if args.config else None
    try:
        sources = run.geometry_sources(base_dir)
    except ValueError as exc:
        if isinstance(exc, FormatError):
            raise
        raise UsageError(f"invalid SDF source: {exc}") from None
    warnings = [f"lambda_{n} > 0 but no {n} source configured; term skipped"
                for n in ("bbox", "face") if getattr(loss, f"lambda_{n}") > 0 and getattr(sources, n) is None]

    init = _read_hair(_path(args.path, cfg, "init", "hair path"), cfg)
    sched = _schedule(args, cfg)
    before = geometry_report(init, sources.head)
    result, trace = optimize_geometry(init, loss, sources, sched, freeze_roots=not args.free_roots)
    after = geometry_report(result, sources.head)
    outputs = _write_outputs(args, cfg, result, trace)
    last = trace.records[-1]
    report = {"steps": last["step"], "initial_loss": trace.records[0]["loss"], "final_loss": last["loss"],
              "terms": {k[5:]: v for k, v in last.items() if k.startswith("term_")},
              "before": before, "after": after, "warnings": warnings, **outputs}
    rows = [f"{'':12s} {'before':>12s} {'after':>12s}"]
    for key in after:
        rows.append(f"{key:12s} {_fmt(before[key]):>12s} {_fmt(after[key]):>12s}")
    text = "\n".join([f"optimize: {last['step']} steps, loss {report['initial_loss']:.6g} -> "
                      f"{report['final_loss']:.6g}", *rows, *(f"warning: {w}" for w in warnings)])
    return CommandResult(EXIT_OK, report, text)


def cmd_gradcheck(args) -> CommandResult:
    if args.instances < 1:
        raise UsageError("--instances must be >= 1")
    unknown = set(args.check or ()) | set(args.inject_sign_flip or ())
    unknown -= set(CHECKS)
    if unknown:
        raise UsageError(f"unknown checks {sorted(unknown)}; have {sorted(CHECKS)}")
    seed = args.seed if args.seed is not None else 0
    rep = run_gradcheck(seed, args.instances, args.tolerance, args.check or None, args.inject_sign_flip or ())
    summary = rep.summary()
    lines = [f"{'check':20s} {'instances':>9s} {'max rel err':>12s}  status"]
    for name, row in summary.items():
        lines.append(f"{name:20s} {row['instances']:9d} {row['max_rel_error']:12.3e}  "
                     f"{'ok' if row['failures'] == 0 else 'FAIL'}")
    lines.append(f"tolerance {args.tolerance:g}: {'pass' if rep.passed else 'FAIL'}")
    report = {"seed": seed, "instances": args.instances, "tolerance": args.tolerance,
              "passed": rep.passed, "checks": summary}
    return CommandResult(EXIT_OK if rep.passed else EXIT_NUMERIC, report, "\n".join(lines))


def cmd_synth(args) -> CommandResult:
    cfg = _config(args)
    n_s = args.strands if args.strands is not None else cfg.hair.n_strands
    n_p = args.points if args.points is not None else cfg.hair.n_points
    try:
        hair = synth_hairstyle(args.kind, n_s, n_p, seed=cfg.seed, k=cfg.hair.neighbors_k, length=args.length)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    write_hair(hair, args.out)
    s = {"out": args.out, "kind": args.kind, "seed": cfg.seed, "n_strands": n_s, "n_points": n_p}
    return CommandResult(EXIT_OK, s, f"wrote {args.out}: {args.kind}, {n_s} strands x {n_p} points")


# -- argument parsing -------------------------------------------------------------

def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _positive_float(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {v}")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="emit one JSON document on stdout")
    common.add_argument("--threads", type=_positive_int, default=None, help="worker threads for SDF queries")
    common.add_argument("--config", default=None, help="JSON run configuration")
    common.add_argument("--seed", type=int, default=None, help="override the configured seed")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = argparse.ArgumentParser(prog="hairprism", description="Strand hair geometry toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", parents=[common], help="orientation and curvature statistics")
    p.add_argument("path", nargs="?", help="hair file or directory of hair files")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("prismatize", parents=[common], help="convert strands to prism meshes")
    p.add_argument("path", nargs="?", help="hair file")
    p.add_argument("--out", help="output .obj or .ply")
    p.add_argument("--k", type=int, default=None, help="lateral edges per prism (default 4)")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--radius", type=_positive_float, default=None)
    g.add_argument("--scalp-area", type=_positive_float, default=None,
                   help="derive the radius from the scalp area and strand count")
    p.add_argument("--frame", choices=FRAMES, default=None)
    p.set_defaults(func=cmd_prismatize)

    p = sub.add_parser("validate", parents=[common], help="check a mesh for watertightness")
    p.add_argument("mesh")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("fit", parents=[common], help="fit a hairstyle to a target")
    p.add_argument("target", nargs="?", help="target hair file")
    p.add_argument("init", nargs="?", help="initial hair file")
    p.add_argument("--synth", action="store_true", help="initialize from the target plus Gaussian noise")
    p.add_argument("--noise", type=float, default=0.01, help="noise sigma for --synth")
    p.add_argument("--freeze-roots", action="store_true")
    _optim_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("optimize", parents=[common], help="regularized geometry optimization")
    p.add_argument("path", nargs="?", help="initial hair file")
    p.add_argument("--head", default=None, help="head mesh (.obj/.ply) for the collision term")
    p.add_argument("--c-target", default=None, help="curvature target: number or straight/normal/wavy/curly")
    p.add_argument("--free-roots", action="store_true", help="let root points move")
    _optim_flags(p)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient checks")
    p.add_argument("--instances", type=int, default=20)
    p.add_argument("--tolerance", type=float, default=TOLERANCE)
    p.add_argument("--check", action="append", help="restrict to a named check (repeatable)")
    p.add_argument("--inject-sign-flip", action="append", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic hairstyle")
    p.add_argument("kind", choices=["straight", "wavy", "curly"])
    p.add_argument("--strands", type=int, default=None)
    p.add_argument("--points", type=int, default=None)
    p.add_argument("--length", type=_positive_float, default=3.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)
    return parser


def _optim_flags(p):
    p.add_argument("--out", default=None, help="output hair file")
    p.add_argument("--trace", default=None, help="trace output (.csv or .jsonl)")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)


def run(argv=None) -> CommandResult:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return CommandResult(EXIT_OK if exc.code == 0 else EXIT_USAGE)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads:
        kernels.set_num_threads(args.threads)
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        return CommandResult(EXIT_USAGE, {"error": str(exc)}, f"error: {exc}")
    except (FormatError, OSError) as exc:
        return CommandResult(EXIT_IO, {"error": str(exc)}, f"error: {exc}")
    except (OptimizationError, DegenerateSegmentError, FloatingPointError) as exc:
        return CommandResult(EXIT_NUMERIC, {"error": str(exc)}, f"error: {exc}")


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    result = run(argv)
    as_json = "--json" in argv
    if result.report or result.text:
        if as_json:
            print(json.dumps({"exit_code": result.code, **result.report}, sort_keys=True))
        elif result.code in (EXIT_OK, EXIT_INVALID, EXIT_NUMERIC) and "error" not in result.report:
            print(result.text)
        else:
            print(result.text, file=sys.stderr)
    return result.code


if __name__ == "__main__":
    sys.exit(main())
