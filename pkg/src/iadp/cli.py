"""Command-line entry point: ``iadp {run,validate,replay,metrics,plot,presets}``.

Exit codes: 0 success, 2 validation or input failure, 3 runtime divergence.
"""
import argparse
import json
import os
import sys

from . import _backend
from .config import PRESET_NOTES, PRESETS, enforce, load_config, resolve, validate
from .errors import IADPError, TraceParseError
from .metrics import compute_metrics, format_table


def _err(msg):
    print(msg, file=sys.stderr)


def _load(args):
    overrides = list(args.override or [])
    if getattr(args, "seed", None) is not None:
        overrides.append(f"run.seed={args.seed}")
    cfg = load_config(args.config, args.preset, overrides)
    if args.strict is not None:
        cfg["validation"]["strict"] = args.strict
    return cfg, overrides


def _validated(cfg):
    from .harness import build_plant

    exp = resolve(cfg)
    checks = validate(exp, build_plant(exp))
    enforce(checks, strict=bool(cfg["validation"]["strict"]), warn=_err)
    return exp, checks


def cmd_run(args):
    from .harness import run_experiment

    cfg, overrides = _load(args)
    exp, _ = _validated(cfg)
    res = run_experiment(exp, outdir=args.outdir, overrides=overrides)
    print(format_table(res.metrics))
    if args.outdir:
        _err(f"wrote trace and metrics to {args.outdir}")
    return 0


def cmd_validate(args):
    from .harness import build_plant

    cfg, _ = _load(args)
    exp = resolve(cfg)
    checks = validate(exp, build_plant(exp))
    w = max(len(c.name) for c in checks)
    for c in checks:
        print(f"{c.name.ljust(w)}  {'ok  ' if c.passed else 'FAIL'}  {c.message}")
    enforce(checks, strict=bool(cfg["validation"]["strict"]), warn=None)
    return 0


def cmd_replay(args):
    from .harness import load_run, replay

    cfg, header, trace, snaps = load_run(args.rundir)
    if header.get("backend") in _backend.AVAILABLE:
        _backend.set_backend(header["backend"])
    elif header.get("backend"):
        _err(f"warning: trace was produced by backend {header['backend']!r}, replaying with {_backend.name()!r}")
    ticks = [s["tick"] for s in snaps]
    if args.from_tick not in ticks:
        raise TraceParseError(f"no buffer snapshot at tick {args.from_tick}; available: {ticks}")
    snap = snaps[ticks.index(args.from_tick)]
    rep = replay(cfg, header, trace, snap, k_t=args.k_t, k_e=args.k_e, freeze_buffer=args.freeze_buffer)
    print(f"start_tick      {rep.start_tick}")
    print(f"ticks           {rep.ticks}")
    print(f"max_abs_diff    {rep.max_abs_diff:.6g}")
    print(f"identical       {'yes' if rep.identical else 'no'}")
    if rep.ticks:
        for i, w in enumerate(rep.weights[-1], start=1):
            print(f"final_W_{i}       [{', '.join(f'{v:.6g}' for v in w)}]")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"start_tick": rep.start_tick, "ticks": rep.ticks, "identical": rep.identical,
                       "max_abs_diff": rep.max_abs_diff, "weights": rep.weights.tolist()}, fh)
    return 0


def cmd_metrics(args):
    from .harness import read_trace

    path = os.path.join(args.trace, "trace.csv") if os.path.isdir(args.trace) else args.trace
    header, cols = read_trace(path)
    print(format_table(compute_metrics(header, cols)))
    return 0


def cmd_plot(args):
    from .harness import read_trace
    from .plotting import KINDS, render

    path = os.path.join(args.trace, "trace.csv") if os.path.isdir(args.trace) else args.trace
    _, cols = read_trace(path)
    kinds = KINDS if args.kind == "all" else [args.kind]
    outdir = args.outdir or os.path.dirname(os.path.abspath(path))
    for kind in kinds:
        print(render(cols, kind, os.path.join(outdir, f"{kind}.svg")))
    return 0


def cmd_presets(args):
    w = max(len(k) for k in PRESETS)
    for name in PRESETS:
        print(f"{name.ljust(w)}  {PRESET_NOTES.get(name, '')}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="iadp", description="Incremental ADP tracking control experiments")
    sub = p.add_subparsers(dest="command", required=True)

    def config_args(sp):
        sp.add_argument("-c", "--config", help="YAML config file")
        sp.add_argument("--preset", choices=sorted(PRESETS), help="start from a named preset")
        sp.add_argument("--override", action="append", metavar="KEY=VALUE",
                        help="dotted-path override, e.g. controller.beta=0.2 (repeatable)")
        g = sp.add_mutually_exclusive_group()
        g.add_argument("--strict", dest="strict", action="store_const", const=True, default=None)
        g.add_argument("--lenient", dest="strict", action="store_const", const=False)
        sp.add_argument("--seed", type=int, help="rng seed (initial-state jitter)")

    sp = sub.add_parser("run", help="run an experiment")
    config_args(sp)
    sp.add_argument("-o", "--outdir", help="directory for trace, metrics and snapshots")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("validate", help="check a config against the design guidelines")
    config_args(sp)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("replay", help="re-run critic updates offline from a run directory")
    sp.add_argument("rundir")
    sp.add_argument("--from-tick", type=int, default=0, help="buffer snapshot to start from")
    sp.add_argument("--k-t", type=float, default=None)
    sp.add_argument("--k-e", type=float, default=None)
    sp.add_argument("--freeze-buffer", action="store_true")
    sp.add_argument("--json", help="write the replayed weights to this file")
    sp.set_defaults(func=cmd_replay)

    sp = sub.add_parser("metrics", help="recompute metrics from a trace")
    sp.add_argument("trace", help="trace.csv or a run directory")
    sp.set_defaults(func=cmd_metrics)

    sp = sub.add_parser("plot", help="render SVG plots from a trace")
    sp.add_argument("trace", help="trace.csv or a run directory")
    sp.add_argument("--kind", default="all", choices=("all", "errors", "weights", "xi", "taskspace"))
    sp.add_argument("-o", "--outdir")
    sp.set_defaults(func=cmd_plot)

    sp = sub.add_parser("presets", help="list built-in presets")
    sp.set_defaults(func=cmd_presets)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except IADPError as exc:
        _err(f"error: {exc}")
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
