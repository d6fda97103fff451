"""Command-line entry point: ``climbprint check|plan|run|report``.

Exit codes: 0 success, 1 validation failure (bad design file, footprint or
plan infeasible), 2 runtime or limit error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

from . import __version__, cli_io, controller, planner, simulator
from .errors import (
    ClimbPrintError,
    DesignInvalid,
    FootprintInvalid,
    GeometryError,
    ParseError,
    PlanError,
    ValidationError,
)

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2
VALIDATION_ERRORS = (ParseError, ValidationError, FootprintInvalid, PlanError, DesignInvalid, GeometryError)


class _Console:
    def __init__(self, quiet=False):
        self.quiet = quiet
        self.color = sys.stderr.isatty() and "NO_COLOR" not in os.environ

    def _tag(self, word, code):
        return f"\033[{code}m{word}\033[0m" if self.color else word

    def error(self, msg):
        print(f"{self._tag('error', '31')}: {msg}", file=sys.stderr)

    def warn(self, msg):
        print(f"{self._tag('warning', '33')}: {msg}", file=sys.stderr)

    def info(self, msg):
        if not self.quiet:
            print(msg)


def _load(path, args):
    df = cli_io.parse_design_file(Path(path).read_bytes())
    step = args.step if args.step is not None else df.resample_step
    dt = args.dt if args.dt is not None else (df.dt or controller.DEFAULT_DT)
    return df, step, dt


def cmd_check(args, con):
    df, step, _ = _load(args.design, args)
    fr = planner.footprint_check(df.design)
    for w in fr.warnings:
        con.warn(w)
    if not fr.ok:
        for e in fr.errors:
            con.error(str(e))
        return EXIT_INVALID
    plan = planner.compile_plan(df.design, step)
    con.info(
        f"ok: {len(plan.layers)} layer(s), {plan.total_time:.3f} s, "
        f"{plan.total_volume:.3f} mm^3, plan {plan.digest[:12]}"
    )
    return EXIT_OK


def _compile(df, step, con):
    fr = planner.footprint_check(df.design)
    for w in fr.warnings:
        con.warn(w)
    fr.raise_first()
    return planner.compile_plan(df.design, step)


def cmd_plan(args, con):
    df, step, _ = _load(args.design, args)
    plan = _compile(df, step, con)
    data = cli_io.dump_json(cli_io.plan_to_dict(plan))
    if args.output:
        Path(args.output).write_bytes(data)
        con.info(f"wrote {args.output}")
    else:
        sys.stdout.buffer.write(data)
    return EXIT_OK


def run_pipeline(design_path, outdir, step=None, dt=None):
    """Plan, execute, simulate and export; returns the manifest dict."""
    t0 = time.perf_counter()
    raw = Path(design_path).read_bytes()
    df = cli_io.parse_design_file(raw)
    step = step if step is not None else df.resample_step
    dt = dt if dt is not None else (df.dt or controller.DEFAULT_DT)
    design = df.design
    planner.footprint_check(design).raise_first()
    plan = planner.compile_plan(design, step)
    trace = controller.execute(plan, design.device, dt)
    structure, report = simulator.simulate(trace, design, plan=plan)

    files = {
        "plan.json": cli_io.dump_json(cli_io.plan_to_dict(plan)),
        "trace.csv": cli_io.write_trace_csv(trace),
        "report.json": cli_io.dump_json({
            "plan_digest": plan.digest,
            "mode": plan.mode.value,
            "n_layers": len(plan.layers),
            "n_beads": len(structure.beads),
            "final_height_m": structure.final_height,
            "events": controller.count_events(trace),
            **report.to_dict(),
        }),
    }
    if structure.beads:
        files["structure.obj"] = cli_io.write_obj(simulator.export_obj(structure))
    for name, data in cli_io.write_layer_svgs(structure).items():
        files[f"layers/{name}"] = data

    out = Path(outdir)
    (out / "layers").mkdir(parents=True, exist_ok=True)
    for name, data in files.items():
        (out / name).write_bytes(data)
    manifest = {
        "tool": "climbprint",
        "version": __version__,
        "input_digest": cli_io.sha256(raw),
        "config_digests": {
            "design": df.digest,
            "settings": cli_io.sha256(json.dumps({"dt": dt, "step": step}, sort_keys=True).encode()),
            "plan": plan.digest,
            "trace": trace.checksum(),
        },
        "outputs": {name: cli_io.sha256(data) for name, data in sorted(files.items())},
        "runtime_s": round(time.perf_counter() - t0, 3),
    }
    (out / "manifest.json").write_bytes((json.dumps(manifest, sort_keys=True, indent=2) + "\n").encode())
    return manifest


def cmd_run(args, con):
    manifest = run_pipeline(args.design, args.output, step=args.step, dt=args.dt)
    con.info(f"wrote {len(manifest['outputs']) + 1} files to {args.output}")
    return EXIT_OK


def cmd_report(args, con):
    out = Path(args.outdir)
    rep = json.loads((out / "report.json").read_text())
    man = json.loads((out / "manifest.json").read_text())
    ev = rep["events"]
    lines = [
        f"design      {man['input_digest'][:12]}  plan {rep['plan_digest'][:12]}",
        f"mode        {rep['mode']}, {rep['n_layers']} layer(s), {rep['n_beads']} bead(s)",
        f"height      {rep['final_height_m']:.6f} m",
        f"volume      {rep['deposited_volume_mm3']:.3f} mm^3 (balance {rep['volume_balance']:.2e})",
        f"path error  {rep['max_nozzle_path_error_m']:.3e} m",
        f"events      {ev['climbs']} climb(s), {ev['reversals']} reversal(s)",
        f"gaps        {len(rep['coverage_gaps'])}",
        f"cure        {len(rep['cure_violations'])} violation(s)",
        f"collisions  {len(rep['collision_events'])}",
    ]
    print("\n".join(lines))
    return EXIT_OK


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--dt", type=float, default=None, help="control period in seconds")
    common.add_argument("--step", type=float, default=None, help="path resampling step in meters")
    common.add_argument("--seed", type=int, default=None, help="reserved for the tracking-error model")
    common.add_argument("--quiet", action="store_true", help="suppress progress output")

    p = argparse.ArgumentParser(prog="climbprint", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    c = sub.add_parser("check", parents=[common], help="validate a design and dry-run the planner")
    c.add_argument("design")
    c.set_defaults(func=cmd_check)
    c = sub.add_parser("plan", parents=[common], help="compile a design to plan.json")
    c.add_argument("design")
    c.add_argument("-o", "--output")
    c.set_defaults(func=cmd_plan)
    c = sub.add_parser("run", parents=[common], help="plan, execute, simulate and export")
    c.add_argument("design")
    c.add_argument("-o", "--output", required=True)
    c.set_defaults(func=cmd_run)
    c = sub.add_parser("report", parents=[common], help="summarize a run directory")
    c.add_argument("outdir")
    c.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    con = _Console(quiet=args.quiet)
    try:
        return args.func(args, con)
    except VALIDATION_ERRORS as exc:
        con.error(str(exc))
        return EXIT_INVALID
    except ClimbPrintError as exc:
        con.error(str(exc))
        return EXIT_RUNTIME
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        con.error(f"[IOError] {exc}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
