"""Command-line entry point: run scenarios, serve renderers, evaluate
detections, validate scenario files.

Exit codes: 0 success, 1 validation failure, 2 runtime failure, 3 I/O
failure. The default output root comes from $CROWDSIM_OUT (falling back to
./out).
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field

from . import metrics
from .annotate import annotate_run, export_coco, export_trajectories
from .protocol import DEFAULT_PORT, serve
from .scenario import (
    DENSITY_PRESETS,
    Scenario,
    ScenarioError,
    load_scenario,
    validate_scenario,
)
from .world import WorldState

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
EXIT_IO = 3


@dataclass
class RunManifest:
    """One dataset-generation request: scenario + condition matrix + exports."""

    scenario_path: str
    out_dir: str
    seed: int = None
    coco: bool = True
    trajectories: bool = True
    debug_images: bool = False
    times: list = field(default_factory=list)        # minutes since midnight
    densities: list = field(default_factory=list)    # preset names

    def conditions(self) -> list:
        """(time_minutes or None, density or None) pairs; [(None, None)] when
        no matrix was requested."""
        if not self.times and not self.densities:
            return [(None, None)]
        times = self.times or [None]
        densities = self.densities or [None]
        return [(t, d) for t in times for d in densities]


def _parse_time_arg(text: str) -> int:
    text = text.strip()
    if ":" in text:
        hh, mm = text.split(":", 1)
        return int(hh) * 60 + int(mm)
    return int(text)


def _condition_scenario(base: Scenario, time_minutes, density) -> Scenario:
    s = copy.deepcopy(base)
    if time_minutes is not None:
        s.conditions.time_of_day = time_minutes
    if density is not None:
        s.population.preset = density
        s.population.count = None
    return s


def _condition_label(time_minutes, density) -> str:
    parts = []
    if time_minutes is not None:
        parts.append(f"{time_minutes // 60:02d}{time_minutes % 60:02d}")
    if density is not None:
        parts.append(density)
    return "_".join(parts) if parts else "default"


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def run_manifest(manifest: RunManifest) -> dict:
    """Execute every condition in the manifest; returns the summary dict."""
    base = load_scenario(manifest.scenario_path)
    if manifest.seed is not None:
        base.seed = manifest.seed
    for _, density in manifest.conditions():
        if density is not None and density not in DENSITY_PRESETS:
            raise ScenarioError(f"unknown density preset '{density}'")
    if manifest.coco and not base.cameras:
        raise ScenarioError(
            "annotation export requested but the scenario defines no cameras")

    report = validate_scenario(base)
    if not report.ok:
        raise ScenarioError("scenario invalid: " + "; ".join(report.violations))

    scenario_root = os.path.join(manifest.out_dir, base.name)
    os.makedirs(scenario_root, exist_ok=True)
    summary = {"scenario": base.name, "seed": base.seed, "conditions": []}
    for time_minutes, density in manifest.conditions():
        s = _condition_scenario(base, time_minutes, density)
        label = _condition_label(time_minutes, density)
        cond_dir = os.path.join(scenario_root, label)
        os.makedirs(cond_dir, exist_ok=True)
        world = WorldState(s)
        agents_initial = len(world.agents)
        checksums = {}
        if manifest.coco:
            debug_dir = None
            if manifest.debug_images:
                debug_dir = os.path.join(cond_dir, "debug")
                os.makedirs(debug_dir, exist_ok=True)
            frames = annotate_run(world, debug_dir=debug_dir)
            paths = export_coco(frames, s, os.path.join(cond_dir, "annotations"))
            for key, path in paths.items():
                checksums[os.path.relpath(path, cond_dir)] = _sha256(path)
        else:
            world.run()
        if manifest.trajectories:
            tpath = os.path.join(cond_dir, "trajectories.csv")
            export_trajectories(world, tpath)
            checksums["trajectories.csv"] = _sha256(tpath)
        summary["conditions"].append({
            "label": label,
            "time_of_day": s.conditions.time_label(),
            "density": s.population.density_label(),
            "agents_spawned": len(world.agents),
            "agents_initial": agents_initial,
            "ticks": world.clock.tick,
            "checksums": checksums,
        })
    spath = os.path.join(scenario_root, "summary.json")
    with open(spath, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    return summary


def cmd_run(args) -> int:
    manifest = RunManifest(
        scenario_path=args.scenario,
        out_dir=args.out,
        seed=args.seed,
        coco=not args.no_coco,
        trajectories=not args.no_trajectories,
        debug_images=args.debug_images,
        times=[_parse_time_arg(t) for t in args.times.split(",")] if args.times else [],
        densities=args.densities.split(",") if args.densities else [],
    )
    if args.matrix:
        manifest.times = [7 * 60, 12 * 60, 18 * 60 + 30]
        manifest.densities = ["low", "medium", "high"]
    try:
        summary = run_manifest(manifest)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"wrote {len(summary['conditions'])} condition(s) under "
          f"{os.path.join(manifest.out_dir, summary['scenario'])}")
    return EXIT_OK


def cmd_serve(args) -> int:
    # port 0 asks the OS for an ephemeral port
    if not 0 <= args.port < 65536:
        print(f"error: invalid port {args.port}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        scenario = load_scenario(args.scenario)
        report = validate_scenario(scenario)
        if not report.ok:
            for v in report.violations:
                print(f"violation: {v}", file=sys.stderr)
            return EXIT_VALIDATION
        world = WorldState(scenario)
        session = serve(world, host=args.host, port=args.port,
                        accept_timeout=args.accept_timeout,
                        headless_fallback=args.headless_fallback,
                        ready_callback=lambda p: print(f"listening on {args.host}:{p}",
                                                       flush=True))
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except TimeoutError:
        print("error: no client connected before timeout", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"bind failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    if args.trace_out:
        try:
            export_trajectories(world, args.trace_out)
        except OSError as exc:
            print(f"i/o error: {exc}", file=sys.stderr)
            return EXIT_IO
    print(f"session finished at tick {session.completed_ticks}"
          + (f" ({session.error})" if session.error else ""))
    return EXIT_OK


def cmd_eval(args) -> int:
    thresholds = [float(t) for t in args.thresholds.split(",")]
    try:
        gt = metrics.load_coco_ground_truth(args.ground_truth)
        det = metrics.load_detections(args.detections)
    except metrics.DetectionFileError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (OSError, json.JSONDecodeError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    report = metrics.evaluate(gt, det, f1_thresholds=thresholds)
    try:
        paths = metrics.write_report(report, args.out)
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    for t, v in report.f1_by_threshold.items():
        print(f"F1@{t:g} = {v:.4f}")
    if report.ap is not None:
        print(f"AP = {report.ap:.4f}")
    print(f"report written to {paths['report']}")
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        scenario = load_scenario(args.scenario)
    except ScenarioError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    report = validate_scenario(scenario)
    if report.ok:
        print(f"scenario '{scenario.name}' is valid")
        return EXIT_OK
    for v in report.violations:
        print(f"violation: {v}")
    return EXIT_VALIDATION


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crowdsim",
        description="Deterministic crowd simulator with ground-truth export")
    sub = parser.add_subparsers(dest="command", required=True)
    default_out = os.environ.get("CROWDSIM_OUT", "out")

    p_run = sub.add_parser("run", help="run scenario conditions and export datasets")
    p_run.add_argument("scenario")
    p_run.add_argument("--out", default=default_out)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--times", default="",
                       help="comma list of times of day, e.g. 7:00,12:00,18:30")
    p_run.add_argument("--densities", default="",
                       help="comma list of presets: low,medium,high")
    p_run.add_argument("--matrix", action="store_true",
                       help="shorthand for the 3 times x 3 densities protocol")
    p_run.add_argument("--no-coco", action="store_true")
    p_run.add_argument("--no-trajectories", action="store_true")
    p_run.add_argument("--debug-images", action="store_true")
    p_run.set_defaults(func=cmd_run)

    p_serve = sub.add_parser("serve", help="serve per-tick state over TCP")
    p_serve.add_argument("scenario")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=DEFAULT_PORT)
    p_serve.add_argument("--accept-timeout", type=float, default=None)
    p_serve.add_argument("--headless-fallback", action="store_true",
                         help="run headless when no client connects in time")
    p_serve.add_argument("--trace-out", default="",
                         help="write the trajectory CSV here after the session")
    p_serve.set_defaults(func=cmd_serve)

    p_eval = sub.add_parser("eval", help="evaluate detections against ground truth")
    p_eval.add_argument("ground_truth")
    p_eval.add_argument("detections")
    p_eval.add_argument("--thresholds", default="0.4,0.5,0.6,0.7,0.8")
    p_eval.add_argument("--out", default=os.path.join(default_out, "eval"))
    p_eval.set_defaults(func=cmd_eval)

    p_val = sub.add_parser("validate", help="parse and validate a scenario file")
    p_val.add_argument("scenario")
    p_val.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except KeyboardInterrupt:
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
