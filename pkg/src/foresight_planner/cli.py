"""Command-line entry point.

Exit codes: 0 success, 1 task-level failure, 2 usage or configuration error.
Environment overrides: FORESIGHT_BIND (serve address), FORESIGHT_OUTPUT_DIR.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import signal
import sys
import threading
from importlib import resources
from pathlib import Path
from statistics import median

import numpy as np

from . import datapipe
from .core import Image
from .edgecloud.edge import ABLATIONS, InProcessTransport, SocketTransport, run_edge_loop
from .edgecloud.service import GuidanceService, parse_address, serve
from .evalharness import CONFIGURATIONS, run_suite, score_trial, track_atomics, write_report
from .foresight import (
    FIELDS,
    FlowForesight,
    FlowSampleRequest,
    InputError,
    OracleForesight,
    bench_latency,
    sweep_steps,
    write_sweep_csv,
)
from .gridworld.episode import generate_episode
from .gridworld.env import observe
from .gridworld.grammar import InfeasibleError
from .gridworld.policies import ExpertPolicy, GoalImagePolicy, GroundingTable, TextPolicy
from .gridworld.scenario import ScenarioError, load_scenario, load_suite, load_training
from .edgecloud import wire

log = logging.getLogger("foresight_planner")

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2
DEFAULT_BIND = "127.0.0.1:7447"


class UsageError(Exception):
    pass


def shipped_suite_dir() -> Path:
    return Path(str(resources.files("foresight_planner") / "data" / "suite"))


def _output_dir(args) -> Path:
    out = Path(args.output_dir or os.environ.get("FORESIGHT_OUTPUT_DIR") or "foresight-out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _int_list(text: str) -> list[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values or any(v < 1 for v in values):
        raise argparse.ArgumentTypeError("step counts must be positive")
    return values


def _grounding(path) -> GroundingTable:
    path = Path(path) if path else shipped_suite_dir() / "training.yaml"
    return GroundingTable.from_scenarios(load_training(path))


def _foresight(name: str, steps: int):
    return FlowForesight(steps) if name == "flow" else OracleForesight()


# -- subcommands --------------------------------------------------------------------

def cmd_serve(args) -> int:
    bind = args.bind or os.environ.get("FORESIGHT_BIND") or DEFAULT_BIND
    try:
        address = parse_address(bind)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    try:
        handle = serve(address, foresight=_foresight(args.foresight, args.steps), seed=args.seed)
    except OSError as exc:
        raise UsageError(f"cannot bind {bind}: {exc}") from exc
    host, port = handle.address
    print(f"listening on {host}:{port} foresight={args.foresight} planner={args.planner}", flush=True)
    stop = threading.Event()
    signal.signal(signal.SIGTERM, lambda *_: stop.set())
    try:
        stop.wait(args.duration) if args.duration else stop.wait()
    except KeyboardInterrupt:
        pass
    finally:
        handle.shutdown()
    return EXIT_OK


def cmd_edge(args) -> int:
    if not args.connect and not args.inprocess:
        raise UsageError("choose --connect <addr> or --inprocess")
    spec = load_scenario(args.scenario)
    if args.setting is not None:
        spec = spec.variant(args.setting, args.seed)
    config = ABLATIONS[args.ablation]
    policy_name = args.policy or ("goal" if args.ablation == "full" else "text")
    if policy_name == "goal":
        policy = GoalImagePolicy()
    elif policy_name == "expert":
        policy = ExpertPolicy()
    else:
        policy = TextPolicy(_grounding(args.training))

    if args.connect:
        try:
            transport = SocketTransport(parse_address(args.connect))
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
    else:
        transport = InProcessTransport(GuidanceService(foresight=_foresight(args.foresight, args.steps),
                                                       seed=args.seed))
    try:
        result = run_edge_loop(spec.scene, spec.task, policy, transport, config, session_id=args.session)
    finally:
        transport.close()
    trial = track_atomics(spec, result.steps, args.ablation, args.setting or 0, result.termination.value)
    summary = {
        "scenario": spec.name,
        "ablation": args.ablation,
        "policy": policy_name,
        "termination": result.termination.value,
        "detail": result.detail,
        "chunks": result.chunks,
        "steps": len(result.steps),
        "guidance": [[p.decision.name, p.plan_step, p.subtask_text] for p in result.trace],
        "task_complete": spec.task_complete(result.final_scene),
        "score": score_trial(trial),
    }
    text = json.dumps(summary, indent=2)
    print(text)
    if args.output_dir or os.environ.get("FORESIGHT_OUTPUT_DIR"):
        (_output_dir(args) / f"edge_{spec.name}_{args.ablation}.json").write_text(text + "\n")
    return EXIT_OK if result.done else EXIT_FAILED


def cmd_episodes(args) -> int:
    specs = [load_scenario(p) for p in args.scenario] if args.scenario else load_suite(args.suite or shipped_suite_dir())
    out = _output_dir(args)
    manifest_file = out / datapipe.MANIFEST_FILE
    if manifest_file.exists():
        manifest_file.unlink()
    n = 0
    for spec in specs:
        for k in range(args.count):
            rec = generate_episode(spec, fps=args.fps, seed=args.seed + k)
            datapipe.write_episode(rec.frames, rec.manifest, out)
            n += 1
    print(f"wrote {n} episodes to {out}")
    return EXIT_OK


def cmd_datapipe(args) -> int:
    manifests = datapipe.read_manifests(args.manifests)
    out = _output_dir(args)
    pairs = datapipe.sample_all(manifests, args.offset)
    pair_file = out / f"pairs_{datapipe.OffsetPolicy(args.offset).value}.jsonl"
    datapipe.write_jsonl(pairs, pair_file)
    print(f"{len(pairs)} pairs ({args.offset}) from {len(manifests)} episodes -> {pair_file}")
    if args.stats:
        stats = datapipe.dataset_stats(manifests)
        text = json.dumps(stats, indent=2, sort_keys=True)
        (out / "dataset_stats.json").write_text(text + "\n")
        print(text)
    return EXIT_OK


def cmd_eval(args) -> int:
    suite = load_suite(args.suite or shipped_suite_dir())
    if not suite:
        raise UsageError(f"no scenarios found in {args.suite}")
    report = run_suite(suite, args.configs, args.settings, args.seed, _grounding(args.training))
    table, records = write_report(report, _output_dir(args))
    print(report.format(), end="")
    print(f"report: {table}\ntrials: {records}")
    return EXIT_OK


def _bench_stages(steps_list, repeats: int, seed: int) -> list[dict]:
    """Per-stage service timings for one guidance request at each step count."""
    spec = load_suite(shipped_suite_dir())[0]
    obs = observe(spec.scene)
    rows = []
    for n in steps_list:
        service = GuidanceService(foresight=FlowForesight(n), seed=seed)
        for sid in range(repeats):
            service.handle_frame(wire.encode(wire.Hello(sid, spec.task)))
            cams = tuple(wire.Camera(c, img) for c, img in obs.cameras.items())
            service.handle_frame(wire.encode(wire.Obs(sid, 0, cams, obs.proprio, obs.scene_digest)))
        t = service.timings
        rows.append({"steps": n, **{k: median(getattr(x, k) for x in t)
                                    for k in ("decode_ms", "plan_ms", "foresee_ms", "encode_ms", "total_ms")}})
    return rows


def cmd_bench_steps(args) -> int:
    if args.repeats < 20:
        raise UsageError("--repeats must be at least 20")
    width, height = args.size
    rng = np.random.default_rng(args.seed)
    cond = Image.from_array(rng.integers(0, 256, size=(height, width, 3)))
    template = FlowSampleRequest(cond, FIELDS[args.field](), seed=args.seed)
    rows = sweep_steps(template, args.steps)
    medians = bench_latency(template, args.steps, args.repeats)
    stages = _bench_stages(args.steps, args.repeats, args.seed)
    out = _output_dir(args)
    write_sweep_csv(rows, out / f"sweep_{args.field}.csv")
    with open(out / f"stages_{args.field}.csv", "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=list(stages[0]))
        w.writeheader()
        w.writerows({k: (f"{v:.4f}" if isinstance(v, float) else v) for k, v in r.items()} for r in stages)
    # Wall-clock columns are last and marked; everything before them is deterministic.
    print("steps,mean_abs_error,wall:median_total_ms,wall:median_step_ms")
    for r in rows:
        per_step = median(r.latency.step_ms)
        print(f"{r.steps},{r.mean_abs_error:.6f},{medians[r.steps]:.4f},{per_step:.4f}")
    print("steps,wall:decode_ms,wall:plan_ms,wall:foresee_ms,wall:encode_ms,wall:total_ms")
    for s in stages:
        print(f"{s['steps']},{s['decode_ms']:.4f},{s['plan_ms']:.4f},{s['foresee_ms']:.4f},"
              f"{s['encode_ms']:.4f},{s['total_ms']:.4f}")
    return EXIT_OK


# -- parser -----------------------------------------------------------------------------

def _size(text: str) -> tuple[int, int]:
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WIDTHxHEIGHT, got {text!r}") from None
    if w < 1 or h < 1:
        raise argparse.ArgumentTypeError("image size must be positive")
    return w, h


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    common.add_argument("--output-dir", default=None, help="defaults to $FORESIGHT_OUTPUT_DIR or ./foresight-out")

    parser = argparse.ArgumentParser(prog="foresight-planner",
                                     description="Hierarchical planning with visual foresight on a simulated tabletop.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", parents=[common], help="run the planner + foresight service")
    p.add_argument("--bind", default=None, help=f"host:port (default $FORESIGHT_BIND or {DEFAULT_BIND})")
    p.add_argument("--foresight", choices=["oracle", "flow"], default="oracle")
    p.add_argument("--planner", choices=["rules"], default="rules")
    p.add_argument("--steps", type=int, default=8, help="Euler steps for --foresight flow")
    p.add_argument("--duration", type=float, default=None, help="stop after this many seconds")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("edge", parents=[common], help="run one closed-loop episode")
    p.add_argument("--scenario", required=True)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--connect", default=None, help="host:port of a running service")
    group.add_argument("--inprocess", action="store_true")
    p.add_argument("--policy", choices=["goal", "text", "expert"], default=None)
    p.add_argument("--ablation", choices=list(ABLATIONS), default="full")
    p.add_argument("--foresight", choices=["oracle", "flow"], default="oracle")
    p.add_argument("--steps", type=int, default=8)
    p.add_argument("--setting", type=int, default=None, help="use a seeded re-layout of the scenario")
    p.add_argument("--session", type=int, default=1)
    p.add_argument("--training", default=None, help="training list for the text policy's grounding")
    p.set_defaults(func=cmd_edge)

    p = sub.add_parser("episodes", parents=[common], help="generate expert demonstration episodes")
    p.add_argument("--scenario", action="append", default=None)
    p.add_argument("--suite", default=None)
    p.add_argument("--count", type=int, default=1, help="episodes per scenario (seeds seed..seed+count-1)")
    p.add_argument("--fps", type=float, default=10)
    p.set_defaults(func=cmd_episodes)

    p = sub.add_parser("datapipe", parents=[common], help="sample training pairs from episode manifests")
    p.add_argument("--manifests", required=True)
    p.add_argument("--offset", choices=["half", "final"], default="half")
    p.add_argument("--stats", action="store_true")
    p.set_defaults(func=cmd_datapipe)

    p = sub.add_parser("eval", parents=[common], help="score configurations over a scenario suite")
    p.add_argument("--suite", default=None, help="scenario directory (default: the shipped suite)")
    p.add_argument("--settings", type=int, default=5)
    p.add_argument("--configs", type=lambda s: [c for c in s.split(",") if c], default=list(CONFIGURATIONS))
    p.add_argument("--training", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench-steps", parents=[common], help="Euler step-count sweep with latency")
    p.add_argument("--field", choices=["pointmass", "quadratic"], default="quadratic")
    p.add_argument("--steps", type=_int_list, default=[1, 2, 4, 8, 16])
    p.add_argument("--repeats", type=int, default=21)
    p.add_argument("--size", type=_size, default=(160, 120))
    p.set_defaults(func=cmd_bench_steps)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ScenarioError, InputError, datapipe.ManifestError, FileNotFoundError,
            IsADirectoryError) as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InfeasibleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
