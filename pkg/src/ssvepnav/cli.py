"""Command line entry point: calibrate, navigate, serve, metrics, gen-world."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import scu
from .errors import ParameterError, SsvepNavError
from .metrics import format_report, metrics_report
from .session import (VirtualSubject, run_calibration, run_repeated_experiments)
from .signal import SsvepGenParams
from .simworld import (CameraModel, PlanStep, RobotPose, World, WorldObject,
                       load_world, save_world)

EXIT_OK = 0
EXIT_FAULT = 1
EXIT_USAGE = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ssvepnav",
                                     description="SSVEP teleoperation simulator")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--snr", type=float, default=1.0)
    parser.add_argument("--world", type=Path, help="world description JSON")
    parser.add_argument("--model", type=Path, help="trained model file")
    parser.add_argument("--out", type=Path, help="output directory")
    parser.add_argument("--trials-per-class", type=int, default=40)
    parser.add_argument("--json", action="store_true",
                        help="machine-readable reports")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("calibrate", help="generate data, train and cross-validate")
    nav = sub.add_parser("navigate", help="run closed-loop experiments")
    nav.add_argument("--repeat", type=int, default=1)
    nav.add_argument("--lapse-rate", type=float, default=0.0)
    serve = sub.add_parser("serve", help="run the operator console service")
    serve.add_argument("--bind", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8587)
    met = sub.add_parser("metrics", help="summarize a session log")
    met.add_argument("log", type=Path)
    sub.add_parser("gen-world", help="write the default demo world")
    return parser


def _gen_params(args) -> SsvepGenParams:
    return SsvepGenParams(snr=args.snr, rng_seed=args.seed)


def default_world() -> World:
    """Three-object demo world with a two-approach, one-turn plan."""
    return World(
        camera=CameraModel(),
        objects=[
            WorldObject(id="chair", class_name="chair", x=3.0, y=-0.8, height_m=0.5),
            WorldObject(id="plant", class_name="potted plant", x=3.2, y=0.0, height_m=0.5),
            WorldObject(id="monitor", class_name="tv", x=3.0, y=0.8, height_m=0.5),
            WorldObject(id="bottle", class_name="bottle", x=3.2, y=-4.0, height_m=0.5),
        ],
        start_pose=RobotPose(x=0.0, y=0.0, heading=0.0),
        plan=[
            PlanStep(kind="object", target_id="plant"),
            PlanStep(kind="arrow", turn="right"),
            PlanStep(kind="object", target_id="bottle"),
        ],
        name="demo",
    )


def _cmd_calibrate(args) -> int:
    subject = VirtualSubject.oracle(_gen_params(args))
    hp = scu.ScuHyperparams(rng_seed=args.seed)
    result = run_calibration(subject, hp, trials_per_class=args.trials_per_class,
                             out_dir=args.out)
    report = metrics_report(result.cv_report.fold_accuracies, t_seconds=3.0)
    print(json.dumps(report) if args.json else format_report(report))
    return EXIT_OK


def _load_world_arg(args) -> World:
    return load_world(args.world) if args.world else default_world()


def _cmd_navigate(args) -> int:
    if args.model is None:
        raise ParameterError("navigate requires --model")
    model = scu.load_model(args.model)
    world = _load_world_arg(args)
    params = _gen_params(args)

    def subject_factory(i: int) -> VirtualSubject:
        return VirtualSubject(gen_params=params, lapse_rate=args.lapse_rate,
                              rng_seed=args.seed + i)

    sessions = run_repeated_experiments(world, model, subject_factory,
                                        repeats=args.repeat, out_dir=args.out)
    rows = [s.summary() for s in sessions]
    if args.json:
        print(json.dumps(rows))
    else:
        print("exp  trials  accuracy  itr_bpm  completed")
        for row in rows:
            print(f"{row['experiment']:>3}  {row['n_trials']:>6}  "
                  f"{row['accuracy']:>8.3f}  {row['itr_bpm']:>7.2f}  "
                  f"{row['completed']}")
        mean = sum(r["accuracy"] for r in rows) / len(rows)
        print(f"mean accuracy {mean:.3f}")
    return EXIT_OK


def _cmd_serve(args) -> int:
    from .console import serve_console
    from .session import SessionEngine

    if args.model is None:
        raise ParameterError("serve requires --model")
    model = scu.load_model(args.model)
    world = _load_world_arg(args)
    params = _gen_params(args)

    def engine_factory() -> SessionEngine:
        return SessionEngine(world, model, params)

    serve_console(args.bind, args.port, engine_factory)
    return EXIT_OK


def _cmd_metrics(args) -> int:
    trials = []
    with open(args.log) as fh:
        for line in fh:
            doc = json.loads(line)
            if "summary" not in doc:
                trials.append(doc)
    if not trials:
        raise ParameterError(f"no trials in log {args.log}")
    accuracy = sum(t["correct"] for t in trials) / len(trials)
    mean_t = sum(3.0 + t["latency_s"] for t in trials) / len(trials)
    report = metrics_report([accuracy], t_seconds=mean_t)
    print(json.dumps(report) if args.json else format_report(report))
    return EXIT_OK


def _cmd_gen_world(args) -> int:
    out = args.out or Path(".")
    out.mkdir(parents=True, exist_ok=True)
    path = Path(out) / "world.json"
    save_world(default_world(), path)
    print(f"wrote {path}")
    return EXIT_OK


def cli_entry(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    handlers = {
        "calibrate": _cmd_calibrate,
        "navigate": _cmd_navigate,
        "serve": _cmd_serve,
        "metrics": _cmd_metrics,
        "gen-world": _cmd_gen_world,
    }
    try:
        return handlers[args.command](args)
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SsvepNavError, OSError) as exc:
        print(f"fault: {exc}", file=sys.stderr)
        return EXIT_FAULT


def main() -> None:
    sys.exit(cli_entry())


if __name__ == "__main__":
    main()
