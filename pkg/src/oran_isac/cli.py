"""Command-line entry point for the experiment harness.

Subcommands:
  exp-a   periodicity-control schedule run
  exp-b   closed-loop latency decomposition
  sense   sensing-accuracy sweep over seeded scenes
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .harness import (
    ExperimentConfig,
    load_config,
    run_experiment_a,
    run_experiment_b,
    run_sensing_accuracy,
)
from .transport import EndpointKind


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="oran-isac",
        description="Desk-scale ISAC control-loop experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--transport", choices=["inproc", "tcp"], default="inproc")
        p.add_argument("--config", type=Path, help="JSON experiment configuration")
        p.add_argument("--out", type=Path, default=Path("results"),
                       help="output directory for CSVs and summary.json")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--duration-s", type=float,
                       help="per-segment duration (exp-a) or total probe budget hint")

    a = sub.add_parser("exp-a", help="periodicity control experiment")
    common(a)
    a.add_argument("--schedule", type=str, default="100,20,10",
                   help="comma-separated reporting periods in ms")

    b = sub.add_parser("exp-b", help="closed-loop latency experiment")
    common(b)
    b.add_argument("--probes", type=int, default=5000)
    b.add_argument("--period-ms", type=float, default=10.0)

    s = sub.add_parser("sense", help="sensing accuracy experiment")
    common(s)
    s.add_argument("--scene", type=Path, help="scene JSON with ground truth")
    s.add_argument("--trials", type=int, default=200)
    return parser


def _config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = ExperimentConfig()
    cfg.transport = EndpointKind(args.transport)
    cfg.seed = args.seed
    cfg.out_dir = args.out
    if args.duration_s:
        cfg.segment_duration_s = args.duration_s
    return cfg


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    cfg = _config_from_args(args)

    if args.command == "exp-a":
        cfg.schedule_ms = tuple(float(x) for x in args.schedule.split(","))
        summary = run_experiment_a(cfg)
        print(json.dumps(summary.to_dict(), indent=2))
    elif args.command == "exp-b":
        cfg.num_probes = args.probes
        cfg.probe_period_ms = args.period_ms
        summary = run_experiment_b(cfg)
        print(json.dumps(summary.to_dict(), indent=2))
    else:
        cfg.accuracy_trials = args.trials
        report = run_sensing_accuracy(cfg, scene_path=args.scene)
        print(json.dumps(report.to_dict(), indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
