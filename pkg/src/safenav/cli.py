"""Command-line benchmark harness.

    safenav-bench run --config scenario.yaml --variant full --trials 50 \
        --seed 0 --out results.jsonl [--workers 2] [--trace]
    safenav-bench generate --family NARROW_CORRIDOR --seed 3 --out scenario.yaml
    safenav-bench summarize --in results.jsonl [--csv summary.csv]

Exit codes: 0 success, 1 config error, 2 io error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .bench import VARIANTS, emit_results, load_records, run_batch, run_trial, summarize, write_trace_csv
from .config import ConfigError, load_scenario, save_scenario
from .scenarios import FAMILIES, scenario_generators

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_IO = 2


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = load_scenario(args.config)
    scenario_id = Path(args.config).stem
    records = run_batch(
        cfg,
        args.variant,
        trials=args.trials,
        base_seed=args.seed,
        scenario_id=scenario_id,
        workers=args.workers,
    )
    summary = summarize(records, ci_seed=args.seed)
    emit_results(records, args.out, summary)
    if args.trace:
        rows = []
        for record in records:
            per_step: list = []
            run_trial(cfg, args.variant, record.seed, scenario_id, trace=per_step)
            for row in per_step:
                row["trial_seed"] = record.seed
                rows.append(row)
        write_trace_csv(rows, str(args.out) + ".trace.csv")
    print(json.dumps(summary, sort_keys=True, indent=2))
    return EXIT_OK


def _cmd_generate(args: argparse.Namespace) -> int:
    cfg = scenario_generators(args.family, args.seed)
    save_scenario(cfg, args.out)
    print(f"wrote {args.family} seed {args.seed} to {args.out}")
    return EXIT_OK


def _cmd_summarize(args: argparse.Namespace) -> int:
    records = load_records(getattr(args, "in"))
    summary = summarize(records)
    print(json.dumps(summary, sort_keys=True, indent=2))
    if args.csv:
        import csv

        with open(args.csv, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(
                ["variant", "trials", "success_rate", "mean_collisions", "mean_path_length", "mean_min_clearance"]
            )
            for name, row in sorted(summary["variants"].items()):
                writer.writerow(
                    [name, row["trials"], row["success_rate"], row["mean_collisions"],
                     row["mean_path_length"], row["mean_min_clearance"]]
                )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="safenav-bench", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a seeded trial batch")
    run_p.add_argument("--config", required=True, help="scenario YAML file")
    run_p.add_argument("--variant", required=True, choices=VARIANTS)
    run_p.add_argument("--trials", type=int, default=50)
    run_p.add_argument("--seed", type=int, default=0)
    run_p.add_argument("--out", required=True, help="JSON-lines output path")
    run_p.add_argument("--workers", type=int, default=1)
    run_p.add_argument("--trace", action="store_true", help="also write per-step CSV traces")
    run_p.set_defaults(func=_cmd_run)

    gen_p = sub.add_parser("generate", help="write a scenario family instance")
    gen_p.add_argument("--family", required=True, choices=FAMILIES)
    gen_p.add_argument("--seed", type=int, default=0)
    gen_p.add_argument("--out", required=True)
    gen_p.set_defaults(func=_cmd_generate)

    sum_p = sub.add_parser("summarize", help="summarize a JSON-lines record file")
    sum_p.add_argument("--in", required=True, help="JSON-lines records")
    sum_p.add_argument("--csv", help="optional CSV summary path")
    sum_p.set_defaults(func=_cmd_summarize)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
