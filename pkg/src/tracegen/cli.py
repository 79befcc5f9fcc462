"""Command-line entry point: `tracegen <subcommand> --config <path> ...`.

Exit codes: 0 success, 1 infrastructure error, 2 configuration error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import pipeline
from .pipeline import ConfigError, DependencyError, PipelineConfig


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tracegen", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, **kwargs) -> argparse.ArgumentParser:
        p = sub.add_parser(name, **kwargs)
        p.add_argument("--config", required=True, help="pipeline config YAML")
        p.add_argument("--out", help="output path (default: under output_dir)")
        return p

    add("catalog", help="emit the method catalog as JSONL")

    p = add("generate", help="generate base test cases via the teacher")
    p.add_argument("--in", dest="in_path", help="catalog JSONL (default: output_dir/catalog.jsonl)")
    p.add_argument("--seed", type=int)
    p.add_argument("--limit", type=int)

    p = add("mutate", help="derive input-mutated children of validated cases")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--count", type=int)

    p = add("filter", help="validate cases by execution")
    p.add_argument("--in", dest="in_path", required=True)

    p = add("distill", help="produce rejection-sampled reasoning records")
    p.add_argument("--in", dest="in_path", required=True)
    strictness = p.add_mutually_exclusive_group()
    strictness.add_argument("--strict", dest="strict", action="store_true", default=None)
    strictness.add_argument("--no-strict", dest="strict", action="store_false", default=None)

    p = add("decontam", help="drop cases overlapping the test sets")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--n", type=int, help="gram size (default from config)")

    p = add("grpo-demo", help="run the toy GRPO trainer and write its curve CSV")
    p.add_argument("--iters", type=int)
    p.add_argument("--seed", type=int)

    p = add("eval", help="score predictions against task records")
    p.add_argument("--in", dest="in_path", required=True, help="task JSONL")
    p.add_argument("--pred", required=True, help="predictions JSONL ({task_id, prediction})")

    p = add("trace", help="emit trace-derived ground-truth questions")
    p.add_argument("--in", dest="in_path", required=True)

    for sp in sub.choices.values():
        sp.add_argument("--jobs", type=int, help="worker pool size override")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = PipelineConfig.from_file(args.config)
        out_dir = Path(config.output_dir)

        def out(default_name: str) -> Path:
            return Path(args.out) if args.out else out_dir / default_name

        if args.command == "catalog":
            result = pipeline.stage_catalog(config, out("catalog.jsonl"))
        elif args.command == "generate":
            in_path = args.in_path or out_dir / "catalog.jsonl"
            result = pipeline.stage_generate(
                config, in_path, out("generated.jsonl"), seed=args.seed, limit=args.limit
            )
        elif args.command == "mutate":
            result = pipeline.stage_mutate(
                config, args.in_path, out("mutants.jsonl"), seed=args.seed, count=args.count
            )
        elif args.command == "filter":
            result = pipeline.stage_filter(config, args.in_path, out("filtered.jsonl"))
        elif args.command == "distill":
            result = pipeline.stage_distill(config, args.in_path, out("distill.jsonl"), strict=args.strict)
        elif args.command == "decontam":
            result = pipeline.stage_decontam(config, args.in_path, out("decontaminated.jsonl"), n=args.n)
        elif args.command == "grpo-demo":
            result = pipeline.stage_grpo_demo(config, out("grpo_curve.csv"), iterations=args.iters, seed=args.seed)
        elif args.command == "eval":
            result = pipeline.stage_eval(config, args.in_path, args.pred, out("score_report.json"))
        elif args.command == "trace":
            result = pipeline.stage_trace(config, args.in_path, out("questions.jsonl"))
        else:  # pragma: no cover - argparse enforces choices
            raise AssertionError(args.command)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DependencyError as exc:
        print(f"dependency error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # infrastructure failures
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if result.skipped:
        print(f"{result.stage}: up to date, skipped ({result.out_path})")
    else:
        summary = ", ".join(f"{k}={v}" for k, v in sorted(result.counts.items())) or "done"
        print(f"{result.stage}: {summary} -> {result.out_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
