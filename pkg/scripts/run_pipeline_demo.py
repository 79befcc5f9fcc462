#!/usr/bin/env python3
"""Run the full dataset pipeline end to end against the live subprocess
harness, using a stub teacher so no model endpoint is needed.

Writes a self-contained workspace (stub fixtures, config, catalog) and then
drives the CLI stages: generate -> filter -> mutate -> filter -> decontam ->
trace -> distill. Each stage prints its summary line.

Usage:
    python scripts/run_pipeline_demo.py --workdir demo_out
"""

import argparse
import json
import sys
from pathlib import Path

from tracegen.catalog import MethodDescriptor, sample_constraints
from tracegen.cli import main as cli_main
from tracegen.jsonl import write_jsonl
from tracegen.records import TestCaseRecord, VALIDATED
from tracegen.teacher import build_cot_prompt, build_generation_prompt

REPO_ROOT = Path(__file__).resolve().parents[1]
HARNESS = REPO_ROOT / "harness" / "trace_harness.py"
SEED = 11

METHODS = [
    MethodDescriptor("str", "upper", 0),
    MethodDescriptor("int", "bit_length", 0),
    MethodDescriptor("list", "append", 1),
]

PROGRAMS = {
    "upper": (
        "def f(s):\n"
        "    out = ''\n"
        "    for ch in s:\n"
        "        out = out + ch.upper()\n"
        "    return out\n"
        "f('abc')"
    ),
    "bit_length": (
        "def f(n):\n"
        "    total = 0\n"
        "    while n > 0:\n"
        "        total = total + n.bit_length()\n"
        "        n = n // 2\n"
        "    return total\n"
        "f(9)"
    ),
    "append": (
        "def f(xs, y):\n"
        "    out = []\n"
        "    for x in xs:\n"
        "        if x != y:\n"
        "            out.append(x)\n"
        "    return out\n"
        "f([1, 2, 1, 3], 1)"
    ),
}


def fenced(program: str) -> str:
    return f"```python\n{program}\n```\n"


def cot_text(code: str, answer: str) -> str:
    return (
        f"{fenced(code)}"
        "<Reasoning>Executing line by line with the given arguments.</Reasoning>\n"
        f"<Answer>{answer}</Answer>\n"
    )


def build_workspace(workdir: Path) -> Path:
    workdir.mkdir(parents=True, exist_ok=True)
    out_dir = workdir / "out"
    out_dir.mkdir(exist_ok=True)

    catalog = workdir / "catalog.jsonl"
    write_jsonl(
        catalog,
        [
            {"type_name": m.type_name, "method_name": m.method_name, "arity_hint": m.arity_hint}
            for m in METHODS
        ],
    )

    fixtures = {}
    for method in METHODS:
        prompt = build_generation_prompt(sample_constraints(method, SEED))
        fixtures[prompt.digest()] = fenced(PROGRAMS[method.method_name])
    # chain-of-thought fixtures for the validated base cases (answers worked
    # out by hand; one deliberately wrong to show rejection)
    cot_cases = [
        ("str.upper.s11", PROGRAMS["upper"], "('abc',)", "'ABC'", "'ABC'", "('abc',)"),
        ("int.bit_length.s11", PROGRAMS["bit_length"], "(9,)", "10", "12", "(9,)"),
        ("list.append.s11", PROGRAMS["append"], "([1, 2, 1, 3], 1)", "[2, 3]", "[2, 3]", "([2, 3], 1)"),
    ]
    for case_id, program, input_literal, expected, fwd_answer, bwd_answer in cot_cases:
        code = program.rsplit("\n", 1)[0]
        case = TestCaseRecord(
            id=case_id,
            code=code,
            entry_point="f",
            input_literal=input_literal,
            expected_output_literal=expected,
            status=VALIDATED,
        )
        fixtures[build_cot_prompt(case, "forward").digest()] = cot_text(code, fwd_answer)
        fixtures[build_cot_prompt(case, "backward").digest()] = cot_text(code, bwd_answer)
    fixtures_path = workdir / "stub_fixtures.json"
    fixtures_path.write_text(json.dumps(fixtures, indent=2), encoding="utf-8")

    benchmark = workdir / "benchmark.jsonl"
    write_jsonl(benchmark, [{"text": "held out benchmark text with no overlap"}])

    config_path = workdir / "config.yaml"
    config_path.write_text(
        "\n".join(
            [
                f"output_dir: {out_dir}",
                f"seed: {SEED}",
                f"test_set_paths: [{benchmark}]",
                "teacher:",
                "  backend: stub",
                f"  stub_fixtures_path: {fixtures_path}",
                "execution:",
                "  backend: subprocess",
                f"  harness_script: {HARNESS}",
                "",
            ]
        ),
        encoding="utf-8",
    )
    return config_path


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--workdir", default="demo_out")
    args = parser.parse_args()

    workdir = Path(args.workdir)
    config = str(build_workspace(workdir))
    out = workdir / "out"

    stages = [
        ["generate", "--config", config, "--in", str(workdir / "catalog.jsonl"), "--seed", str(SEED)],
        ["filter", "--config", config, "--in", str(out / "generated.jsonl")],
        ["mutate", "--config", config, "--in", str(out / "filtered.jsonl"), "--seed", str(SEED)],
        ["filter", "--config", config, "--in", str(out / "mutants.jsonl"), "--out", str(out / "mutants_filtered.jsonl")],
        ["decontam", "--config", config, "--in", str(out / "mutants_filtered.jsonl")],
        ["trace", "--config", config, "--in", str(out / "filtered.jsonl")],
        ["distill", "--config", config, "--in", str(out / "filtered.jsonl")],
        ["grpo-demo", "--config", config, "--iters", "400"],
    ]
    for argv in stages:
        code = cli_main(argv)
        if code != 0:
            print(f"stage {argv[0]} failed with exit code {code}", file=sys.stderr)
            return code
    print(f"pipeline artifacts written under {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
