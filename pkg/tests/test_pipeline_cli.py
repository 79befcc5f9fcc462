import json

import pytest

from conftest import error_result, ok_result
from tracegen import records
from tracegen.cli import main as cli_main
from tracegen.execution import ExecutionRequest
from tracegen.jsonl import write_jsonl
from tracegen.pipeline import (
    ConfigError,
    DependencyError,
    PipelineConfig,
    split_program,
    stage_decontam,
    stage_filter,
    stage_grpo_demo,
    stage_mutate,
    stage_trace,
)
from tracegen.records import TestCaseRecord

OK_CODE = "def f(x):\n    return x * 2"
ERR_CODE = "def f(x):\n    return x / 0"
BIG_CODE = "def f(x):\n    return 'z' * x"


def plain_request(code, input_literal):
    return ExecutionRequest(code=code, entry_point="f", input_literal=input_literal, mode="plain")


def write_fixture(replay_dir, request, result, trace=None):
    fixture = {"request": request.wire_dict(), "result": result, "trace": trace}
    (replay_dir / f"{request.digest()}.json").write_text(json.dumps(fixture), encoding="utf-8")


@pytest.fixture()
def workspace(tmp_path):
    replay_dir = tmp_path / "replay"
    replay_dir.mkdir()
    out_dir = tmp_path / "out"
    config_path = tmp_path / "config.yaml"
    config_path.write_text(
        "\n".join(
            [
                f"output_dir: {out_dir}",
                "seed: 7",
                "execution:",
                "  backend: replay",
                f"  replay_dir: {replay_dir}",
            ]
        ),
        encoding="utf-8",
    )
    return tmp_path, replay_dir, out_dir, config_path


def seed_filter_inputs(tmp_path, replay_dir):
    cases = [
        TestCaseRecord(id="c1", code=OK_CODE, entry_point="f", input_literal="(4,)"),
        TestCaseRecord(id="c2", code=ERR_CODE, entry_point="f", input_literal="(4,)"),
        TestCaseRecord(id="c3", code=BIG_CODE, entry_point="f", input_literal="(80,)"),
    ]
    write_fixture(replay_dir, plain_request(OK_CODE, "(4,)"), ok_result("8"))
    write_fixture(replay_dir, plain_request(ERR_CODE, "(4,)"), error_result("ZeroDivisionError"))
    write_fixture(replay_dir, plain_request(BIG_CODE, "(80,)"), ok_result(repr("z" * 80)))
    in_path = tmp_path / "raw.jsonl"
    write_jsonl(in_path, [c.to_dict() for c in cases])
    return in_path


class TestFilterStage:
    def test_counts_and_statuses(self, workspace):
        tmp_path, replay_dir, out_dir, config_path = workspace
        in_path = seed_filter_inputs(tmp_path, replay_dir)
        config = PipelineConfig.from_file(config_path)
        result = stage_filter(config, in_path, out_dir / "filtered.jsonl")
        assert result.counts == {
            "validated": 1,
            "discarded(runtime_error)": 1,
            "discarded(oversized)": 1,
        }
        rows = {r["id"]: r for r in map(json.loads, (out_dir / "filtered.jsonl").read_text().splitlines())}
        assert rows["c1"]["status"] == records.VALIDATED
        assert rows["c1"]["expected_output_literal"] == "8"
        assert rows["c2"]["discard_reason"] == records.DISCARD_RUNTIME_ERROR
        assert rows["c3"]["discard_reason"] == records.DISCARD_OVERSIZED

    def test_sidecar_has_discard_histogram(self, workspace):
        tmp_path, replay_dir, out_dir, config_path = workspace
        in_path = seed_filter_inputs(tmp_path, replay_dir)
        config = PipelineConfig.from_file(config_path)
        out_path = out_dir / "filtered.jsonl"
        stage_filter(config, in_path, out_path)
        sidecar = json.loads((out_dir / "filtered.jsonl.stats.json").read_text())
        assert sidecar["stage"] == "filter"
        assert sidecar["counts"]["discarded(runtime_error)"] == 1
        assert "input_digest" in sidecar and "config_digest" in sidecar

    def test_rerun_is_skipped_and_byte_identical(self, workspace):
        tmp_path, replay_dir, out_dir, config_path = workspace
        in_path = seed_filter_inputs(tmp_path, replay_dir)
        config = PipelineConfig.from_file(config_path)
        out_path = out_dir / "filtered.jsonl"
        first = stage_filter(config, in_path, out_path)
        assert not first.skipped
        before = out_path.read_bytes()
        second = stage_filter(config, in_path, out_path)
        assert second.skipped
        assert out_path.read_bytes() == before

    def test_changed_input_invalidates_skip(self, workspace):
        tmp_path, replay_dir, out_dir, config_path = workspace
        in_path = seed_filter_inputs(tmp_path, replay_dir)
        config = PipelineConfig.from_file(config_path)
        out_path = out_dir / "filtered.jsonl"
        stage_filter(config, in_path, out_path)
        write_jsonl(in_path, [TestCaseRecord(id="c1", code=OK_CODE, entry_point="f", input_literal="(4,)").to_dict()])
        assert not stage_filter(config, in_path, out_path).skipped


class TestMutateStage:
    def test_missing_input_names_prerequisite(self, workspace):
        tmp_path, _, out_dir, config_path = workspace
        config = PipelineConfig.from_file(config_path)
        with pytest.raises(DependencyError) as exc:
            stage_mutate(config, tmp_path / "nope.jsonl", out_dir / "mutants.jsonl")
        assert "filter" in str(exc.value)

    def test_only_validated_cases_are_mutated(self, workspace):
        tmp_path, _, out_dir, config_path = workspace
        config = PipelineConfig.from_file(config_path)
        validated = TestCaseRecord(
            id="v1", code=OK_CODE, entry_point="f", input_literal="(4,)",
            expected_output_literal="8", status=records.VALIDATED,
        )
        raw = TestCaseRecord(id="r1", code=OK_CODE, entry_point="f", input_literal="(4,)")
        in_path = tmp_path / "filtered.jsonl"
        write_jsonl(in_path, [validated.to_dict(), raw.to_dict()])
        result = stage_mutate(config, in_path, out_dir / "mutants.jsonl", seed=3, count=2)
        assert result.counts == {"mutants": 2, "skipped_unvalidated": 1}
        rows = [json.loads(line) for line in (out_dir / "mutants.jsonl").read_text().splitlines()]
        assert all(r["lineage"]["kind"] == "mutant" and r["lineage"]["parent_id"] == "v1" for r in rows)
        assert all(r["status"] == records.RAW for r in rows)


class TestDecontamStage:
    def test_contaminated_case_split_out(self, workspace):
        tmp_path, _, out_dir, config_path = workspace
        overlap = " ".join(f"tok{i}" for i in range(12))
        dirty = TestCaseRecord(
            id="d1", code=f"def f(x):\n    # {overlap}\n    return x",
            entry_point="f", input_literal="(1,)", status=records.VALIDATED,
            expected_output_literal="1",
        )
        clean = TestCaseRecord(
            id="k1", code=OK_CODE, entry_point="f", input_literal="(1,)",
            status=records.VALIDATED, expected_output_literal="2",
        )
        test_set = tmp_path / "benchmark.jsonl"
        write_jsonl(test_set, [{"text": f"prefix {overlap} suffix"}])
        config_path.write_text(
            config_path.read_text() + f"\ntest_set_paths: [{test_set}]\n", encoding="utf-8"
        )
        config = PipelineConfig.from_file(config_path)
        in_path = tmp_path / "filtered.jsonl"
        write_jsonl(in_path, [dirty.to_dict(), clean.to_dict()])
        out_path = out_dir / "decontaminated.jsonl"
        result = stage_decontam(config, in_path, out_path)
        assert result.counts["kept"] == 1 and result.counts["discarded"] == 1
        kept = [json.loads(line) for line in out_path.read_text().splitlines()]
        assert [r["id"] for r in kept] == ["k1"]
        dropped = [
            json.loads(line)
            for line in (out_dir / "decontaminated.discarded.jsonl").read_text().splitlines()
        ]
        assert dropped[0]["id"] == "d1"
        assert dropped[0]["discard_reason"] == records.DISCARD_CONTAMINATED
        report = json.loads((out_dir / "decontaminated.report.json").read_text())
        assert report["discard_rate"] == 0.5


class TestTraceStage:
    def test_questions_emitted_from_trace(self, workspace):
        tmp_path, replay_dir, out_dir, config_path = workspace
        code = "def f(x):\n    y = x + 1\n    return y"
        case = TestCaseRecord(
            id="t1", code=code, entry_point="f", input_literal="(1,)",
            status=records.VALIDATED, expected_output_literal="2",
        )
        request = ExecutionRequest(code=code, entry_point="f", input_literal="(1,)", mode="trace")
        trace = {
            "executed_lines": [2, 3],
            "state_events": [[2, "y", "int", "2"]],
            "next_line_pairs": [[2, 3]],
        }
        write_fixture(replay_dir, request, ok_result("2"), trace=trace)
        config = PipelineConfig.from_file(config_path)
        in_path = tmp_path / "filtered.jsonl"
        write_jsonl(in_path, [case.to_dict()])
        result = stage_trace(config, in_path, out_dir / "questions.jsonl")
        assert result.counts["coverage"] == 3  # three non-blank lines
        assert result.counts["state"] == 1
        assert result.counts["path"] == 1
        rows = [json.loads(line) for line in (out_dir / "questions.jsonl").read_text().splitlines()]
        assert {r["kind"] for r in rows} == {"coverage", "state", "path"}


class TestGrpoDemoStage:
    def test_writes_curve_csv(self, workspace, capsys):
        _, _, out_dir, config_path = workspace
        config = PipelineConfig.from_file(config_path)
        out_path = out_dir / "grpo_curve.csv"
        out_dir.mkdir(exist_ok=True)
        stage_grpo_demo(config, out_path, iterations=5, seed=1)
        lines = out_path.read_text().splitlines()
        assert lines[0] == "iter,mean_reward,mean_len,overlength_frac,clip_frac,mean_kl"
        assert len(lines) == 6
        assert "grpo-demo" in capsys.readouterr().out


class TestSplitProgram:
    def test_last_literal_call_is_split(self):
        code, input_literal = split_program("def f(x):\n    return x\nf(3, 'a')")
        assert code == "def f(x):\n    return x"
        assert input_literal == "(3, 'a')"

    def test_no_call_line_raises(self):
        from tracegen.literals import LiteralParseError

        with pytest.raises(LiteralParseError):
            split_program("def f(x):\n    return x")

    def test_non_literal_call_skipped(self):
        code, input_literal = split_program("def f(x):\n    return x\nf(g())\nf(1)")
        assert input_literal == "(1,)"


class TestConfig:
    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            PipelineConfig.from_file(tmp_path / "absent.yaml")

    def test_bad_value(self, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text("mutants_per_case: 0\n", encoding="utf-8")
        with pytest.raises(ConfigError):
            PipelineConfig.from_file(path)

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text("definitely_not_a_key: 1\n", encoding="utf-8")
        with pytest.raises(ConfigError):
            PipelineConfig.from_file(path)

    def test_unknown_backend(self, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text("teacher:\n  backend: telepathy\n", encoding="utf-8")
        with pytest.raises(ConfigError):
            PipelineConfig.from_file(path)


class TestCli:
    def test_config_error_exits_2(self, tmp_path, capsys):
        assert cli_main(["catalog", "--config", str(tmp_path / "absent.yaml")]) == 2
        assert "config error" in capsys.readouterr().err

    def test_dependency_error_exits_1(self, workspace, capsys):
        tmp_path, _, _, config_path = workspace
        code = cli_main(["mutate", "--config", str(config_path), "--in", str(tmp_path / "missing.jsonl")])
        assert code == 1
        assert "filter" in capsys.readouterr().err

    def test_filter_success_exits_0(self, workspace, capsys):
        tmp_path, replay_dir, out_dir, config_path = workspace
        in_path = seed_filter_inputs(tmp_path, replay_dir)
        assert cli_main(["filter", "--config", str(config_path), "--in", str(in_path)]) == 0
        assert (out_dir / "filtered.jsonl").exists()
        assert "validated=1" in capsys.readouterr().out

    def test_skip_message_on_rerun(self, workspace, capsys):
        tmp_path, replay_dir, _, config_path = workspace
        in_path = seed_filter_inputs(tmp_path, replay_dir)
        cli_main(["filter", "--config", str(config_path), "--in", str(in_path)])
        cli_main(["filter", "--config", str(config_path), "--in", str(in_path)])
        assert "skipped" in capsys.readouterr().out

    def test_grpo_demo_cli(self, workspace):
        _, _, out_dir, config_path = workspace
        out_dir.mkdir(exist_ok=True)
        assert cli_main(["grpo-demo", "--config", str(config_path), "--iters", "3"]) == 0
        assert (out_dir / "grpo_curve.csv").exists()

    def test_eval_cli(self, workspace, capsys):
        tmp_path, _, out_dir, config_path = workspace
        tasks = tmp_path / "tasks.jsonl"
        preds = tmp_path / "preds.jsonl"
        write_jsonl(
            tasks,
            [{"task_id": "q1", "kind": "coverage", "code": "", "entry_point": "f",
              "shown": {"line": 2}, "gold": "yes"}],
        )
        write_jsonl(preds, [{"task_id": "q1", "prediction": "yes"}])
        assert cli_main(["eval", "--config", str(config_path), "--in", str(tasks), "--pred", str(preds)]) == 0
        report = json.loads((out_dir / "score_report.json").read_text())
        assert report["overall"] == 1.0
