from pathlib import Path

import pytest

from tracegen.execution import ExecutionResult, ExecutionTrace, ReplayBackend

REPO_ROOT = Path(__file__).resolve().parents[1]
HARNESS_SCRIPT = REPO_ROOT / "harness" / "trace_harness.py"


def make_replay_backend(entries):
    """Build an in-memory replay backend from (request, result_dict, trace_dict) triples."""
    fixtures = {}
    for request, result, trace in entries:
        ExecutionResult.from_dict(result)  # validate fixture shape early
        if trace is not None:
            ExecutionTrace.from_dict(trace)
        fixtures[request.digest()] = {"request": request.wire_dict(), "result": result, "trace": trace}
    return ReplayBackend(fixtures=fixtures)


def ok_result(output_literal, stdout_text=""):
    return {"status": "ok", "output_literal": output_literal, "stdout_text": stdout_text, "error_kind": None}


def error_result(error_kind):
    return {"status": "runtime_error", "output_literal": None, "stdout_text": "", "error_kind": error_kind}


def timeout_result():
    return {"status": "timeout", "output_literal": None, "stdout_text": "", "error_kind": None}


@pytest.fixture
def harness_script():
    if not HARNESS_SCRIPT.exists():
        pytest.skip("trace harness not available")
    return HARNESS_SCRIPT
