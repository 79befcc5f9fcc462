#!/usr/bin/env python3
"""Single-request execution harness speaking a JSON wire protocol.

Reads one request document from stdin:

    {"code": ..., "entry_point": ..., "input_literal": ..., "mode": "plain"|"trace"}

and writes exactly one response document to stdout:

    {"status": ..., "output_literal": ..., "stdout_text": ..., "error_kind": ...,
     "trace": {"executed_lines": [...], "state_events": [[line, name, type, value], ...],
               "next_line_pairs": [[line, succ], ...]} | null}

The submitted code is executed in a fresh namespace under a synthetic
filename; in trace mode a line-level trace hook records executed lines and
per-line variable-state changes for frames belonging to that file only.
All exceptions raised by user code become status "runtime_error"; a
nonzero exit happens only when the harness itself fails (e.g. malformed
stdin JSON).
"""

from __future__ import annotations

import ast
import io
import json
import sys

CASE_FILENAME = "<case>"
VALUE_REPR_LIMIT = 200
TRUNCATION_MARKER = "...<truncated>"


def render_value(value) -> str:
    try:
        text = repr(value)
    except Exception:
        return "<unrepresentable>"
    if len(text) > VALUE_REPR_LIMIT:
        return text[:VALUE_REPR_LIMIT] + TRUNCATION_MARKER
    return text


class LineTracer:
    """Records executed lines of the case file and, after each line runs,
    every local variable whose rendered value changed."""

    def __init__(self):
        self.executed_lines: list[int] = []
        self.state_events: list[list] = []
        # id(frame) -> (last_line, {name: rendering})
        self._frames: dict[int, tuple[int, dict[str, str]]] = {}

    def _snapshot(self, frame) -> dict[str, str]:
        return {name: render_value(value) for name, value in frame.f_locals.items()}

    def _flush(self, frame) -> None:
        key = id(frame)
        if key not in self._frames:
            return
        last_line, last_snapshot = self._frames[key]
        snapshot = self._snapshot(frame)
        for name in sorted(snapshot):
            rendering = snapshot[name]
            if last_snapshot.get(name) != rendering:
                type_name = type(frame.f_locals[name]).__name__
                self.state_events.append([last_line, name, type_name, rendering])
        self._frames[key] = (last_line, snapshot)

    def __call__(self, frame, event, arg):
        if frame.f_code.co_filename != CASE_FILENAME:
            return None
        if event == "call":
            self._frames[id(frame)] = (frame.f_lineno, self._snapshot(frame))
            return self
        if event == "line":
            self._flush(frame)
            self.executed_lines.append(frame.f_lineno)
            self._frames[id(frame)] = (frame.f_lineno, self._frames[id(frame)][1])
            return self
        if event == "return":
            self._flush(frame)
            self._frames.pop(id(frame), None)
            return self
        if event == "exception":
            self._flush(frame)
            return self
        return self


def parse_args_tuple(input_literal: str):
    value = ast.literal_eval(input_literal.strip())
    if not isinstance(value, tuple):
        value = (value,)
    return value


def execute(request: dict) -> dict:
    code = request["code"]
    entry_point = request.get("entry_point", "f")
    mode = request.get("mode", "plain")

    response = {
        "status": "ok",
        "output_literal": None,
        "stdout_text": "",
        "error_kind": None,
        "trace": None,
    }

    capture = io.StringIO()
    real_stdout = sys.stdout
    tracer = LineTracer() if mode == "trace" else None
    try:
        sys.stdout = capture
        try:
            namespace: dict = {"__name__": "__case__"}
            compiled = compile(code, CASE_FILENAME, "exec")
            exec(compiled, namespace)
            fn = namespace.get(entry_point)
            if fn is None:
                raise NameError(f"entry point {entry_point!r} is not defined")
            args = parse_args_tuple(request["input_literal"])
            if tracer is not None:
                sys.settrace(tracer)
            try:
                result = fn(*args)
            finally:
                if tracer is not None:
                    sys.settrace(None)
        except BaseException as exc:  # noqa: BLE001 - user code may raise anything
            response["status"] = "runtime_error"
            response["error_kind"] = type(exc).__name__
        else:
            response["output_literal"] = render_value(result)
            if tracer is not None:
                lines = tracer.executed_lines
                response["trace"] = {
                    "executed_lines": lines,
                    "state_events": tracer.state_events,
                    "next_line_pairs": [[a, b] for a, b in zip(lines, lines[1:])],
                }
    finally:
        sys.stdout = real_stdout
    response["stdout_text"] = capture.getvalue()
    return response


def main() -> int:
    raw = sys.stdin.read()
    try:
        request = json.loads(raw)
    except json.JSONDecodeError as exc:
        print(f"trace_harness: malformed request JSON: {exc}", file=sys.stderr)
        return 2
    if not isinstance(request, dict) or "code" not in request or "input_literal" not in request:
        print("trace_harness: request must be an object with code and input_literal", file=sys.stderr)
        return 2
    response = execute(request)
    sys.stdout.write(json.dumps(response, sort_keys=True, ensure_ascii=False, separators=(",", ":")))
    sys.stdout.write("\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
