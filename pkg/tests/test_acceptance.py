"""Acceptance suite: one test per core guarantee, each printing a single
pass/fail line (visible with `pytest -s` or on failure)."""

import contextlib
import random
import string
import time

import numpy as np
import pytest

from conftest import error_result, make_replay_backend, ok_result, timeout_result
from test_decontam import brute_force_contaminated
from test_grpo import oracle_objective, random_batch
from test_literals import _walk_pairs
from test_toytrain import finite_difference_gradient, random_groups

from tracegen import records
from tracegen.decontam import build_index, is_contaminated, tokenize
from tracegen.evalharness import TaskRecord, aggregate, score_record
from tracegen.execution import ExecutionRequest
from tracegen.filtering import validate_case
from tracegen.grpo import GrpoConfig, group_advantages, grpo_objective
from tracegen.literals import (
    BoolVal,
    FloatVal,
    IntVal,
    ListVal,
    MapVal,
    NoneVal,
    SetVal,
    StrVal,
    TupleVal,
    mutate_literal,
    parse_args_text,
    render_args,
)
from tracegen.records import TestCaseRecord
from tracegen.toytrain import analytic_gradient, default_env, toy_train


@contextlib.contextmanager
def criterion(name):
    try:
        yield
    except BaseException:
        print(f"[FAIL] {name}")
        raise
    print(f"[PASS] {name}")


def test_grpo_oracle_equivalence():
    with criterion("GRPO oracle equivalence (50 batches, 1e-10 abs, <5s)"):
        rng = random.Random(2024)
        config = GrpoConfig()
        started = time.monotonic()
        for _ in range(50):
            batch = random_batch(rng, max_group=5, max_tokens=6)
            kernel, _ = grpo_objective(batch, config)
            oracle = oracle_objective(
                batch.to_dict(), config.epsilon, config.beta, config.std_epsilon
            )
            assert abs(kernel - oracle) <= 1e-10
        assert time.monotonic() - started < 5.0


def test_gradient_check():
    with criterion("gradient check (>=20 batches, rel err <=1e-4, <30s)"):
        rng = random.Random(7)
        env = default_env(num_queries=3)
        config = GrpoConfig()
        started = time.monotonic()
        checked = 0
        for _ in range(25):
            groups = random_groups(rng, env, config)
            theta = np.array(
                [[rng.uniform(-1, 1) for _ in range(env.num_alternatives)] for _ in env.queries]
            )
            analytic = analytic_gradient(theta, groups, config)
            numeric = finite_difference_gradient(theta, groups, config, h=1e-5)
            scale = np.maximum(np.abs(numeric), 1e-8)
            rel_err = np.abs(analytic - numeric) / scale
            mask = np.abs(numeric) > 1e-10  # parameters exactly on the clip kink
            assert np.all(rel_err[mask] <= 1e-4)
            checked += 1
        assert checked >= 20
        assert time.monotonic() - started < 30.0


def test_advantage_fixtures():
    with criterion("advantage fixtures ([2,0,0,2,0] +-1e-5, zero-variance, sum 0 +-1e-9)"):
        advs = group_advantages([2.0, 0.0, 0.0, 2.0, 0.0])
        expected = [1.22474, -0.81650, -0.81650, 1.22474, -0.81650]
        for got, want in zip(advs, expected):
            assert abs(got - want) <= 1e-5
        flat = group_advantages([1.5, 1.5, 1.5])
        assert all(a == 0.0 for a in flat)
        rng = random.Random(99)
        for _ in range(1000):
            size = rng.randint(2, 8)
            rewards = [rng.uniform(0, 2) for _ in range(size - 1)]
            rewards.append(rewards[-1] + rng.uniform(0.1, 1.0))  # guarantee variance
            advs = group_advantages(rewards)
            assert abs(sum(advs)) <= 1e-9


def test_toy_training_dynamics():
    with criterion("toy training dynamics (5 seeds, reward >=1.8, overlength <=0.05, <2min)"):
        started = time.monotonic()
        for seed in range(5):
            curve = toy_train(iterations=800, seed=seed)
            first, last = curve.stats[0], curve.stats[-1]
            assert first.mean_reward == pytest.approx(0.5, abs=1e-9)
            assert last.mean_reward >= 1.8, f"seed {seed}: {last.mean_reward}"
            assert last.overlength_fraction <= 0.05, f"seed {seed}: {last.overlength_fraction}"
        assert time.monotonic() - started < 120.0


def _random_tree(rng, depth=0):
    scalar_makers = (
        lambda: IntVal(rng.randint(-1000, 1000)),
        lambda: FloatVal(round(rng.uniform(-100, 100), 6)),
        lambda: BoolVal(rng.random() < 0.5),
        lambda: NoneVal(),
        lambda: StrVal("".join(rng.choice(string.ascii_lowercase + string.digits) for _ in range(rng.randint(0, 12)))),
    )
    if depth >= 3 or rng.random() < 0.6:
        return rng.choice(scalar_makers)()
    kind = rng.randrange(4)
    size = rng.randint(0, 4)
    if kind == 0:
        return ListVal(tuple(_random_tree(rng, depth + 1) for _ in range(size)))
    if kind == 1:
        return TupleVal(tuple(_random_tree(rng, depth + 1) for _ in range(size)))
    if kind == 2:
        # set members must be hashable scalars, distinct, and non-empty
        items = {rng.choice(scalar_makers[:2])() for _ in range(max(size, 1))}
        return SetVal(tuple(items))
    keys = {IntVal(rng.randint(-50, 50)) for _ in range(size)}
    return MapVal(tuple((k, _random_tree(rng, depth + 1)) for k in keys))


def test_mutation_bounds_and_roundtrip():
    with criterion("mutation bounds + parse/render round-trip (10,000 trees each, <30s)"):
        rng = random.Random(31337)
        started = time.monotonic()
        for i in range(10_000):
            tree = _random_tree(rng)
            # round-trip
            assert parse_args_text(render_args((tree,))) == (tree,)
            # mutation bounds
            mutated = mutate_literal(tree, seed=i)
            for orig, mut in _walk_pairs(tree, mutated):
                assert type(orig) is type(mut)
                if isinstance(orig, IntVal):
                    assert abs(mut.value - orig.value) <= 5
                elif isinstance(orig, StrVal):
                    assert 5 <= len(mut.value) <= 20
        assert time.monotonic() - started < 30.0


def test_decontamination_oracle():
    with criterion("decontamination oracle agreement (500 pairs incl. 10/9-token plants, <30s)"):
        rng = random.Random(404)
        started = time.monotonic()

        def words(k):
            return [f"w{rng.randrange(200)}" for _ in range(k)]

        planted_hits = planted_misses = 0
        for i in range(500):
            corpus = [" ".join(words(rng.randint(10, 40))) for _ in range(rng.randint(1, 4))]
            mode = i % 3
            if mode == 0:  # planted 10-token overlap: must be flagged
                doc_tokens = tokenize(corpus[0])
                start = rng.randint(0, len(doc_tokens) - 10)
                window = doc_tokens[start : start + 10]
                candidate = " ".join(words(5) + window + words(5))
            elif mode == 1:  # maximal 9-token overlap: must stay clean
                overlap = [f"u{i}x{j}" for j in range(9)]  # tokens absent from corpus
                corpus.append(" ".join(["z0"] + overlap + ["z1"]))
                candidate = " ".join(["q0"] + overlap + ["q1"])
            else:
                candidate = " ".join(words(rng.randint(5, 30)))
            index = build_index(corpus, n=10)
            verdict = is_contaminated(candidate, index)
            oracle = brute_force_contaminated(candidate, corpus, 10)
            assert verdict == oracle
            if mode == 0:
                assert verdict, "planted 10-token overlap missed"
                planted_hits += 1
            if mode == 1:
                assert not verdict, "false positive on 9-token overlap"
                planted_misses += 1
        assert planted_hits > 0 and planted_misses > 0
        assert time.monotonic() - started < 30.0


def _case(case_id, code, input_literal="(0,)"):
    return TestCaseRecord(id=case_id, code=code, entry_point="f", input_literal=input_literal)


def _fixture(code, input_literal, result):
    request = ExecutionRequest(code=code, entry_point="f", input_literal=input_literal, mode="plain")
    return (request, result, None)


def test_filter_boundary_and_histogram():
    with criterion("filter boundary (50 -> validated, 51 -> oversized) + discard histogram, replay only"):
        # repr of 'a'*48 is 50 chars; of 'a'*49 is 51 chars
        code50, code51 = "def f(x):\n    return 'a' * 48", "def f(x):\n    return 'a' * 49"
        code_err, code_to = "def f(x):\n    raise ValueError", "def f(x):\n    loop()"
        backend = make_replay_backend(
            [
                _fixture(code50, "(0,)", ok_result(repr("a" * 48))),
                _fixture(code51, "(0,)", ok_result(repr("a" * 49))),
                _fixture(code_err, "(0,)", error_result("ValueError")),
                _fixture(code_to, "(0,)", timeout_result()),
            ]
        )
        at_50 = validate_case(_case("b50", code50), backend)
        over_51 = validate_case(_case("b51", code51), backend)
        assert len(at_50.expected_output_literal) == 50
        assert at_50.status == records.VALIDATED
        assert over_51.status == records.DISCARDED
        assert over_51.discard_reason == records.DISCARD_OVERSIZED

        batch = [
            _case("h1", code50),
            _case("h2", code51),
            _case("h3", code_err),
            _case("h4", code_to),
        ]
        histogram = {}
        for case in batch:
            validated = validate_case(case, backend)
            key = (
                "validated"
                if validated.status == records.VALIDATED
                else f"discarded({validated.discard_reason})"
            )
            histogram[key] = histogram.get(key, 0) + 1
        assert histogram == {
            "validated": 1,
            "discarded(oversized)": 1,
            "discarded(runtime_error)": 1,
            "discarded(timeout)": 1,
        }


def _gold_fixture_records():
    """50 task records (10 per kind) with replay fixtures for their gold answers."""
    tasks, fixtures = [], []
    for i in range(10):
        code = f"def f(x):\n    return x + {i}"
        inp, out = f"({i},)", str(2 * i)
        fixtures.append(_fixture(code, inp, ok_result(out)))
        tasks.append(
            TaskRecord(task_id=f"fwd{i}", kind="forward", code=code, shown={"input_literal": inp}, gold=out)
        )
        tasks.append(
            TaskRecord(task_id=f"bwd{i}", kind="backward", code=code, shown={"output_literal": out}, gold=inp)
        )
        tasks.append(TaskRecord(task_id=f"cov{i}", kind="coverage", shown={"line": 2}, gold="yes" if i % 2 else "no"))
        tasks.append(TaskRecord(task_id=f"st{i}", kind="state", shown={"line": 2, "variable": "x"}, gold=f"int, {i}"))
        tasks.append(TaskRecord(task_id=f"pa{i}", kind="path", shown={"line": 1}, gold=str(i + 2)))
    return tasks, make_replay_backend(fixtures)


def test_eval_gold_self_consistency():
    with criterion("eval gold self-consistency (50-record fixture -> 1.0; 20-record hand tally)"):
        tasks, backend = _gold_fixture_records()
        assert len(tasks) == 50
        assert {t.kind for t in tasks} == {"forward", "backward", "coverage", "state", "path"}
        results = [(t.kind, score_record(t, t.gold, backend).correct) for t in tasks]
        report = aggregate(results)
        assert report.overall == 1.0
        assert all(score.metric == 1.0 for score in report.per_kind.values())

        # hand-tallied 20-record mixed fixture: forward 3/5, backward 1/5,
        # coverage 4/5, state 2/5 => overall 10/20
        mixed = (
            [("forward", True)] * 3 + [("forward", False)] * 2
            + [("backward", True)] + [("backward", False)] * 4
            + [("coverage", True)] * 4 + [("coverage", False)]
            + [("state", True)] * 2 + [("state", False)] * 3
        )
        tally = aggregate(mixed)
        assert tally.per_kind["forward"].metric == pytest.approx(0.6)
        assert tally.per_kind["backward"].metric == pytest.approx(0.2)
        assert tally.per_kind["coverage"].metric == pytest.approx(0.8)
        assert tally.per_kind["state"].metric == pytest.approx(0.4)
        assert tally.overall == pytest.approx(0.5)
