"""Desk-scale GRPO trainer over a synthetic answer-selection task.

The policy is a per-query softmax over a handful of candidate answers (a
stand-in for a full LLM policy). Each sampled response is a single
decision token whose log-probability is the log-softmax score of the
chosen alternative; a declared token length drives the reward's response
length limit. Training ascends the analytic gradient of the group
objective, which is checked against finite differences in the test suite.
"""

from __future__ import annotations

import csv
import math
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .grpo import GroupBatch, GrpoConfig, GrpoDiagnostics, ResponseSample, grpo_objective, group_advantages, reward


class NumericalFailureError(RuntimeError):
    def __init__(self, iteration: int):
        super().__init__(f"non-finite gradient at iteration {iteration}")
        self.iteration = iteration


@dataclass(frozen=True)
class ToyAlternative:
    correct: bool
    length: int  # declared token length, compared against max_response_len


@dataclass(frozen=True)
class ToyQuery:
    query_id: str
    alternatives: tuple[ToyAlternative, ...]


@dataclass(frozen=True)
class ToyEnv:
    queries: tuple[ToyQuery, ...]

    @property
    def num_alternatives(self) -> int:
        return len(self.queries[0].alternatives)


def default_env(num_queries: int = 8, max_response_len: int = 4096) -> ToyEnv:
    """Four alternatives per query: one correct short answer, two wrong
    short answers, and one correct-but-verbose answer over the length
    limit (so exactly one alternative earns reward under uniform play)."""
    queries = []
    for q in range(num_queries):
        alts = (
            ToyAlternative(correct=True, length=120 + 10 * q),
            ToyAlternative(correct=False, length=80 + 5 * q),
            ToyAlternative(correct=False, length=150 + 7 * q),
            ToyAlternative(correct=True, length=max_response_len + 512),
        )
        queries.append(ToyQuery(query_id=f"q{q}", alternatives=alts))
    return ToyEnv(queries=tuple(queries))


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    return shifted - math.log(np.exp(shifted).sum())


@dataclass(frozen=True)
class SampledGroup:
    """One query's rollout group, frozen at sampling time; only the new
    policy's log-probs are recomputed as theta moves."""

    query_index: int
    alt_indices: tuple[int, ...]
    rewards: tuple[float, ...]
    logprob_old: tuple[float, ...]
    logprob_ref: tuple[float, ...]


def sample_groups(theta: np.ndarray, env: ToyEnv, ref_theta: np.ndarray, config: GrpoConfig, rng: random.Random) -> list[SampledGroup]:
    groups = []
    for q, query in enumerate(env.queries):
        logp = log_softmax(theta[q])
        probs = np.exp(logp)
        ref_logp = log_softmax(ref_theta[q])
        alts = rng.choices(range(len(query.alternatives)), weights=probs, k=config.group_size)
        rewards = tuple(
            reward(query.alternatives[a].correct, query.alternatives[a].length, config) for a in alts
        )
        groups.append(
            SampledGroup(
                query_index=q,
                alt_indices=tuple(alts),
                rewards=rewards,
                logprob_old=tuple(float(logp[a]) for a in alts),
                logprob_ref=tuple(float(ref_logp[a]) for a in alts),
            )
        )
    return groups


def build_batches(theta: np.ndarray, groups: list[SampledGroup]) -> list[GroupBatch]:
    """Materialize kernel batches for the current theta (single-token responses)."""
    batches = []
    for g in groups:
        logp = log_softmax(theta[g.query_index])
        batches.append(
            GroupBatch(
                query_id=f"q{g.query_index}",
                responses=tuple(
                    ResponseSample(
                        reward=r,
                        logprob_new=(float(logp[a]),),
                        logprob_old=(lo,),
                        logprob_ref=(lr,),
                    )
                    for a, r, lo, lr in zip(g.alt_indices, g.rewards, g.logprob_old, g.logprob_ref)
                ),
            )
        )
    return batches


def mean_objective(theta: np.ndarray, groups: list[SampledGroup], config: GrpoConfig) -> tuple[float, GrpoDiagnostics]:
    """Uniform average of the group objective over the query batch."""
    totals, ratios, clips, kls = [], [], [], []
    for batch in build_batches(theta, groups):
        value, diag = grpo_objective(batch, config)
        totals.append(value)
        ratios.append(diag.mean_ratio)
        clips.append(diag.clip_fraction)
        kls.append(diag.mean_kl)
    n = len(totals)
    return (
        sum(totals) / n,
        GrpoDiagnostics(mean_ratio=sum(ratios) / n, clip_fraction=sum(clips) / n, mean_kl=sum(kls) / n),
    )


def analytic_gradient(theta: np.ndarray, groups: list[SampledGroup], config: GrpoConfig) -> np.ndarray:
    """Exact gradient of mean_objective with respect to theta.

    Per response, d(objective)/d(logprob_new) is the unclipped-branch
    coefficient r*A when that branch attains the min (zero when the clip
    binds), plus beta*(exp(d) - 1) from the KL estimator; it backpropagates
    through log-softmax as (one_hot(a) - softmax(theta[q])).
    """
    grad = np.zeros_like(theta)
    B = len(groups)
    for g in groups:
        logp = log_softmax(theta[g.query_index])
        probs = np.exp(logp)
        advantages = group_advantages(list(g.rewards), config.std_epsilon)
        G = len(g.alt_indices)
        for a, adv, lp_old, lp_ref in zip(g.alt_indices, advantages, g.logprob_old, g.logprob_ref):
            lp_new = float(logp[a])
            ratio = math.exp(lp_new - lp_old)
            clipped_ratio = min(max(ratio, 1.0 - config.epsilon), 1.0 + config.epsilon)
            if ratio * adv <= clipped_ratio * adv:
                coeff = ratio * adv
            else:
                coeff = 0.0  # clip binds; clipped ratio is locally constant
            d = lp_ref - lp_new
            coeff += config.beta * (math.exp(d) - 1.0)
            one_hot = np.zeros_like(probs)
            one_hot[a] = 1.0
            grad[g.query_index] += (coeff / (B * G)) * (one_hot - probs)
    return grad


@dataclass(frozen=True)
class IterationStats:
    iteration: int
    mean_reward: float
    mean_response_len: float
    overlength_fraction: float
    clip_fraction: float
    mean_kl: float


@dataclass
class TrainingCurve:
    stats: list[IterationStats]
    final_theta: np.ndarray

    def write_csv(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iter", "mean_reward", "mean_len", "overlength_frac", "clip_frac", "mean_kl"])
            for s in self.stats:
                writer.writerow(
                    [
                        s.iteration,
                        f"{s.mean_reward:.6f}",
                        f"{s.mean_response_len:.2f}",
                        f"{s.overlength_fraction:.6f}",
                        f"{s.clip_fraction:.6f}",
                        f"{s.mean_kl:.6f}",
                    ]
                )


def _policy_stats(theta: np.ndarray, env: ToyEnv, config: GrpoConfig) -> tuple[float, float, float]:
    """Exact expectations of reward, response length, and overlength mass
    under the current policy (no sampling noise in the reported curve)."""
    rewards, lengths, overs = [], [], []
    for q, query in enumerate(env.queries):
        probs = np.exp(log_softmax(theta[q]))
        rewards.append(sum(p * reward(a.correct, a.length, config) for p, a in zip(probs, query.alternatives)))
        lengths.append(sum(p * a.length for p, a in zip(probs, query.alternatives)))
        overs.append(sum(p for p, a in zip(probs, query.alternatives) if a.length > config.max_response_len))
    n = len(env.queries)
    return sum(rewards) / n, sum(lengths) / n, sum(overs) / n


def toy_train(
    env: Optional[ToyEnv] = None,
    config: GrpoConfig = GrpoConfig(),
    iterations: int = 500,
    seed: int = 0,
    learning_rate: float = 0.5,
    inner_steps: int = 2,
) -> TrainingCurve:
    """Run GRPO iterations on the toy task and return the statistics curve.

    Each iteration samples G responses per query under the pre-update
    policy, then takes `inner_steps` analytic-gradient ascent steps (steps
    after the first are off-policy, exercising the clipped surrogate).
    """
    env = env or default_env(max_response_len=config.max_response_len)
    rng = random.Random(seed)
    theta = np.zeros((len(env.queries), env.num_alternatives), dtype=np.float64)
    ref_theta = theta.copy()
    stats: list[IterationStats] = []
    last_diag = GrpoDiagnostics(mean_ratio=1.0, clip_fraction=0.0, mean_kl=0.0)
    for it in range(iterations):
        mean_r, mean_len, over = _policy_stats(theta, env, config)
        groups = sample_groups(theta, env, ref_theta, config, rng)
        for _ in range(inner_steps):
            grad = analytic_gradient(theta, groups, config)
            if not np.all(np.isfinite(grad)):
                raise NumericalFailureError(it)
            theta = theta + learning_rate * grad
        _, last_diag = mean_objective(theta, groups, config)
        stats.append(
            IterationStats(
                iteration=it,
                mean_reward=mean_r,
                mean_response_len=mean_len,
                overlength_fraction=over,
                clip_fraction=last_diag.clip_fraction,
                mean_kl=last_diag.mean_kl,
            )
        )
    return TrainingCurve(stats=stats, final_theta=theta)
