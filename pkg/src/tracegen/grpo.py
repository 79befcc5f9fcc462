"""Group-relative policy optimization: rewards, advantages, clipped
surrogate, KL penalty, and the full objective over one prompt group.

The kernel consumes per-token log-probabilities directly and never embeds
a language model, so every formula stays exactly testable against
independent arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

DEFAULT_EPSILON = 0.2
DEFAULT_BETA = 0.04
DEFAULT_STD_EPSILON = 1e-8
DEFAULT_GROUP_SIZE = 5
DEFAULT_MAX_RESPONSE_LEN = 4096
REWARD_CORRECT = 2.0


class BatchValidationError(ValueError):
    pass


class DegenerateGroupError(ValueError):
    pass


@dataclass(frozen=True)
class GrpoConfig:
    epsilon: float = DEFAULT_EPSILON
    beta: float = DEFAULT_BETA
    std_epsilon: float = DEFAULT_STD_EPSILON
    group_size: int = DEFAULT_GROUP_SIZE
    max_response_len: int = DEFAULT_MAX_RESPONSE_LEN
    reward_correct: float = REWARD_CORRECT

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        if self.group_size < 2:
            raise ValueError("group_size must be at least 2")


@dataclass(frozen=True)
class ResponseSample:
    """One sampled response: scalar reward plus aligned per-token log-prob
    arrays under the new, old, and reference policies."""

    reward: float
    logprob_new: tuple[float, ...]
    logprob_old: tuple[float, ...]
    logprob_ref: tuple[float, ...]

    @property
    def token_count(self) -> int:
        return len(self.logprob_new)


@dataclass(frozen=True)
class GroupBatch:
    query_id: str
    responses: tuple[ResponseSample, ...]

    def validate(self) -> None:
        if len(self.responses) < 2:
            raise BatchValidationError("a group needs at least 2 responses")
        for i, r in enumerate(self.responses):
            if r.token_count == 0:
                raise BatchValidationError(f"response {i} has no tokens")
            if not (len(r.logprob_new) == len(r.logprob_old) == len(r.logprob_ref)):
                raise BatchValidationError(f"response {i} has misaligned log-prob arrays")
            for name, arr in (("new", r.logprob_new), ("old", r.logprob_old), ("ref", r.logprob_ref)):
                for lp in arr:
                    if not math.isfinite(lp):
                        raise BatchValidationError(f"response {i} has non-finite logprob_{name}")
                    if lp > 1e-12:
                        raise BatchValidationError(f"response {i} has positive logprob_{name} {lp}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "query_id": self.query_id,
            "responses": [
                {
                    "reward": r.reward,
                    "logprob_new": list(r.logprob_new),
                    "logprob_old": list(r.logprob_old),
                    "logprob_ref": list(r.logprob_ref),
                }
                for r in self.responses
            ],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "GroupBatch":
        return cls(
            query_id=d["query_id"],
            responses=tuple(
                ResponseSample(
                    reward=r["reward"],
                    logprob_new=tuple(r["logprob_new"]),
                    logprob_old=tuple(r["logprob_old"]),
                    logprob_ref=tuple(r["logprob_ref"]),
                )
                for r in d["responses"]
            ),
        )


def reward(answer_correct: bool, response_len: int, config: GrpoConfig = GrpoConfig()) -> float:
    """Binary reward: positive only for a correct answer within the length
    limit; overlong responses score 0.0 regardless of correctness."""
    if response_len < 0:
        raise ValueError("response_len must be non-negative")
    if answer_correct and response_len <= config.max_response_len:
        return config.reward_correct
    return 0.0


def group_advantages(rewards: Sequence[float], std_epsilon: float = DEFAULT_STD_EPSILON) -> list[float]:
    """Standardize rewards within the group (population std). Zero-variance
    groups yield all-zero advantages instead of a blown-up denominator."""
    if len(rewards) < 2:
        raise DegenerateGroupError("advantage needs a group of at least 2 rewards")
    arr = np.asarray(rewards, dtype=np.float64)
    std = float(arr.std())
    if std < std_epsilon:
        return [0.0] * len(rewards)
    mean = float(arr.mean())
    return [float((r - mean) / std) for r in arr]


def clipped_surrogate(logprob_new_t: float, logprob_old_t: float, advantage_i: float, epsilon: float) -> float:
    """Pessimistic min of the unclipped and ratio-clipped surrogate terms."""
    ratio = math.exp(logprob_new_t - logprob_old_t)
    clipped_ratio = min(max(ratio, 1.0 - epsilon), 1.0 + epsilon)
    return min(ratio * advantage_i, clipped_ratio * advantage_i)


def kl_penalty(logprob_new_t: float, logprob_ref_t: float) -> float:
    """Non-negative per-token KL estimator exp(d) - d - 1, d = ref - new."""
    d = logprob_ref_t - logprob_new_t
    return math.exp(d) - d - 1.0


@dataclass(frozen=True)
class GrpoDiagnostics:
    mean_ratio: float
    clip_fraction: float
    mean_kl: float


def grpo_objective(batch: GroupBatch, config: GrpoConfig = GrpoConfig()) -> tuple[float, GrpoDiagnostics]:
    """Token-and-response averaged objective: pessimistic surrogate minus
    the beta-weighted KL penalty."""
    batch.validate()
    advantages = group_advantages([r.reward for r in batch.responses], config.std_epsilon)
    total = 0.0
    ratios: list[float] = []
    kls: list[float] = []
    clipped_tokens = 0
    token_total = 0
    for resp, adv in zip(batch.responses, advantages):
        per_token = 0.0
        for lp_new, lp_old, lp_ref in zip(resp.logprob_new, resp.logprob_old, resp.logprob_ref):
            ratio = math.exp(lp_new - lp_old)
            surrogate = clipped_surrogate(lp_new, lp_old, adv, config.epsilon)
            kl = kl_penalty(lp_new, lp_ref)
            per_token += surrogate - config.beta * kl
            ratios.append(ratio)
            kls.append(kl)
            if surrogate < ratio * adv:
                clipped_tokens += 1
            token_total += 1
        total += per_token / resp.token_count
    objective = total / len(batch.responses)
    diagnostics = GrpoDiagnostics(
        mean_ratio=sum(ratios) / token_total,
        clip_fraction=clipped_tokens / token_total,
        mean_kl=sum(kls) / token_total,
    )
    return objective, diagnostics
