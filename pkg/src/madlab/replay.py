"""Uncertainty-prioritized experience replay with importance weights.

Stored trajectories carry a non-negative priority score
U = alpha*(1 - r_intra) + beta*(1 - r_inter) + gamma*(1 - r_sys) computed
with the base (uncalibrated) coefficients. Sampling draws with probability
proportional to U**eta; eta = 0, or an all-zero buffer, degrades to uniform.
Each draw gets the importance weight (1/len) / p, renormalized so the batch
mean is exactly 1 (so eta = 0 yields all-ones weights). Capacity eviction is
FIFO.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import IO, Mapping, Sequence

import numpy as np

from madlab.debate import (
    DebateTrajectory,
    read_trajectory_records,
    write_trajectories,
)
from madlab.policy import derive_key
from madlab.rewards import reward_inter, reward_intra, reward_sys


@dataclass(frozen=True)
class ReplayConfig:
    """Buffer shape, priority exponent, and score weights."""

    enabled: bool = True
    capacity: int = 1024
    priority_exponent: float = 1.0  # eta
    fraction: float = 0.25  # share of each training minibatch drawn from the buffer
    refresh_period: int = 50  # iterations between re-rollouts of stored questions; 0 = never
    score_alpha: float = 1.0
    score_beta: float = 1.0
    score_gamma: float = 1.0

    def __post_init__(self) -> None:
        if self.capacity < 1:
            raise ValueError("capacity must be at least 1")
        if self.priority_exponent < 0.0:
            raise ValueError("priority_exponent must be non-negative")
        if not 0.0 <= self.fraction <= 1.0:
            raise ValueError("fraction must be in [0, 1]")
        if self.refresh_period < 0:
            raise ValueError("refresh_period must be non-negative")
        for name in ("score_alpha", "score_beta", "score_gamma"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be non-negative")


def replay_score(traj: DebateTrajectory, config: ReplayConfig) -> float:
    """Priority of one trajectory from its uncertainty complements."""
    return (
        config.score_alpha * (1.0 - reward_intra(traj))
        + config.score_beta * (1.0 - reward_inter(traj))
        + config.score_gamma * (1.0 - reward_sys(traj))
    )


@dataclass
class BufferEntry:
    trajectory: DebateTrajectory
    score: float
    inserted_iteration: int
    policy_version: int


class ReplayBuffer:
    """FIFO-bounded store of scored trajectories with prioritized sampling."""

    def __init__(self, config: ReplayConfig) -> None:
        self.config = config
        self.entries: deque[BufferEntry] = deque(maxlen=config.capacity)

    def __len__(self) -> int:
        return len(self.entries)

    def push(
        self,
        traj: DebateTrajectory,
        score: float,
        iteration: int = 0,
        policy_version: int = 0,
    ) -> None:
        if score < 0.0:
            raise ValueError(f"replay score must be non-negative, got {score}")
        self.entries.append(
            BufferEntry(
                trajectory=traj,
                score=float(score),
                inserted_iteration=iteration,
                policy_version=policy_version,
            )
        )

    def _probabilities(self) -> np.ndarray:
        n = len(self.entries)
        eta = self.config.priority_exponent
        if eta == 0.0:
            return np.full(n, 1.0 / n)
        scores = np.array([e.score for e in self.entries], dtype=np.float64)
        weights = scores**eta
        total = weights.sum()
        if total == 0.0:
            return np.full(n, 1.0 / n)
        return weights / total

    def sample(
        self, count: int, rng: np.random.Generator
    ) -> list[tuple[BufferEntry, float]]:
        """Draw entries with p ~ score**eta; returns (entry, importance weight).

        Weights are (1/len)/p renormalized to batch mean 1, so uniform
        sampling (eta = 0) gives every draw weight exactly 1.
        """
        if count == 0:
            return []
        if not self.entries:
            raise ValueError("cannot sample from an empty replay buffer")
        probs = self._probabilities()
        n = len(self.entries)
        idx = rng.choice(n, size=count, replace=True, p=probs)
        raw = 1.0 / (n * probs[idx])
        weights = raw / raw.mean()
        items = list(self.entries)
        return [(items[int(j)], float(w)) for j, w in zip(idx, weights)]

    def refresh(
        self,
        env,
        policies: Sequence,
        questions: Mapping[str, object],
        rollout_seed: int,
        policy_version: int,
    ) -> None:
        """Re-roll every stored question under the given policies, rescore, restamp."""
        for j, entry in enumerate(self.entries):
            qid = entry.trajectory.question_id
            question = questions.get(qid)
            if question is None:
                raise ValueError(f"cannot refresh: unknown question_id {qid!r}")
            traj = env.rollout_debate(question, policies, derive_key(rollout_seed, j))
            entry.trajectory = traj
            entry.score = replay_score(traj, self.config)
            entry.policy_version = policy_version

    def dump(self, path_or_fp: str | IO[str]) -> None:
        """Trajectory .jsonl with replay_score / policy_version side fields."""
        write_trajectories(
            path_or_fp,
            [e.trajectory for e in self.entries],
            extras=[
                {
                    "replay_score": e.score,
                    "policy_version": e.policy_version,
                    "inserted_iteration": e.inserted_iteration,
                }
                for e in self.entries
            ],
        )

    @classmethod
    def restore(cls, path_or_fp: str | IO[str], config: ReplayConfig) -> "ReplayBuffer":
        buffer = cls(config)
        for traj, record in read_trajectory_records(path_or_fp):
            if "replay_score" not in record or "policy_version" not in record:
                raise ValueError(
                    f"buffer record for {traj.question_id!r} lacks replay_score/policy_version"
                )
            buffer.push(
                traj,
                float(record["replay_score"]),
                iteration=int(record.get("inserted_iteration", 0)),
                policy_version=int(record["policy_version"]),
            )
        return buffer
