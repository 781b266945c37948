"""Two-phase agent-tailored reward-coefficient calibration.

Phase 1 (warm-up) rolls out debates on a held-out warm-up split and averages
each agent's restricted uncertainty readings: the agent's own flip/revision
mix, the disagreement share of the answer pairs that contain the agent, and
how often removing the agent flips the final vote.

Phase 2 turns that profile into per-agent reward coefficients through
monotone closed forms: agents that ran hot during warm-up get their
uncertainty-facing coefficients scaled up — and their task weight scaled
down — so optimization pressure lands where the instability is.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from madlab.debate import DebateTrajectory, ensemble_answer, leave_one_out_votes
from madlab.metrics import MetricConfig
from madlab.rewards import CoefficientSet


@dataclass(frozen=True)
class AgentUncertaintyProfile:
    """Per-agent mean uncertainty readings from the warm-up phase.

    u_sys_bar is the per-agent mean of the other three readings.
    """

    u_intra_bar: tuple[float, ...]
    u_inter_bar: tuple[float, ...]
    loo_bar: tuple[float, ...]
    u_sys_bar: tuple[float, ...]

    def __post_init__(self) -> None:
        n = len(self.u_intra_bar)
        if n == 0:
            raise ValueError("profile must cover at least one agent")
        for name in ("u_intra_bar", "u_inter_bar", "loo_bar", "u_sys_bar"):
            values = getattr(self, name)
            if len(values) != n:
                raise ValueError(
                    f"{name} has {len(values)} entries, expected {n}"
                )
            for v in values:
                if not 0.0 <= v <= 1.0:
                    raise ValueError(f"{name} values must be in [0, 1], got {v}")

    @property
    def num_agents(self) -> int:
        return len(self.u_intra_bar)


@dataclass(frozen=True)
class CalibrationConfig:
    """Scaling strength, base coefficients, and the warm-up split size."""

    kappa: float = 1.5
    alpha_base: float = 1.0
    beta_base: float = 1.0
    gamma_base: float = 1.0
    lambda_base: float = 1.0
    eta_base: float = 0.01
    warmup_fraction: float = 0.1

    def __post_init__(self) -> None:
        if self.kappa < 0.0:
            raise ValueError("kappa must be non-negative")
        for name in ("alpha_base", "beta_base", "gamma_base", "lambda_base", "eta_base"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.warmup_fraction < 1.0:
            raise ValueError("warmup_fraction must be in (0, 1)")


def split_warmup(
    questions: Sequence, fraction: float
) -> tuple[list, list]:
    """Split questions into (warm-up, training) parts; the parts are disjoint.

    The warm-up part takes the first ceil(fraction * n) questions and must
    leave at least one question for training.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must be in (0, 1)")
    n_warm = math.ceil(fraction * len(questions))
    if n_warm >= len(questions):
        raise ValueError(
            f"warm-up split of {n_warm} would consume all {len(questions)} questions"
        )
    return list(questions[:n_warm]), list(questions[n_warm:])


def warmup_profile(
    trajectories: Sequence[DebateTrajectory],
    num_agents: int,
    metric_config: MetricConfig | None = None,
) -> AgentUncertaintyProfile:
    """Average each agent's restricted uncertainty readings over warm-up runs.

    Per agent i: the flip/revision mix of agent i's own answer sequence; the
    mean disagreement over rounds and peer pairs containing i; and the
    fraction of trajectories where dropping agent i changes the final vote.
    """
    if not trajectories:
        raise ValueError("warm-up set must be non-empty")
    config = metric_config or MetricConfig()
    lam = config.lambda_mix
    intra = [0.0] * num_agents
    inter = [0.0] * num_agents
    loo = [0.0] * num_agents
    for traj in trajectories:
        if traj.num_agents != num_agents:
            raise ValueError(
                f"trajectory {traj.question_id!r} has {traj.num_agents} agents, "
                f"expected {num_agents}"
            )
        t_rounds = traj.num_refinement_rounds
        full_winner = ensemble_answer(traj)
        loo_votes = leave_one_out_votes(traj)
        for i in range(num_agents):
            seq = traj.agent_answers(i)
            flips = sum(a != b for a, b in zip(seq, seq[1:])) / t_rounds
            revision = float(seq[0] != seq[-1])
            intra[i] += lam * flips + (1.0 - lam) * revision
            conflict = 0.0
            for row in traj.rounds:
                peers = [a for j, a in enumerate(row) if j != i]
                conflict += sum(a != row[i] for a in peers) / len(peers)
            inter[i] += conflict / len(traj.rounds)
            loo[i] += float(loo_votes[i].winner != full_winner)
    n = len(trajectories)
    intra = [v / n for v in intra]
    inter = [v / n for v in inter]
    loo = [v / n for v in loo]
    return AgentUncertaintyProfile(
        u_intra_bar=tuple(intra),
        u_inter_bar=tuple(inter),
        loo_bar=tuple(loo),
        u_sys_bar=tuple((a + b + c) / 3.0 for a, b, c in zip(intra, inter, loo)),
    )


def calibrate_coefficients(
    profile: AgentUncertaintyProfile, config: CalibrationConfig
) -> CoefficientSet:
    """Closed-form per-agent coefficients from a warm-up profile.

    alpha, beta, gamma, and the anchor strength scale up linearly with their
    profile reading; the task weight scales down with the agent's overall
    instability. kappa = 0 returns every coefficient at its base value.
    """
    k = config.kappa
    return CoefficientSet(
        alpha=tuple(config.alpha_base * (1.0 + k * u) for u in profile.u_intra_bar),
        beta=tuple(config.beta_base * (1.0 + k * u) for u in profile.u_inter_bar),
        gamma=tuple(config.gamma_base * (1.0 + k * u) for u in profile.loo_bar),
        lambda_task=tuple(
            config.lambda_base / (1.0 + k * u) for u in profile.u_sys_bar
        ),
        eta_anchor=tuple(
            config.eta_base * (1.0 + k * u) for u in profile.u_sys_bar
        ),
    )
