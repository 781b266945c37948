"""Uncertainty-shaped rewards for debate trajectories.

The stance-stability reward is the exact complement of the flip rate, and the
agreement and system rewards are exact complements of their uncertainty
levels, plus a binary task reward against ground truth. Per-agent
coefficients weigh the components into each agent's total reward; the anchor
strength eta rides along in the same coefficient set because calibration
scales it with the same machinery.
"""

from __future__ import annotations

from dataclasses import dataclass

from madlab.debate import DebateTrajectory, ensemble_answer
from madlab.metrics import flip_rate, inter_uncertainty, system_uncertainty


@dataclass(frozen=True)
class CoefficientSet:
    """Per-agent reward weights (alpha, beta, gamma, lambda) and KL strength eta."""

    alpha: tuple[float, ...]
    beta: tuple[float, ...]
    gamma: tuple[float, ...]
    lambda_task: tuple[float, ...]
    eta_anchor: tuple[float, ...]

    def __post_init__(self) -> None:
        n = len(self.alpha)
        for name in ("beta", "gamma", "lambda_task", "eta_anchor"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"coefficient length mismatch: {name}")

    @property
    def num_agents(self) -> int:
        return len(self.alpha)

    @classmethod
    def uniform(
        cls,
        num_agents: int,
        alpha: float = 1.0,
        beta: float = 1.0,
        gamma: float = 1.0,
        lambda_task: float = 1.0,
        eta_anchor: float = 0.01,
    ) -> "CoefficientSet":
        return cls(
            alpha=(alpha,) * num_agents,
            beta=(beta,) * num_agents,
            gamma=(gamma,) * num_agents,
            lambda_task=(lambda_task,) * num_agents,
            eta_anchor=(eta_anchor,) * num_agents,
        )

    def zeroed(self, component: str) -> "CoefficientSet":
        """Copy with one component's weights set to 0 (ablation switch)."""
        zeros = (0.0,) * self.num_agents
        if component == "alpha":
            return CoefficientSet(zeros, self.beta, self.gamma, self.lambda_task, self.eta_anchor)
        if component == "beta":
            return CoefficientSet(self.alpha, zeros, self.gamma, self.lambda_task, self.eta_anchor)
        if component == "gamma":
            return CoefficientSet(self.alpha, self.beta, zeros, self.lambda_task, self.eta_anchor)
        raise ValueError(f"unknown component {component!r}, expected alpha/beta/gamma")


@dataclass(frozen=True)
class RewardVector:
    """Shared reward components plus each agent's weighted total."""

    r_intra: float
    r_inter: float
    r_sys: float
    r_task: float
    total: tuple[float, ...]


def reward_intra(traj: DebateTrajectory) -> float:
    """Complement of the stance flip rate: 1 - F."""
    return 1.0 - flip_rate(traj)


def reward_inter(traj: DebateTrajectory) -> float:
    """Complement of between-agent uncertainty: 1 - U_inter."""
    return 1.0 - inter_uncertainty(traj)


def reward_sys(traj: DebateTrajectory) -> float:
    """Complement of system uncertainty: 1 - U_sys."""
    return 1.0 - system_uncertainty(traj)


def reward_task(traj: DebateTrajectory) -> float:
    """1 if the ensemble's majority answer matches ground truth, else 0."""
    if traj.ground_truth is None:
        raise ValueError("reward_task: unsupervised trajectory (no ground truth)")
    return 1.0 if ensemble_answer(traj) == traj.ground_truth else 0.0


def total_reward(traj: DebateTrajectory, coeffs: CoefficientSet) -> RewardVector:
    """Weighted per-agent totals over the four shared components."""
    if coeffs.num_agents != traj.num_agents:
        raise ValueError(
            f"coefficient set covers {coeffs.num_agents} agents, "
            f"trajectory has {traj.num_agents}"
        )
    r_i = reward_intra(traj)
    r_e = reward_inter(traj)
    r_s = reward_sys(traj)
    r_t = reward_task(traj)
    totals = tuple(
        coeffs.alpha[i] * r_i
        + coeffs.beta[i] * r_e
        + coeffs.gamma[i] * r_s
        + coeffs.lambda_task[i] * r_t
        for i in range(coeffs.num_agents)
    )
    return RewardVector(r_intra=r_i, r_inter=r_e, r_sys=r_s, r_task=r_t, total=totals)
