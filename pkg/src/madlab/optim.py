"""Clipped asymmetric policy optimization with a reference-policy anchor.

Each honest agent maximizes, over its tabular softmax logits,

    L_i = mean_m[ w_m * min(rho * A, clip(rho, 1-eps, 1+eps) * A) ]
          - eta_i * mean_m[ w_m * KL_m ]

where rho is the trajectory likelihood ratio against a frozen reference
policy, A the per-agent batch-mean-baselined advantage, KL_m the mean
per-visited-context KL(current || reference) over the T+1 rounds, and w_m an
importance weight (1 for fresh rollouts). Gradients are exact: the surrogate
term contributes A * rho * score per visit and is exactly zero on
trajectories in the clipped regime; the KL term contributes
p * ((log p - log q) - KL) per visited context.

Rollouts always happen under the reference snapshot; the reference refreshes
every ref_refresh_period iterations, and gradient_step refuses batches whose
reference version is stale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import IO, Sequence

import numpy as np

from madlab.debate import DebateTrajectory, ensemble_answer
from madlab.metrics import MetricConfig, full_profile
from madlab.policy import (
    DebateContext,
    DebateEnv,
    PolicyTable,
    SyntheticQuestion,
    derive_key,
    rng_stream,
)
from madlab.replay import ReplayBuffer, ReplayConfig, replay_score
from madlab.rewards import CoefficientSet, total_reward


@dataclass(frozen=True)
class ClipConfig:
    """Optimization knobs for the clipped objective."""

    epsilon: float = 0.2
    learn_rate: float = 0.1
    batch_size: int = 32
    iterations: int = 200
    ref_refresh_period: int = 1

    def __post_init__(self) -> None:
        if self.epsilon < 0.0:
            raise ValueError("epsilon must be non-negative")
        if self.learn_rate <= 0.0:
            raise ValueError("learn_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")
        if self.ref_refresh_period < 1:
            raise ValueError("ref_refresh_period must be at least 1")


@dataclass(frozen=True)
class IterationStats:
    """One training-curve row."""

    iteration: int
    accuracy: float
    mean_u_intra: float
    mean_u_inter: float
    mean_u_sys: float
    mean_total_reward: float


@dataclass
class TrainState:
    """Mutable training snapshot; never shared across threads."""

    policies: list[PolicyTable | None]
    reference: list[PolicyTable | None]
    ref_version: int
    coeffs: CoefficientSet
    iteration: int
    history: list[IterationStats] = field(default_factory=list)


@dataclass(frozen=True)
class RolloutBatch:
    """Trajectories collected under one reference snapshot.

    weights are importance weights with batch mean 1; fresh rollouts carry 1.
    """

    questions: tuple[SyntheticQuestion, ...]
    trajectories: tuple[DebateTrajectory, ...]
    weights: tuple[float, ...]
    ref_version: int

    def __post_init__(self) -> None:
        if not (len(self.questions) == len(self.trajectories) == len(self.weights)):
            raise ValueError("batch fields must have equal length")
        if not self.questions:
            raise ValueError("empty batch")


@dataclass(frozen=True)
class AdvantageEstimate:
    """Per-agent batch-mean baselines and centered advantages (batch x agents)."""

    baselines: tuple[float, ...]
    advantages: np.ndarray


def compute_advantages(totals: np.ndarray) -> AdvantageEstimate:
    """Center per-agent totals on their batch means."""
    totals = np.asarray(totals, dtype=np.float64)
    if totals.ndim != 2 or totals.shape[0] == 0:
        raise ValueError("totals must be a non-empty (batch x agents) array")
    baselines = totals.mean(axis=0)
    return AdvantageEstimate(
        baselines=tuple(float(b) for b in baselines),
        advantages=totals - baselines,
    )


def likelihood_ratio(
    env: DebateEnv,
    current: PolicyTable,
    reference: PolicyTable,
    agent_index: int,
    question: SyntheticQuestion,
    traj: DebateTrajectory,
) -> float:
    """exp(log pi_theta(tau) - log pi_ref(tau)) for one honest agent."""
    lp_cur = env.trajectory_log_prob(current, agent_index, question, traj)
    lp_ref = env.trajectory_log_prob(reference, agent_index, question, traj)
    return math.exp(lp_cur - lp_ref)


def clipped_surrogate(rho: float, advantage: float, epsilon: float) -> float:
    """min(rho * A, clip(rho, 1-eps, 1+eps) * A); reduces to A at rho = 1."""
    clipped = min(max(rho, 1.0 - epsilon), 1.0 + epsilon)
    return min(rho * advantage, clipped * advantage)


def surrogate_is_clipped(rho: float, advantage: float, epsilon: float) -> bool:
    """True when the min() selects the flat branch, killing the gradient."""
    if advantage > 0.0:
        return rho > 1.0 + epsilon
    if advantage < 0.0:
        return rho < 1.0 - epsilon
    return False


def _log_probs(policy: PolicyTable, ctx: DebateContext, tilt: np.ndarray | None) -> np.ndarray:
    z = policy.logits(ctx)
    if tilt is not None:
        z = z + tilt
    z = z - z.max()
    return z - math.log(float(np.exp(z).sum()))


def kl_anchor(
    env: DebateEnv,
    current: PolicyTable,
    reference: PolicyTable,
    agent_index: int,
    question: SyntheticQuestion,
    traj: DebateTrajectory,
) -> float:
    """Mean per-visited-context KL(current || reference) over the T+1 rounds."""
    steps = env.agent_steps(question, traj, agent_index)
    total = 0.0
    for step in steps:
        lp_cur = _log_probs(current, step.ctx, step.tilt)
        lp_ref = _log_probs(reference, step.ctx, step.tilt)
        p = np.exp(lp_cur)
        total += float(np.dot(p, lp_cur - lp_ref))
    return total / len(steps)


def objective_value(
    env: DebateEnv,
    policies: Sequence[PolicyTable | None],
    reference: Sequence[PolicyTable | None],
    batch: RolloutBatch,
    advantages: AdvantageEstimate,
    coeffs: CoefficientSet,
    clip: ClipConfig,
) -> dict[int, float]:
    """Per-honest-agent objective on a fixed batch with fixed advantages."""
    out: dict[int, float] = {}
    m_total = len(batch.trajectories)
    for i in env.honest_indices:
        cur, ref = policies[i], reference[i]
        assert cur is not None and ref is not None
        surr = 0.0
        kl = 0.0
        for m, (q, traj) in enumerate(zip(batch.questions, batch.trajectories)):
            w = batch.weights[m]
            a = float(advantages.advantages[m, i])
            rho = likelihood_ratio(env, cur, ref, i, q, traj)
            surr += w * clipped_surrogate(rho, a, clip.epsilon)
            kl += w * kl_anchor(env, cur, ref, i, q, traj)
        out[i] = surr / m_total - coeffs.eta_anchor[i] * kl / m_total
    return out


def gradient_step(
    env: DebateEnv,
    state: TrainState,
    batch: RolloutBatch,
    clip: ClipConfig,
) -> TrainState:
    """One exact ascent step on every honest agent's objective.

    Rewards and advantages are recomputed from the batch under the state's
    coefficients. Refuses batches rolled out under a stale reference.
    """
    if batch.ref_version != state.ref_version:
        raise ValueError(
            f"stale rollouts: batch reference version {batch.ref_version}, "
            f"state expects {state.ref_version}"
        )
    totals = np.array(
        [total_reward(traj, state.coeffs).total for traj in batch.trajectories]
    )
    adv = compute_advantages(totals)
    m_total = len(batch.trajectories)
    for i in env.honest_indices:
        cur, ref = state.policies[i], state.reference[i]
        assert cur is not None and ref is not None
        eta = state.coeffs.eta_anchor[i]
        grads: dict[DebateContext, np.ndarray] = {}
        for m, (q, traj) in enumerate(zip(batch.questions, batch.trajectories)):
            w = batch.weights[m]
            a = float(adv.advantages[m, i])
            steps = env.agent_steps(q, traj, i)
            lp_cur_rows = [_log_probs(cur, s.ctx, s.tilt) for s in steps]
            lp_ref_rows = [_log_probs(ref, s.ctx, s.tilt) for s in steps]
            lp_cur = sum(float(row[cur.index[s.answer]]) for row, s in zip(lp_cur_rows, steps))
            lp_ref = sum(float(row[ref.index[s.answer]]) for row, s in zip(lp_ref_rows, steps))
            rho = math.exp(lp_cur - lp_ref)
            if a != 0.0 and not surrogate_is_clipped(rho, a, clip.epsilon):
                coef = w * a * rho
                for row, s in zip(lp_cur_rows, steps):
                    g = grads.setdefault(s.ctx, np.zeros(cur.num_labels))
                    g -= coef * np.exp(row)
                    g[cur.index[s.answer]] += coef
            if eta != 0.0:
                scale = w * eta / len(steps)
                for lc, lr_row, s in zip(lp_cur_rows, lp_ref_rows, steps):
                    p = np.exp(lc)
                    diff = lc - lr_row
                    kl = float(np.dot(p, diff))
                    g = grads.setdefault(s.ctx, np.zeros(cur.num_labels))
                    g -= scale * p * (diff - kl)
        for ctx, g in grads.items():
            cur.update(ctx, clip.learn_rate * (g / m_total))
    return state


def collect_batch(
    env: DebateEnv,
    questions: Sequence[SyntheticQuestion],
    policies: Sequence[PolicyTable | None],
    ref_version: int,
    rollout_seed: int,
    weights: Sequence[float] | None = None,
) -> RolloutBatch:
    """Roll out one trajectory per question; each batch slot gets its own stream."""
    trajectories = tuple(
        env.rollout_debate(q, policies, derive_key(rollout_seed, m))
        for m, q in enumerate(questions)
    )
    if weights is None:
        weights = (1.0,) * len(questions)
    return RolloutBatch(
        questions=tuple(questions),
        trajectories=trajectories,
        weights=tuple(float(w) for w in weights),
        ref_version=ref_version,
    )


def train(
    env: DebateEnv,
    train_questions: Sequence[SyntheticQuestion],
    coeffs: CoefficientSet,
    clip: ClipConfig,
    metric_config: MetricConfig,
    seed: int,
    replay_config: ReplayConfig | None = None,
    initial_policies: Sequence[PolicyTable | None] | None = None,
) -> tuple[TrainState, ReplayBuffer | None]:
    """Full training loop: rollout under the reference, step, refresh, replay.

    Every random draw is keyed by (seed, purpose, iteration, ...), so a rerun
    with the same arguments reproduces the trajectory of states exactly.
    """
    if not train_questions:
        raise ValueError("train() needs at least one question")
    if initial_policies is None:
        policies: list[PolicyTable | None] = env.initial_policies()
    else:
        policies = [p.copy() if p is not None else None for p in initial_policies]
    reference = [p.copy() if p is not None else None for p in policies]
    state = TrainState(
        policies=policies, reference=reference, ref_version=0, coeffs=coeffs, iteration=0
    )
    buffer = ReplayBuffer(replay_config) if replay_config and replay_config.enabled else None
    qmap = {q.question_id: q for q in train_questions}
    for k in range(1, clip.iterations + 1):
        n_replay = 0
        if buffer is not None and len(buffer) > 0:
            n_replay = min(int(round(replay_config.fraction * clip.batch_size)), clip.batch_size)
        n_fresh = clip.batch_size - n_replay
        pick_rng = rng_stream(seed, "pick", k)
        idx = pick_rng.choice(
            len(train_questions), size=n_fresh, replace=len(train_questions) < n_fresh
        )
        questions = [train_questions[int(j)] for j in idx]
        weights = [1.0] * n_fresh
        if n_replay > 0:
            sampled = buffer.sample(n_replay, rng_stream(seed, "replay", k))
            for entry, w in sampled:
                questions.append(qmap[entry.trajectory.question_id])
                weights.append(w)
        batch = collect_batch(
            env,
            questions,
            state.reference,
            state.ref_version,
            derive_key(seed, "rollout", k),
            weights,
        )
        gradient_step(env, state, batch, clip)
        state.iteration = k
        totals = np.array(
            [total_reward(t, coeffs).total for t in batch.trajectories]
        )
        honest = env.honest_indices
        profiles = [full_profile(t, metric_config) for t in batch.trajectories]
        accuracy = float(np.mean([_is_correct(t) for t in batch.trajectories]))
        state.history.append(
            IterationStats(
                iteration=k,
                accuracy=accuracy,
                mean_u_intra=float(np.mean([p.u_intra for p in profiles])),
                mean_u_inter=float(np.mean([p.u_inter for p in profiles])),
                mean_u_sys=float(np.mean([p.u_sys for p in profiles])),
                mean_total_reward=float(totals[:, honest].mean()),
            )
        )
        if buffer is not None:
            for traj in batch.trajectories:
                buffer.push(
                    traj,
                    replay_score(traj, replay_config),
                    iteration=k,
                    policy_version=state.ref_version,
                )
            if replay_config.refresh_period and k % replay_config.refresh_period == 0:
                buffer.refresh(
                    env,
                    state.policies,
                    qmap,
                    rollout_seed=derive_key(seed, "buffer-refresh", k),
                    policy_version=state.ref_version,
                )
        if k % clip.ref_refresh_period == 0:
            state.reference = [p.copy() if p is not None else None for p in state.policies]
            state.ref_version += 1
    return state, buffer


def _is_correct(traj: DebateTrajectory) -> bool:
    return traj.ground_truth is not None and ensemble_answer(traj) == traj.ground_truth


TRAINING_CSV_HEADER = "iter,accuracy,mean_U_intra,mean_U_inter,mean_U_sys,mean_total_reward"


def write_training_csv(path_or_fp: str | IO[str], history: Sequence[IterationStats]) -> None:
    """Training-curve CSV, 6-decimal fixed."""

    def _write(fp: IO[str]) -> None:
        fp.write(TRAINING_CSV_HEADER + "\n")
        for row in history:
            fp.write(
                f"{row.iteration},{row.accuracy:.6f},{row.mean_u_intra:.6f},"
                f"{row.mean_u_inter:.6f},{row.mean_u_sys:.6f},{row.mean_total_reward:.6f}\n"
            )

    if isinstance(path_or_fp, str):
        with open(path_or_fp, "w", encoding="utf-8") as fp:
            _write(fp)
    else:
        _write(path_or_fp)
