"""Replay buffer tests.

The prioritized-sampling law is checked with a chi-square goodness-of-fit
test against the analytic distribution p ~ score**eta. The critical value
13.276704135987625 (four degrees of freedom, alpha = 0.01) was computed
with an arbitrary-precision special-functions library and frozen here.
"""

import io
import json
from collections import Counter

import numpy as np
import pytest

from madlab.debate import DebateTrajectory, trajectory_to_record
from madlab.metrics import MetricConfig, flip_rate, full_profile
from madlab.policy import DebateEnv, EnvConfig, derive_key, rng_stream
from madlab.replay import BufferEntry, ReplayBuffer, ReplayConfig, replay_score

MC = MetricConfig()
CHI2_CRIT_DF4_ALPHA01 = 13.276704135987625

FIXED_SCORES = (0.1, 0.2, 0.3, 0.2, 0.7)


def make_traj(qid, rounds=(("A", "B"), ("A", "B"))):
    return DebateTrajectory(qid, ("A", "B"), rounds, "A")


def fixed_buffer(eta):
    config = ReplayConfig(priority_exponent=eta, capacity=16)
    buffer = ReplayBuffer(config)
    for j, score in enumerate(FIXED_SCORES):
        buffer.push(make_traj(f"q{j}"), score, iteration=j, policy_version=0)
    return buffer


# ------------------------------------------------------------------- scoring


def test_replay_score_is_weighted_uncertainty_sum():
    traj = DebateTrajectory(
        "q0",
        ("A", "B", "C"),
        (("A", "B", "C"), ("A", "B", "B"), ("B", "B", "C")),
        "B",
    )
    config = ReplayConfig(score_alpha=0.5, score_beta=2.0, score_gamma=1.5)
    profile = full_profile(traj, MC)
    expected = 0.5 * flip_rate(traj) + 2.0 * profile.u_inter + 1.5 * profile.u_sys
    assert replay_score(traj, config) == pytest.approx(expected, abs=1e-15)


def test_negative_score_rejected():
    buffer = ReplayBuffer(ReplayConfig())
    with pytest.raises(ValueError, match="non-negative"):
        buffer.push(make_traj("q0"), -0.1)


# ------------------------------------------------------------------ sampling


@pytest.mark.parametrize("eta", [0.0, 1.0, 2.0])
def test_sampling_law_matches_priority_exponent(eta):
    buffer = fixed_buffer(eta)
    n_draws = 10_000
    rng = np.random.default_rng(2024)
    draws = buffer.sample(n_draws, rng)
    counts = Counter(entry.trajectory.question_id for entry, _ in draws)
    scores = np.array(FIXED_SCORES)
    if eta == 0.0:
        probs = np.full(len(scores), 1.0 / len(scores))
    else:
        weights = scores**eta
        probs = weights / weights.sum()
    expected = probs * n_draws
    chi2 = sum(
        (counts.get(f"q{j}", 0) - expected[j]) ** 2 / expected[j]
        for j in range(len(scores))
    )
    assert chi2 < CHI2_CRIT_DF4_ALPHA01, f"eta={eta}: chi2={chi2}"


def test_eta_zero_weights_are_exactly_one():
    buffer = fixed_buffer(0.0)
    draws = buffer.sample(64, np.random.default_rng(7))
    assert all(w == 1.0 for _, w in draws)


def test_zero_scores_fall_back_to_uniform():
    config = ReplayConfig(priority_exponent=1.0)
    buffer = ReplayBuffer(config)
    for j in range(4):
        buffer.push(make_traj(f"q{j}"), 0.0)
    draws = buffer.sample(32, np.random.default_rng(3))
    assert all(w == 1.0 for _, w in draws)
    assert {e.trajectory.question_id for e, _ in draws} <= {f"q{j}" for j in range(4)}


def test_importance_weights_follow_inverse_probability():
    buffer = fixed_buffer(1.0)
    scores = np.array(FIXED_SCORES)
    probs = scores / scores.sum()
    by_qid = {f"q{j}": probs[j] for j in range(len(scores))}
    draws = buffer.sample(50, np.random.default_rng(11))
    raw = np.array([1.0 / (len(scores) * by_qid[e.trajectory.question_id]) for e, _ in draws])
    expected = raw / raw.mean()
    got = np.array([w for _, w in draws])
    np.testing.assert_allclose(got, expected, rtol=0, atol=1e-12)
    assert got.mean() == pytest.approx(1.0, abs=1e-12)


def test_importance_weighted_mean_recovers_uniform_expectation():
    # Self-normalized importance sampling of the score itself: the weighted
    # mean under prioritized draws must approach the plain per-entry mean.
    buffer = fixed_buffer(2.0)
    scores = np.array(FIXED_SCORES)
    target = scores.mean()
    probs = scores**2 / (scores**2).sum()
    raw_times_f = scores / (len(scores) * probs)
    sd = float(np.sqrt(np.dot(probs, raw_times_f**2) - target**2))
    n_draws = 20_000
    draws = buffer.sample(n_draws, np.random.default_rng(99))
    est = float(np.mean([w * e.score for e, w in draws]))
    tol = 4.0 * sd / np.sqrt(n_draws)
    assert abs(est - target) < tol, f"estimate {est} vs {target} (tol {tol})"


def test_sample_edge_cases():
    buffer = ReplayBuffer(ReplayConfig())
    assert buffer.sample(0, np.random.default_rng(0)) == []
    with pytest.raises(ValueError, match="empty"):
        buffer.sample(1, np.random.default_rng(0))


# ------------------------------------------------------------------ eviction


def test_fifo_eviction_drops_oldest():
    buffer = ReplayBuffer(ReplayConfig(capacity=100))
    for j in range(150):
        buffer.push(make_traj(f"q{j:03d}"), 0.5, iteration=j)
    assert len(buffer) == 100
    kept = [e.trajectory.question_id for e in buffer.entries]
    assert kept == [f"q{j:03d}" for j in range(50, 150)]


# -------------------------------------------------------------- persistence


def test_dump_restore_roundtrip(tmp_path):
    buffer = fixed_buffer(1.0)
    path = str(tmp_path / "buffer.jsonl")
    buffer.dump(path)
    restored = ReplayBuffer.restore(path, buffer.config)
    assert len(restored) == len(buffer)
    for a, b in zip(buffer.entries, restored.entries):
        assert a.trajectory == b.trajectory
        assert a.score == b.score
        assert a.policy_version == b.policy_version
        assert a.inserted_iteration == b.inserted_iteration
    second = io.StringIO()
    restored.dump(second)
    with open(path, "r", encoding="utf-8") as fp:
        assert second.getvalue() == fp.read()


def test_restore_requires_score_fields():
    record = trajectory_to_record(make_traj("q0"))
    line = json.dumps(record)
    with pytest.raises(ValueError, match="replay_score"):
        ReplayBuffer.restore(io.StringIO(line + "\n"), ReplayConfig())


# --------------------------------------------------------------------- refresh


def test_refresh_rerolls_rescores_and_restamps():
    env = DebateEnv(
        EnvConfig(
            num_agents=2,
            rounds=1,
            answer_space_size=4,
            skills=(0.9, 0.8),
            difficulty="fixed:1.0",
            seed=5,
        )
    )
    questions = {q.question_id: q for q in env.generate_questions(3, "t")}
    policies = env.initial_policies()
    config = ReplayConfig()
    buffer = ReplayBuffer(config)
    for j, q in enumerate(questions.values()):
        traj = env.rollout_debate(q, policies, derive_key(100, j))
        buffer.push(traj, replay_score(traj, config), iteration=1, policy_version=0)
    buffer.refresh(env, policies, questions, rollout_seed=777, policy_version=9)
    for j, entry in enumerate(buffer.entries):
        q = questions[entry.trajectory.question_id]
        expected = env.rollout_debate(q, policies, derive_key(777, j))
        assert entry.trajectory == expected
        assert entry.score == replay_score(expected, config)
        assert entry.policy_version == 9
    # Same policies and seed: a second refresh is a fixed point.
    snapshot = [(e.trajectory, e.score) for e in buffer.entries]
    buffer.refresh(env, policies, questions, rollout_seed=777, policy_version=9)
    assert snapshot == [(e.trajectory, e.score) for e in buffer.entries]


def test_refresh_unknown_question_errors():
    env = DebateEnv(EnvConfig(num_agents=2, rounds=1, answer_space_size=4,
                              skills=(0.9, 0.8), seed=5))
    buffer = ReplayBuffer(ReplayConfig())
    buffer.push(make_traj("mystery"), 0.3)
    with pytest.raises(ValueError, match="mystery"):
        buffer.refresh(env, env.initial_policies(), {}, rollout_seed=1, policy_version=1)


# ----------------------------------------------------------------- validation


def test_config_validation():
    with pytest.raises(ValueError):
        ReplayConfig(capacity=0)
    with pytest.raises(ValueError):
        ReplayConfig(priority_exponent=-0.5)
    with pytest.raises(ValueError):
        ReplayConfig(fraction=1.5)
    with pytest.raises(ValueError):
        ReplayConfig(refresh_period=-1)
    with pytest.raises(ValueError):
        ReplayConfig(score_beta=-1.0)
