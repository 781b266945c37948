"""Trajectory container, voting, validation, and .jsonl round-trips."""

from __future__ import annotations

import io

import numpy as np
import pytest

from brute_oracle import brute_majority, random_rounds
from madlab.debate import (
    DebateTrajectory,
    ensemble_answer,
    final_answer_distribution,
    leave_one_out_votes,
    majority_vote,
    read_trajectories,
    read_trajectory_records,
    trajectory_from_record,
    validate_trajectory,
    write_trajectories,
)

SPACE = ("A", "B", "C")


def make_traj(rounds, ground_truth=None, space=SPACE, qid="q-0"):
    return DebateTrajectory(
        question_id=qid, answer_space=tuple(space), rounds=rounds, ground_truth=ground_truth
    )


def test_majority_vote_plain_winner():
    out = majority_vote(["A", "B", "A"], SPACE)
    assert out.winner == "A"
    assert out.counts == {"A": 2, "B": 1}
    assert not out.was_tie


def test_majority_vote_tie_breaks_order_minimal():
    out = majority_vote(["B", "A"], SPACE)
    assert out.winner == "A"
    assert out.was_tie
    # order is the declared order, not lexicographic
    out = majority_vote(["B", "A"], ("B", "A"))
    assert out.winner == "B"


def test_majority_vote_empty_raises():
    with pytest.raises(ValueError, match="no voters"):
        majority_vote([], SPACE)


def test_majority_vote_matches_brute_force():
    rng = np.random.default_rng(7)
    for _ in range(300):
        n = int(rng.integers(1, 7))
        ballot = [SPACE[rng.integers(0, 3)] for _ in range(n)]
        assert majority_vote(ballot, SPACE).winner == brute_majority(ballot, SPACE)


def test_unanimous_vote_is_stable_under_any_order():
    for order in (SPACE, tuple(reversed(SPACE))):
        assert majority_vote(["B", "B", "B"], order).winner == "B"


def test_final_answer_distribution_covers_space():
    traj = make_traj((("A", "B"), ("A", "A")))
    dist = final_answer_distribution(traj)
    assert dist == {"A": 1.0, "B": 0.0, "C": 0.0}
    assert abs(sum(dist.values()) - 1.0) < 1e-15


def test_leave_one_out_votes_drop_each_agent():
    traj = make_traj((("A", "B", "B"), ("A", "B", "B")))
    outs = leave_one_out_votes(traj)
    assert [o.winner for o in outs] == ["B", "A", "A"]


def test_leave_one_out_single_agent_raises():
    traj = DebateTrajectory("q", SPACE, (("A",), ("A",)))
    with pytest.raises(ValueError, match="at least 2"):
        leave_one_out_votes(traj)


def test_validate_accepts_good_trajectory():
    assert validate_trajectory(make_traj((("A", "B"), ("B", "B")))) == []


def test_validate_reports_gap_with_location():
    traj = DebateTrajectory("q", SPACE, (("A", "B"), ("B",)))
    problems = validate_trajectory(traj)
    assert any("t=1" in p for p in problems)


def test_validate_reports_out_of_space_label():
    traj = DebateTrajectory("q", SPACE, (("A", "Z"), ("B", "B")))
    problems = validate_trajectory(traj)
    assert any("'Z'" in p and "t=0, i=1" in p for p in problems)


def test_validate_rejects_too_few_agents_and_rounds():
    assert any("2 agents" in p for p in validate_trajectory(
        DebateTrajectory("q", SPACE, (("A",), ("B",)))))
    assert any("refinement" in p for p in validate_trajectory(
        DebateTrajectory("q", SPACE, (("A", "B"),))))


def test_validate_rejects_bad_ground_truth_and_dup_space():
    traj = DebateTrajectory("q", ("A", "A"), (("A", "A"), ("A", "A")), "B")
    problems = validate_trajectory(traj)
    assert any("duplicate" in p for p in problems)
    assert any("ground_truth" in p for p in problems)


def test_drop_agent_removes_column():
    traj = make_traj((("A", "B", "C"), ("A", "A", "C")))
    reduced = traj.drop_agent(1)
    assert reduced.rounds == (("A", "C"), ("A", "C"))
    assert reduced.num_agents == 2


def test_jsonl_round_trip_preserves_everything():
    rng = np.random.default_rng(3)
    trajs = [
        make_traj(random_rounds(rng, 3, 2, SPACE), ground_truth="B", qid=f"q-{k}")
        for k in range(20)
    ]
    buf = io.StringIO()
    write_trajectories(buf, trajs)
    back = read_trajectories(io.StringIO(buf.getvalue()))
    assert back == trajs


def test_jsonl_null_ground_truth_round_trips():
    traj = make_traj((("A", "B"), ("B", "B")))
    buf = io.StringIO()
    write_trajectories(buf, [traj])
    assert '"ground_truth": null' in buf.getvalue()
    assert read_trajectories(io.StringIO(buf.getvalue()))[0].ground_truth is None


def test_jsonl_parse_error_carries_line_number():
    text = '{"question_id": "q", "answer_space": ["A","B"], "ground_truth": null, "rounds": [["A","B"],["A","A"]]}\nnot json\n'
    with pytest.raises(ValueError, match="line 2"):
        read_trajectories(io.StringIO(text))


def test_jsonl_invalid_record_carries_line_number():
    text = '{"question_id": "q", "answer_space": ["A","B"], "ground_truth": null, "rounds": [["A","Z"],["A","A"]]}\n'
    with pytest.raises(ValueError, match="line 1.*'Z'"):
        read_trajectories(io.StringIO(text))


def test_jsonl_missing_field_rejected():
    with pytest.raises(ValueError, match="rounds"):
        trajectory_from_record({"question_id": "q", "answer_space": ["A", "B"]})


def test_jsonl_extra_fields_survive_in_records():
    traj = make_traj((("A", "B"), ("B", "B")))
    buf = io.StringIO()
    write_trajectories(buf, [traj], extras=[{"replay_score": 0.5, "policy_version": 3}])
    pairs = read_trajectory_records(io.StringIO(buf.getvalue()))
    assert pairs[0][1]["replay_score"] == 0.5
    assert pairs[0][1]["policy_version"] == 3


def test_relabeling_equivariance_of_vote():
    # order-preserving bijection commutes with the vote
    rng = np.random.default_rng(11)
    mapping = {"A": "x1", "B": "x2", "C": "x3"}
    new_space = ("x1", "x2", "x3")
    for _ in range(100):
        ballot = [SPACE[rng.integers(0, 3)] for _ in range(int(rng.integers(2, 6)))]
        mapped = [mapping[a] for a in ballot]
        assert mapping[majority_vote(ballot, SPACE).winner] == majority_vote(mapped, new_space).winner
