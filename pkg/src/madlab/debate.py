"""Debate transcripts, majority voting, and the trajectory interchange format.

A trajectory is a complete (T+1) x N grid of answer labels: round 0 holds the
initial responses, rounds 1..T the refinements. Labels live in a finite
ordered answer space; every tie anywhere in the package breaks toward the
order-minimal label so that reruns are reproducible.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from typing import IO, Iterable, Iterator, Mapping, Sequence

Label = str


@dataclass(frozen=True)
class VoteOutcome:
    """Majority-vote result: winning label, per-label counts, tie flag."""

    winner: Label
    counts: dict[Label, int]
    was_tie: bool


@dataclass(frozen=True)
class DebateTrajectory:
    """One debate transcript.

    rounds[t][i] is agent i's answer at round t; rounds[0] are the initial
    responses. ground_truth is None for unsupervised transcripts.
    """

    question_id: str
    answer_space: tuple[Label, ...]
    rounds: tuple[tuple[Label, ...], ...]
    ground_truth: Label | None = None

    @property
    def num_agents(self) -> int:
        return len(self.rounds[0]) if self.rounds else 0

    @property
    def num_refinement_rounds(self) -> int:
        """T, the number of refinement rounds after the initial response."""
        return len(self.rounds) - 1

    @property
    def final_round(self) -> tuple[Label, ...]:
        return self.rounds[-1]

    def agent_answers(self, agent: int) -> tuple[Label, ...]:
        """Answers of one agent across all rounds, in round order."""
        return tuple(row[agent] for row in self.rounds)

    def drop_agent(self, agent: int) -> "DebateTrajectory":
        """Counterfactual transcript with one agent's column removed."""
        if not 0 <= agent < self.num_agents:
            raise ValueError(f"agent index {agent} out of range")
        return DebateTrajectory(
            question_id=self.question_id,
            answer_space=self.answer_space,
            rounds=tuple(
                tuple(a for i, a in enumerate(row) if i != agent) for row in self.rounds
            ),
            ground_truth=self.ground_truth,
        )


def label_rank(answer_space: Sequence[Label]) -> dict[Label, int]:
    """Map each label to its position in the declared answer-space order."""
    return {label: i for i, label in enumerate(answer_space)}


def majority_vote(
    answers: Sequence[Label], order: Sequence[Label] | None = None
) -> VoteOutcome:
    """Majority vote with a deterministic order-minimal tie-break.

    order fixes the tie-break ranking; when omitted, labels compare by their
    natural (lexicographic) order. Raises on an empty ballot.
    """
    if not answers:
        raise ValueError("majority_vote: no voters")
    counts = Counter(answers)
    top = max(counts.values())
    leaders = [label for label, c in counts.items() if c == top]
    if order is not None:
        rank = label_rank(order)
        try:
            leaders.sort(key=lambda lab: rank[lab])
        except KeyError as exc:
            raise ValueError(f"majority_vote: label {exc} not in the given order")
    else:
        leaders.sort()
    return VoteOutcome(winner=leaders[0], counts=dict(counts), was_tie=len(leaders) > 1)


def ensemble_answer(traj: DebateTrajectory) -> Label:
    """The ensemble's final answer: majority vote over the last round."""
    return majority_vote(traj.final_round, traj.answer_space).winner


def final_answer_distribution(traj: DebateTrajectory) -> dict[Label, float]:
    """Empirical distribution of final-round answers over the answer space.

    Keys follow the answer-space order; labels nobody chose get 0.
    """
    counts = Counter(traj.final_round)
    n = len(traj.final_round)
    return {label: counts.get(label, 0) / n for label in traj.answer_space}


def leave_one_out_votes(traj: DebateTrajectory) -> list[VoteOutcome]:
    """Majority vote of the final round with each agent removed in turn.

    Requires at least 2 agents: removing the only voter leaves no ballot.
    """
    final = traj.final_round
    if len(final) < 2:
        raise ValueError("leave_one_out_votes: need at least 2 agents")
    outcomes = []
    for i in range(len(final)):
        rest = final[:i] + final[i + 1 :]
        outcomes.append(majority_vote(rest, traj.answer_space))
    return outcomes


def validate_trajectory(traj: DebateTrajectory) -> list[str]:
    """Return every invariant violation with its location; empty means valid.

    Checks: at least 2 agents, at least 1 refinement round, a non-empty
    duplicate-free answer space, a complete rectangular grid, every stored
    label inside the answer space, ground truth inside the answer space.
    """
    problems: list[str] = []
    space = traj.answer_space
    if not space:
        problems.append("answer_space is empty")
    if len(set(space)) != len(space):
        problems.append("answer_space contains duplicate labels")
    if not traj.rounds:
        problems.append("no rounds at all (need initial round plus T >= 1)")
        return problems
    n = len(traj.rounds[0])
    if n < 2:
        problems.append(f"need at least 2 agents, round 0 has {n}")
    if len(traj.rounds) < 2:
        problems.append("need at least 1 refinement round (T >= 1)")
    in_space = set(space)
    for t, row in enumerate(traj.rounds):
        if len(row) != n:
            problems.append(
                f"grid gap at t={t}: {len(row)} answers, round 0 has {n}"
            )
        for i, label in enumerate(row):
            if label not in in_space:
                problems.append(
                    f"label {label!r} at (t={t}, i={i}) not in the answer space"
                )
    if traj.ground_truth is not None and traj.ground_truth not in in_space:
        problems.append(f"ground_truth {traj.ground_truth!r} not in the answer space")
    return problems


def trajectory_to_record(
    traj: DebateTrajectory, extra: Mapping[str, object] | None = None
) -> dict:
    """JSON-serializable record for one trajectory line."""
    record: dict[str, object] = {
        "question_id": traj.question_id,
        "answer_space": list(traj.answer_space),
        "ground_truth": traj.ground_truth,
        "rounds": [list(row) for row in traj.rounds],
    }
    if extra:
        record.update(extra)
    return record


def trajectory_from_record(record: Mapping[str, object]) -> DebateTrajectory:
    """Build and validate a trajectory from a parsed record. Raises ValueError."""
    for key in ("question_id", "answer_space", "rounds"):
        if key not in record:
            raise ValueError(f"missing field {key!r}")
    rounds_raw = record["rounds"]
    if not isinstance(rounds_raw, list) or not all(
        isinstance(row, list) for row in rounds_raw
    ):
        raise ValueError("field 'rounds' must be a list of per-round lists")
    traj = DebateTrajectory(
        question_id=str(record["question_id"]),
        answer_space=tuple(str(x) for x in record["answer_space"]),
        rounds=tuple(tuple(str(a) for a in row) for row in rounds_raw),
        ground_truth=(
            None if record.get("ground_truth") is None else str(record["ground_truth"])
        ),
    )
    problems = validate_trajectory(traj)
    if problems:
        raise ValueError("; ".join(problems))
    return traj


def write_trajectories(
    path_or_fp: str | IO[str],
    trajectories: Iterable[DebateTrajectory],
    extras: Iterable[Mapping[str, object]] | None = None,
) -> None:
    """Write trajectories as one JSON record per line.

    extras, when given, is a parallel iterable of additional per-line fields
    (used by the replay-buffer dump format).
    """

    def _write(fp: IO[str]) -> None:
        if extras is None:
            for traj in trajectories:
                fp.write(json.dumps(trajectory_to_record(traj)) + "\n")
        else:
            for traj, extra in zip(trajectories, extras):
                fp.write(json.dumps(trajectory_to_record(traj, extra)) + "\n")

    if isinstance(path_or_fp, str):
        with open(path_or_fp, "w", encoding="utf-8") as fp:
            _write(fp)
    else:
        _write(path_or_fp)


def read_trajectories(path_or_fp: str | IO[str]) -> list[DebateTrajectory]:
    """Read a trajectory .jsonl file, rejecting bad lines with their number."""
    return [traj for traj, _ in read_trajectory_records(path_or_fp)]


def read_trajectory_records(
    path_or_fp: str | IO[str],
) -> list[tuple[DebateTrajectory, dict]]:
    """Like read_trajectories but also returns each line's raw record.

    Callers that carry side-channel fields (replay score, policy version)
    read those from the raw record.
    """

    def _read(fp: Iterator[str]) -> list[tuple[DebateTrajectory, dict]]:
        out: list[tuple[DebateTrajectory, dict]] = []
        for lineno, line in enumerate(fp, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"line {lineno}: not valid JSON ({exc.msg})")
            if not isinstance(record, dict):
                raise ValueError(f"line {lineno}: record must be a JSON object")
            try:
                traj = trajectory_from_record(record)
            except ValueError as exc:
                raise ValueError(f"line {lineno}: {exc}")
            out.append((traj, record))
        return out

    if isinstance(path_or_fp, str):
        with open(path_or_fp, "r", encoding="utf-8") as fp:
            return _read(fp)
    return _read(path_or_fp)
