"""Experiment pipelines: baseline, training, attacks, analysis, sweeps.

Every pipeline is a pure function of its configuration: all randomness flows
from the environment seed through keyed streams, artifacts never embed
timestamps, and re-running a pipeline rewrites byte-identical files. All
artifacts are plain text (CSV / JSONL) so other tooling can consume them.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from typing import IO, Sequence

import numpy as np

from madlab.calibration import (
    calibrate_coefficients,
    split_warmup,
    warmup_profile,
)
from madlab.config import ExperimentConfig, config_hash
from madlab.debate import (
    DebateTrajectory,
    ensemble_answer,
    read_trajectories,
    write_trajectories,
)
from madlab.metrics import (
    MetricConfig,
    UncertaintyProfile,
    full_profile,
    write_profiles_csv,
)
from madlab.optim import train, write_training_csv
from madlab.policy import DebateEnv, PolicyTable, SyntheticQuestion, derive_key, save_policy
from madlab.rewards import CoefficientSet, total_reward
from madlab.stats import (
    OutcomeRecord,
    correlation_matrix,
    selective_prediction_curve,
    separation_report,
    stratify_by_uncertainty,
    write_correlation_csv,
    write_selective_csv,
    write_separation_csv,
    write_strata_csv,
    SEPARATION_CSV_HEADER,
)

SUMMARY_CSV_HEADER = "label,questions,accuracy,mean_U_intra,mean_U_inter,mean_U_sys"
COEFFICIENTS_CSV_HEADER = "agent,alpha,beta,gamma,lambda,eta"


@dataclass(frozen=True)
class SummaryRow:
    """One evaluation outcome: a labeled accuracy/uncertainty aggregate."""

    label: str
    questions: int
    accuracy: float
    mean_u_intra: float
    mean_u_inter: float
    mean_u_sys: float


@dataclass(frozen=True)
class EvalResult:
    """Everything one evaluation pass produces, before persistence."""

    questions: tuple[SyntheticQuestion, ...]
    trajectories: tuple[DebateTrajectory, ...]
    profiles: tuple[UncertaintyProfile, ...]
    records: tuple[OutcomeRecord, ...]
    summary: SummaryRow


@dataclass
class PipelineResult:
    """Summary rows plus any warnings a pipeline accumulated."""

    rows: list[SummaryRow]
    warnings: list[str] = field(default_factory=list)
    out_dir: str = ""


def with_seed(config: ExperimentConfig, seed: int | None) -> ExperimentConfig:
    """Copy of the config with the root seed replaced (CLI --seed override)."""
    if seed is None:
        return config
    return dataclasses.replace(config, env=dataclasses.replace(config.env, seed=seed))


def evaluate_ensemble(
    env: DebateEnv,
    questions: Sequence[SyntheticQuestion],
    policies: Sequence[PolicyTable | None],
    metric_config: MetricConfig,
    label: str,
) -> EvalResult:
    """Roll out one debate per question and aggregate outcome statistics.

    Rollout streams are keyed by (seed, "eval", question id) only, so the
    same seed and question set replays identically regardless of which
    policies or how many compromised seats are plugged in.
    """
    seed = env.config.seed
    trajectories = []
    profiles = []
    records = []
    for q in questions:
        traj = env.rollout_debate(q, policies, derive_key(seed, "eval", q.question_id))
        profile = full_profile(traj, metric_config)
        trajectories.append(traj)
        profiles.append(profile)
        records.append(
            OutcomeRecord(
                question_id=q.question_id,
                correct=ensemble_answer(traj) == q.ground_truth,
                profile=profile,
            )
        )
    summary = SummaryRow(
        label=label,
        questions=len(questions),
        accuracy=float(np.mean([r.correct for r in records])),
        mean_u_intra=float(np.mean([p.u_intra for p in profiles])),
        mean_u_inter=float(np.mean([p.u_inter for p in profiles])),
        mean_u_sys=float(np.mean([p.u_sys for p in profiles])),
    )
    return EvalResult(
        questions=tuple(questions),
        trajectories=tuple(trajectories),
        profiles=tuple(profiles),
        records=tuple(records),
        summary=summary,
    )


def write_summary_csv(path_or_fp: str | IO[str], rows: Sequence[SummaryRow]) -> None:
    def _write(fp: IO[str]) -> None:
        fp.write(SUMMARY_CSV_HEADER + "\n")
        for r in rows:
            fp.write(
                f"{r.label},{r.questions},{r.accuracy:.6f},{r.mean_u_intra:.6f},"
                f"{r.mean_u_inter:.6f},{r.mean_u_sys:.6f}\n"
            )

    if isinstance(path_or_fp, str):
        with open(path_or_fp, "w", encoding="utf-8") as fp:
            _write(fp)
    else:
        _write(path_or_fp)


def rewards_csv_header(num_agents: int) -> str:
    totals = ",".join(f"r_total_{i}" for i in range(num_agents))
    return f"question_id,r_intra,r_inter,r_sys,r_task,{totals}"


def write_rewards_csv(
    path_or_fp: str | IO[str],
    result: EvalResult,
    coeffs: CoefficientSet,
) -> None:
    def _write(fp: IO[str]) -> None:
        fp.write(rewards_csv_header(coeffs.num_agents) + "\n")
        for traj in result.trajectories:
            vec = total_reward(traj, coeffs)
            totals = ",".join(f"{t:.6f}" for t in vec.total)
            fp.write(
                f"{traj.question_id},{vec.r_intra:.6f},{vec.r_inter:.6f},"
                f"{vec.r_sys:.6f},{vec.r_task:.6f},{totals}\n"
            )

    if isinstance(path_or_fp, str):
        with open(path_or_fp, "w", encoding="utf-8") as fp:
            _write(fp)
    else:
        _write(path_or_fp)


def write_coefficients_csv(path_or_fp: str | IO[str], coeffs: CoefficientSet) -> None:
    def _write(fp: IO[str]) -> None:
        fp.write(COEFFICIENTS_CSV_HEADER + "\n")
        for i in range(coeffs.num_agents):
            fp.write(
                f"{i},{coeffs.alpha[i]:.6f},{coeffs.beta[i]:.6f},{coeffs.gamma[i]:.6f},"
                f"{coeffs.lambda_task[i]:.6f},{coeffs.eta_anchor[i]:.6f}\n"
            )

    if isinstance(path_or_fp, str):
        with open(path_or_fp, "w", encoding="utf-8") as fp:
            _write(fp)
    else:
        _write(path_or_fp)


def _write_eval_artifacts(out_dir: str, result: EvalResult, coeffs: CoefficientSet) -> None:
    write_trajectories(
        os.path.join(out_dir, "trajectories.jsonl"),
        result.trajectories,
        extras=[{"difficulty": q.difficulty} for q in result.questions],
    )
    write_profiles_csv(
        os.path.join(out_dir, "profiles.csv"),
        zip([t.question_id for t in result.trajectories], result.profiles),
    )
    write_rewards_csv(os.path.join(out_dir, "rewards.csv"), result, coeffs)


def _ensure_out(out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)


# ----------------------------------------------------------------- baseline


def run_baseline(config: ExperimentConfig, out_dir: str) -> PipelineResult:
    """Evaluate the untrained ensemble on a fresh question set."""
    _ensure_out(out_dir)
    env = DebateEnv(config.env)
    questions = env.generate_questions(config.eval_questions, "eval")
    result = evaluate_ensemble(
        env, questions, env.initial_policies(), config.metric, "baseline"
    )
    coeffs = CoefficientSet.uniform(
        config.env.num_agents,
        alpha=config.calibration.alpha_base,
        beta=config.calibration.beta_base,
        gamma=config.calibration.gamma_base,
        lambda_task=config.calibration.lambda_base,
        eta_anchor=config.calibration.eta_base,
    )
    _write_eval_artifacts(out_dir, result, coeffs)
    write_summary_csv(os.path.join(out_dir, "summary.csv"), [result.summary])
    return PipelineResult(rows=[result.summary], out_dir=out_dir)


# ------------------------------------------------------------------- training


def _calibrated_coefficients(
    config: ExperimentConfig,
    env: DebateEnv,
    warmup_questions: Sequence[SyntheticQuestion],
) -> CoefficientSet:
    """Warm-up rollouts under the untrained ensemble, then per-agent scaling."""
    policies = env.initial_policies()
    seed = env.config.seed
    trajectories = [
        env.rollout_debate(q, policies, derive_key(seed, "warmup", q.question_id))
        for q in warmup_questions
    ]
    profile = warmup_profile(trajectories, config.env.num_agents, config.metric)
    return calibrate_coefficients(profile, config.calibration)


def train_pipeline(
    config: ExperimentConfig,
    zero_component: str | None = None,
):
    """Shared warm-up -> calibrate -> train core; returns trained state pieces."""
    env = DebateEnv(config.env)
    train_questions = env.generate_questions(config.train_questions, "train")
    warmup_questions, optimisation_questions = split_warmup(
        train_questions, config.calibration.warmup_fraction
    )
    coeffs = _calibrated_coefficients(config, env, warmup_questions)
    if zero_component is not None:
        coeffs = coeffs.zeroed(zero_component)
    state, buffer = train(
        env,
        optimisation_questions,
        coeffs,
        config.clip,
        config.metric,
        seed=config.env.seed,
        replay_config=config.replay,
    )
    return env, state, buffer, coeffs


def run_udpo(
    config: ExperimentConfig,
    out_dir: str,
    zero_component: str | None = None,
) -> PipelineResult:
    """Train the ensemble and evaluate it on held-out questions.

    Writes one policy file per honest agent, the per-iteration training
    curve, the replay-buffer contents, and a two-row summary comparing the
    untrained and trained ensembles on the same held-out set.
    """
    _ensure_out(out_dir)
    env, state, buffer, coeffs = train_pipeline(config, zero_component)
    eval_questions = env.generate_questions(config.eval_questions, "eval")
    base_result = evaluate_ensemble(
        env, eval_questions, env.initial_policies(), config.metric, "baseline"
    )
    trained_result = evaluate_ensemble(
        env, eval_questions, state.policies, config.metric, "trained"
    )
    digest = config_hash(config)
    for i in env.honest_indices:
        save_policy(
            os.path.join(out_dir, f"policy_agent_{i}.txt"),
            state.policies[i],
            i,
            digest,
        )
    write_training_csv(os.path.join(out_dir, "training_metrics.csv"), state.history)
    if buffer is not None:
        buffer.dump(os.path.join(out_dir, "replay_buffer.jsonl"))
    write_coefficients_csv(os.path.join(out_dir, "coefficients.csv"), coeffs)
    _write_eval_artifacts(out_dir, trained_result, coeffs)
    rows = [base_result.summary, trained_result.summary]
    write_summary_csv(os.path.join(out_dir, "summary.csv"), rows)
    return PipelineResult(rows=rows, out_dir=out_dir)


# --------------------------------------------------------------------- attack


def run_attack(
    config: ExperimentConfig,
    out_dir: str,
    m_values: Sequence[int],
) -> PipelineResult:
    """Compare trained and untrained ensembles under compromised seats.

    Trains once on the clean environment, then re-evaluates both arms with
    the last m seats replaced by adversaries, for each requested m.
    """
    n = config.env.num_agents
    for m in m_values:
        if m < 0:
            raise ValueError(f"compromised count must be non-negative, got {m}")
        if m > n:
            raise ValueError(f"compromised count {m} exceeds the {n}-agent ensemble")
    _ensure_out(out_dir)
    clean_config = dataclasses.replace(
        config, env=dataclasses.replace(config.env, compromised_count=0)
    )
    env, state, _, _ = train_pipeline(clean_config)
    eval_questions = env.generate_questions(config.eval_questions, "eval")
    untrained = env.initial_policies()
    rows = [
        evaluate_ensemble(env, eval_questions, untrained, config.metric,
                          "untrained_clean").summary,
        evaluate_ensemble(env, eval_questions, state.policies, config.metric,
                          "trained_clean").summary,
    ]
    warnings = []
    for m in m_values:
        if 2 * m >= n:
            warnings.append(
                f"m={m} of {n} agents: no honest majority possible"
            )
        attack_env = DebateEnv(
            dataclasses.replace(clean_config.env, compromised_count=m)
        )
        seats_untrained: list[PolicyTable | None] = [None] * n
        seats_trained: list[PolicyTable | None] = [None] * n
        for i in attack_env.honest_indices:
            seats_untrained[i] = untrained[i]
            seats_trained[i] = state.policies[i]
        rows.append(
            evaluate_ensemble(attack_env, eval_questions, seats_untrained,
                              config.metric, f"untrained_m{m}").summary
        )
        rows.append(
            evaluate_ensemble(attack_env, eval_questions, seats_trained,
                              config.metric, f"trained_m{m}").summary
        )
    write_summary_csv(os.path.join(out_dir, "summary.csv"), rows)
    return PipelineResult(rows=rows, warnings=warnings, out_dir=out_dir)


# ------------------------------------------------------------------- analysis


def run_analysis(
    paths: Sequence[str],
    config: ExperimentConfig,
    out_dir: str,
) -> PipelineResult:
    """Build the statistics reports from trajectory files.

    Accepts any .jsonl in the trajectory format, including externally
    produced transcripts. Records without ground truth are excluded from
    accuracy-dependent reports with a count warning; degenerate inputs
    (too few records, or zero variance) downgrade individual reports to
    warnings instead of failing the run.
    """
    _ensure_out(out_dir)
    warnings: list[str] = []
    records: list[OutcomeRecord] = []
    skipped = 0
    for path in paths:
        for traj in read_trajectories(path):
            if traj.ground_truth is None:
                skipped += 1
                continue
            records.append(
                OutcomeRecord(
                    question_id=traj.question_id,
                    correct=ensemble_answer(traj) == traj.ground_truth,
                    profile=full_profile(traj, config.metric),
                )
            )
    if skipped:
        warnings.append(
            f"excluded {skipped} trajectories without ground truth from "
            "accuracy-dependent reports"
        )
    if not records:
        warnings.append("no usable trajectories: all reports skipped")
        return PipelineResult(rows=[], warnings=warnings, out_dir=out_dir)

    try:
        report = separation_report(records)
        write_separation_csv(os.path.join(out_dir, "separation.csv"), report)
    except ValueError as exc:
        warnings.append(f"separation report skipped: {exc}")
        with open(os.path.join(out_dir, "separation.csv"), "w", encoding="utf-8") as fp:
            fp.write(SEPARATION_CSV_HEADER + "\n")

    try:
        labels, matrix = correlation_matrix(records)
        write_correlation_csv(os.path.join(out_dir, "correlation.csv"), labels, matrix)
    except ValueError as exc:
        warnings.append(f"correlation matrix skipped: {exc}")

    curve = selective_prediction_curve(records, config.k_grid)
    write_selective_csv(os.path.join(out_dir, "selective.csv"), curve)
    strata = stratify_by_uncertainty(records, boundaries=config.strata_bins)
    write_strata_csv(os.path.join(out_dir, "strata.csv"), strata)

    accuracy = float(np.mean([r.correct for r in records]))
    row = SummaryRow(
        label="analysis",
        questions=len(records),
        accuracy=accuracy,
        mean_u_intra=float(np.mean([r.profile.u_intra for r in records])),
        mean_u_inter=float(np.mean([r.profile.u_inter for r in records])),
        mean_u_sys=float(np.mean([r.profile.u_sys for r in records])),
    )
    return PipelineResult(rows=[row], warnings=warnings, out_dir=out_dir)


# ---------------------------------------------------------------------- sweep


SWEEP_AXES = ("agents", "rounds", "compromised")


def run_sweep(
    config: ExperimentConfig,
    out_dir: str,
    axis: str,
    values: Sequence[int],
) -> PipelineResult:
    """Baseline evaluation per axis value, one summary row each."""
    if axis not in SWEEP_AXES:
        raise ValueError(f"sweep axis must be one of {SWEEP_AXES}, got {axis!r}")
    if not values:
        raise ValueError("sweep needs at least one axis value")
    _ensure_out(out_dir)
    rows = []
    warnings: list[str] = []
    for value in values:
        if axis == "agents":
            env_config = dataclasses.replace(config.env, num_agents=value)
        elif axis == "rounds":
            env_config = dataclasses.replace(config.env, rounds=value)
        else:
            env_config = dataclasses.replace(config.env, compromised_count=value)
            if 2 * value >= config.env.num_agents:
                warnings.append(
                    f"m={value} of {config.env.num_agents} agents: "
                    "no honest majority possible"
                )
        env = DebateEnv(env_config)
        questions = env.generate_questions(config.eval_questions, "eval")
        result = evaluate_ensemble(
            env, questions, env.initial_policies(), config.metric, f"{axis}={value}"
        )
        rows.append(result.summary)
    write_summary_csv(os.path.join(out_dir, "summary.csv"), rows)
    return PipelineResult(rows=rows, warnings=warnings, out_dir=out_dir)
