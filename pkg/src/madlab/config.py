"""Experiment configuration files: strict, block-structured, hashable.

One text file holds every knob, grouped into [environment], [metric],
[udpo], [replay], [analysis], and [output] sections whose keys map 1:1 onto
the runtime dataclasses. Unknown sections or keys are rejected with their
path so typos in sweep automation fail fast. A canonical serialization
backs a short stable hash that artifact headers embed.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field

from madlab.calibration import CalibrationConfig
from madlab.metrics import MetricConfig
from madlab.optim import ClipConfig
from madlab.policy import EnvConfig
from madlab.replay import ReplayConfig


class ConfigError(Exception):
    """Invalid experiment configuration: bad section, key, type, or value."""


DEFAULT_K_GRID = (10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0, 100.0)
DEFAULT_STRATA_BINS = (0.2, 0.4, 0.6, 0.8)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a pipeline run needs, short of the output paths on the CLI."""

    env: EnvConfig = field(default_factory=EnvConfig)
    metric: MetricConfig = field(default_factory=MetricConfig)
    clip: ClipConfig = field(default_factory=ClipConfig)
    calibration: CalibrationConfig = field(default_factory=CalibrationConfig)
    replay: ReplayConfig = field(default_factory=ReplayConfig)
    train_questions: int = 500
    eval_questions: int = 200
    k_grid: tuple[float, ...] = DEFAULT_K_GRID
    strata_bins: tuple[float, ...] = DEFAULT_STRATA_BINS
    output_dir: str = "out"

    def __post_init__(self) -> None:
        if self.train_questions < 2:
            raise ValueError("train_questions must be at least 2")
        if self.eval_questions < 1:
            raise ValueError("eval_questions must be at least 1")
        if not self.k_grid:
            raise ValueError("k_grid must be non-empty")
        for k in self.k_grid:
            if not 0.0 < k <= 100.0:
                raise ValueError(f"k_grid entries must be in (0, 100], got {k}")


def _parse_bool(value: str) -> bool:
    lowered = value.strip().lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {value!r}")


def _parse_float_list(value: str) -> tuple[float, ...]:
    parts = [p.strip() for p in value.split(",") if p.strip()]
    if not parts:
        raise ValueError("expected a comma-separated list of numbers")
    return tuple(float(p) for p in parts)


_ENV_KEYS = {
    "num_agents": int,
    "rounds": int,
    "answer_space_size": int,
    "difficulty_bins": int,
    "compromised_count": int,
    "adversarial_target_policy": str,
    "seed": int,
    "skills": _parse_float_list,
    "difficulty": str,
    "train_questions": int,
    "eval_questions": int,
}
_METRIC_KEYS = {"lambda_mix": float}
_UDPO_KEYS = {
    "epsilon": float,
    "learn_rate": float,
    "batch_size": int,
    "iterations": int,
    "ref_refresh_period": int,
    "kappa": float,
    "alpha_base": float,
    "beta_base": float,
    "gamma_base": float,
    "lambda_base": float,
    "eta_base": float,
    "warmup_fraction": float,
}
_REPLAY_KEYS = {
    "enabled": _parse_bool,
    "capacity": int,
    "priority_exponent": float,
    "fraction": float,
    "refresh_period": int,
}
_ANALYSIS_KEYS = {"k_grid": _parse_float_list, "strata_bins": _parse_float_list}
_OUTPUT_KEYS = {"directory": str}

_SECTIONS = {
    "environment": _ENV_KEYS,
    "metric": _METRIC_KEYS,
    "udpo": _UDPO_KEYS,
    "replay": _REPLAY_KEYS,
    "analysis": _ANALYSIS_KEYS,
    "output": _OUTPUT_KEYS,
}


def _convert_section(section: str, raw: dict[str, str]) -> dict[str, object]:
    table = _SECTIONS[section]
    out: dict[str, object] = {}
    for key, value in raw.items():
        if key not in table:
            raise ConfigError(
                f"[{section}] unknown key {key!r}; known keys: {sorted(table)}"
            )
        try:
            out[key] = table[key](value)
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key}: {exc}")
    return out


def parse_config(text: str) -> ExperimentConfig:
    """Parse a config file's text; omitted keys keep their defaults."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}")
    if parser.defaults():
        raise ConfigError("unknown section [DEFAULT]")
    values: dict[str, dict[str, object]] = {}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(
                f"unknown section [{section}]; known sections: {sorted(_SECTIONS)}"
            )
        values[section] = _convert_section(section, dict(parser.items(section)))

    env_raw = values.get("environment", {})
    train_questions = env_raw.pop("train_questions", 500)
    eval_questions = env_raw.pop("eval_questions", 200)
    udpo_raw = values.get("udpo", {})
    clip_raw = {k: v for k, v in udpo_raw.items() if k in
                ("epsilon", "learn_rate", "batch_size", "iterations", "ref_refresh_period")}
    calib_raw = {k: v for k, v in udpo_raw.items() if k not in clip_raw}
    analysis_raw = values.get("analysis", {})
    output_raw = values.get("output", {})

    def build(section, factory, kwargs):
        try:
            return factory(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[{section}] {exc}")

    try:
        return ExperimentConfig(
            env=build("environment", EnvConfig, env_raw),
            metric=build("metric", MetricConfig, values.get("metric", {})),
            clip=build("udpo", ClipConfig, clip_raw),
            calibration=build("udpo", CalibrationConfig, calib_raw),
            replay=build("replay", ReplayConfig, values.get("replay", {})),
            train_questions=train_questions,
            eval_questions=eval_questions,
            k_grid=analysis_raw.get("k_grid", DEFAULT_K_GRID),
            strata_bins=analysis_raw.get("strata_bins", DEFAULT_STRATA_BINS),
            output_dir=output_raw.get("directory", "out"),
        )
    except ValueError as exc:
        raise ConfigError(str(exc))


def load_config(path: str) -> ExperimentConfig:
    """Read and parse a config file; I/O problems surface as ConfigError."""
    try:
        with open(path, "r", encoding="utf-8") as fp:
            text = fp.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}")
    return parse_config(text)


def default_config() -> ExperimentConfig:
    return ExperimentConfig()


def _fmt(value: object) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def canonical_text(config: ExperimentConfig) -> str:
    """Deterministic full rendering of every knob; input to the config hash."""
    env, clip, cal, rep = config.env, config.clip, config.calibration, config.replay
    lines = [
        "[environment]",
        f"num_agents = {env.num_agents}",
        f"rounds = {env.rounds}",
        f"answer_space_size = {env.answer_space_size}",
        f"difficulty_bins = {env.difficulty_bins}",
        f"compromised_count = {env.compromised_count}",
        f"adversarial_target_policy = {env.adversarial_target_policy}",
        f"seed = {env.seed}",
        f"skills = {_fmt(env.skills)}",
        f"difficulty = {env.difficulty}",
        f"train_questions = {config.train_questions}",
        f"eval_questions = {config.eval_questions}",
        "",
        "[metric]",
        f"lambda_mix = {_fmt(config.metric.lambda_mix)}",
        "",
        "[udpo]",
        f"epsilon = {_fmt(clip.epsilon)}",
        f"learn_rate = {_fmt(clip.learn_rate)}",
        f"batch_size = {clip.batch_size}",
        f"iterations = {clip.iterations}",
        f"ref_refresh_period = {clip.ref_refresh_period}",
        f"kappa = {_fmt(cal.kappa)}",
        f"alpha_base = {_fmt(cal.alpha_base)}",
        f"beta_base = {_fmt(cal.beta_base)}",
        f"gamma_base = {_fmt(cal.gamma_base)}",
        f"lambda_base = {_fmt(cal.lambda_base)}",
        f"eta_base = {_fmt(cal.eta_base)}",
        f"warmup_fraction = {_fmt(cal.warmup_fraction)}",
        "",
        "[replay]",
        f"enabled = {_fmt(rep.enabled)}",
        f"capacity = {rep.capacity}",
        f"priority_exponent = {_fmt(rep.priority_exponent)}",
        f"fraction = {_fmt(rep.fraction)}",
        f"refresh_period = {rep.refresh_period}",
        "",
        "[analysis]",
        f"k_grid = {_fmt(config.k_grid)}",
        f"strata_bins = {_fmt(config.strata_bins)}",
        "",
        "[output]",
        f"directory = {config.output_dir}",
        "",
    ]
    return "\n".join(lines)


def config_hash(config: ExperimentConfig) -> str:
    """16-hex-character digest of the canonical text."""
    digest = hashlib.blake2b(canonical_text(config).encode("utf-8"), digest_size=8)
    return digest.hexdigest()
