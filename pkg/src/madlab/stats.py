"""Statistical analyses over per-question debate outcomes.

Failure/success separation (Welch t-test and pooled-SD Cohen's d),
Pearson correlation with significance, selective prediction curves
(retain the lowest-uncertainty k%), and uncertainty stratification.

The t-distribution CDF is computed here via the regularized incomplete
beta function (Lentz continued fraction, absolute error < 1e-8) so the
package needs no statistics dependency.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from typing import IO, Sequence

from madlab.metrics import UncertaintyProfile

METRIC_FIELDS = {
    "U_intra": "u_intra",
    "U_inter": "u_inter",
    "U_sys": "u_sys",
}

_BETA_EPS = 1e-15
_BETA_TINY = 1e-300
_BETA_MAX_ITER = 300


def _beta_continued_fraction(a: float, b: float, x: float) -> float:
    """Lentz evaluation of the incomplete-beta continued fraction."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _BETA_TINY:
        d = _BETA_TINY
    d = 1.0 / d
    h = d
    for m in range(1, _BETA_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETA_TINY:
            d = _BETA_TINY
        c = 1.0 + aa / c
        if abs(c) < _BETA_TINY:
            c = _BETA_TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _BETA_TINY:
            d = _BETA_TINY
        c = 1.0 + aa / c
        if abs(c) < _BETA_TINY:
            c = _BETA_TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETA_EPS:
            return h
    raise ArithmeticError(f"incomplete beta did not converge for a={a}, b={b}, x={x}")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if a <= 0.0 or b <= 0.0:
        raise ValueError("incomplete beta requires positive shape parameters")
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must be in [0, 1], got {x}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    log_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    # the continued fraction converges fast only on one side of the mean
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_continued_fraction(a, b, x) / a
    return 1.0 - front * _beta_continued_fraction(b, a, 1.0 - x) / b


def student_t_p_value(t: float, df: float) -> float:
    """Two-sided p-value of a t statistic with df degrees of freedom."""
    if df <= 0.0:
        raise ValueError(f"degrees of freedom must be positive, got {df}")
    if math.isinf(t):
        return 0.0
    x = df / (df + t * t)
    p = regularized_incomplete_beta(df / 2.0, 0.5, x)
    return min(max(p, 0.0), 1.0)


def pearson_r(x: Sequence[float], y: Sequence[float]) -> float:
    """Pearson correlation; rejects unequal lengths and zero-variance input."""
    if len(x) != len(y):
        raise ValueError(f"length mismatch: {len(x)} vs {len(y)}")
    n = len(x)
    if n < 2:
        raise ValueError("need at least 2 paired samples")
    mean_x = sum(x) / n
    mean_y = sum(y) / n
    dx = [v - mean_x for v in x]
    dy = [v - mean_y for v in y]
    ss_x = sum(v * v for v in dx)
    ss_y = sum(v * v for v in dy)
    if ss_x == 0.0 or ss_y == 0.0:
        raise ValueError("degenerate sample: zero variance")
    r = sum(a * b for a, b in zip(dx, dy)) / math.sqrt(ss_x * ss_y)
    return min(max(r, -1.0), 1.0)


def pearson_test(x: Sequence[float], y: Sequence[float]) -> tuple[float, float, float]:
    """(r, t, two-sided p) under the no-correlation null with n-2 df."""
    r = pearson_r(x, y)
    n = len(x)
    if n < 3:
        raise ValueError("significance needs at least 3 paired samples")
    if 1.0 - r * r <= 0.0:
        return r, math.copysign(math.inf, r), 0.0
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    return r, t, student_t_p_value(t, n - 2)


def cohens_d(group_a: Sequence[float], group_b: Sequence[float]) -> float:
    """(mean_a - mean_b) / pooled SD, sample variances with n-1 denominators."""
    n_a, n_b = len(group_a), len(group_b)
    if n_a < 2 or n_b < 2:
        raise ValueError("both groups need at least 2 samples")
    mean_a = sum(group_a) / n_a
    mean_b = sum(group_b) / n_b
    var_a = sum((v - mean_a) ** 2 for v in group_a) / (n_a - 1)
    var_b = sum((v - mean_b) ** 2 for v in group_b) / (n_b - 1)
    pooled = math.sqrt(((n_a - 1) * var_a + (n_b - 1) * var_b) / (n_a + n_b - 2))
    if pooled == 0.0:
        raise ValueError("degenerate groups: pooled standard deviation is zero")
    return (mean_a - mean_b) / pooled


def welch_t_test(
    group_a: Sequence[float], group_b: Sequence[float]
) -> tuple[float, float]:
    """Welch unequal-variance t-test; returns (t, two-sided p)."""
    n_a, n_b = len(group_a), len(group_b)
    if n_a < 2 or n_b < 2:
        raise ValueError("both groups need at least 2 samples")
    mean_a = sum(group_a) / n_a
    mean_b = sum(group_b) / n_b
    var_a = sum((v - mean_a) ** 2 for v in group_a) / (n_a - 1)
    var_b = sum((v - mean_b) ** 2 for v in group_b) / (n_b - 1)
    se_a, se_b = var_a / n_a, var_b / n_b
    se2 = se_a + se_b
    if se2 == 0.0:
        raise ValueError("degenerate variance in both groups")
    t = (mean_a - mean_b) / math.sqrt(se2)
    df = se2 * se2 / (
        (se_a * se_a) / (n_a - 1) + (se_b * se_b) / (n_b - 1)
    )
    return t, student_t_p_value(t, df)


@dataclass(frozen=True)
class OutcomeRecord:
    """Per-question evaluation outcome: correctness plus the uncertainty profile."""

    question_id: str
    correct: bool
    profile: UncertaintyProfile

    def metric(self, name: str) -> float:
        try:
            return getattr(self.profile, METRIC_FIELDS[name])
        except KeyError:
            raise ValueError(
                f"unknown metric {name!r}; expected one of {sorted(METRIC_FIELDS)}"
            )


@dataclass(frozen=True)
class MetricSeparation:
    """Failure-vs-success contrast of one uncertainty metric."""

    metric: str
    mean_fail: float
    mean_success: float
    cohens_d: float
    t_statistic: float
    p_value: float


@dataclass(frozen=True)
class SeparationReport:
    rows: tuple[MetricSeparation, ...]

    def for_metric(self, name: str) -> MetricSeparation:
        for row in self.rows:
            if row.metric == name:
                return row
        raise ValueError(f"no separation row for metric {name!r}")


def separation_report(records: Sequence[OutcomeRecord]) -> SeparationReport:
    """Contrast each uncertainty metric between failed and successful questions."""
    fails = [r for r in records if not r.correct]
    succs = [r for r in records if r.correct]
    if len(fails) < 2 or len(succs) < 2:
        raise ValueError(
            "no contrast: need at least 2 records in each outcome class, got "
            f"{len(fails)} failures / {len(succs)} successes"
        )
    rows = []
    for name in METRIC_FIELDS:
        f_vals = [r.metric(name) for r in fails]
        s_vals = [r.metric(name) for r in succs]
        t, p = welch_t_test(f_vals, s_vals)
        rows.append(
            MetricSeparation(
                metric=name,
                mean_fail=sum(f_vals) / len(f_vals),
                mean_success=sum(s_vals) / len(s_vals),
                cohens_d=cohens_d(f_vals, s_vals),
                t_statistic=t,
                p_value=p,
            )
        )
    return SeparationReport(rows=tuple(rows))


def selective_prediction_curve(
    records: Sequence[OutcomeRecord],
    k_grid: Sequence[float],
    metric: str = "U_sys",
) -> list[tuple[float, float, int]]:
    """Accuracy when only the lowest-uncertainty k% of questions are retained.

    Sorts ascending by the chosen metric (ties break by question_id), keeps
    ceil(k*n/100) records per k, and reports (k, retained accuracy, n kept).
    k = 100 reproduces overall accuracy.
    """
    if not records:
        raise ValueError("selective prediction needs at least one record")
    for k in k_grid:
        if not 0.0 < k <= 100.0:
            raise ValueError(f"retention percentage must be in (0, 100], got {k}")
    ranked = sorted(records, key=lambda r: (r.metric(metric), r.question_id))
    n = len(ranked)
    curve = []
    for k in k_grid:
        kept = ranked[: math.ceil(k * n / 100.0)]
        accuracy = sum(r.correct for r in kept) / len(kept)
        curve.append((float(k), accuracy, len(kept)))
    return curve


@dataclass(frozen=True)
class StrataBin:
    """One uncertainty band: [lo, hi) except the top band, which includes hi."""

    lo: float
    hi: float
    count: int
    accuracy: float | None


def stratify_by_uncertainty(
    records: Sequence[OutcomeRecord],
    metric: str = "U_sys",
    boundaries: Sequence[float] = (0.2, 0.4, 0.6, 0.8),
) -> list[StrataBin]:
    """Bucket records into uncertainty bands and report per-band accuracy.

    Default boundaries carve [0, 1] into five bands. Empty bands are kept
    with count 0 and accuracy None.
    """
    if not records:
        raise ValueError("stratification needs at least one record")
    bounds = list(boundaries)
    if not bounds or any(b <= a for a, b in zip(bounds, bounds[1:])):
        raise ValueError("boundaries must be strictly increasing and non-empty")
    if bounds[0] <= 0.0 or bounds[-1] >= 1.0:
        raise ValueError("boundaries must lie strictly inside (0, 1)")
    edges = [0.0] + bounds + [1.0]
    counts = [0] * (len(edges) - 1)
    correct = [0] * (len(edges) - 1)
    for r in records:
        idx = bisect_right(bounds, r.metric(metric))
        counts[idx] += 1
        correct[idx] += int(r.correct)
    return [
        StrataBin(
            lo=edges[i],
            hi=edges[i + 1],
            count=counts[i],
            accuracy=(correct[i] / counts[i]) if counts[i] else None,
        )
        for i in range(len(counts))
    ]


def correlation_matrix(
    records: Sequence[OutcomeRecord],
) -> tuple[tuple[str, ...], list[list[float]]]:
    """Symmetric Pearson matrix over the three metrics plus correctness."""
    labels = tuple(METRIC_FIELDS) + ("accuracy",)
    series = [[r.metric(name) for r in records] for name in METRIC_FIELDS]
    series.append([float(r.correct) for r in records])
    size = len(series)
    matrix = [[1.0] * size for _ in range(size)]
    for i in range(size):
        for j in range(i + 1, size):
            r = pearson_r(series[i], series[j])
            matrix[i][j] = r
            matrix[j][i] = r
    return labels, matrix


SEPARATION_CSV_HEADER = "metric,mean_fail,mean_success,cohens_d,t_statistic,p_value"
SELECTIVE_CSV_HEADER = "k_percent,accuracy,n_retained"
STRATA_CSV_HEADER = "bin_lo,bin_hi,count,accuracy"


def _with_fp(path_or_fp: str | IO[str], writer) -> None:
    if isinstance(path_or_fp, str):
        with open(path_or_fp, "w", encoding="utf-8") as fp:
            writer(fp)
    else:
        writer(path_or_fp)


def write_separation_csv(path_or_fp: str | IO[str], report: SeparationReport) -> None:
    def _write(fp: IO[str]) -> None:
        fp.write(SEPARATION_CSV_HEADER + "\n")
        for row in report.rows:
            fp.write(
                f"{row.metric},{row.mean_fail:.6f},{row.mean_success:.6f},"
                f"{row.cohens_d:.6f},{row.t_statistic:.6f},{row.p_value:.6e}\n"
            )

    _with_fp(path_or_fp, _write)


def write_correlation_csv(
    path_or_fp: str | IO[str],
    labels: Sequence[str],
    matrix: Sequence[Sequence[float]],
) -> None:
    def _write(fp: IO[str]) -> None:
        fp.write("metric," + ",".join(labels) + "\n")
        for label, row in zip(labels, matrix):
            fp.write(label + "," + ",".join(f"{v:.6f}" for v in row) + "\n")

    _with_fp(path_or_fp, _write)


def write_selective_csv(
    path_or_fp: str | IO[str], curve: Sequence[tuple[float, float, int]]
) -> None:
    def _write(fp: IO[str]) -> None:
        fp.write(SELECTIVE_CSV_HEADER + "\n")
        for k, accuracy, n in curve:
            fp.write(f"{k:.6f},{accuracy:.6f},{n}\n")

    _with_fp(path_or_fp, _write)


def write_strata_csv(path_or_fp: str | IO[str], strata: Sequence[StrataBin]) -> None:
    def _write(fp: IO[str]) -> None:
        fp.write(STRATA_CSV_HEADER + "\n")
        for b in strata:
            acc = "nan" if b.accuracy is None else f"{b.accuracy:.6f}"
            fp.write(f"{b.lo:.6f},{b.hi:.6f},{b.count},{acc}\n")

    _with_fp(path_or_fp, _write)
