"""Random information measures for the two-stage design.

Besides the Fisher information (which lives in :mod:`twostage.design` because
it integrates over the adaptive dose), four data-dependent norms are
available: the observed information, the subject-wise and stage-wise
incremental observed information, and the incremental expected information
(the subject-wise and stage-wise versions coincide).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .likelihood import TwoStageSample
from .models import MeanModel


class InfoMeasureKind(str, enum.Enum):
    EXPECTED_FISHER = "expected_fisher"
    OBSERVED = "observed"
    INCREMENTAL_OBSERVED_SUBJECT = "incremental_observed_subject"
    INCREMENTAL_OBSERVED_STAGE = "incremental_observed_stage"
    INCREMENTAL_EXPECTED = "incremental_expected"

    def __str__(self) -> str:
        return self.value


ALL_KINDS = tuple(InfoMeasureKind)
# kinds whose normed MLE has a standard normal limit, plus the Fisher benchmark
TABLE_KINDS = (
    InfoMeasureKind.EXPECTED_FISHER,
    InfoMeasureKind.OBSERVED,
    InfoMeasureKind.INCREMENTAL_OBSERVED_SUBJECT,
    InfoMeasureKind.INCREMENTAL_EXPECTED,
)
RANDOM_KINDS = TABLE_KINDS[1:]
NONNEGATIVE_KINDS = (
    InfoMeasureKind.INCREMENTAL_OBSERVED_SUBJECT,
    InfoMeasureKind.INCREMENTAL_OBSERVED_STAGE,
    InfoMeasureKind.INCREMENTAL_EXPECTED,
)


@dataclass(frozen=True)
class LimitScale:
    """Limit ``deta(x2, theta)**2 / sigma**2`` of the random norms divided by n."""

    u_inv_sq: float
    degenerate: bool


# ---------------------------------------------------------------------------
# Kernels on stage summaries; broadcast over replications.
# ``ss1``/``ss2`` are the within-stage centred sums of squares.
# ---------------------------------------------------------------------------

def observed_info_means(model, x1, x2, n1, n2, ybar1, ybar2, sigma, theta):
    d1 = model.deta(x1, theta)
    d2 = model.deta(x2, theta)
    r1 = ybar1 - model.eta(x1, theta)
    r2 = ybar2 - model.eta(x2, theta)
    s2 = sigma * sigma
    return (
        n1 * d1 * d1 / s2
        - n1 * r1 * model.ddeta(x1, theta) / s2
        + n2 * d2 * d2 / s2
        - n2 * r2 * model.ddeta(x2, theta) / s2
    )


def incremental_expected_means(model, x1, x2, n1, n2, sigma, theta):
    d1 = model.deta(x1, theta)
    d2 = model.deta(x2, theta)
    return (n1 * d1 * d1 + n2 * d2 * d2) / (sigma * sigma)


def incremental_observed_stage_means(model, x1, x2, n1, n2, ybar1, ybar2, sigma, theta):
    d1 = model.deta(x1, theta)
    d2 = model.deta(x2, theta)
    r1 = ybar1 - model.eta(x1, theta)
    r2 = ybar2 - model.eta(x2, theta)
    s4 = sigma**4
    return (n1 * n1 * r1 * r1 * d1 * d1 + n2 * n2 * r2 * r2 * d2 * d2) / s4


def incremental_observed_subject_stats(model, x1, x2, n1, n2, ybar1, ybar2, ss1, ss2, sigma, theta):
    """Subject-wise incremental observed information from stage summaries.

    Uses ``sum_i (y_i - eta)^2 = ss + n (ybar - eta)^2`` for each stage.
    """
    d1 = model.deta(x1, theta)
    d2 = model.deta(x2, theta)
    r1 = ybar1 - model.eta(x1, theta)
    r2 = ybar2 - model.eta(x2, theta)
    q1 = ss1 + n1 * r1 * r1
    q2 = ss2 + n2 * r2 * r2
    return (q1 * d1 * d1 + q2 * d2 * d2) / sigma**4


# ---------------------------------------------------------------------------
# Sample-level API
# ---------------------------------------------------------------------------

def observed_info(model: MeanModel, sample: TwoStageSample, theta: float) -> float:
    """Negative derivative of the score; may be negative in small samples."""
    s = sample
    return float(
        observed_info_means(model, s.x1, s.x2, s.n1, s.n2, s.ybar1, s.ybar2, s.sigma, theta)
    )


def subject_increments(model: MeanModel, sample: TwoStageSample, theta: float) -> np.ndarray:
    """Per-subject score increments, stage 1 followed by stage 2."""
    s = sample
    c1 = model.deta(s.x1, theta) / s.sigma**2
    c2 = model.deta(s.x2, theta) / s.sigma**2
    return np.concatenate(
        [(s.y1 - model.eta(s.x1, theta)) * c1, (s.y2 - model.eta(s.x2, theta)) * c2]
    )


def stage_increments(model: MeanModel, sample: TwoStageSample, theta: float) -> np.ndarray:
    s = sample
    return np.array(
        [
            s.n1 * (s.ybar1 - model.eta(s.x1, theta)) * model.deta(s.x1, theta) / s.sigma**2,
            s.n2 * (s.ybar2 - model.eta(s.x2, theta)) * model.deta(s.x2, theta) / s.sigma**2,
        ]
    )


def incremental_observed_subject(model: MeanModel, sample: TwoStageSample, theta: float) -> float:
    """Sum of squared per-subject score increments (pairwise summation)."""
    inc = subject_increments(model, sample, theta)
    return float(np.sum(inc * inc))


def incremental_observed_stage(model: MeanModel, sample: TwoStageSample, theta: float) -> float:
    """Sum of the two squared stage-wise score increments."""
    inc = stage_increments(model, sample, theta)
    return float(inc @ inc)


def incremental_expected_info(model: MeanModel, sample: TwoStageSample, theta: float) -> float:
    """Sum of conditional variances of the score increments.

    The subject-wise and stage-wise decompositions give the same value.
    """
    s = sample
    return float(incremental_expected_means(model, s.x1, s.x2, s.n1, s.n2, s.sigma, theta))


def incremental_expected_decompositions(
    model: MeanModel, sample: TwoStageSample, theta: float
) -> tuple[float, float]:
    """Incremental expected information via the subject and stage routes.

    Subject route: each response contributes ``deta^2 / sigma^2`` (the
    conditional variance of one increment). Stage route: stage ``k``
    contributes ``n_k^2 * deta^2 / sigma^4 * Var(ybar_k) = n_k deta^2 / sigma^2``.
    """
    s = sample
    v1 = model.deta(s.x1, theta) ** 2 / s.sigma**2
    v2 = model.deta(s.x2, theta) ** 2 / s.sigma**2
    subject = float(np.sum(np.concatenate([np.full(s.n1, v1), np.full(s.n2, v2)])))
    var_scale = s.sigma**2 / s.sigma**4
    stage = float(
        s.n1**2 * model.deta(s.x1, theta) ** 2 * var_scale / s.n1
        + s.n2**2 * model.deta(s.x2, theta) ** 2 * var_scale / s.n2
    )
    return subject, stage


def limit_scale(model: MeanModel, x2: float, theta: float, sigma: float) -> LimitScale:
    """``deta(x2, theta)**2 / sigma**2``; flagged degenerate when ``deta`` is 0."""
    d = float(model.deta(x2, theta))
    return LimitScale(u_inv_sq=d * d / sigma**2, degenerate=d == 0.0)


def info_measure(
    kind: InfoMeasureKind, model: MeanModel, sample: TwoStageSample, theta: float
) -> float:
    """Dispatch to one of the four sample-based measures."""
    fn = {
        InfoMeasureKind.OBSERVED: observed_info,
        InfoMeasureKind.INCREMENTAL_OBSERVED_SUBJECT: incremental_observed_subject,
        InfoMeasureKind.INCREMENTAL_OBSERVED_STAGE: incremental_observed_stage,
        InfoMeasureKind.INCREMENTAL_EXPECTED: incremental_expected_info,
    }.get(InfoMeasureKind(kind))
    if fn is None:
        raise ValueError("the Fisher information depends on the design; use twostage.design")
    return fn(model, sample, theta)
