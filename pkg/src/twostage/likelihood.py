"""Two-stage normal-error likelihood, score and truncated MLE.

The data enter only through the stage means, so the kernels below take
``(ybar1, ybar2)`` and broadcast over replications. The sample-level
functions wrap them for a single :class:`TwoStageSample`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .models import MeanModel
from .optimize import grid_golden_max

MLE_GRID = 512
MLE_TOL = 1e-8


@dataclass(frozen=True)
class TwoStageSample:
    """Per-subject responses of both stages and the realised doses."""

    x1: float
    x2: float
    y1: np.ndarray
    y2: np.ndarray
    sigma: float
    ybar1: float = field(init=False)
    ybar2: float = field(init=False)

    def __post_init__(self) -> None:
        y1 = np.asarray(self.y1, dtype=float).ravel()
        y2 = np.asarray(self.y2, dtype=float).ravel()
        if y1.size < 1 or y2.size < 1:
            raise ValueError("each stage needs at least one response")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        object.__setattr__(self, "y1", y1)
        object.__setattr__(self, "y2", y2)
        object.__setattr__(self, "ybar1", float(np.mean(y1)))
        object.__setattr__(self, "ybar2", float(np.mean(y2)))

    @property
    def n1(self) -> int:
        return self.y1.size

    @property
    def n2(self) -> int:
        return self.y2.size

    @property
    def n(self) -> int:
        return self.n1 + self.n2


# ---------------------------------------------------------------------------
# Stage-mean kernels (broadcast over replications)
# ---------------------------------------------------------------------------

def loglik_means(model, x1, x2, n1, n2, ybar1, ybar2, sigma, theta):
    """Log-likelihood up to additive constants."""
    r1 = ybar1 - model.eta(x1, theta)
    r2 = ybar2 - model.eta(x2, theta)
    return -(n1 * r1 * r1 + n2 * r2 * r2) / (2.0 * sigma * sigma)


def score_means(model, x1, x2, n1, n2, ybar1, ybar2, sigma, theta):
    r1 = ybar1 - model.eta(x1, theta)
    r2 = ybar2 - model.eta(x2, theta)
    return (n1 * r1 * model.deta(x1, theta) + n2 * r2 * model.deta(x2, theta)) / sigma**2


def mle_means(model, x1, x2, n1, n2, ybar1, ybar2, sigma):
    """Global maximiser of the likelihood over ``[theta_lo, theta_hi]``.

    ``x1``, ``x2``, ``ybar1`` and ``ybar2`` may be arrays of broadcastable
    shape (one entry per replication). The likelihood can be bimodal in ``theta``, so a 512-point
    grid locates the best cell before golden-section refinement.
    """
    cols = [np.asarray(v, dtype=float) for v in (x1, x2, ybar1, ybar2)]
    shape = np.broadcast_shapes(*(v.shape for v in cols))
    x1b, x2b, y1b, y2b = (np.broadcast_to(v, shape)[..., None] for v in cols)

    def objective(theta):
        return loglik_means(model, x1b, x2b, n1, n2, y1b, y2b, sigma, theta)

    out = grid_golden_max(objective, model.theta_lo, model.theta_hi, shape, MLE_GRID, MLE_TOL)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# Sample-level API
# ---------------------------------------------------------------------------

def _means(sample: TwoStageSample):
    return sample.x1, sample.x2, sample.n1, sample.n2, sample.ybar1, sample.ybar2, sample.sigma


def log_likelihood(model: MeanModel, sample: TwoStageSample, theta: float) -> float:
    """Log-likelihood with constant terms dropped."""
    return float(loglik_means(model, *_means(sample), theta))


def score(model: MeanModel, sample: TwoStageSample, theta: float) -> float:
    """Derivative of :func:`log_likelihood` in ``theta``."""
    return float(score_means(model, *_means(sample), theta))


def full_mle(model: MeanModel, sample: TwoStageSample) -> float:
    """MLE from both stages, truncated to ``[theta_lo, theta_hi]``."""
    return float(mle_means(model, *_means(sample)))


def is_boundary(model: MeanModel, theta_hat) -> np.ndarray | bool:
    th = np.asarray(theta_hat)
    out = (th <= model.theta_lo) | (th >= model.theta_hi)
    return out if out.ndim else bool(out)


__all__ = [
    "TwoStageSample",
    "log_likelihood",
    "score",
    "full_mle",
    "is_boundary",
    "loglik_means",
    "score_means",
    "mle_means",
    "MLE_GRID",
]
