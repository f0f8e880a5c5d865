"""Adaptive design: second-stage dose rule, design Fisher information, n1*.

The Fisher information of the adaptive design averages the second-stage
contribution ``deta(x2_hat, theta)**2`` over the law of the stage-1 mean,
``ybar1 ~ N(eta(x1, theta), sigma**2 / n1)``. The map ``ybar1 -> x2_hat`` is
monotone and piecewise smooth; its breakpoints (where the stage-1 MLE hits a
parameter bound or the optimal dose hits a or b) split the real line into
pieces on which ``x2_hat`` is either constant (exact normal mass) or smooth
(Gauss-Legendre quadrature).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Union

import numpy as np
from scipy.special import ndtr

from .models import DoseInterval, MeanModel

QUAD_NODES = 201
QUAD_RTOL = 1e-6
# half-width of the quadrature window, in stage-1 standard errors
WINDOW_SD = 12.0


class QuadratureError(RuntimeError):
    """Design information quadrature missed its tolerance."""


@dataclass(frozen=True)
class DesignConfig:
    """Settings of the two-stage adaptive design.

    ``n1`` is a positive integer or the string ``"optimal"`` (resolved with
    :func:`optimal_n1` at ``theta_true``).
    """

    x1: float
    interval: DoseInterval
    n1: Union[int, str]
    n: int
    sigma: float
    theta_true: float

    def __post_init__(self) -> None:
        if isinstance(self.n1, str):
            if self.n1 != "optimal":
                raise ValueError(f"n1 must be an integer or 'optimal', got {self.n1!r}")
        elif not 1 <= self.n1:
            raise ValueError("n1 must be >= 1")
        elif not self.n1 < self.n:
            raise ValueError("n1 must be < n")
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not self.interval.a <= self.x1 <= self.interval.b:
            raise ValueError("x1 must lie in [a, b]")

    def with_n1(self, n1: int) -> "DesignConfig":
        return DesignConfig(self.x1, self.interval, n1, self.n, self.sigma, self.theta_true)


@dataclass(frozen=True)
class FisherBreakdown:
    """Design Fisher information and how the second-stage dose splits.

    ``total`` is ``n`` times the average information. ``boundary_a_mass`` and
    ``boundary_b_mass`` are the probabilities that ``x2_hat`` equals ``a`` and
    ``b``; ``interior_mass`` is the rest. ``interior_integral`` is
    ``E[deta(x2_hat)**2 ; a < x2_hat < b]``.
    """

    total: float
    boundary_a_mass: float
    boundary_b_mass: float
    interior_integral: float
    interior_mass: float
    second_stage_mean: float


def adaptive_dose(model: MeanModel, x1: float, ybar1, interval: DoseInterval):
    """Second-stage dose from the stage-1 mean response."""
    return model.optimal_dose(model.stage1_mle(x1, ybar1), interval)


def _pieces(model: MeanModel, x1: float, interval: DoseInterval) -> list[tuple[float, float]]:
    """Intervals of ``ybar1`` between the breakpoints of ``ybar1 -> x2_hat``."""
    thetas = {model.theta_lo, model.theta_hi}
    for t in model.dose_switch_thetas(interval):
        if model.theta_lo < t < model.theta_hi:
            thetas.add(t)
    cuts = sorted(float(model.eta(x1, t)) for t in thetas)
    edges = [-math.inf, *cuts, math.inf]
    return [(lo, hi) for lo, hi in zip(edges[:-1], edges[1:]) if hi > lo]


@lru_cache(maxsize=8)
def _gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(n)


def _piece_integral(model, x1, interval, theta, mu, sd, lo, hi, nodes):
    lo = max(lo, mu - WINDOW_SD * sd)
    hi = min(hi, mu + WINDOW_SD * sd)
    if not hi > lo:
        return 0.0
    t, w = _gauss_legendre(nodes)
    half = 0.5 * (hi - lo)
    y = lo + half * (t + 1.0)
    z = (y - mu) / sd
    dens = np.exp(-0.5 * z * z) / (sd * math.sqrt(2.0 * math.pi))
    d = model.deta(adaptive_dose(model, x1, y, interval), theta)
    return float(half * np.sum(w * d * d * dens))


def second_stage_information(
    model: MeanModel,
    x1: float,
    interval: DoseInterval,
    n1: int,
    sigma: float,
    theta: float,
    nodes: int = QUAD_NODES,
) -> tuple[float, float, float, float, float]:
    """``E[deta(x2_hat, theta)**2]`` and the boundary/interior split.

    Returns ``(mean, pi_a, pi_b, interior_integral, interior_mass)``.
    """
    mu = float(model.eta(x1, theta))
    sd = sigma / math.sqrt(n1)
    pi_a = pi_b = interior_mass = 0.0
    interior = 0.0
    interior_fine = 0.0
    da2 = float(model.deta(interval.a, theta)) ** 2
    db2 = float(model.deta(interval.b, theta)) ** 2
    for lo, hi in _pieces(model, x1, interval):
        mass = float(ndtr((hi - mu) / sd) - ndtr((lo - mu) / sd))
        # strictly interior probes: the dose map is only rounded near cuts
        if np.isfinite(lo) and np.isfinite(hi):
            probe = lo + (hi - lo) * np.array([0.01, 0.5, 0.99])
        elif np.isfinite(hi):
            probe = hi - np.array([1e-3, 1.0, 1e6]) * max(1.0, abs(hi))
        elif np.isfinite(lo):
            probe = lo + np.array([1e-3, 1.0, 1e6]) * max(1.0, abs(lo))
        else:
            probe = np.array([-1e6, 0.0, 1e6])
        doses = np.atleast_1d(adaptive_dose(model, x1, probe, interval))
        if np.all(doses == doses[0]):
            dose = float(doses[0])
            if dose == interval.a:
                pi_a += mass
            elif dose == interval.b:
                pi_b += mass
            else:
                interior_mass += mass
                v = mass * float(model.deta(dose, theta)) ** 2
                interior += v
                interior_fine += v
        else:
            interior_mass += mass
            interior += _piece_integral(model, x1, interval, theta, mu, sd, lo, hi, nodes)
            interior_fine += _piece_integral(
                model, x1, interval, theta, mu, sd, lo, hi, 2 * nodes - 1
            )
    mean = pi_a * da2 + pi_b * db2 + interior
    fine = pi_a * da2 + pi_b * db2 + interior_fine
    if not abs(mean - fine) <= QUAD_RTOL * abs(fine):
        raise QuadratureError(
            f"design information quadrature unresolved: {mean!r} vs {fine!r} "
            f"({model.family}, n1={n1}, theta={theta})"
        )
    return mean, pi_a, pi_b, interior, interior_mass


def fisher_total(
    model: MeanModel,
    x1: float,
    interval: DoseInterval,
    n1: int,
    n2: int,
    sigma: float,
    theta: float,
    nodes: int = QUAD_NODES,
) -> FisherBreakdown:
    """Design Fisher information for explicit stage sizes (``n2`` may be 0)."""
    mean, pi_a, pi_b, interior, interior_mass = second_stage_information(
        model, x1, interval, n1, sigma, theta, nodes
    )
    first = n1 * float(model.deta(x1, theta)) ** 2 / sigma**2
    total = first + n2 * mean / sigma**2
    return FisherBreakdown(total, pi_a, pi_b, interior, interior_mass, mean)


def design_fisher_info(
    model: MeanModel, config: DesignConfig, theta: float, nodes: int = QUAD_NODES
) -> FisherBreakdown:
    """``i(xi_A, theta)``: ``n`` times the average Fisher information of the design."""
    n1 = resolve_n1(model, config)
    return fisher_total(
        model, config.x1, config.interval, n1, config.n - n1, config.sigma, theta, nodes
    )


def n1_search_trace(
    model: MeanModel, config: DesignConfig, theta: float, nodes: int = QUAD_NODES
) -> np.ndarray:
    """Design information ``i(xi_A, theta)`` for ``n1 = 1, ..., n - 1``."""
    return np.array(
        [
            fisher_total(
                model, config.x1, config.interval, n1, config.n - n1, config.sigma, theta, nodes
            ).total
            for n1 in range(1, config.n)
        ]
    )


def optimal_n1(model: MeanModel, config: DesignConfig, theta: float, nodes: int = QUAD_NODES) -> int:
    """Stage-1 size maximising the design information (smallest on ties).

    The search runs over ``1 <= n1 <= n - 1`` so that a second stage exists.
    """
    return _optimal_n1_cached(
        model, config.x1, config.interval, config.n, config.sigma, float(theta), nodes
    )


@lru_cache(maxsize=256)
def _optimal_n1_cached(model, x1, interval, n, sigma, theta, nodes) -> int:
    trace = n1_search_trace(
        model, DesignConfig(x1, interval, 1, n, sigma, theta), theta, nodes
    )
    return int(np.argmax(trace)) + 1


def resolve_n1(model: MeanModel, config: DesignConfig) -> int:
    if config.n1 == "optimal":
        return optimal_n1(model, config, config.theta_true)
    return int(config.n1)
