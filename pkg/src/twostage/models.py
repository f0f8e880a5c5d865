"""Mean-function families for the two-stage dose-response designs.

Each family supplies the mean ``eta(x, theta)``, its first and second
derivatives in ``theta``, the closed-form stage-1 MLE (a clamped inversion of
``eta(x1, .)``), and the dose maximising ``deta(x, theta)**2`` on an interval.

All methods broadcast over numpy arrays.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike
from scipy.special import expit, logit

from .optimize import grid_golden_max

FAMILIES = (
    "logistic_location",
    "logistic_scale",
    "exponential_location",
    "exponential_scale",
)


@dataclass(frozen=True)
class DoseInterval:
    """Closed dose range ``[a, b]`` for the second-stage dose."""

    a: float
    b: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.a) and math.isfinite(self.b)):
            raise ValueError("dose interval bounds must be finite")
        if not self.a < self.b:
            raise ValueError(f"dose interval needs a < b, got [{self.a}, {self.b}]")

    def clamp(self, x: ArrayLike) -> np.ndarray:
        return np.clip(x, self.a, self.b)


def _safe_logit(y: np.ndarray) -> np.ndarray:
    """logit extended by +-inf outside ``(0, 1)``."""
    return np.where(y <= 0, -np.inf, np.where(y >= 1, np.inf, logit(np.clip(y, 0.0, 1.0))))


def _as_float(v):
    out = np.asarray(v, dtype=float)
    return out if out.ndim else float(out)


class MeanModel(ABC):
    """A one-parameter mean function with truncated parameter range.

    Parameters
    ----------
    theta_lo, theta_hi : float
        Truncation of the parameter search, ``theta_lo < theta_hi``.
    """

    family: str = ""

    def __init__(self, theta_lo: float, theta_hi: float) -> None:
        if not (math.isfinite(theta_lo) and math.isfinite(theta_hi)):
            raise ValueError("parameter bounds must be finite")
        if not theta_lo < theta_hi:
            raise ValueError(f"need theta_lo < theta_hi, got {theta_lo}, {theta_hi}")
        self.theta_lo = float(theta_lo)
        self.theta_hi = float(theta_hi)

    def __repr__(self) -> str:
        return f"{type(self).__name__}(theta_lo={self.theta_lo}, theta_hi={self.theta_hi})"

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, MeanModel)
            and other.family == self.family
            and other.theta_lo == self.theta_lo
            and other.theta_hi == self.theta_hi
        )

    def __hash__(self) -> int:
        return hash((self.family, self.theta_lo, self.theta_hi))

    @abstractmethod
    def eta(self, x: ArrayLike, theta: ArrayLike): ...

    @abstractmethod
    def deta(self, x: ArrayLike, theta: ArrayLike): ...

    @abstractmethod
    def ddeta(self, x: ArrayLike, theta: ArrayLike): ...

    @abstractmethod
    def _invert(self, x1: float, ybar1: np.ndarray) -> np.ndarray:
        """Unclamped solution of ``eta(x1, theta) = ybar1``; +-inf off-range."""

    def stage1_mle(self, x1: float, ybar1: ArrayLike):
        """Closed-form MLE from stage-1 data, clamped to the parameter range.

        ``eta(x1, .)`` is monotone for every family, so the one-stage
        likelihood peaks where ``eta`` hits ``ybar1`` when that is reachable
        and at the nearer bound otherwise.
        """
        y = np.asarray(ybar1, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            theta = self._invert(float(x1), y)
        return _as_float(np.clip(theta, self.theta_lo, self.theta_hi))

    @abstractmethod
    def _optimal_dose(self, theta: np.ndarray, interval: DoseInterval) -> np.ndarray: ...

    def optimal_dose(self, theta: ArrayLike, interval: DoseInterval):
        """Dose in ``[a, b]`` maximising ``deta(x, theta)**2``."""
        theta = np.asarray(theta, dtype=float)
        return _as_float(interval.clamp(self._optimal_dose(theta, interval)))

    @abstractmethod
    def dose_switch_thetas(self, interval: DoseInterval) -> tuple[float, ...]:
        """Parameter values where the clamped optimal dose leaves ``a`` or ``b``.

        Used only as quadrature breakpoints; empty when the dose never moves.
        """


class LogisticLocation(MeanModel):
    """``eta = 1 / (1 + exp(x - theta))``."""

    family = "logistic_location"

    def eta(self, x, theta):
        return _as_float(expit(np.subtract(theta, x)))

    def deta(self, x, theta):
        s = expit(np.subtract(theta, x))
        return _as_float(s * (1.0 - s))

    def ddeta(self, x, theta):
        s = expit(np.subtract(theta, x))
        return _as_float(s * (1.0 - s) * (1.0 - 2.0 * s))

    def _invert(self, x1, ybar1):
        return x1 + _safe_logit(ybar1)

    def _optimal_dose(self, theta, interval):
        return theta

    def dose_switch_thetas(self, interval):
        return (interval.a, interval.b)


class LogisticScale(MeanModel):
    """``eta = 1 / (1 + exp(theta * x))``.

    The optimal dose has no closed form; it is found numerically.
    """

    family = "logistic_scale"
    n_seed_grid = 64
    dose_tol = 1e-8

    def eta(self, x, theta):
        return _as_float(expit(-np.multiply(theta, x)))

    def deta(self, x, theta):
        x = np.asarray(x, dtype=float)
        p = expit(np.multiply(theta, x))
        return _as_float(-x * p * (1.0 - p))

    def ddeta(self, x, theta):
        x = np.asarray(x, dtype=float)
        p = expit(np.multiply(theta, x))
        return _as_float(-x * x * p * (1.0 - p) * (1.0 - 2.0 * p))

    def _invert(self, x1, ybar1):
        return -_safe_logit(ybar1) / x1

    def _optimal_dose(self, theta, interval):
        t = theta[..., None]

        def objective(x):
            return self.deta(x, t) ** 2

        return grid_golden_max(
            objective, interval.a, interval.b, theta.shape, self.n_seed_grid, self.dose_tol
        )

    def dose_switch_thetas(self, interval):
        # deta^2 = (u p (1-p))^2 / theta^2 with u = theta x peaks at u tanh(u/2) = 1
        from scipy.optimize import brentq

        u = brentq(lambda v: v * math.tanh(v / 2.0) - 1.0, 0.5, 5.0, xtol=1e-14)
        return (u / interval.b, u / interval.a)


class ExponentialLocation(MeanModel):
    """``eta = exp(theta - x)``; the optimal dose is always ``a``."""

    family = "exponential_location"

    def eta(self, x, theta):
        return _as_float(np.exp(np.subtract(theta, x)))

    deta = eta
    ddeta = eta

    def _invert(self, x1, ybar1):
        return np.where(ybar1 > 0, x1 + np.log(ybar1), -np.inf)

    def _optimal_dose(self, theta, interval):
        return np.full(theta.shape, interval.a)

    def dose_switch_thetas(self, interval):
        return ()


class ExponentialScale(MeanModel):
    """``eta = exp(-theta * x)``; optimal dose ``1 / theta``."""

    family = "exponential_scale"

    def eta(self, x, theta):
        return _as_float(np.exp(-np.multiply(theta, x)))

    def deta(self, x, theta):
        x = np.asarray(x, dtype=float)
        return _as_float(-x * np.exp(-theta * x))

    def ddeta(self, x, theta):
        x = np.asarray(x, dtype=float)
        return _as_float(x * x * np.exp(-theta * x))

    def _invert(self, x1, ybar1):
        return np.where(ybar1 > 0, -np.log(ybar1) / x1, np.inf)

    def _optimal_dose(self, theta, interval):
        with np.errstate(divide="ignore"):
            return np.where(theta > 0, 1.0 / theta, np.inf)

    def dose_switch_thetas(self, interval):
        return (1.0 / interval.b, 1.0 / interval.a)


_REGISTRY: dict[str, type[MeanModel]] = {
    cls.family: cls
    for cls in (LogisticLocation, LogisticScale, ExponentialLocation, ExponentialScale)
}


def get_model(
    family: str,
    interval: DoseInterval | None = None,
    theta_lo: float = 0.0,
    theta_hi: float | None = None,
) -> MeanModel:
    """Build a model by family name.

    ``theta_hi`` defaults to ``1 / a`` of the dose interval, which requires
    ``a > 0``.
    """
    try:
        cls = _REGISTRY[family]
    except KeyError:
        raise ValueError(f"unknown model family {family!r}; expected one of {FAMILIES}") from None
    if theta_hi is None:
        if interval is None:
            raise ValueError("theta_hi or a dose interval is required")
        if interval.a <= 0:
            raise ValueError("theta_hi = 1/a needs a > 0")
        theta_hi = 1.0 / interval.a
    return cls(theta_lo, theta_hi)
