"""Summaries of normalised MLEs: tail probabilities and CDF distances."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.special import ndtr, ndtri, stdtr

from .information import InfoMeasureKind

NOMINAL_LEVELS = (0.005, 0.025, 0.05, 0.10)
GRID_LO, GRID_HI, GRID_STEP = -8.0, 8.0, 0.01


class EmptyKindError(ValueError):
    """Every replication was degenerate for the requested norm."""


@dataclass(frozen=True)
class TailSummary:
    kind: InfoMeasureKind | None
    levels: tuple[float, ...]
    left: tuple[float, ...]
    right: tuple[float, ...]
    n_used: int
    excluded: int

    def rows(self):
        """``(level, left, right)`` triples in level order."""
        return list(zip(self.levels, self.left, self.right))


def statistics(results, kind: InfoMeasureKind | None = None) -> tuple[np.ndarray, int]:
    """Finite normalised statistics for ``kind`` and the number excluded.

    ``results`` may be an :class:`~twostage.montecarlo.ExperimentResult`, an
    iterable of :class:`~twostage.montecarlo.ReplicationResult`, or a plain
    array of statistics (``kind`` is then ignored).
    """
    if hasattr(results, "stats") and isinstance(results.stats, dict):
        arr = np.asarray(results.stats[InfoMeasureKind(kind)], dtype=float)
    elif isinstance(results, np.ndarray):
        arr = results.astype(float, copy=False)
    else:
        items = list(results)
        if items and hasattr(items[0], "stats"):
            k = InfoMeasureKind(kind)
            arr = np.array([r.stats.get(k, np.nan) for r in items], dtype=float)
        else:
            arr = np.asarray(items, dtype=float)
    ok = np.isfinite(arr)
    return arr[ok], int(arr.size - np.count_nonzero(ok))


def tail_probabilities(
    results, kind: InfoMeasureKind | None = None, levels: Sequence[float] = NOMINAL_LEVELS
) -> TailSummary:
    """Empirical two-sided tail frequencies at the nominal levels.

    Left tail: share of statistics below ``Phi^-1(alpha)``; right tail: share
    above ``Phi^-1(1 - alpha)``. Degenerate replications are excluded and
    counted.
    """
    t, excluded = statistics(results, kind)
    if t.size == 0:
        raise EmptyKindError(f"no non-degenerate statistics for {kind}")
    levels = tuple(float(a) for a in levels)
    t = np.sort(t)
    left, right = [], []
    for a in levels:
        q_lo = float(ndtri(a))
        q_hi = float(-ndtri(a))  # symmetric quantile, exact to rounding
        left.append(np.searchsorted(t, q_lo, side="left") / t.size)
        right.append((t.size - np.searchsorted(t, q_hi, side="right")) / t.size)
    return TailSummary(
        kind=None if kind is None else InfoMeasureKind(kind),
        levels=levels,
        left=tuple(left),
        right=tuple(right),
        n_used=int(t.size),
        excluded=excluded,
    )


def cdf_grid(step: float = GRID_STEP) -> np.ndarray:
    n = int(round((GRID_HI - GRID_LO) / step))
    return np.linspace(GRID_LO, GRID_HI, n + 1)


def _trapezoid(y: np.ndarray, step: float) -> float:
    return float(step * (np.sum(y) - 0.5 * (y[0] + y[-1])))


def integrated_abs_cdf_diff(
    results, kind: InfoMeasureKind | None = None, step: float = GRID_STEP
) -> float:
    """Trapezoidal integral over ``[-8, 8]`` of ``|F_hat(t) - Phi(t)|``.

    ``F_hat`` is the right-continuous empirical CDF of the statistics.
    """
    t, _ = statistics(results, kind)
    if t.size == 0:
        raise EmptyKindError(f"no non-degenerate statistics for {kind}")
    grid = cdf_grid(step)
    ecdf = np.searchsorted(np.sort(t), grid, side="right") / t.size
    return _trapezoid(np.abs(ecdf - ndtr(grid)), step)


def t_reference(df: float = 60.0, step: float = GRID_STEP) -> float:
    """Integrated absolute difference between the t(df) and normal CDFs."""
    grid = cdf_grid(step)
    return _trapezoid(np.abs(stdtr(df, grid) - ndtr(grid)), step)


def t60_reference(step: float = GRID_STEP) -> float:
    return t_reference(60.0, step)


def tail_table(results, kinds: Iterable[InfoMeasureKind], levels=NOMINAL_LEVELS):
    return [tail_probabilities(results, k, levels) for k in kinds]
