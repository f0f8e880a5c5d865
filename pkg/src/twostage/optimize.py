"""Vectorised bounded 1-D maximisation: coarse grid bracketing + golden section."""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_iterations(width: float, tol: float) -> int:
    """Number of golden-section steps that shrink ``width`` below ``tol``."""
    if width <= tol:
        return 0
    return int(math.ceil(math.log(tol / width) / math.log(INV_PHI)))


def golden_max(
    f: Callable[[np.ndarray], np.ndarray],
    lo: np.ndarray,
    hi: np.ndarray,
    tol: float = 1e-8,
    width: float | None = None,
) -> np.ndarray:
    """Maximise ``f`` elementwise on the brackets ``[lo, hi]``.

    ``f`` maps an array shaped like ``lo`` to objective values of the same
    shape. Every element runs the same number of iterations, set by
    ``width`` (default: the widest bracket). Callers that need results
    independent of batch composition pass a fixed ``width``.
    """
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    if width is None:
        width = float(np.max(hi - lo)) if lo.size else 0.0
    x1 = hi - INV_PHI * (hi - lo)
    x2 = lo + INV_PHI * (hi - lo)
    f1 = f(x1)
    f2 = f(x2)
    for _ in range(golden_iterations(width, tol)):
        left = f1 >= f2  # ties keep the lower half
        hi = np.where(left, x2, hi)
        lo = np.where(left, lo, x1)
        x1, x2 = (
            np.where(left, hi - INV_PHI * (hi - lo), x2),
            np.where(left, x1, lo + INV_PHI * (hi - lo)),
        )
        fnew = f(np.where(left, x1, x2))
        f1, f2 = np.where(left, fnew, f2), np.where(left, f1, fnew)
    return 0.5 * (lo + hi)


def grid_golden_max(
    f: Callable[[np.ndarray], np.ndarray],
    lo: float,
    hi: float,
    shape: tuple[int, ...],
    n_grid: int,
    tol: float = 1e-8,
) -> np.ndarray:
    """Global maximiser of a batch of objectives on ``[lo, hi]``.

    ``f`` receives abscissae shaped ``shape + (m,)`` (the batch axes plus one
    trailing evaluation axis) and returns values of the same shape. A uniform
    grid of ``n_grid`` points brackets the best cell, golden section refines
    inside it, and the refined point competes against both endpoints. Ties
    resolve to the smallest abscissa.
    """
    grid = np.linspace(lo, hi, n_grid)
    vals = f(np.broadcast_to(grid, shape + (n_grid,)))
    vals = np.where(np.isnan(vals), -np.inf, vals)
    k = np.argmax(vals, axis=-1)  # first maximum on ties
    left = grid[np.maximum(k - 1, 0)]
    right = grid[np.minimum(k + 1, n_grid - 1)]

    def g(x: np.ndarray) -> np.ndarray:
        return f(x[..., None])[..., 0]

    x = golden_max(g, left, right, tol, width=2.0 * (hi - lo) / (n_grid - 1))
    fx = g(x)
    flo = g(np.full(shape, float(lo)))
    fhi = g(np.full(shape, float(hi)))
    best = np.where(fx > flo, x, lo)
    fbest = np.maximum(fx, flo)
    return np.where(fhi > fbest, hi, best)
