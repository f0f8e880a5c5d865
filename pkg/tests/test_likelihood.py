import numpy as np
import pytest

from twostage.likelihood import (
    MLE_GRID,
    TwoStageSample,
    full_mle,
    is_boundary,
    log_likelihood,
    loglik_means,
    mle_means,
    score,
)

from .conftest import random_sample

ORACLE_GRID = 10**6


def grid_oracle(model, s):
    """Brute-force maximiser on a 10^6-point grid (spacing about 4e-6)."""
    grid = np.linspace(model.theta_lo, model.theta_hi, ORACLE_GRID)
    ll = loglik_means(model, s.x1, s.x2, s.n1, s.n2, s.ybar1, s.ybar2, s.sigma, grid)
    return grid[np.argmax(ll)]


def test_score_matches_finite_difference(model, rng):
    h = 1e-5
    for _ in range(200):
        s = random_sample(model, rng)
        t = rng.uniform(model.theta_lo + 2 * h, model.theta_hi - 2 * h)
        fd = (log_likelihood(model, s, t + h) - log_likelihood(model, s, t - h)) / (2 * h)
        sc = score(model, s, t)
        assert abs(sc - fd) <= 1e-6 * (1 + abs(sc)) + 1e-6


def test_full_mle_matches_grid_oracle(model, rng):
    for _ in range(60):
        s = random_sample(model, rng, sigma=float(rng.uniform(0.1, 1.0)),
                          theta=float(rng.uniform(0.2, 3.5)))
        assert abs(full_mle(model, s) - grid_oracle(model, s)) <= 1e-5


def test_interior_mle_zeroes_score(model, rng):
    hits = 0
    for _ in range(100):
        s = random_sample(model, rng)
        t = full_mle(model, s)
        if is_boundary(model, t):
            continue
        hits += 1
        curvature = abs(score(model, s, t + 1e-4) - score(model, s, t - 1e-4)) / 2e-4
        assert abs(score(model, s, t)) <= 1e-6 * max(curvature, 1.0)
    assert hits > 50


def test_mle_clamps_to_bounds(model):
    lo_y, hi_y = sorted(float(model.eta(2.0, t)) for t in (model.theta_lo, model.theta_hi))
    for y, in_lo_tail in ((lo_y - 10.0, True), (hi_y + 10.0, False)):
        s = TwoStageSample(2.0, 2.0, np.full(5, y), np.full(5, y), 0.5)
        t = full_mle(model, s)
        assert is_boundary(model, t)
        assert model.eta(2.0, t) == pytest.approx(lo_y if in_lo_tail else hi_y)


def test_vectorised_mle_matches_scalar_route(model, rng):
    samples = [random_sample(model, rng, n1=8, n2=20) for _ in range(40)]
    cols = {k: np.array([getattr(s, k) for s in samples]) for k in ("x1", "x2", "ybar1", "ybar2")}
    batch = mle_means(model, cols["x1"], cols["x2"], 8, 20, cols["ybar1"], cols["ybar2"], 0.5)
    single = [full_mle(model, s) for s in samples]
    np.testing.assert_array_equal(batch, single)


def test_sample_validation():
    with pytest.raises(ValueError):
        TwoStageSample(2.0, 1.0, np.array([]), np.ones(3), 0.5)
    with pytest.raises(ValueError):
        TwoStageSample(2.0, 1.0, np.ones(3), np.ones(3), 0.0)
    s = TwoStageSample(2.0, 1.0, np.array([1.0, 3.0]), np.ones(3), 0.5)
    assert (s.n1, s.n2, s.n, s.ybar1) == (2, 3, 5, 2.0)


def test_grid_constant():
    assert MLE_GRID >= 256
