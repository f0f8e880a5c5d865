import math

import numpy as np
import pytest
from scipy.special import ndtr

from twostage.design import (
    DesignConfig,
    QuadratureError,
    _pieces,
    adaptive_dose,
    design_fisher_info,
    fisher_total,
    n1_search_trace,
    optimal_n1,
    resolve_n1,
)
from twostage.models import get_model

from .conftest import INTERVAL

SIGMA, THETA, X1 = 0.5, 1.0, 2.0


def mc_oracle(model, n1, n2, draws, rng):
    """Monte Carlo design information and its standard error."""
    mu = model.eta(X1, THETA)
    ybar1 = mu + SIGMA / math.sqrt(n1) * rng.standard_normal(draws)
    d2 = model.deta(adaptive_dose(model, X1, ybar1, INTERVAL), THETA) ** 2
    base = n1 * model.deta(X1, THETA) ** 2 / SIGMA**2
    scale = n2 / SIGMA**2
    return base + scale * d2.mean(), scale * d2.std(ddof=1) / math.sqrt(draws)


def test_matches_monte_carlo_oracle(model, rng):
    for n1, n in ((5, 60), (30, 100)):
        fb = design_fisher_info(model, DesignConfig(X1, INTERVAL, n1, n, SIGMA, THETA), THETA)
        est, se = mc_oracle(model, n1, n - n1, 200_000, rng)
        assert abs(fb.total - est) <= 3 * se + 1e-12


def test_masses_partition_unity(model):
    fb = design_fisher_info(model, DesignConfig(X1, INTERVAL, 10, 100, SIGMA, THETA), THETA)
    total = fb.boundary_a_mass + fb.boundary_b_mass + fb.interior_mass
    assert total == pytest.approx(1.0, abs=1e-12)
    assert fb.total > 0


def test_logistic_location_boundary_mass_closed_form():
    m = get_model("logistic_location", INTERVAL)
    n1 = 12
    fb = design_fisher_info(m, DesignConfig(X1, INTERVAL, n1, 50, SIGMA, THETA), THETA)
    sd = SIGMA / math.sqrt(n1)
    mu = m.eta(X1, THETA)
    # x2 = a exactly when the stage-1 estimate is at most a
    assert fb.boundary_a_mass == pytest.approx(float(ndtr((m.eta(X1, INTERVAL.a) - mu) / sd)), abs=1e-14)
    assert fb.boundary_b_mass == pytest.approx(float(1 - ndtr((m.eta(X1, INTERVAL.b) - mu) / sd)), abs=1e-14)


def test_exponential_location_dose_is_constant():
    m = get_model("exponential_location", INTERVAL)
    fb = design_fisher_info(m, DesignConfig(X1, INTERVAL, 10, 100, SIGMA, THETA), THETA)
    assert fb.boundary_a_mass == pytest.approx(1.0)
    expected = (10 * m.deta(X1, THETA) ** 2 + 90 * m.deta(INTERVAL.a, THETA) ** 2) / SIGMA**2
    assert fb.total == pytest.approx(expected, rel=1e-12)


def test_no_second_stage_reduces_to_stage_one(model):
    fb = fisher_total(model, X1, INTERVAL, 40, 0, SIGMA, THETA)
    assert fb.total == pytest.approx(40 * model.deta(X1, THETA) ** 2 / SIGMA**2, rel=1e-14)


def test_pieces_tile_the_line(model):
    pieces = _pieces(model, X1, INTERVAL)
    assert pieces[0][0] == -math.inf and pieces[-1][1] == math.inf
    for (_, hi), (lo, _) in zip(pieces, pieces[1:]):
        assert hi == lo
    assert all(hi > lo for lo, hi in pieces)


def test_quadrature_stable_under_refinement(model):
    for n1 in (2, 17, 90):
        coarse = fisher_total(model, X1, INTERVAL, n1, 100, SIGMA, THETA, nodes=201).total
        fine = fisher_total(model, X1, INTERVAL, n1, 100, SIGMA, THETA, nodes=401).total
        assert coarse == pytest.approx(fine, rel=1e-6)


def test_quadrature_error_when_unresolved():
    m = get_model("logistic_scale", INTERVAL)
    with pytest.raises(QuadratureError):
        fisher_total(m, X1, INTERVAL, 3, 100, SIGMA, THETA, nodes=2)


def test_optimal_n1_is_trace_argmax():
    m = get_model("logistic_location", INTERVAL)
    cfg = DesignConfig(X1, INTERVAL, "optimal", 100, SIGMA, THETA)
    trace = n1_search_trace(m, cfg, THETA)
    assert trace.shape == (99,)
    best = optimal_n1(m, cfg, THETA)
    assert best == int(np.argmax(trace)) + 1
    assert trace[best - 1] == trace.max()
    assert resolve_n1(m, cfg) == best
    assert resolve_n1(m, cfg.with_n1(7)) == 7


def test_config_validation():
    with pytest.raises(ValueError, match="n1 must be < n"):
        DesignConfig(X1, INTERVAL, 100, 100, SIGMA, THETA)
    with pytest.raises(ValueError, match=r"x1 must lie in \[a, b\]"):
        DesignConfig(5.0, INTERVAL, 10, 100, SIGMA, THETA)
    with pytest.raises(ValueError):
        DesignConfig(X1, INTERVAL, 10, 100, -1.0, THETA)
