import numpy as np
import pytest

from twostage.likelihood import TwoStageSample
from twostage.models import FAMILIES, DoseInterval, get_model

INTERVAL = DoseInterval(0.25, 4.0)


@pytest.fixture(params=FAMILIES)
def model(request):
    return get_model(request.param, INTERVAL)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def random_sample(model, rng, n1=None, n2=None, sigma=0.5, theta=1.0):
    """Small two-stage sample drawn under the adaptive design."""
    n1 = n1 or int(rng.integers(1, 12))
    n2 = n2 or int(rng.integers(1, 12))
    x1 = float(rng.uniform(INTERVAL.a, INTERVAL.b))
    y1 = model.eta(x1, theta) + sigma * rng.standard_normal(n1)
    x2 = float(model.optimal_dose(model.stage1_mle(x1, y1.mean()), INTERVAL))
    y2 = model.eta(x2, theta) + sigma * rng.standard_normal(n2)
    return TwoStageSample(x1, x2, y1, y2, sigma)
