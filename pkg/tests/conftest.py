import numpy as np
import pytest

import pruefer_lab as pl


@pytest.fixture
def cosine_model():
    return pl.PotentialModel((1.0,), (), 1.0)


@pytest.fixture
def free_decay():
    return pl.DecayProfile(alpha=0.9, amplitude=0.0)


def midpoint_integral(f, a, b, panels=1_000_000):
    """Brute-force midpoint rule, the independent quadrature oracle."""
    xs = (np.arange(panels) + 0.5) * (b - a) / panels + a
    return float(np.sum(f(xs)) * (b - a) / panels)
