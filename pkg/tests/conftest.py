import numpy as np
import pytest

from opo_ng.params import DetectionFilter, OpoParams


@pytest.fixture
def tuned_half():
    return OpoParams(kappa0_hat=2.0, e_mag=0.5)


@pytest.fixture
def fig_filter():
    return DetectionFilter(omega_f=0.3, gamma_f=0.15)


@pytest.fixture(autouse=True)
def _seed_numpy():
    np.random.seed(0)
