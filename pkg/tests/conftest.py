import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from hmflab import fixtures, spectral  # noqa: E402


@pytest.fixture(scope="session")
def ring_eq():
    return fixtures.reference_unstable_equilibrium()


@pytest.fixture(scope="session")
def monotone_eq():
    return fixtures.monotone_unstable_equilibrium()


@pytest.fixture(scope="session")
def stable_eq():
    return fixtures.stable_equilibrium()


@pytest.fixture(scope="session")
def ev_ring(ring_eq):
    return spectral.DispersionEvaluator(ring_eq)


@pytest.fixture(scope="session")
def ev_stable(stable_eq):
    return spectral.DispersionEvaluator(stable_eq, 128, 128)


@pytest.fixture(scope="session")
def lambda_star():
    return fixtures.REFERENCE_LAMBDA_STAR


@pytest.fixture(scope="session")
def mode_sim(ring_eq, lambda_star, ev_ring):
    return spectral.eigenmode(ring_eq, lambda_star, grid_shape=(256, 257),
                              v_max=fixtures.SIM_V_MAX, evaluator=ev_ring)


@pytest.fixture(scope="session")
def mode_fine(ring_eq, lambda_star, ev_ring):
    return spectral.eigenmode(ring_eq, lambda_star, grid_shape=(512, 1025),
                              v_max=fixtures.SIM_V_MAX, evaluator=ev_ring)
