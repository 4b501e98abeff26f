"""Shared fixtures: the reference models and their selected drift pairs.

Everything expensive (slice enumeration, eigen solves, profile
construction) is session-scoped so the suite pays for it once.
"""

import numpy as np
import pytest

import qsdlab.birth_death as bd
import qsdlab.feller as fl
from qsdlab import RngStream, TimeGrid, build_truncation, qsd_eigen_oracle
from qsdlab.reproduce import reference_bd_model, reference_feller_model


@pytest.fixture(scope="session")
def bd_model():
    return reference_bd_model()


@pytest.fixture(scope="session")
def feller_model():
    return reference_feller_model()


@pytest.fixture(scope="session")
def bd_params(bd_model):
    # the pair every drift check runs against; k_check=60 keeps the slice
    # enumeration cheap while staying past the certified threshold
    return bd.select_bd_params(bd_model, k_check=60)


@pytest.fixture(scope="session")
def bd_pair(bd_model, bd_params):
    return bd.build_bd_pair(bd_model, bd_params)


@pytest.fixture(scope="session")
def tr12(bd_model):
    return build_truncation(bd_model, 12)


@pytest.fixture(scope="session")
def eigen_estimate(bd_model):
    return qsd_eigen_oracle(bd_model)


@pytest.fixture(scope="session")
def feller_setup(feller_model):
    """(params, mc, beta, h, g, epsilon) for the reference diffusion."""
    params = fl.auto_feller_params(feller_model, eta=0.5)
    mc = fl.compute_M(params)
    beta = fl.select_feller_beta(params, mc)
    h = fl.build_h_beta(params, beta, mc)
    g = fl.build_g(params)
    eps = fl.feller_epsilon(params, beta, feller_model.dimension)
    return params, mc, beta, h, g, eps


@pytest.fixture(scope="session")
def small_report(bd_model):
    """Reduced two-start convergence report reused by plot and qsd tests."""
    from qsdlab import convergence_report

    grid = TimeGrid(0.0, 0.05, 21)
    return convergence_report(
        bd_model, (1, 1), (12, 12), grid, 3000, RngStream(404), n_boot=60
    )


def slice_states(k_lo: int, k_hi: int, d: int = 2) -> np.ndarray:
    blocks = []
    for k in range(k_lo, k_hi + 1):
        blocks.extend(bd.simplex_slice_chunks(k, d))
    return np.concatenate(blocks, axis=0)
