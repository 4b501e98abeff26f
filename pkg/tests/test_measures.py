"""Measure container and the total variation metric.

The TV convention under test is sup_{|f| <= 1}, i.e. the full l1 norm of
the weight difference with range [0, 2]; tv_half is the half-l1 companion.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qsdlab import BinGrid, EmpiricalMeasure, tv_distance, tv_half

STATES = [(1, 1), (2, 1), (1, 3), (4, 4), (2, 5)]


def measure_from_weights(w):
    w = np.asarray(w, dtype=float)
    return EmpiricalMeasure(
        {s: wi / w.sum() for s, wi in zip(STATES, w) if wi > 0.0}
    )


weights = st.lists(
    st.floats(0.0, 1.0, allow_nan=False), min_size=5, max_size=5
).filter(lambda w: sum(w) > 1e-6)


# -- metric axioms ----------------------------------------------------------


@given(weights)
@settings(max_examples=100, deadline=None)
def test_tv_self_distance_zero(w):
    mu = measure_from_weights(w)
    assert tv_distance(mu, mu) == 0.0


@given(weights, weights)
@settings(max_examples=100, deadline=None)
def test_tv_symmetric(w1, w2):
    mu, nu = measure_from_weights(w1), measure_from_weights(w2)
    assert tv_distance(mu, nu) == pytest.approx(tv_distance(nu, mu), abs=1e-15)


@given(weights, weights, weights)
@settings(max_examples=100, deadline=None)
def test_tv_triangle_inequality(w1, w2, w3):
    mu, nu, rho = (measure_from_weights(w) for w in (w1, w2, w3))
    assert tv_distance(mu, rho) <= tv_distance(mu, nu) + tv_distance(nu, rho) + 1e-12


@given(weights, weights)
@settings(max_examples=100, deadline=None)
def test_tv_range_and_half(w1, w2):
    mu, nu = measure_from_weights(w1), measure_from_weights(w2)
    d = tv_distance(mu, nu)
    assert 0.0 <= d <= 2.0
    assert tv_half(mu, nu) == pytest.approx(0.5 * d)


def test_tv_disjoint_points_is_two():
    # the sup-|f|<=1 convention saturates at 2, not 1
    a = EmpiricalMeasure({(1, 1): 1.0})
    b = EmpiricalMeasure({(2, 2): 1.0})
    assert tv_distance(a, b) == 2.0
    assert tv_half(a, b) == 1.0


def test_tv_requires_normalized():
    half = EmpiricalMeasure({(1, 1): 0.5})
    full = EmpiricalMeasure({(1, 1): 1.0})
    with pytest.raises(ValueError):
        tv_distance(half, full)


def test_tv_requires_matching_grids():
    g1 = BinGrid(((0.0, 1.0, 2.0),))
    g2 = BinGrid(((0.0, 0.5, 2.0),))
    a = EmpiricalMeasure({(0,): 1.0}, bin_grid=g1)
    b = EmpiricalMeasure({(0,): 1.0}, bin_grid=g2)
    with pytest.raises(ValueError):
        tv_distance(a, b)
    with pytest.raises(ValueError):
        tv_distance(a, EmpiricalMeasure({(0,): 1.0}))


# -- container behavior -----------------------------------------------------


def test_measure_drops_zero_weights_and_sums_mass():
    m = EmpiricalMeasure({(1, 1): 0.25, (2, 2): 0.0, (3, 3): 0.75})
    assert set(m.atoms) == {(1, 1), (3, 3)}
    assert m.mass == pytest.approx(1.0)
    assert m.is_normalized


def test_measure_rejects_bad_weights():
    with pytest.raises(ValueError):
        EmpiricalMeasure({(1,): -0.1})
    with pytest.raises(ValueError):
        EmpiricalMeasure({(1,): float("nan")})


def test_normalized_rescales_and_zero_mass_raises():
    m = EmpiricalMeasure({(1,): 3.0, (2,): 1.0}).normalized()
    assert m.atoms[(1,)] == pytest.approx(0.75)
    with pytest.raises(ValueError):
        EmpiricalMeasure({}).normalized()


def test_from_states_counts_duplicates():
    states = np.array([[1, 1], [1, 1], [2, 3]])
    m = EmpiricalMeasure.from_states(states)
    assert m.atoms[(1, 1)] == pytest.approx(2.0 / 3.0)
    assert m.atoms[(2, 3)] == pytest.approx(1.0 / 3.0)


def test_expect_integrates():
    m = EmpiricalMeasure({(1, 1): 0.5, (3, 1): 0.5})
    total = m.expect(lambda s: s.sum(axis=1))
    assert total == pytest.approx(0.5 * 2 + 0.5 * 4)


# -- binning ----------------------------------------------------------------


def test_bin_grid_rejects_bad_edges():
    with pytest.raises(ValueError):
        BinGrid(((0.0,),))
    with pytest.raises(ValueError):
        BinGrid(((0.0, 1.0, 1.0),))


def test_assign_clips_outliers_into_edge_bins():
    g = BinGrid(((0.0, 1.0, 2.0, 3.0),))
    idx = g.assign(np.array([[-5.0], [0.5], [2.9], [99.0]]))
    assert idx.ravel().tolist() == [0, 0, 2, 2]


def test_from_samples_shares_one_grid():
    gen = np.random.default_rng(0)
    a = gen.normal(5.0, 1.0, size=(500, 2))
    b = gen.normal(6.0, 1.0, size=(500, 2))
    g = BinGrid.from_samples([a, b], bins_per_axis=10)
    ma = EmpiricalMeasure.from_states(a, bin_grid=g)
    mb = EmpiricalMeasure.from_states(b, bin_grid=g)
    d = tv_distance(ma, mb)
    assert 0.0 < d < 2.0
