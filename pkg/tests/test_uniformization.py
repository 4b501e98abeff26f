"""Truncated generator, uniformized semigroup, and the eigen oracle.

The dense matrix exponential is the independent oracle here; everything
else in the package treats uniformization itself as exact, so this module
is where that trust is earned.
"""

import numpy as np
import pytest
import scipy.linalg

from qsdlab import BDModel, RngStream, auto_box_size, build_truncation
from qsdlab.uniformization import (
    SemigroupStepper,
    mean_absorption_time,
    principal_left_eigenvector,
    principal_right_eigenvector,
    semigroup_left,
    semigroup_right,
    survival_matrix,
)

# frozen references for the standard competitive chain
LAMBDA0_BOX12 = 3.554641
LAMBDA0_BOX1 = 6.4


@pytest.fixture(scope="module")
def tr5(bd_model):
    return build_truncation(bd_model, 5)


def test_truncation_indexing(tr5):
    assert tr5.n_states == 25
    for k, s in enumerate(tr5.states):
        assert tr5.index_of(s) == k
    with pytest.raises(KeyError):
        tr5.index_of((6, 1))
    with pytest.raises(KeyError):
        tr5.index_of((0, 3))


def test_generator_is_substochastic(tr5):
    Q = tr5.Q.toarray()
    off = Q - np.diag(np.diag(Q))
    assert (off >= 0.0).all()
    # row sums vanish in the interior and are strictly negative where
    # probability leaks to the absorbing complement
    row_sums = Q.sum(axis=1)
    assert (row_sums <= 1e-12).all()
    leaky = tr5.states[np.asarray(row_sums) < -1e-12]
    assert ((leaky == 1).any(axis=1) | (leaky == 5).any(axis=1)).all()


def test_semigroup_matches_dense_expm(tr5):
    Q = tr5.Q.toarray()
    for t in (0.1, 0.7, 2.0):
        P = scipy.linalg.expm(t * Q)
        mu = tr5.delta((2, 3))
        assert np.allclose(semigroup_left(tr5, mu, t), mu @ P, atol=1e-11)
        f = np.log1p(tr5.states.sum(axis=1)).astype(float)
        assert np.allclose(semigroup_right(tr5, f, t), P @ f, atol=1e-11)


def test_left_right_duality(tr5):
    mu = np.full(tr5.n_states, 1.0 / tr5.n_states)
    f = tr5.states.prod(axis=1).astype(float)
    t = 0.9
    lhs = float(semigroup_left(tr5, mu, t) @ f)
    rhs = float(mu @ semigroup_right(tr5, f, t))
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_stepper_composes_to_single_application(tr5):
    mu = tr5.delta((3, 3))
    stepper = SemigroupStepper(tr5, 0.125)
    v = mu
    for _ in range(8):
        v = stepper.step_left(v)
    assert np.allclose(v, semigroup_left(tr5, mu, 1.0), atol=1e-12)


def test_mean_absorption_time_solves_poisson(tr5):
    m = mean_absorption_time(tr5)
    assert (m > 0.0).all()
    assert np.allclose(-(tr5.Q @ m), np.ones(tr5.n_states), atol=1e-9)


def test_survival_matrix_matches_expm(tr5):
    times = np.array([0.5, 0.2, 1.5])
    S = survival_matrix(tr5, times)
    Q = tr5.Q.toarray()
    for row, t in enumerate(times):
        assert np.allclose(S[row], scipy.linalg.expm(t * Q).sum(axis=1), atol=1e-10)
    assert (S >= 0.0).all() and (S <= 1.0).all()


def test_principal_pair_consistency(tr5):
    left = principal_left_eigenvector(tr5)
    right = principal_right_eigenvector(tr5)
    assert left.decay_rate == pytest.approx(right.decay_rate, abs=1e-8)
    assert left.vector.sum() == pytest.approx(1.0)
    assert right.vector.max() == pytest.approx(1.0)
    assert (left.vector >= 0.0).all() and (right.vector >= 0.0).all()
    # residual certificate: nu Q = -lambda0 nu within the reported l1 error
    gap = left.vector @ tr5.Q.toarray() + left.decay_rate * left.vector
    assert np.abs(gap).sum() <= max(left.residual_l1, 1e-11) * 1.01


def test_one_state_box_rate_is_total_exit_rate(bd_model):
    # from (1,1) every jump leaves the box, so lambda0 is the full jump rate
    tr = build_truncation(bd_model, 1)
    res = principal_left_eigenvector(tr)
    assert res.decay_rate == pytest.approx(LAMBDA0_BOX1, abs=1e-9)
    assert res.vector == pytest.approx([1.0])


def test_reference_decay_rate_frozen(bd_model, tr12):
    res = principal_left_eigenvector(tr12)
    assert res.decay_rate == pytest.approx(LAMBDA0_BOX12, abs=5e-7)


def test_auto_box_reaches_mass_criterion(bd_model):
    box = auto_box_size(bd_model)
    assert box == 12
    tr = build_truncation(bd_model, box)
    res = principal_left_eigenvector(tr)
    shell = (tr.states > 0.9 * box).any(axis=1)
    assert float(res.vector[shell].sum()) < 1e-6


def test_reducible_truncation_is_named(bd_model):
    # a pure death chain has no returning path; the error names the block
    dead = BDModel.from_callables(
        2,
        birth=lambda s: np.zeros_like(s, dtype=float),
        death=lambda s: np.ones_like(s, dtype=float),
        name="pure_death",
    )
    tr = build_truncation(dead, 3)
    with pytest.raises(ValueError, match="reducible"):
        principal_left_eigenvector(tr)
