"""Multitype chain: rates, slice statistics, and the series drift pair."""

import math

import numpy as np
import pytest
from scipy.special import zeta

import qsdlab.birth_death as bd
from qsdlab import BDModel, RngStream, build_truncation
from qsdlab.uniformization import survival_matrix


# -- model construction and rates -------------------------------------------


def test_lv_rates_closed_form(bd_model):
    states = np.array([[2, 3], [1, 1], [10, 4]])
    lam, mu, gamma, c = bd_model.lv
    assert np.allclose(bd_model.birth_percapita(states), lam + states @ gamma.T)
    assert np.allclose(bd_model.death_percapita(states), mu + states @ c.T)


def test_lv_shape_validation():
    with pytest.raises(ValueError):
        BDModel.lotka_volterra([1.0], [1.0], np.zeros((1, 1)), [[1.0]])  # d >= 2
    with pytest.raises(ValueError):
        BDModel.lotka_volterra([1, 1], [1, 1], [0.0, 0.0], np.eye(2))  # gamma matrix
    with pytest.raises(ValueError):
        BDModel.lotka_volterra([1, 1], [1, 1, 1], np.zeros((2, 2)), np.eye(2))
    with pytest.raises(ValueError):
        BDModel.lotka_volterra([1, -1], [1, 1], np.zeros((2, 2)), np.eye(2))


def test_callable_model_matches_lv_generator(bd_model):
    lam, mu, gamma, c = bd_model.lv
    clone = BDModel.from_callables(
        2,
        birth=lambda s: lam + s @ gamma.T,
        death=lambda s: mu + s @ c.T,
        name="lv_clone",
    )
    f = lambda n: float(np.atleast_2d(n)[:, 0] ** 2 + 3 * np.atleast_2d(n)[:, 1])
    for n in ((1, 1), (4, 2), (7, 7)):
        assert bd.bd_generator_apply(clone, f, n) == pytest.approx(
            bd.bd_generator_apply(bd_model, f, n), rel=1e-12
        )


def test_generator_on_linear_function_is_net_drift(bd_model):
    # L applied to n -> n_1 is the birth-death flux of coordinate 1
    n = np.array([3, 5])
    bpc = bd_model.birth_percapita(n[None, :])[0]
    dpc = bd_model.death_percapita(n[None, :])[0]
    expected = n[0] * (bpc[0] - dpc[0])
    got = bd.bd_generator_apply(bd_model, lambda s: float(np.atleast_2d(s)[:, 0]), n)
    assert got == pytest.approx(expected, rel=1e-12)


def test_simulation_survival_matches_truncation_oracle(bd_model):
    # jitted Gillespie vs the exact semigroup; box escape above 30 is
    # negligible at this horizon so the truncated oracle is the truth
    tr = build_truncation(bd_model, 30)
    times = np.array([0.25, 0.5, 1.0])
    S = survival_matrix(tr, times)
    n = 4000
    taus = bd_model.sample_absorption_times((2, 2), n, 1.0, 10**7, RngStream(99))
    for row, t in enumerate(times):
        p_exact = S[row, tr.index_of((2, 2))]
        p_hat = float((taus > t).mean())
        sigma = math.sqrt(p_exact * (1.0 - p_exact) / n)
        assert abs(p_hat - p_exact) <= 4.0 * sigma + 1e-3


# -- slice statistics -------------------------------------------------------


def test_slice_enumeration_complete():
    for k, d in ((5, 2), (7, 3), (4, 4)):
        block = np.concatenate(list(bd.simplex_slice_chunks(k, d)), axis=0)
        assert block.shape == (math.comb(k - 1, d - 1), d)
        assert (block >= 1).all()
        assert (block.sum(axis=1) == k).all()
        assert len({tuple(r) for r in block}) == block.shape[0]


def test_dbar_dunder_by_direct_scan(bd_model):
    # recompute the slice extremes from raw rates, independent of the
    # chunked path
    k = 9
    states = np.concatenate(list(bd.simplex_slice_chunks(k, 2)), axis=0)
    bpc = bd_model.birth_percapita(states)
    dpc = bd_model.death_percapita(states)
    ones = states == 1
    dbar = k * (dpc * ones).sum(axis=1).max()
    dunder = (states * (dpc * ~ones - bpc)).sum(axis=1).min()
    got_bar, got_under = bd.dbar_dunder(bd_model, k)
    assert got_bar == pytest.approx(float(dbar))
    assert got_under == pytest.approx(float(dunder))


def test_closed_form_bounds_bracket_enumeration(bd_model):
    for k in (6, 20, 60):
        exact_bar, exact_under = bd.dbar_dunder(bd_model, k)
        bound_bar, bound_under = bd.dbar_dunder_bounds(bd_model, k)
        assert bound_bar >= exact_bar - 1e-9
        assert bound_under <= exact_under + 1e-9


def test_budget_exceeded_needs_lv():
    generic = BDModel.from_callables(
        2,
        birth=lambda s: np.ones_like(s, dtype=float),
        death=lambda s: np.asarray(s, dtype=float),
    )
    with pytest.raises(ValueError, match="budget"):
        bd.dbar_dunder(generic, 50, budget=10)


def test_assumption_certificate_reference(bd_model):
    cert = bd.check_assumption_PNM(bd_model, 0.5, (2, 60))
    assert cert.holds
    assert cert.witnesses["eta"] == 0.5
    assert cert.qualifier == "exact-enumeration"


def test_assumption_fails_for_absurd_eta(bd_model):
    cert = bd.check_assumption_PNM(bd_model, 1e6, (2, 60))
    assert not cert.holds
    assert cert.counterexamples


def test_auto_eta_picks_half(bd_model):
    eta, cert = bd.auto_select_eta(bd_model, (2, 60))
    assert eta == 0.5
    assert cert.holds


# -- series pair ------------------------------------------------------------


def test_V_is_partial_power_sum(bd_params):
    for total in (2, 4, 17):
        brute = sum(k ** -bd_params.alpha for k in range(1, total + 1))
        state = np.array([1, total - 1])
        assert bd.lyapunov_V(bd_params, state) == pytest.approx(brute, rel=1e-12)


def test_phi_is_tail_sum_with_integral_bracket(bd_params):
    beta = bd_params.beta
    for total in (2, 10, 40):
        state = np.array([1, total - 1])
        val = bd.lyapunov_phi(bd_params, state)
        partial = sum(k ** -beta for k in range(total + 1, total + 20001))
        # integral bracket on the remainder past the partial sum
        lo = (total + 20001) ** (1.0 - beta) / (beta - 1.0)
        hi = (total + 20000) ** (1.0 - beta) / (beta - 1.0)
        assert partial + lo <= val + 1e-12
        assert val <= partial + hi + 1e-12
        assert val == pytest.approx(float(zeta(beta, total + 1)))


def test_pair_vanishes_on_absorption(bd_params):
    dead = np.array([[0, 3], [2, 0]])
    assert np.all(bd.lyapunov_V(bd_params, dead) == 0.0)
    assert np.all(bd.lyapunov_phi(bd_params, dead) == 0.0)


def test_V_bounded_increasing_phi_decreasing(bd_params):
    totals = np.arange(1, 400)
    states = np.stack([totals, np.ones_like(totals)], axis=1)
    V = bd.lyapunov_V(bd_params, states)
    phi = bd.lyapunov_phi(bd_params, states)
    assert (np.diff(V) > 0.0).all()
    assert (np.diff(phi) < 0.0).all()
    assert V[-1] < zeta(bd_params.alpha, 1.0)  # series cap
    assert (np.diff(V / phi) > 0.0).all()  # ratio escapes


def test_closed_form_images_match_generator(bd_model, bd_params):
    states = np.array([[1, 1], [2, 5], [9, 3], [1, 14]])
    LV, Lphi = bd.bd_pair_images(bd_model, bd_params, states)
    fV = lambda n: float(bd.lyapunov_V(bd_params, np.atleast_2d(n))[0])
    fphi = lambda n: float(bd.lyapunov_phi(bd_params, np.atleast_2d(n))[0])
    for j, n in enumerate(states):
        assert LV[j] == pytest.approx(bd.bd_generator_apply(bd_model, fV, n), rel=1e-10)
        assert Lphi[j] == pytest.approx(bd.bd_generator_apply(bd_model, fphi, n), rel=1e-10)


def test_selected_params_satisfy_their_margin(bd_model, bd_params):
    assert bd_params.alpha == pytest.approx(1.0 + bd_params.eta / 2.0)
    assert bd_params.epsilon == pytest.approx(
        bd_params.eta / (2.0 * (bd_params.beta - 1.0))
    )
    assert bd_params.k_star is not None and bd_params.k_star <= 30
    for k in range(bd_params.k_star, 61):
        assert bd.lphi_lower_bound(bd_model, bd_params, k) >= 0.0


def test_selection_rejects_failing_eta(bd_model):
    with pytest.raises(ValueError, match="death-domination"):
        bd.select_bd_params(bd_model, k_check=40, eta=1e6)


def test_params_validation():
    with pytest.raises(ValueError):
        bd.BDLyapunovParams(alpha=1.0, beta=2.0, epsilon=0.1, eta=0.5)
    with pytest.raises(ValueError):
        bd.BDLyapunovParams(alpha=1.2, beta=2.0, epsilon=0.0, eta=0.5)
