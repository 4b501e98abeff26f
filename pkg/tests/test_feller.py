"""Diffusion profiles h and g, drift certificates, and the couplings."""

import numpy as np
import pytest

import qsdlab.feller as fl
from qsdlab import RngStream
from qsdlab.feller import FellerAssumptionParams, FellerModel


# -- model construction -----------------------------------------------------


def test_lv_model_defaults(feller_model):
    assert feller_model.dimension == 2
    np.testing.assert_allclose(feller_model.gamma, [2.0, 2.0])
    r, c = feller_model.lv
    np.testing.assert_allclose(r, [1.0, 1.0])
    np.testing.assert_allclose(c, np.eye(2))


def test_r_eval_closed_form(feller_model):
    states = np.array([[1.0, 2.0], [0.5, 0.5]])
    r, c = feller_model.lv
    np.testing.assert_allclose(
        feller_model.r_eval(states), r[None, :] - states @ c.T
    )


def test_is_absorbed_on_boundary(feller_model):
    flags = feller_model.is_absorbed([[1.0, 1.0], [0.0, 1.0], [1.0, -0.5]])
    assert flags.tolist() == [False, True, True]


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(r=[1.0], c=[[1.0]]),
        dict(r=[1.0, 1.0], c=np.eye(2), gamma=[2.0, 0.0]),
        dict(r=[1.0, 1.0], c=[[1.0, -0.1], [0.0, 1.0]]),
        dict(r=[1.0, 1.0], c=[[0.0, 0.1], [0.1, 1.0]]),
        dict(r=[1.0, 1.0], c=np.eye(2), dt=0.0),
        dict(r=[1.0, 1.0], c=np.eye(2), eps_abs=1.0),
    ],
)
def test_invalid_models_rejected(kwargs):
    with pytest.raises(ValueError):
        FellerModel.lotka_volterra(**kwargs)


def test_some_drift_required():
    with pytest.raises(ValueError, match="growth-rate"):
        FellerModel(name="none", dimension=2, gamma=np.array([2.0, 2.0]))


def test_with_dt_returns_copy(feller_model):
    fast = feller_model.with_dt(1e-4)
    assert fast.dt == 1e-4 and feller_model.dt == 1e-3
    np.testing.assert_allclose(fast.gamma, feller_model.gamma)


def test_growth_rate_shape_checked():
    model = FellerModel.from_growth_rate(2, [2.0, 2.0], lambda s: s[:, :1])
    with pytest.raises(ValueError, match="shape"):
        model.r_eval([[1.0, 1.0]])


def test_json_round_trip(feller_model):
    back = FellerModel.from_json_dict(feller_model.to_json_dict())
    assert back.dimension == feller_model.dimension
    np.testing.assert_allclose(back.lv[0], feller_model.lv[0])
    np.testing.assert_allclose(back.lv[1], feller_model.lv[1])
    assert back.dt == feller_model.dt


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(a=0.0, eta=0.5, B_a=1.0, C_a=1.0, D_a=1.0),
        dict(a=1.0, eta=1.0, B_a=2.0, C_a=1.0, D_a=1.0),
        dict(a=1.0, eta=0.5, B_a=1.0, C_a=1.0, D_a=1.0),
        dict(a=1.0, eta=0.5, B_a=2.0, C_a=0.0, D_a=1.0),
        dict(a=1.0, eta=0.5, B_a=2.0, C_a=1.0, D_a=0.0),
    ],
)
def test_invalid_params_rejected(kwargs):
    with pytest.raises(ValueError):
        FellerAssumptionParams(**kwargs)


# -- selected constants -----------------------------------------------------


def test_selected_constants_frozen(feller_model, feller_setup):
    params, mc, beta, _, g, eps = feller_setup
    assert params.a == pytest.approx(1.5625, abs=1e-12)
    assert params.B_a == pytest.approx(3.125, abs=1e-12)
    assert params.C_a == pytest.approx(0.225, abs=1e-12)
    assert params.D_a == pytest.approx(16.95, rel=1e-12)
    assert mc.M == pytest.approx(1e-3, abs=1e-12)
    assert beta == pytest.approx(35.216456, abs=1e-5)
    assert eps == pytest.approx(3.5139822e-3, rel=1e-6)
    assert g.gamma_exp == pytest.approx(0.55255603, abs=1e-7)
    # the exponent is exactly the selection formula applied to (M, M', C_a)
    assert beta == pytest.approx(
        mc.M + max(2.0, params.a * mc.M_prime) / params.C_a + 1.0, rel=1e-12
    )


def test_epsilon_window(feller_model, feller_setup):
    params, _, beta, _, _, eps = feller_setup
    d = feller_model.dimension
    assert beta * d * eps < 0.5 * params.eta
    assert eps <= 0.25 / d


# -- the decreasing profile h -----------------------------------------------


def test_h_junctions_flush(feller_setup):
    gaps = feller_setup[3].junction_mismatches()
    assert gaps.shape == (3, 3)
    assert gaps.max() <= 1e-9


def test_h_cap_normalized_at_a(feller_setup):
    params, _, _, h = feller_setup[:4]
    assert h.value(np.array([params.a]))[0] == pytest.approx(1.0, abs=1e-12)


def test_h_shape(feller_setup):
    params, _, _, h = feller_setup[:4]
    rise = np.linspace(1e-3, 0.5 * params.a, 200)
    assert (h.d1(rise) > 0.0).all()
    fall = np.geomspace(params.a, 10.0 * params.B_a, 400)
    assert (h.d1(fall) <= 0.0).all()
    assert (h.d2(fall) >= 0.0).all()
    assert (h.value(np.geomspace(1e-3, 10.0 * params.B_a, 500)) > 0.0).all()


def test_h_tail_closed_form(feller_setup):
    params, _, beta, h = feller_setup[:4]
    assert h.value(np.array([2.0 * params.B_a]))[0] == pytest.approx(
        0.25**beta, rel=1e-12
    )


def test_h_ratios_match_derivatives(feller_setup):
    params, _, _, h = feller_setup[:4]
    xs = np.array(
        [0.25 * params.a, 0.75 * params.a, 0.5 * (params.a + params.B_a), 3.0 * params.B_a]
    )
    np.testing.assert_allclose(h.ratio1(xs), h.d1(xs) / h.value(xs), rtol=1e-9)
    np.testing.assert_allclose(h.ratio2(xs), h.d2(xs) / h.value(xs), rtol=1e-9)
    np.testing.assert_allclose(h.log_value(xs), np.log(h.value(xs)), rtol=1e-9)


def test_beta_below_threshold_rejected(feller_setup):
    params, mc = feller_setup[:2]
    with pytest.raises(ValueError, match="threshold"):
        fl.build_h_beta(params, 0.5 * mc.M, mc)


# -- the increasing concave g ------------------------------------------------


def test_g_junctions_flush(feller_setup):
    gaps = feller_setup[4].junction_mismatches()
    assert gaps.shape == (2, 3)
    assert gaps.max() <= 1e-9


def test_g_increasing_concave_vanishing(feller_setup):
    g = feller_setup[4]
    assert g.value(np.array([0.0]))[0] == 0.0
    assert g.value(np.array([1.0]))[0] == pytest.approx(1.0)
    xs = np.geomspace(1e-4, 50.0, 400)
    vals = g.value(xs)
    assert (np.diff(vals) > 0.0).all()
    assert (g.d2(xs) <= 1e-12).all()
    assert vals.max() < g.delta


def test_g_gamma_exp_window(feller_setup):
    with pytest.raises(ValueError, match="outside"):
        fl.build_g(feller_setup[0], gamma_exp=1.5)


# -- generator and the product pair -----------------------------------------


def _quad(s):
    s = np.ravel(s)
    return float(s[0] ** 2 + 3.0 * s[1])


def _quad_image(model, x):
    r, c = model.lv
    rx = r - c @ x
    return 2.0 * x[0] ** 2 * rx[0] + 3.0 * x[1] * rx[1] + model.gamma[0] * x[0]


def test_generator_matches_closed_form_on_quadratic(feller_model):
    x = np.array([1.5, 2.0])
    got = fl.feller_generator_apply(feller_model, _quad, x)
    assert got == pytest.approx(_quad_image(feller_model, x), rel=1e-4)


def test_generator_uses_exact_partials_when_exposed(feller_model):
    class Quad:
        def __call__(self, s):
            return _quad(s)

        def grad(self, s):
            return np.array([2.0 * s[0], 3.0])

        def hess_diag(self, s):
            return np.array([2.0, 0.0])

    x = np.array([1.5, 2.0])
    got = fl.feller_generator_apply(feller_model, Quad(), x)
    assert got == pytest.approx(_quad_image(feller_model, x), rel=1e-12)


def test_generator_rejects_boundary(feller_model):
    with pytest.raises(ValueError, match="boundary"):
        fl.feller_generator_apply(feller_model, _quad, np.array([1.0, 0.0]))


@pytest.fixture(scope="module")
def pair(feller_model, feller_setup):
    params, _, _, h, g, eps = feller_setup
    return fl.build_feller_pair(feller_model, params, h, g, eps)


def test_pair_vanishes_on_boundary(pair):
    states = np.array([[0.0, 1.0], [2.0, 0.0]])
    assert np.all(pair.V(states) == 0.0)
    assert np.all(pair.phi(states) == 0.0)
    assert np.all(pair.LV(states) == 0.0)
    assert np.all(pair.Lphi(states) == 0.0)


def test_pair_images_match_ito_generator(feller_model, feller_setup, pair):
    _, _, _, h, g, _ = feller_setup
    gamma = feller_model.gamma

    def V_fn(s):
        return float(np.prod(g.value(2.0 * np.ravel(s) / gamma)))

    def phi_fn(s):
        return float(np.prod(h.value(2.0 * np.ravel(s) / gamma)))

    for x in (np.array([0.6, 1.1]), np.array([1.3, 0.9])):
        lv = pair.LV(x[None, :])[0]
        lp = pair.Lphi(x[None, :])[0]
        assert lv == pytest.approx(
            fl.feller_generator_apply(feller_model, V_fn, x), rel=1e-3, abs=1e-5
        )
        assert lp == pytest.approx(
            fl.feller_generator_apply(feller_model, phi_fn, x), rel=1e-3, abs=1e-5
        )


# -- certificates -----------------------------------------------------------


def test_percapita_bounds_certified(feller_model, feller_setup):
    cert = fl.check_assumption_feller(feller_model, feller_setup[0])
    assert cert.holds
    assert cert.witnesses["sup_percapita_margin"] <= 1e-9
    assert cert.witnesses["closed_form_percapita_margin"] == pytest.approx(0.0, abs=1e-12)


def test_conditions_hold_outside_certified_box(feller_model, feller_setup):
    params, _, _, h, g, eps = feller_setup
    cert = fl.check_feller_conditions(feller_model, params, h, g, eps)
    assert cert.holds
    w = cert.witnesses
    assert w["n_star"] >= 1
    assert w["C_prime"] > 0.0
    assert w["min_margin_a_outside"] >= -1e-9
    assert w["max_margin_b_outside"] <= 1e-9
    assert len(w["box_lo_original_units"]) == feller_model.dimension


def test_conditions_reject_oversized_epsilon(feller_model, feller_setup):
    params, _, _, h, g, _ = feller_setup
    with pytest.raises(ValueError, match="eta/2"):
        fl.check_feller_conditions(feller_model, params, h, g, 0.1)


def test_shared_noise_domination(feller_model, feller_setup):
    cert = fl.coupled_comparison(
        feller_model, feller_setup[0], (1.0, 1.0), 20, 1.0, RngStream(77)
    )
    assert cert.holds
    assert cert.witnesses["worst_excess_linear"] <= 1e-12
    assert cert.witnesses["worst_excess_logistic"] <= 1e-12
    assert cert.witnesses["min_monotonicity_margin"] > 0.0


def test_survival_bounded_by_V(feller_model, feller_setup):
    cert = fl.survival_bound_check(
        feller_model, feller_setup[4], 0.5, [[0.05, 0.05], [0.1, 0.1]], 200, RngStream(88)
    )
    assert cert.holds
    assert cert.witnesses["p0"] > 0.0
    assert cert.witnesses["max_ci_width"] <= 0.3


# -- trajectory drivers -----------------------------------------------------


def test_single_step_reproducible(feller_model):
    x = np.array([1.0, 1.0])
    a = fl.simulate_feller_step(feller_model, x, 1e-3, RngStream(12))
    b = fl.simulate_feller_step(feller_model, x, 1e-3, RngStream(12))
    np.testing.assert_array_equal(a, b)
    assert a.shape == (2,)
    assert (a >= 0.0).all()


def test_absorption_times_censored_at_horizon(feller_model):
    taus = feller_model.sample_absorption_times(
        (0.05, 0.05), 40, 2.0, 10**6, RngStream(55)
    )
    assert taus.shape == (40,)
    finite = np.isfinite(taus)
    assert finite.any()
    assert (taus[finite] <= 2.0 + 1e-9).all()


def test_absorption_from_boundary_rejected(feller_model):
    with pytest.raises(ValueError, match="boundary"):
        feller_model.sample_absorption_times((0.0, 1.0), 4, 1.0, 100, RngStream(1))
