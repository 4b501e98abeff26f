"""Model-agnostic drift checks and the integrated ratio identity."""

import numpy as np
import pytest

import qsdlab.birth_death as bd
from qsdlab import CheckCertificate, LyapunovPair, RngStream, build_truncation
from qsdlab.lyapunov import (
    check_admissible,
    check_condition_a,
    check_condition_b,
    check_nonlinear_inequality,
    verify_dynkin_identity,
)


def slices(k_lo, k_hi, d=2):
    blocks = []
    levels = []
    for k in range(k_lo, k_hi + 1):
        for block in bd.simplex_slice_chunks(k, d):
            blocks.append(block)
            levels.append(np.full(block.shape[0], k))
    return np.concatenate(blocks), np.concatenate(levels)


@pytest.fixture(scope="module")
def domain():
    return slices(2, 60)


# -- certificates -----------------------------------------------------------


def test_certificate_verdict_validation():
    with pytest.raises(ValueError):
        CheckCertificate(check="x", verdict="maybe", witnesses={})
    with pytest.raises(ValueError):
        CheckCertificate(check="x", verdict="violated", witnesses={})
    cert = CheckCertificate(check="x", verdict="holds", witnesses={"a": 1})
    assert cert.holds


def test_certificate_json_round_trip(tmp_path):
    cert = CheckCertificate(
        check="probe",
        verdict="violated",
        witnesses={"worst": np.float64(2.5), "count": np.int64(3)},
        counterexamples=({"state": [1, 2]},),
        domain="toy",
        seed=11,
        qualifier="empirical",
    )
    path = tmp_path / "cert.json"
    cert.write_json(path)
    import json

    back = CheckCertificate.from_json_dict(json.loads(path.read_text()))
    assert back.check == "probe" and not back.holds
    assert back.witnesses == {"worst": 2.5, "count": 3}
    assert back.seed == 11


# -- admissibility ----------------------------------------------------------


def test_reference_pair_admissible(bd_pair):
    ks = np.arange(1, 61)
    ray = np.stack([ks, ks], axis=1)
    cert = check_admissible(bd_pair, ray)
    assert cert.holds
    assert cert.witnesses["ratio_tail_mean"] >= 10.0 * cert.witnesses["ratio_head_mean"]


def test_degenerate_pair_not_admissible(bd_pair):
    # V = phi has a flat ratio, so the escape requirement must fail
    flat = LyapunovPair(
        name="flat",
        epsilon=bd_pair.epsilon,
        V=bd_pair.phi,
        phi=bd_pair.phi,
        LV=bd_pair.Lphi,
        Lphi=bd_pair.Lphi,
    )
    ks = np.arange(1, 61)
    cert = check_admissible(flat, np.stack([ks, ks], axis=1))
    assert not cert.holds
    assert ("ratio_escapes",) in cert.counterexamples


def test_non_escaping_sample_rejected(bd_pair):
    stuck = np.tile(np.array([[3, 3]]), (40, 1))
    with pytest.raises(ValueError, match="escape"):
        check_admissible(bd_pair, stuck)


def test_exit_paths_must_vanish(bd_pair):
    ks = np.arange(1, 61)
    ray = np.stack([ks, ks], axis=1)
    good = [np.array([0.8, 0.2, 0.0, 0.0]), np.array([1.0, 0.0])]
    assert check_admissible(bd_pair, ray, exit_value_paths=good).holds
    bad = [np.array([0.8, 0.0, 0.3])]  # resurrects after hitting zero
    cert = check_admissible(bd_pair, ray, exit_value_paths=bad)
    assert not cert.holds


# -- localized conditions ---------------------------------------------------


def test_condition_a_reference(bd_pair, domain):
    states, levels = domain
    cert = check_condition_a(bd_pair, states, levels)
    assert cert.holds
    assert cert.witnesses["n_star"] <= 30
    assert cert.witnesses["max_neg_Lphi_outside"] <= 1e-9
    assert cert.witnesses["C"] >= 0.0


def test_condition_a_trivial_for_constant_phi(bd_model, bd_pair, domain):
    # Lphi of a constant vanishes identically, so the condition holds with C=0
    states, levels = domain
    const = LyapunovPair(
        name="const_phi",
        epsilon=bd_pair.epsilon,
        V=bd_pair.V,
        phi=lambda s: np.ones(np.atleast_2d(s).shape[0]),
        LV=bd_pair.LV,
        Lphi=lambda s: np.zeros(np.atleast_2d(s).shape[0]),
    )
    cert = check_condition_a(const, states, levels)
    assert cert.holds
    assert cert.witnesses["C"] == 0.0


def _decaying_pair(bd_pair):
    # Lphi = -phi makes -Lphi positive on every state, arbitrarily far out
    return LyapunovPair(
        name="decaying_phi",
        epsilon=bd_pair.epsilon,
        V=bd_pair.V,
        phi=bd_pair.phi,
        LV=bd_pair.LV,
        Lphi=lambda s: -np.asarray(bd_pair.phi(s), dtype=float),
    )


def test_condition_a_violated_far_out_is_reported(bd_pair, domain):
    states, levels = domain
    cert = check_condition_a(_decaying_pair(bd_pair), states, levels)
    assert not cert.holds
    assert cert.counterexamples
    assert cert.witnesses["n_star"] > cert.witnesses["interior_cap"]


def test_violation_survives_domain_growth(bd_pair):
    # growing the checked domain must never erase a violation
    bad = _decaying_pair(bd_pair)
    for hi in (40, 60, 90):
        states, levels = slices(2, hi)
        assert not check_condition_a(bad, states, levels).holds


def test_condition_b_reference(bd_pair, domain):
    states, levels = domain
    cert = check_condition_b(bd_pair, states, levels)
    assert cert.holds
    w = cert.witnesses
    assert w["c_prime"] > 0.0 and w["c_double_prime"] >= 0.0
    assert w["max_drift_outside"] <= 1e-9
    # the certified constants dominate the drift on the whole domain
    lv = bd_pair.LV(states)
    phi = bd_pair.phi(states)
    pen = bd_pair.penalty(states)
    assert np.all(lv + w["c_prime"] * pen <= w["c_double_prime"] * phi + 1e-9)


def test_conditions_imply_nonlinear_inequality(bd_model, bd_pair, domain):
    # the implication the whole construction exists for: with (a) and (b)
    # certified, every sampled measure on the domain obeys the inequality
    states, _ = domain
    cert = check_nonlinear_inequality(
        bd_pair, states, RngStream(21), n_measures=200
    )
    assert cert.holds
    assert cert.witnesses["holder_ok"]
    assert not cert.counterexamples


def test_nonlinear_check_is_seed_deterministic(bd_pair, domain):
    states, _ = domain
    a = check_nonlinear_inequality(bd_pair, states, RngStream(33), n_measures=60)
    b = check_nonlinear_inequality(bd_pair, states, RngStream(33), n_measures=60)
    assert a.witnesses["A_min"] == b.witnesses["A_min"]
    assert a.witnesses["max_lhs"] == b.witnesses["max_lhs"]


# -- integrated identity ----------------------------------------------------


@pytest.fixture(scope="module")
def dynkin_setup(bd_model, bd_params):
    tr = build_truncation(bd_model, 15)
    V = np.asarray(bd.lyapunov_V(bd_params, tr.states), dtype=float)
    phi = np.asarray(bd.lyapunov_phi(bd_params, tr.states), dtype=float)
    return tr, V, phi


def test_dynkin_t0_is_exact(dynkin_setup):
    tr, V, phi = dynkin_setup
    res = verify_dynkin_identity(tr, V, phi, (2, 2), np.array([0.0]), quad_step=1e-2)
    assert res.max_abs_residual == 0.0


def test_dynkin_residual_small_on_exact_truncation(dynkin_setup):
    # the semigroup is the oracle; the only error left is the quadrature
    tr, V, phi = dynkin_setup
    t_grid = np.linspace(0.0, 2.0, 11)
    res = verify_dynkin_identity(tr, V, phi, (1, 1), t_grid, quad_step=2e-4)
    assert res.max_abs_residual <= 1e-8


def test_dynkin_halving_quarters_residual(dynkin_setup):
    tr, V, phi = dynkin_setup
    t_grid = np.linspace(0.0, 2.0, 11)
    r1 = verify_dynkin_identity(tr, V, phi, (2, 2), t_grid, quad_step=4e-3)
    r2 = verify_dynkin_identity(tr, V, phi, (2, 2), t_grid, quad_step=2e-3)
    ratio = r1.max_abs_residual / r2.max_abs_residual
    assert 3.5 <= ratio <= 4.5


def test_dynkin_grid_must_sit_on_lattice(dynkin_setup):
    tr, V, phi = dynkin_setup
    with pytest.raises(ValueError, match="multiple of quad_step"):
        verify_dynkin_identity(tr, V, phi, (2, 2), np.array([0.0015]), quad_step=1e-3)


def test_dynkin_rejects_nonpositive_phi(dynkin_setup):
    tr, V, phi = dynkin_setup
    bad = phi.copy()
    bad[0] = 0.0
    with pytest.raises(ValueError, match="positive"):
        verify_dynkin_identity(tr, V, bad, (2, 2), np.array([0.5]), quad_step=1e-3)
