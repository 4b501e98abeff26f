"""Three estimator routes, decay fits, and the convergence report."""

import numpy as np
import pytest

from qsdlab import EmpiricalMeasure, RngStream, TimeGrid, tv_distance
from qsdlab.qsd import (
    QSDEstimate,
    conditioned_mc,
    delta_measure,
    eta_profile,
    fit_decay_rate,
    fixed_point_gaps,
    fleming_viot,
    measure_to_vector,
    qsd_eigen_oracle,
    vector_to_measure,
)
from qsdlab.uniformization import principal_right_eigenvector


def test_delta_measure_point_mass():
    m = delta_measure((3, 4))
    assert m.atoms == {(3, 4): 1.0}
    assert m.is_normalized


def test_estimate_validation(eigen_estimate):
    m = eigen_estimate.measure
    with pytest.raises(ValueError, match="method"):
        QSDEstimate(measure=m, method="magic", lambda0=1.0, lambda0_ci=(0.9, 1.1))
    half = EmpiricalMeasure({(1, 1): 0.5})
    with pytest.raises(ValueError, match="normalized"):
        QSDEstimate(measure=half, method="eigen_oracle", lambda0=1.0, lambda0_ci=(0.9, 1.1))
    with pytest.raises(ValueError, match="bracket"):
        QSDEstimate(measure=m, method="eigen_oracle", lambda0=1.0, lambda0_ci=(1.2, 1.5))
    with pytest.raises(ValueError, match="bracket"):
        QSDEstimate(measure=m, method="eigen_oracle", lambda0=1.0, lambda0_ci=(-0.1, 1.5))


# -- eigenvector oracle -----------------------------------------------------


def test_eigen_oracle_reference_values(eigen_estimate):
    assert eigen_estimate.method == "eigen_oracle"
    assert eigen_estimate.lambda0 == pytest.approx(3.554641, abs=5e-7)
    assert eigen_estimate.diagnostics["box"] == 12
    assert eigen_estimate.lambda0_ci[1] - eigen_estimate.lambda0_ci[0] <= 1e-8
    header, rows = eigen_estimate.atom_table()
    assert header == ["coord_0", "coord_1", "weight"]
    assert len(rows) == 144
    assert sum(r[-1] for r in rows) == pytest.approx(1.0, abs=1e-9)


def test_one_state_box_collapses_to_point_mass(bd_model):
    est = qsd_eigen_oracle(bd_model, box=1)
    assert est.measure.atoms == {(1, 1): 1.0}
    # the decay rate of a one-state box is the total exit rate of (1, 1)
    assert est.lambda0 == pytest.approx(6.4, abs=1e-9)


def test_measure_vector_round_trip(eigen_estimate, tr12):
    vec = measure_to_vector(eigen_estimate.measure, tr12)
    assert vec.sum() == pytest.approx(1.0, abs=1e-12)
    back = vector_to_measure(vec, tr12)
    assert tv_distance(back, eigen_estimate.measure) <= 1e-12


def test_measure_outside_truncation_rejected(tr12):
    with pytest.raises(KeyError):
        measure_to_vector(EmpiricalMeasure({(50, 50): 1.0}), tr12)


def test_qsd_is_semigroup_fixed_point(eigen_estimate, tr12):
    gaps = fixed_point_gaps(tr12, eigen_estimate.measure)
    assert set(gaps) == {0.5, 1.0, 2.0}
    assert max(gaps.values()) <= 1e-8


def test_distant_measure_is_not_fixed(tr12):
    gaps = fixed_point_gaps(tr12, delta_measure((1, 1)))
    assert min(gaps.values()) > 0.1


# -- conditioned Monte Carlo ------------------------------------------------


def test_conditioned_curve_structure(bd_model):
    curve = conditioned_mc(bd_model, (2, 2), TimeGrid(0.0, 0.25, 5), 2000, RngStream(222))
    assert len(curve) == 5
    assert curve.survivors[0] == 2000
    assert (np.diff(curve.survivors) <= 0).all()
    for m in curve:
        assert m is None or m.is_normalized
    assert curve[0].atoms == {(2, 2): 1.0}
    k = curve.largest_reliable_index()
    assert k is not None and not curve.unreliable[k]


def test_conditioned_curve_truncates_at_extinction(bd_model):
    # from (1, 1) with a long horizon the survivor pool empties
    curve = conditioned_mc(bd_model, (1, 1), TimeGrid(0.0, 1.0, 6), 1000, RngStream(123))
    assert curve.truncated_at is not None
    k = curve.truncated_at
    assert curve.survivors[k:].tolist() == [0] * (6 - k)
    assert all(m is None for m in curve.measures[k:])
    assert all(m is not None for m in curve.measures[:k])
    assert curve.unreliable[k:].all()


def test_conditioned_mc_rejects_tiny_batches(bd_model):
    with pytest.raises(ValueError, match="1000"):
        conditioned_mc(bd_model, (2, 2), TimeGrid(0.0, 0.5, 3), 999, RngStream(1))


# -- Fleming-Viot -----------------------------------------------------------


@pytest.fixture(scope="module")
def fv_estimate(bd_model):
    return fleming_viot(bd_model, (2, 2), 150, 2.0, RngStream(321))


def test_fleming_viot_agrees_with_oracle(fv_estimate, eigen_estimate):
    assert fv_estimate.method == "fleming_viot"
    assert fv_estimate.measure.is_normalized
    assert fv_estimate.diagnostics["resampling_events"] > 0
    assert fv_estimate.lambda0_ci[0] <= fv_estimate.lambda0 <= fv_estimate.lambda0_ci[1]
    assert 3.0 <= fv_estimate.lambda0 <= 4.2
    assert tv_distance(fv_estimate.measure, eigen_estimate.measure) <= 0.15


def test_fleming_viot_is_seed_deterministic(bd_model, fv_estimate):
    again = fleming_viot(bd_model, (2, 2), 150, 2.0, RngStream(321))
    assert again.lambda0 == fv_estimate.lambda0
    assert again.measure.atoms == fv_estimate.measure.atoms


def test_fleming_viot_guards(bd_model):
    with pytest.raises(ValueError, match="100"):
        fleming_viot(bd_model, (2, 2), 99, 1.0, RngStream(1))
    with pytest.raises(ValueError, match="absorbed"):
        fleming_viot(bd_model, (0, 3), 150, 1.0, RngStream(1))
    with pytest.raises(ValueError, match="positive"):
        fleming_viot(bd_model, (2, 2), 150, 0.0, RngStream(1))


# -- decay-rate fitting -----------------------------------------------------


def test_fit_recovers_exact_exponential():
    t = np.linspace(0.0, 5.0, 26)
    fit = fit_decay_rate(t, 3.0 * np.exp(-0.7 * t))
    assert fit.rate == pytest.approx(0.7, rel=1e-9)
    assert fit.C == pytest.approx(3.0, rel=1e-9)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
    assert fit.slope_se == pytest.approx(0.0, abs=1e-9)
    assert fit.rate_ci[0] <= 0.7 <= fit.rate_ci[1]
    # auto window skips the 0.8*max head and the 10*floor tail
    assert fit.window == (pytest.approx(0.4), pytest.approx(1.6))
    assert fit.n_points == 7


def test_explicit_window_overrides_selection():
    t = np.linspace(0.0, 5.0, 26)
    fit = fit_decay_rate(t, 3.0 * np.exp(-0.7 * t), window=(1.0, 4.0))
    assert fit.window == (pytest.approx(1.0), pytest.approx(4.0))
    assert fit.n_points == 16
    assert fit.rate == pytest.approx(0.7, rel=1e-9)


def test_fit_failure_modes():
    t = np.linspace(0.0, 1.0, 10)
    with pytest.raises(ValueError, match="insufficient decay"):
        fit_decay_rate(t, np.ones(10))
    with pytest.raises(ValueError, match="positive values"):
        fit_decay_rate(t, np.zeros(10))
    with pytest.raises(ValueError, match="equal-length"):
        fit_decay_rate(t, np.ones(5))
    with pytest.raises(ValueError, match="noise_floor"):
        fit_decay_rate(t, np.exp(-t), noise_floor=0.0)
    with pytest.raises(ValueError, match="misses the grid"):
        fit_decay_rate(t, np.exp(-t), window=(10.0, 11.0))
    with pytest.raises(ValueError, match="usable points"):
        fit_decay_rate(np.linspace(0.0, 5.0, 26), 3.0 * np.exp(-0.7 * np.linspace(0.0, 5.0, 26)),
                       window=(0.0, 0.6))


# -- convergence report -----------------------------------------------------


def test_report_starts_at_full_separation(small_report):
    assert small_report.tv[0] == pytest.approx(2.0, abs=1e-12)
    assert small_report.tv[-1] < 0.3
    assert not small_report.truncated
    assert len(small_report.times) == 21


def test_report_rates_near_oracle(small_report, eigen_estimate):
    assert small_report.fit is not None
    assert small_report.survival_fit is not None
    assert small_report.lambda0 == small_report.survival_fit.rate
    assert abs(small_report.lambda0 - eigen_estimate.lambda0) / eigen_estimate.lambda0 < 0.15
    assert "rate_ci_boot" in small_report.meta
    assert "survival_rate_ci_boot" in small_report.meta
    assert len(small_report.meta["predicted_noise"]) == len(small_report.times)


def test_report_tables(small_report):
    header, rows = small_report.table()
    assert header == ["t", "tv", "survivors", "ci_lo", "ci_hi", "tv_half"]
    assert len(rows) == len(small_report.times)
    assert rows[0][5] == pytest.approx(0.5 * rows[0][1])
    sh, srows = small_report.survival_table()
    assert sh == ["t", "survivors_a", "survivors_b"]
    assert srows[0][1] == small_report.n_trajectories
    assert (small_report.tv_ci[:, 0] <= small_report.tv_ci[:, 1] + 1e-12).all()


def test_report_json_payload(small_report):
    payload = small_report.to_json_dict()
    assert payload["lambda0"] == small_report.survival_fit.rate
    assert payload["rate"] == small_report.fit.rate
    assert payload["n_trajectories"] == 3000
    assert payload["survival_fit"]["rate"] == small_report.survival_fit.rate


# -- eta profile ------------------------------------------------------------


def test_eta_profile_matches_right_eigenvector(bd_model, eigen_estimate, tr12):
    states = np.array([[1, 1], [2, 2], [0, 3]])
    prof = eta_profile(
        bd_model, states, np.linspace(0.0, 1.2, 13), 20000, RngStream(606),
        eigen_estimate.lambda0,
    )
    right = principal_right_eigenvector(tr12)
    nu = measure_to_vector(eigen_estimate.measure, tr12)
    nu_eta = float(nu @ right.vector)
    for row, state in ((0, (1, 1)), (1, (2, 2))):
        expected = right.vector[tr12.index_of(state)] / nu_eta
        assert prof.plateau[row] == pytest.approx(expected, rel=0.15)
    assert prof.plateau[2] == 0.0
    assert (np.abs(prof.drift[:2]) < 0.2).all()


def test_eta_profile_validations(bd_model):
    with pytest.raises(ValueError, match="nonnegative"):
        eta_profile(bd_model, [[1, 1]], np.linspace(0.0, 1.0, 5), 100, RngStream(1), -0.5)
    with pytest.raises(ValueError, match="3 points"):
        eta_profile(bd_model, [[1, 1]], np.array([0.0, 1.0]), 100, RngStream(1), 1.0)


def test_eta_profile_flags_wide_rate_interval(bd_model):
    wide = eta_profile(
        bd_model, [[1, 1]], np.linspace(0.0, 1.0, 5), 1000, RngStream(9),
        3.5, lambda0_ci=(2.5, 4.5),
    )
    assert len(wide.notes) == 1 and "uncertain" in wide.notes[0]
    narrow = eta_profile(
        bd_model, [[1, 1]], np.linspace(0.0, 1.0, 5), 1000, RngStream(9),
        3.5, lambda0_ci=(3.4, 3.6),
    )
    assert narrow.notes == ()
