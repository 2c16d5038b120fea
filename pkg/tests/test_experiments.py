import math

import numpy as np
import pytest

from relham.energy import LagrangianState, ModelSpec
from relham.experiments import (ExperimentReport, HypothesisViolation, exp_friction_limit, exp_L2_stability,
                                exp_lower_bounds, exp_rarefaction, exp_relative_identity, exp_sticky_events,
                                exp_weak_strong_uniqueness, gradient_flow_reference, rarefaction_A,
                                random_monotone, two_body)
from relham.measure import build_reference

A = ModelSpec.power_law(0.5, 1.5, 2.0)


def test_random_monotone_is_strictly_increasing():
    eta = random_monotone(np.random.default_rng(0), 50)
    assert np.all(np.diff(eta) > 0)


def test_two_body_helper_is_centred():
    ref, st = two_body(0.9)
    assert np.isclose(np.dot(ref.masses, st.positions), 0.0) and ref.total_mass == 1.0


def test_weak_strong_uniqueness_at_zero_horizon_is_trivial():
    rep = exp_weak_strong_uniqueness(A, n=8, horizon=0.0)
    assert rep.passed and rep.measured["sup_H_rel_dt"] == 0.0


def test_weak_strong_uniqueness_same_step_replays_exactly():
    rep = exp_weak_strong_uniqueness(A, n=8, horizon=0.2, refine=1)
    assert rep.measured["sup_H_rel_dt"] == 0.0


def test_relative_identity_on_identical_trajectories_is_zero():
    ref = build_reference(8)
    s = LagrangianState(ref.labels, 0.05 * np.cos(np.pi * ref.labels))
    rep = exp_relative_identity(A, n=8, horizon=0.2, weak=s, strong=s)
    assert rep.measured["max_abs_residual"] == 0.0 and rep.measured["max_H_rel"] == 0.0


def test_relative_identity_two_body_pressureless_converges():
    res = []
    for dt in (2e-3, 1e-3):
        weak = LagrangianState([-0.45, 0.45], [0.0, 0.0])
        strong = LagrangianState([-0.35, 0.35], [-0.05, 0.05])
        rep = exp_relative_identity(ModelSpec.pressureless(), n=2, horizon=2.0, dt=dt, weak=weak, strong=strong)
        res.append(rep.measured["max_abs_residual"])
    assert res[1] < 1e-6 and res[0] / res[1] > 3.0


def test_relative_identity_aborts_on_collision():
    ref = build_reference(4)
    weak = LagrangianState(ref.labels, -3 * (ref.labels - 0.5))
    with pytest.raises(HypothesisViolation, match="collision"):
        exp_relative_identity(ModelSpec.pressureless(), n=4, horizon=1.0, weak=weak,
                              strong=LagrangianState(ref.labels, np.zeros(4)))


def test_rarefaction_without_perturbation_is_trivial():
    model = ModelSpec.power_law(0.5, 1.5, 2.0, kappa_a=0.1)
    rep = exp_rarefaction(model, n=8, horizon=0.5, amp=0.0)
    assert rep.passed and rep.measured["H_rel0"] == 0.0 and rep.measured["decay_integral"] == 0.0


def test_rarefaction_aborts_when_strong_velocity_stops_increasing():
    with pytest.raises(HypothesisViolation, match="no longer increasing"):
        exp_rarefaction(ModelSpec.power_law(0.5, 1.5, 2.0, kappa_a=3.0), n=8, horizon=3.0)


def test_rarefaction_rejects_unsuitable_models():
    with pytest.raises(ValueError):
        exp_rarefaction(ModelSpec.pressureless(), n=8)
    with pytest.raises(ValueError):
        exp_rarefaction(ModelSpec.power_law(0.5, 2.5), n=8)


def test_rarefaction_rate_matches_independent_formula():
    x = np.linspace(0.05, 0.95, 10)
    eta = x ** 1.5 + x
    etab = 2 * x
    vb = 0.5 * x + x ** 2
    for model in (A, ModelSpec.power_law(-0.5, 1.2), ModelSpec.power_law(0.8, 1.9, 1.5)):
        got, ell = rarefaction_A(model, eta, etab, vb, x)
        lip = max(np.diff(eta) / np.diff(x))
        lipb = max(np.diff(etab) / np.diff(x))
        ell_ref = min(np.diff(vb) / np.diff(x))
        factors = [2 - model.p, 2 - model.q] + ([model.gamma + 1] if model.gamma else [])
        assert math.isclose(ell, ell_ref)
        assert math.isclose(got, min(factors) * ell_ref / (lip + lipb))


def test_l2_stability_short_runs():
    assert exp_L2_stability(n=16, horizon=2.0).passed
    rep = exp_L2_stability(n=16, horizon=6.0, with_collision=True)
    assert rep.passed and rep.measured["pre_merge_max_correction"] == 0.0
    assert rep.measured["max_H_rel"] > rep.measured["H_rel0"]


def test_collision_data_require_strong_flow_to_stay_monotone():
    from relham.experiments import l2_initial_data
    with pytest.raises(ValueError):
        l2_initial_data(8, True, beta=1.2)


def test_friction_limit_mechanics_on_coarse_sweep():
    rep = exp_friction_limit((0.2, 0.1), n=8, s_end=0.5, dt_factor=0.05, resolution_check=False)
    assert isinstance(rep, ExperimentReport)
    assert rep.measured["sup_distance"][1] < rep.measured["sup_distance"][0]


def test_gradient_flow_reference_is_accurate_for_two_bodies():
    ref, st = two_body(1.0)
    s = np.linspace(0, 2, 5)
    out = gradient_flow_reference(st.positions, ref, ModelSpec.pressureless(), 2.0, s)
    # separation relaxes as d' = -(d - 1/2) * 2 w = -(d - 1/2)
    assert np.allclose(out[:, 1] - out[:, 0], 0.5 + 0.5 * np.exp(-s), atol=1e-10)


def test_sticky_events_and_bounds_small():
    assert exp_sticky_events(n_events=50).passed
    rep = exp_lower_bounds(n_pairs=20, n=6)
    assert rep.passed and rep.measured["violations"] == 0


def test_summary_is_plain_data():
    rep = exp_sticky_events(n_events=5)
    summary = rep.summary()
    assert summary["passed"] is True and isinstance(summary["measured"]["events"], int)
