import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from relham.dynamics import IntegratorConfig, run
from relham.energy import LagrangianState, ModelSpec, eval_energy, force
from relham.measure import build_reference
from relham.relative import (_sums, centered_distance, default_tolerance, lower_bound_certificates, pp_constants,
                             relative_energies, relative_hamiltonian_monitor, relative_report, relative_work_rate,
                             sticky_correction)
from strategies import models, monotone, power_law_models, velocities

B = ModelSpec.pressureless()
A = ModelSpec.power_law(0.5, 1.5, 2.0)


def pairs(min_n=2, max_n=10):
    return st.integers(min_n, max_n).flatmap(
        lambda n: st.tuples(monotone(n), velocities(n), monotone(n), velocities(n)))


@given(pairs(), models)
def test_relative_energies_are_nonnegative(data, model):
    eta, v, etab, vb = data
    ref = build_reference(eta.size)
    rep = relative_energies(LagrangianState(eta, v), LagrangianState(etab, vb), ref, model)
    for part in (rep.K_rel, rep.Ew_rel, rep.Er_rel, rep.Ea_rel):
        assert part >= -1e-12 * (1 + abs(rep.H_rel))


@given(st.integers(2, 10).flatmap(lambda n: st.tuples(monotone(n), velocities(n))), models)
def test_relative_hamiltonian_vanishes_on_the_diagonal(data, model):
    eta, v = data
    ref = build_reference(eta.size)
    s = LagrangianState(eta, v)
    assert relative_report(s, s, ref, model).H_rel == pytest.approx(0.0, abs=1e-14)


@given(pairs())
def test_pressureless_relative_energy_is_shifted_distance(data):
    eta, v, etab, vb = data
    ref = build_reference(eta.size)
    s, sb = LagrangianState(eta, v), LagrangianState(etab, vb)
    rep = relative_energies(s, sb, ref, B)
    assert rep.Er_rel == 0.0
    assert np.isclose(rep.H_rel, centered_distance(s, sb, ref), rtol=1e-10, atol=1e-13)


@given(pairs(max_n=8), power_law_models())
def test_relative_hamiltonian_equals_definition(data, model):
    # H[w] - H[s] - dH[s](w - s) written out with independent energy calls
    eta, v, etab, vb = data
    ref = build_reference(eta.size)
    s, sb = LagrangianState(eta, v), LagrangianState(etab, vb)
    hw, hs = eval_energy(s, ref, model), eval_energy(sb, ref, model)
    linear = -float(np.dot(force(sb, ref, model), eta - etab)) + float(np.dot(ref.masses * vb, v - vb))
    direct = hw.H - hs.H - linear
    rep = relative_energies(s, sb, ref, model)
    assert np.isclose(rep.H_rel, direct, rtol=1e-7, atol=1e-9 * (1 + abs(hw.H) + abs(hs.H)))


@given(st.integers(3, 10).flatmap(lambda n: st.tuples(
    monotone(n), velocities(n), monotone(n), st.lists(st.booleans(), min_size=n - 1, max_size=n - 1))))
def test_pressureless_work_rate_closed_form_matches_pair_sum(data):
    etab, vb, base, tie = data
    eta = base.copy()
    for k, t in enumerate(tie):
        if t:
            eta[k + 1] = eta[k]
    ref = build_reference(eta.size)
    s, sb = LagrangianState(eta, np.zeros_like(eta)), LagrangianState(etab, vb)
    general = -_sums(eta, s.velocities, etab, vb, ref, B)[4]
    assert np.isclose(relative_work_rate(s, sb, ref, B), general, rtol=1e-9, atol=1e-12)
    assert np.isclose(general, -sticky_correction(s, sb, ref), rtol=1e-9, atol=1e-12)


def test_sticky_correction_of_two_merged_particles():
    ref = build_reference(2)
    s = LagrangianState([0.3, 0.3], [0, 0])
    sb = LagrangianState([0.0, 1.0], [-1.0, 2.0])
    assert sticky_correction(s, sb, ref) == pytest.approx(0.5 * 0.25 * 3.0)


def test_work_rate_is_minus_time_derivative_along_exact_flows():
    ref = build_reference(12)
    x = ref.labels
    cfg = IntegratorConfig(dt=1e-4, t_end=0.2, output_stride=1)
    tw = run(LagrangianState(x + 0.02 * np.sin(np.pi * x), 0.05 * np.cos(2 * np.pi * x)), ref, A, cfg)
    ts = run(LagrangianState(x, 0.03 * np.sin(2 * np.pi * x)), ref, A, cfg)
    h = np.array([relative_energies(tw.state(k), ts.state(k), ref, A).H_rel for k in range(len(tw))])
    w = np.array([relative_work_rate(tw.state(k), ts.state(k), ref, A) for k in range(len(tw))])
    dh = (h[2:] - h[:-2]) / (2 * cfg.dt)
    assert np.max(np.abs(dh + w[1:-1])) < 1e-5 * (1 + np.max(np.abs(w)))


def test_strong_state_must_be_strictly_increasing():
    ref = build_reference(3)
    s = LagrangianState([0.0, 0.5, 1.0], [0, 0, 0])
    with pytest.raises(ValueError, match="strictly increasing"):
        relative_energies(s, LagrangianState([0.0, 0.5, 0.5], [0, 0, 0]), ref, B)
    with pytest.raises(ValueError, match="mismatched"):
        relative_energies(s, LagrangianState([0.0, 1.0], [0, 0]), ref, B)


def test_monitor_on_identical_trajectories_is_identically_zero():
    ref = build_reference(16)
    st0 = LagrangianState(ref.labels, 0.1 * np.sin(2 * np.pi * ref.labels))
    tr = run(st0, ref, A, IntegratorConfig(dt=1e-3, t_end=0.5, output_stride=10))
    mon = relative_hamiltonian_monitor(tr, tr, ref, A)
    assert np.all(mon.series("H_rel") == 0.0) and np.all(mon.residual == 0.0)
    assert mon.holds and mon.gronwall_holds


def test_monitor_residual_shrinks_at_second_order():
    ref = build_reference(16)
    x = ref.labels
    res = []
    for dt in (2e-3, 1e-3):
        cfg = IntegratorConfig(dt=dt, t_end=1.0, output_stride=1)
        tw = run(LagrangianState(x + 0.02 * np.sin(np.pi * x), 0.05 * np.cos(2 * np.pi * x)), ref, A, cfg)
        ts = run(LagrangianState(x, 0.03 * np.sin(2 * np.pi * x)), ref, A, cfg)
        mon = relative_hamiltonian_monitor(tw, ts, ref, A)
        assert mon.holds
        res.append(np.max(np.abs(mon.residual)))
    assert 3.0 < res[0] / res[1] < 5.0


def test_monitor_requires_common_grid():
    ref = build_reference(4)
    st0 = LagrangianState(ref.labels, np.zeros(4))
    a = run(st0, ref, B, IntegratorConfig(dt=1e-2, t_end=0.1, output_stride=1))
    b = run(st0, ref, B, IntegratorConfig(dt=1e-2, t_end=0.1, output_stride=2))
    with pytest.raises(ValueError, match="output grid"):
        relative_hamiltonian_monitor(a, b, ref, B)


def test_default_tolerance_scales_with_step():
    assert default_tolerance(1e-3, 10, np.array([1.0]), np.array([0.0])) == pytest.approx(10 * (1e-6 + 1e-2))


@given(pairs(3, 10), models)
def test_lower_bound_certificates_are_sound(data, model):
    eta, v, etab, vb = data
    ref = build_reference(eta.size)
    for c in lower_bound_certificates(LagrangianState(eta, v), LagrangianState(etab, vb), ref, model):
        assert c.satisfied, c


@given(pairs(3, 10), power_law_models())
def test_pointwise_estimates_hold(data, model):
    eta, v, etab, vb = data
    assume(np.all(np.diff(eta) > 0))
    ref = build_reference(eta.size)
    out = pp_constants(LagrangianState(eta, v), LagrangianState(etab, vb), ref, model, vb)
    assert out["ok"], out


def test_certificates_are_tight_at_zero_distance():
    ref = build_reference(6)
    s = LagrangianState(ref.labels, np.zeros(6))
    for c in lower_bound_certificates(s, s, ref, A):
        assert c.lhs == pytest.approx(0.0, abs=1e-14) and c.rhs == pytest.approx(0.0, abs=1e-14)
