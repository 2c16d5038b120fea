import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from relham.energy import (InadmissibleStateError, LagrangianState, ModelSpec, appendix_constants,
                           check_admissible, eval_energy, fd_oracle_force, force, lipschitz, potential_longdouble,
                           potential_parts, pressure_force)
from relham.measure import build_reference
from strategies import models, monotone, power_law_models, velocities


@pytest.mark.parametrize("kwargs, match", [
    ({"p": 0.0, "q": 2.0}, "p=0.0"),
    ({"p": -1.0, "q": 2.0}, "p=-1.0"),
    ({"p": 1.5, "q": 2.0}, "p=1.5"),
    ({"p": 0.5, "q": 0.5}, "q=0.5"),
    ({"p": 0.5, "q": 2.0, "gamma": 1.0}, "gamma"),
    ({"p": 0.5, "q": 2.0, "kappa_r": -1}, "kappa_r"),
])
def test_power_law_parameter_ranges(kwargs, match):
    with pytest.raises(ValueError, match=match):
        ModelSpec.power_law(**kwargs)


def test_pressureless_model_is_fixed():
    with pytest.raises(ValueError, match="fixes"):
        ModelSpec("B", p=0.5)
    with pytest.raises(ValueError, match="pressure"):
        ModelSpec("B", gamma=2.0)
    assert ModelSpec.pressureless().kernel_args() == (1.0, 2.0, 0.25, 0.5)


def test_two_body_energy_closed_form():
    ref = build_reference(2, domain=(-0.5, 0.5))
    d = 0.45
    e = eval_energy(LagrangianState([-d / 2, d / 2], [0.1, -0.1]), ref, ModelSpec.pressureless())
    kernel = -d / 4 + d * d / 4
    assert np.isclose(e.E_r + e.E_a, 2 * 0.25 * kernel)
    assert np.isclose(e.K, 0.5 * 0.01)
    assert np.isclose(e.H, e.K + 0.5 * kernel)


def test_two_body_force_is_linear_about_half():
    ref = build_reference(2, domain=(-0.5, 0.5))
    for d in (0.2, 0.5, 0.9, 1.7):
        f = force(LagrangianState([0.0, d], [0, 0]), ref, ModelSpec.pressureless())
        # relative acceleration equals -(d - 1/2)
        assert np.isclose((f[1] - f[0]) / 0.5, -(d - 0.5))


def test_reference_energy_vanishes_at_reference_map():
    ref = build_reference(10)
    model = ModelSpec.power_law(0.5, 1.5, 2.0)
    assert np.allclose(potential_parts(ref.labels.copy(), ref, model), 0.0)


@given(st.integers(2, 9).flatmap(lambda n: st.tuples(monotone(n), velocities(n))), models)
def test_force_matches_finite_difference_oracle(data, model):
    eta, v = data
    ref = build_reference(eta.size)
    st_ = LagrangianState(eta, v)
    f = force(st_, ref, model)
    assert np.allclose(f, fd_oracle_force(st_, ref, model), rtol=0, atol=1e-6 * (1 + np.max(np.abs(f))))


@given(st.integers(2, 12).flatmap(monotone), models)
def test_internal_forces_sum_to_zero_and_are_translation_invariant(eta, model):
    ref = build_reference(eta.size)
    f = force(LagrangianState(eta, 0 * eta), ref, model)
    assert abs(f.sum()) <= 1e-12 * (1 + np.abs(f).sum())
    g = force(LagrangianState(eta + 0.37, 0 * eta), ref, model)
    assert np.allclose(f, g, rtol=1e-9, atol=1e-12)


@given(st.integers(2, 9).flatmap(monotone), power_law_models(pressure=True))
def test_longdouble_potential_agrees_with_production_sums(eta, model):
    ref = build_reference(eta.size)
    prod = sum(potential_parts(eta, ref, model))
    assert np.isclose(float(potential_longdouble(eta, ref, model)), prod, rtol=1e-10, atol=1e-12)


def test_pressure_force_is_gradient_of_pressure_energy():
    ref = build_reference(6)
    model = ModelSpec.power_law(1.0, 2.0, 1.7, kappa_r=0.0, kappa_a=0.0)
    eta = np.array([0.0, 0.1, 0.35, 0.4, 0.7, 0.75])
    f = pressure_force(eta, ref, model.gamma)
    assert np.allclose(f, fd_oracle_force(LagrangianState(eta, 0 * eta), ref, model), atol=1e-8)


def test_admissibility_rules():
    ref = build_reference(3)
    a = ModelSpec.power_law(0.5, 1.5)
    b = ModelSpec.pressureless()
    touching = np.array([0.0, 0.5, 0.5])
    check_admissible(touching, ref, b)
    with pytest.raises(InadmissibleStateError) as info:
        check_admissible(touching, ref, a)
    assert info.value.cell == 1
    with pytest.raises(InadmissibleStateError):
        check_admissible(np.array([0.0, 0.6, 0.5]), ref, b)
    with pytest.raises(ValueError):
        check_admissible(np.zeros(4), ref, b)


def test_singular_repulsion_rejects_contact():
    ref = build_reference(3)
    with pytest.raises(InadmissibleStateError):
        force(LagrangianState([0.0, 0.5, 0.5], [0, 0, 0]), ref, ModelSpec.power_law(0.5, 1.5))


def test_oracle_rejects_bad_step():
    ref = build_reference(3)
    st_ = LagrangianState([0.0, 0.5, 0.5 + 1e-7], [0, 0, 0])
    with pytest.raises(ValueError):
        fd_oracle_force(st_, ref, ModelSpec.pressureless(), h=0.0)
    with pytest.raises(InadmissibleStateError):
        fd_oracle_force(st_, ref, ModelSpec.power_law(0.5, 1.5), h=1e-5)


def test_lipschitz_constants_from_difference_quotients():
    x = np.array([0.0, 1.0, 2.0])
    assert lipschitz(np.array([0.0, 2.0, 2.5]), x) == (2.0, 2.0)
    assert lipschitz(np.array([0.0, 0.0, 1.0]), x)[1] == np.inf


def test_appendix_constants_scaled_identity():
    ref = build_reference(16)
    model = ModelSpec.power_law(0.5, 1.5, 2.0)
    out = appendix_constants(LagrangianState(2 * ref.labels, 0 * ref.labels), ref, model)
    # specific volume doubles in every cell; the first and last half cells are not counted
    assert np.isclose(out["lhs3"], 15 / 16)
    assert out["ok1"] and out["ok2"] and out["ok3"]


@given(st.integers(3, 10).flatmap(monotone), power_law_models(pressure=True))
def test_appendix_bounds_hold_for_random_states(eta, model):
    ref = build_reference(eta.size)
    assume(np.all(np.diff(eta) > 0))
    out = appendix_constants(LagrangianState(eta, 0 * eta), ref, model)
    assert out["ok1"] and out["ok2"] and out["ok3"]


def test_two_body_unit_separation_force_value():
    ref = build_reference(2, domain=(-0.5, 0.5))
    st_ = LagrangianState([0.0, 1.0], [0.0, 0.0])
    f = force(st_, ref, ModelSpec.pressureless())
    assert np.allclose(f, [0.125, -0.125])
    assert np.allclose(fd_oracle_force(st_, ref, ModelSpec.pressureless()), f, atol=1e-12)
