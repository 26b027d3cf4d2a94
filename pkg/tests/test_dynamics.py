import numpy as np
import pytest

from headwalk.body import MODEL_A, MODEL_B, REFERENCE_STATES, BodyParams, ControlGains
from headwalk.dynamics import (ImpulseSingularity, IntegratorConfig, MassMatrixSingular,
                               StanceConfiguration, cart_derivative, continuous_dynamics,
                               flight_energy_trace, impulse_force, integrate, pd_torque,
                               simulate, toe_force)
from headwalk.linear import assemble, build

ZERO = ControlGains(*([0.0] * 12))


def test_toe_force_is_unilateral_spring_damper():
    g = ControlGains()
    assert toe_force(1.0, 0.0, g) == 0.0
    assert toe_force(0.999, 0.0, g) == pytest.approx(50.0)
    assert toe_force(0.999, -0.01, g) == pytest.approx(70.0)
    assert toe_force(0.999, 1.0, g) == 0.0


def test_pd_torque():
    assert pd_torque(0.1, -0.2, 10.0, 2.0) == pytest.approx(-0.6)
    assert pd_torque(0.3, 0.0, 10.0, 2.0, reference=0.3) == 0.0


def test_impulse_force_on_surrogate_mass():
    assert impulse_force(10.0, 0.0, 1.0, 1e-3) == pytest.approx(10000.0)
    with pytest.raises(ImpulseSingularity):
        impulse_force(0.0, 0.0, 1.0, 1e-3)


def test_upright_free_fall():
    # with every segment vertical and no control, everything falls at g
    qdd, act = continuous_dynamics(np.r_[0.0, 1.5, 0.0, 0.0, 0.0], np.zeros(5), MODEL_A,
                                   gains=ZERO, contact=False)
    assert np.allclose(qdd, [0.0, -9.81, 0.0, 0.0, 0.0], atol=1e-12)
    assert act.toe_force == 0.0


def test_collinear_point_masses_are_singular_in_flight():
    # upright, six horizontal coordinates drive five point masses
    with pytest.raises(MassMatrixSingular):
        continuous_dynamics(np.r_[0.0, 1.5, np.zeros(5)], np.zeros(7), MODEL_B,
                            gains=ZERO, contact=False)


@pytest.mark.parametrize("model", [MODEL_A, MODEL_B])
def test_upright_stance_leg_collapses_at_g(model):
    n = 4 + (2 if model.index else 0)
    q = np.zeros(n)
    q[1] = 1.0
    qdd, _ = continuous_dynamics(q, np.zeros(n), model, gains=ZERO)
    expected = np.zeros(n)
    expected[1] = -9.81
    assert np.allclose(qdd, expected, atol=1e-12)


@pytest.mark.parametrize("model", [MODEL_A, MODEL_B])
def test_unactuated_flight_conserves_energy(model):
    n = 5 + (2 if model.index else 0)
    rng = np.random.default_rng(1)
    q = np.r_[0.0, 1.2, rng.uniform(-0.3, 0.3, n - 2)]
    qd = rng.uniform(-1.0, 1.0, n)
    e = flight_energy_trace(q, qd, model, BodyParams(), ZERO, 1e-4, 2000)
    assert np.max(np.abs(np.diff(e))) < 1e-6


def test_section_state_round_trip():
    for model in (MODEL_A, MODEL_B):
        s = REFERENCE_STATES[model].constrained(model)
        back = StanceConfiguration.from_state(s, model).section_state()
        assert np.allclose(back.as_array(), s.as_array(), atol=1e-12)


def test_integrate_one_step():
    conf = StanceConfiguration.from_state(REFERENCE_STATES[MODEL_A], MODEL_A)
    new, ev = integrate(conf, since_impact=0.0)
    assert ev.dt == IntegratorConfig().dt_impact
    assert not ev.fall
    assert not np.array_equal(new.q, conf.q)
    _, ev = integrate(conf)
    assert ev.dt == IntegratorConfig().dt_normal


@pytest.mark.parametrize("model", [MODEL_A, MODEL_B])
def test_walks_from_reference_state(model):
    traj = simulate(REFERENCE_STATES[model], model, 5)
    assert traj.status == "ok" and traj.steps == 5
    assert len(traj.exchanges) == 5 and len(traj.sections) == 5
    for ex in traj.exchanges:
        assert ex.impact_energy < 0 < ex.impulse_energy
    # stride stays close to the published one
    assert abs(traj.sections[-1][0] / REFERENCE_STATES[model].theta - 1) < 0.3


def test_walker_without_control_falls():
    traj = simulate(REFERENCE_STATES[MODEL_A], MODEL_A, 5, gains=ZERO)
    assert traj.status != "ok" and traj.steps < 5


def test_simulation_is_deterministic():
    slopes = np.array([0.01, -0.02, 0.0])
    a = simulate(REFERENCE_STATES[MODEL_B], MODEL_B, 3, slopes)
    b = simulate(REFERENCE_STATES[MODEL_B], MODEL_B, 3, slopes)
    assert np.array_equal(a.rows, b.rows)


@pytest.mark.parametrize("model", [MODEL_A, MODEL_B])
def test_cart_equilibrium(model):
    n = 4 if model is MODEL_A else 8
    deriv, force = cart_derivative(np.zeros(n), 0.0, model)
    assert np.allclose(deriv, 0.0, atol=1e-12)
    assert force == pytest.approx(0.0, abs=1e-9)
    # instantaneous hip force per unit cart acceleration equals the linear feedthrough
    _, force = cart_derivative(np.zeros(n), 1.0, model)
    assert force == pytest.approx(assemble(build(model)).D_force, rel=1e-9)
