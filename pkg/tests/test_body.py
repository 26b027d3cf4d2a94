import math

import numpy as np
import pytest

from headwalk.body import (MODEL_A, MODEL_B, REFERENCE_STATES, BodyParams, ControlGains,
                           ModelKind, WalkerState, anthropometric_checks, forward_kinematics,
                           load_config, parse_key_values)


def test_upper_body_com_height_by_hand():
    # torso 45 kg at 0.375, neck 1 kg at 0.785, head 4 kg at 0.91, over 50 kg
    p = BodyParams()
    assert p.upper_com_height == pytest.approx(21.3 / 50)
    assert p.upper_mass * p.gravity * p.upper_com_height == pytest.approx(208.953)


def test_upper_inertia_by_hand():
    p = BodyParams()
    expected = 45 * 0.051**2 + 1 * 0.359**2 + 4 * 0.484**2
    assert p.upper_inertia == pytest.approx(expected)


def test_totals():
    p = BodyParams()
    assert p.total_mass == pytest.approx(80.0)
    assert p.standing_height == pytest.approx(1.91)


def test_defaults_are_valid_and_bad_values_are_reported():
    assert anthropometric_checks(BodyParams()) == []
    problems = anthropometric_checks(BodyParams(leg_com_distance=1.2, head_mass=0.0))
    assert "leg CoM beyond toe" in problems
    assert "non-positive mass: head_mass" in problems


def test_negative_gain_rejected():
    with pytest.raises(ValueError):
        ControlGains(hip_p=-1.0)


def test_mass_scaling_keeps_kinematic_gains():
    g = ControlGains().scaled(10.0)
    assert g.impulse_velocity == ControlGains().impulse_velocity
    assert g.hip_reference == ControlGains().hip_reference
    assert g.trunk_p == pytest.approx(3000.0)
    assert BodyParams().scaled(10.0).torso_mass == pytest.approx(450.0)


def test_model_parsing():
    assert ModelKind.parse("a") is MODEL_A
    assert ModelKind.parse("B") is MODEL_B
    with pytest.raises(ValueError):
        ModelKind.parse("c")


def test_state_round_trip_and_constraint():
    s = REFERENCE_STATES[MODEL_B]
    assert WalkerState.from_array(s.as_array()) == s
    c = s.constrained(MODEL_A)
    assert (c.gamma, c.beta, c.gamma_dot, c.beta_dot) == (s.alpha, s.alpha, s.alpha_dot,
                                                          s.alpha_dot)
    assert s.constrained(MODEL_B) == s
    with pytest.raises(ValueError):
        WalkerState.from_array(np.zeros(11))


def test_upright_kinematics():
    pts = {p.name: p for p in forward_kinematics(0.0, 1.0, 0.0, 0.0, 0.0, 0.0)}
    assert pts["head"].position == pytest.approx((0.0, 1.91))
    assert pts["torso"].position == pytest.approx((0.0, 1.375))
    assert pts["neck"].position == pytest.approx((0.0, 1.785))
    assert pts["stance_leg"].position == pytest.approx((0.0, 0.6))


def test_kinematic_velocities_match_finite_differences():
    q = np.array([0.2, 0.98, -0.3, 0.05, -0.1, 0.02])
    qd = np.array([1.1, -0.2, -2.0, 0.4, 0.7, -0.5])
    h = 1e-6
    up = forward_kinematics(*(q + h * qd))
    dn = forward_kinematics(*(q - h * qd))
    mid = forward_kinematics(*q, rates=tuple(qd))
    for a, b, m in zip(up, dn, mid):
        fd = (np.array(a.position) - np.array(b.position)) / (2 * h)
        assert np.allclose(fd, m.velocity, atol=1e-7)


def test_key_value_parsing(tmp_path):
    assert parse_key_values("a = 1  # note\n\n# skip\nb=2") == {"a": "1", "b": "2"}
    with pytest.raises(ValueError, match="expected"):
        parse_key_values("no equals sign")
    path = tmp_path / "walker.cfg"
    path.write_text("torso_mass = 50\nhip_p = 12\n")
    params, gains = load_config(path, BodyParams(), ControlGains())
    assert params.torso_mass == 50.0 and gains.hip_p == 12.0
    path.write_text("wings = 2\n")
    with pytest.raises(ValueError, match="unknown key"):
        load_config(path, BodyParams(), ControlGains())
    path.write_text("hip_p = fast\n")
    with pytest.raises(ValueError, match="not a number"):
        load_config(path, BodyParams(), ControlGains())


def test_reference_states_match_published_angles():
    assert math.isclose(REFERENCE_STATES[MODEL_A].theta, 0.623)
    assert math.isclose(REFERENCE_STATES[MODEL_B].theta, 0.517)
