import numpy as np
import pytest

from headwalk.body import MODEL_A, MODEL_B, REFERENCE_STATES, ControlGains
from headwalk.gait import (LimitKernel, NoViableCycle, cycle_traces, find_limit_cycle,
                           kernel_contains, run_section_steps, sample_initial_states)

ZERO = ControlGains(*([0.0] * 12))


def test_initial_states_start_at_reference_and_respect_constraint():
    states = sample_initial_states(MODEL_A, 8, seed=3)
    assert len(states) == 8
    assert states[0] == REFERENCE_STATES[MODEL_A].constrained(MODEL_A)
    for s in states:
        assert s.gamma == s.alpha and s.beta == s.alpha
    again = sample_initial_states(MODEL_A, 8, seed=3)
    assert states == again
    assert sample_initial_states(MODEL_A, 8, seed=4) != states


def test_kernel_metric_is_mahalanobis():
    rng = np.random.default_rng(0)
    scales = np.logspace(0, -3, 12)
    samples = rng.normal(size=(500, 12)) * scales
    k = LimitKernel.from_samples(samples, threshold=9.0)
    x = 0.5 * scales
    d = x - samples.mean(axis=0)
    expected = d @ np.linalg.inv(np.cov(samples, rowvar=False)) @ d
    assert k.distance2(x) == pytest.approx(expected, rel=1e-6)
    assert kernel_contains(k, k.center)
    far = k.center.copy()
    far[-1] += 1.0
    assert not kernel_contains(k, far)


def test_kernel_ignores_constant_components():
    # flat ground: the slope component never varies and gets no weight
    rng = np.random.default_rng(1)
    samples = rng.normal(size=(50, 12))
    samples[:, 3] = 0.0
    k = LimitKernel.from_samples(samples)
    assert np.isfinite(k.metric).all()
    shifted = k.center.copy()
    shifted[3] = 5.0
    assert k.distance2(shifted) == pytest.approx(0.0, abs=1e-9)
    with pytest.raises(ValueError):
        LimitKernel.from_samples(samples[:1])


@pytest.mark.parametrize("model", [MODEL_A, MODEL_B])
def test_limit_cycle_from_reference_state(model):
    c = find_limit_cycle(model, initial_states=[REFERENCE_STATES[model]], n_steps=80,
                         record_from=60)
    assert c.survivors == 1 and c.samples.shape == (21, 12)
    assert abs(c.fixed_state.theta / REFERENCE_STATES[model].theta - 1) < 0.3
    assert c.spread[0] < 0.01


def test_stride_of_rigid_neck_is_longer():
    a = find_limit_cycle(MODEL_A, initial_states=[REFERENCE_STATES[MODEL_A]], n_steps=80,
                         record_from=60)
    b = find_limit_cycle(MODEL_B, initial_states=[REFERENCE_STATES[MODEL_B]], n_steps=80,
                         record_from=60)
    assert a.fixed_state.theta > b.fixed_state.theta


def test_no_viable_cycle_without_control():
    with pytest.raises(NoViableCycle):
        find_limit_cycle(MODEL_A, ZERO, initial_states=[REFERENCE_STATES[MODEL_A]],
                         n_steps=20, record_from=10)


def test_section_steps_stop_on_kernel_return():
    xi, status = run_section_steps(REFERENCE_STATES[MODEL_A], MODEL_A, np.zeros(30))
    assert status == "ok" and xi.shape == (30, 12)
    k = LimitKernel.from_samples(xi[10:])
    xi2, status2 = run_section_steps(REFERENCE_STATES[MODEL_A], MODEL_A, np.zeros(30),
                                     kernel=k)
    assert status2 == "returned" and len(xi2) < 30


@pytest.mark.parametrize("model", [MODEL_A, MODEL_B])
def test_cycle_traces_close_the_energy_budget(model):
    tr = cycle_traces(REFERENCE_STATES[model], model)
    assert tr.pct_cycle[0] == 0.0 and tr.pct_cycle[-1] == pytest.approx(100.0)
    assert tr.impact_energy < 0 < tr.impulse_energy
    assert abs(tr.energy_balance()) <= 0.02 * tr.dissipated_energy()
    assert 0.3 < tr.period < 1.0
