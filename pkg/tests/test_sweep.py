import numpy as np
import pytest

from headwalk.body import MODEL_A, REFERENCE_STATES, ControlGains
from headwalk.io import format_value
from headwalk.sweep import (GAIN_RANGES, ParameterSample, SweepRecord, SweepSetup, aggregate,
                            bootstrap_lower_bound, robustness_test, run_sweep, sample_parameters,
                            sample_start,
                            viability_test)
from headwalk.terrain import MfptReport


def test_samples_are_reproducible_and_in_range():
    a = sample_parameters(3, 17)
    assert a == sample_parameters(3, 17)
    assert a != sample_parameters(3, 18)
    for name, (lo, hi) in GAIN_RANGES.items():
        assert lo <= getattr(a.gains, name) <= hi
    assert a.gains.neck_p == ControlGains().neck_p
    assert a.group == ("low" if a.gains.impulse_velocity < 2.0 else "high")


def test_bootstrap_bound():
    assert bootstrap_lower_bound(np.ones(20)) == 1.0
    assert bootstrap_lower_bound(np.zeros(20)) == 0.0
    flags = np.r_[np.ones(60), np.zeros(40)]
    lo = bootstrap_lower_bound(flags, seed=1)
    # normal approximation: 0.6 - 1.645 * sqrt(0.24 / 100) = 0.519
    assert lo == pytest.approx(0.519, abs=0.02)
    assert np.isnan(bootstrap_lower_bound([]))


def _report(mfpt):
    return MfptReport(0.03, mfpt, 0.5, 1.0, 1.0, 10, False)


def _record(index, impulse, va, vb, ma=None, mb=None):
    sample = ParameterSample(index, 0, ControlGains(impulse_velocity=impulse))
    return SweepRecord(sample, va, vb, report_a=ma and _report(ma), report_b=mb and _report(mb))


def test_aggregate_counts_each_cell():
    recs = [_record(0, 1.0, False, False), _record(1, 1.0, True, True, 10.0, 20.0),
            _record(2, 1.0, False, True), _record(3, 1.0, True, False)]
    out = aggregate(recs, n_boot=200)
    cells = [out["all"][k] for k in ("neither", "both", "b_only", "a_only")]
    assert cells == [1, 1, 1, 1]
    assert out["low"]["total"] == 4 and out["high"]["total"] == 0
    assert out["low"]["b_better"] == 1 and out["low"]["mean_gain_when_b_better"] == 10.0


def test_aggregate_groups_and_ties():
    recs = [_record(0, 2.5, True, True, 30.0, 10.0), _record(1, 2.5, True, True, 5.0, 5.0)]
    high = aggregate(recs, n_boot=200)["high"]
    assert (high["a_better"], high["b_better"], high["ties"]) == (1, 0, 1)
    assert high["mean_mfpt_a"] > high["mean_mfpt_b"]


def test_viability_and_robustness():
    start = REFERENCE_STATES[MODEL_A]
    ok = viability_test(ControlGains(), MODEL_A, start, steps=60)
    assert ok.viable and ok.sections.shape == (60, 12)
    rep = robustness_test(ControlGains(), MODEL_A, ok, sigma=0.03, n_samples=20, seed=1,
                          step_budget=2000)
    assert rep.samples + rep.capped > 0 and rep.mfpt >= 1
    bad = viability_test(ControlGains(*([0.0] * 12)), MODEL_A, start, steps=60)
    assert not bad.viable and bad.reason != "ok"
    with pytest.raises(ValueError):
        robustness_test(ControlGains(), MODEL_A, bad)


def test_small_sweep_is_deterministic():
    setup = SweepSetup(dict(REFERENCE_STATES), episodes=5, step_budget=300)
    a = run_sweep(6, 2, setup)
    b = run_sweep(6, 2, setup)
    def text(records):
        return [[format_value(v) for v in r.row()] for r in records]

    assert text(a) == text(b)
    assert len(a) == 6
    promoted = [r for r in a if r.report_a is not None]
    assert len(promoted) <= 2
    assert all(r.viable_a and r.viable_b for r in promoted)


def test_rederived_start_is_the_sample_cycle():
    setup = SweepSetup(dict(REFERENCE_STATES), rederive_cycle=True)
    start = sample_start(setup, MODEL_A, ControlGains())
    assert start != REFERENCE_STATES[MODEL_A]
    assert start.theta == pytest.approx(0.618, abs=0.01)
    assert sample_start(setup, MODEL_A, ControlGains(*([0.0] * 12))) is None
    assert sample_start(SweepSetup(dict(REFERENCE_STATES)), MODEL_A,
                        ControlGains()) is REFERENCE_STATES[MODEL_A]
