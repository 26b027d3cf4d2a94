"""Acceptance criteria, each checked at its stated tolerance and runtime.

Every test records one PASS/FAIL line, listed again at the end of the run.
Criteria 2 and 10 take about 30 min and 3 h respectively.
"""
import time

import numpy as np
import pytest

from headwalk.body import MODEL_A, MODEL_B, BodyParams, ControlGains
from headwalk.checks import SURROGATE_Q, flight_drift, linear_fidelity, power_mismatch, scaling_gap
from headwalk.gait import LimitKernel, cycle_traces, find_limit_cycle
from headwalk.linear import assemble, build, default_grid, frequency_response, impulse_power_response
from headwalk.sweep import SweepSetup, aggregate, baseline_starts, run_sweep
from headwalk.terrain import AbsorbingChain, TerrainParams, estimate_mfpt

PUBLISHED_THETA = {MODEL_A: 0.623, MODEL_B: 0.517}


@pytest.fixture(scope="module")
def cycles():
    t0 = time.monotonic()
    out = {m: find_limit_cycle(m) for m in (MODEL_A, MODEL_B)}
    return out, time.monotonic() - t0


def test_c01_limit_cycles(cycles, report):
    cyc, elapsed = cycles
    theta = {m: c.fixed_state.theta for m, c in cyc.items()}
    within = all(abs(theta[m] / PUBLISHED_THETA[m] - 1) <= 0.30 for m in theta)
    ok = theta[MODEL_A] > theta[MODEL_B] and within and elapsed < 120
    assert report(1, "limit cycles", ok,
                  f"theta_A={theta[MODEL_A]:.4f} theta_B={theta[MODEL_B]:.4f} "
                  f"(published 0.623/0.517, +-30%), survivors "
                  f"{cyc[MODEL_A].survivors}/{cyc[MODEL_B].survivors}, {elapsed:.0f} s < 120 s")


@pytest.mark.slow
def test_c02_mfpt_ordering(cycles, report):
    cyc, elapsed = cycles
    n, budget = 10_000, 1800.0 - elapsed
    t0 = time.monotonic()
    terrain = TerrainParams(0.01, 0)
    rep = {}
    for m in (MODEL_A, MODEL_B):
        left = budget - (time.monotonic() - t0)
        rep[m] = estimate_mfpt(m, cyc[m], LimitKernel.from_cycle(cyc[m]), terrain, n,
                               time_budget=left)
    spent = elapsed + time.monotonic() - t0
    a, b = rep[MODEL_A], rep[MODEL_B]
    a_ok = not a.unbounded and 23 / 3 <= a.mfpt <= 23 * 3
    order_ok = b.mfpt >= 100 * a.mfpt
    counts_ok = a.samples + a.capped >= n and b.samples + b.capped >= n
    ok = a_ok and order_ok and counts_ok and spent < 1800
    b_text = f"{'>=' if b.unbounded else '='}{b.mfpt:.0f}"
    assert report(2, "MFPT ordering at sigma=0.01", ok,
                  f"A={a.mfpt:.1f} over {a.samples} episodes (p_fall={a.p_fall:.3f}); "
                  f"B{b_text} over {b.samples + b.capped} episodes "
                  f"(falls={round(b.p_fall * b.samples)}); need {n} episodes each, "
                  f"{spent:.0f} s < 1800 s")


def test_c03_estimator_surrogate(report):
    chain = AbsorbingChain(SURROGATE_Q)
    t0 = time.monotonic()
    rep = chain.estimate(100_000, seed=0)
    elapsed = time.monotonic() - t0
    exact = chain.mean_absorption_time()
    err = abs(rep.mfpt - exact) / exact
    ok = err <= 0.05 and elapsed < 10
    assert report(3, "MFPT estimator on absorbing chain", ok,
                  f"estimate={rep.mfpt:.4f} exact={exact:.4f} rel.err={err:.2e} <= 5%, "
                  f"{elapsed:.1f} s < 10 s")


def test_c04_linearization_fidelity(report):
    params, gains = BodyParams(), ControlGains()
    for m in (MODEL_A, MODEL_B):  # compile outside the timed section
        linear_fidelity(m, params, gains)
    t0 = time.monotonic()
    err = {m: linear_fidelity(m, params, gains) for m in (MODEL_A, MODEL_B)}
    elapsed = time.monotonic() - t0
    ok = max(err.values()) <= 1e-6 and elapsed < 1
    assert report(4, "linearization fidelity", ok,
                  f"A={err[MODEL_A]:.1e} B={err[MODEL_B]:.1e} <= 1e-6, {elapsed:.2f} s < 1 s")


def test_c05_spectral_claims(report):
    omega = default_grid()
    ss = {m: assemble(build(m)) for m in (MODEL_A, MODEL_B)}
    head = {m: frequency_response(s, "head_angle", omega).magnitude for m, s in ss.items()}
    force = {m: frequency_response(s, "hip_force", omega).magnitude for m, s in ss.items()}
    low, high = omega <= 30, omega >= 100
    head_ok = head[MODEL_B][low] < head[MODEL_A][low]
    force_ok = force[MODEL_B][high] < force[MODEL_A][high]
    bad_head = omega[low][~head_ok]
    bad_force = omega[high][~force_ok]
    detail = (f"|beta/p''| B<A at {head_ok.sum()}/{low.sum()} points in [0.1, 30]"
              + (f" (fails {bad_head.min():.1f}-{bad_head.max():.1f} rad/s)" if bad_head.size else "")
              + f"; |f_t/p''| B<A at {force_ok.sum()}/{high.sum()} points in [100, 1000]"
              + (f" (fails {bad_force.min():.0f}-{bad_force.max():.0f} rad/s)"
                 if bad_force.size else ""))
    assert report(5, "spectral claims", bool(head_ok.all() and force_ok.all()), detail)


def test_c06_impulse_energies(report):
    target = {MODEL_A: -9.3, MODEL_B: -10.3}
    parts, ok = [], True
    for m in (MODEL_A, MODEL_B):
        r = impulse_power_response(assemble(build(m)))
        tail = np.max(np.abs(r.power[r.t >= 0.5]))
        good = abs(r.integral / target[m] - 1) <= 0.15 and tail < 1.0
        ok &= good
        parts.append(f"{m.label}: {r.integral:.2f} J (target {target[m]} +-15%), "
                     f"max|P| after 0.5 s {tail:.2f} W")
    assert report(6, "impulse-response energies", ok, "; ".join(parts))


def test_c07_energy_audit(report):
    params, gains = BodyParams(), ControlGains()
    drift = {m: flight_drift(m, params) for m in (MODEL_A, MODEL_B)}
    rms = {m: power_mismatch(m, params, gains) for m in (MODEL_A, MODEL_B)}
    ok = max(drift.values()) < 1e-6 and max(rms.values()) <= 0.01
    assert report(7, "energy audit", ok,
                  f"flight drift A={drift[MODEL_A]:.1e} B={drift[MODEL_B]:.1e} J/step < 1e-6; "
                  f"power RMS A={rms[MODEL_A]:.1e} B={rms[MODEL_B]:.1e} <= 1%")


def test_c08_mass_scaling(report):
    gap = {m: scaling_gap(m, BodyParams(), ControlGains(), 10.0) for m in (MODEL_A, MODEL_B)}
    ok = max(gap.values()) <= 1e-9
    assert report(8, "mass-scaling equivariance", ok,
                  f"max state gap A={gap[MODEL_A]:.1e} B={gap[MODEL_B]:.1e} <= 1e-9")


def test_c09_cycle_traces(cycles, report):
    cyc, _ = cycles
    tr = {m: cycle_traces(cyc[m]) for m in (MODEL_A, MODEL_B)}
    grid = np.linspace(0.0, 100.0, 1001)

    def on_grid(m, attr):
        return np.interp(grid, tr[m].pct_cycle, getattr(tr[m], attr))

    first = grid <= 30
    mid = (grid >= 20) & (grid <= 80)
    rate_gap = on_grid(MODEL_B, "swing_rate") - on_grid(MODEL_A, "swing_rate")
    angle_gap = on_grid(MODEL_B, "swing_angle") - on_grid(MODEL_A, "swing_angle")
    balance = {m: abs(t.energy_balance()) / t.dissipated_energy() for m, t in tr.items()}
    ok = (rate_gap[first] > 0).all() and (angle_gap[mid] > 0).all() \
        and max(balance.values()) <= 0.02
    assert report(9, "cycle traces", bool(ok),
                  f"min rate gap over 0-30% {rate_gap[first].min():.3f} rad/s; "
                  f"min angle gap over 20-80% {angle_gap[mid].min():.3f} rad; "
                  f"energy balance A={100 * balance[MODEL_A]:.2f}% "
                  f"B={100 * balance[MODEL_B]:.2f}% of dissipated <= 2%")


@pytest.mark.slow
def test_c10_sweep_directionality(report):
    t0 = time.monotonic()
    records = run_sweep(1000, 100, SweepSetup(baseline_starts()))
    elapsed = time.monotonic() - t0
    summary = aggregate(records)
    low, high = summary["low"], summary["high"]
    viab_ok = low["b_only"] > low["a_only"]
    low_ok = low.get("compared", 0) > 0 and low["b_better_lower95"] > 0.5
    high_ok = high.get("compared", 0) > 0 and high["mean_mfpt_a"] > high["mean_mfpt_b"]
    ok = viab_ok and low_ok and high_ok and elapsed < 4 * 3600
    assert report(10, "sweep directionality", ok,
                  f"low: b_only={low['b_only']} a_only={low['a_only']}, "
                  f"mfpt_b>mfpt_a in {low.get('b_better', 0)}/{low.get('compared', 0)} "
                  f"(95% lower bound {low.get('b_better_lower95', float('nan')):.2f} > 0.5); "
                  f"high: mean mfpt A={high.get('mean_mfpt_a', float('nan')):.0f} "
                  f"B={high.get('mean_mfpt_b', float('nan')):.0f} over "
                  f"{high.get('compared', 0)} samples (A > B wanted); {elapsed / 3600:.2f} h < 4 h")
