"""Quick invariant checks shared by the ``validate`` command."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _core
from .body import (MODEL_A, MODEL_B, REFERENCE_STATES, BodyParams, ControlGains,
                   anthropometric_checks)
from .dynamics import (IntegratorConfig, StanceConfiguration, cart_derivative,
                       flight_energy_trace, simulate)
from .gait import LimitKernel, cycle_traces, kernel_contains, run_section_steps
from .linear import assemble, build
from .terrain import AbsorbingChain


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    value: float
    limit: float

    COLUMNS = ("check", "passed", "value", "limit")

    def row(self) -> list:
        return [self.name, int(self.passed), self.value, self.limit]


def _le(name, value, limit) -> CheckResult:
    return CheckResult(name, bool(value <= limit), float(value), float(limit))


def check_parameters(params: BodyParams) -> CheckResult:
    n = len(anthropometric_checks(params))
    return CheckResult("parameters_valid", n == 0, float(n), 0.0)


def check_stance_kernel(params: BodyParams, gains: ControlGains) -> list[CheckResult]:
    """Specialised stance kernel against the generic mass-matrix solve."""
    out = []
    body, g = params.as_array(), gains.as_array()
    for model in (MODEL_A, MODEL_B):
        conf = StanceConfiguration.from_state(REFERENCE_STATES[model], model, params)
        n = conf.q.size
        fast, _ = _core.stance_accel(model.index, conf.q, conf.qd, body, g)
        slow = np.empty(n)
        _core.accel(_core.STANCE, model.index, conf.q, conf.qd, conf.toe, body, g,
                    np.zeros(n), slow)
        err = np.max(np.abs(fast - slow) / np.maximum(1.0, np.abs(slow)))
        out.append(_le(f"stance_kernel_{model.label}", err, 1e-9))
    return out


def flight_drift(model, params: BodyParams, dt: float = 1e-4, n_steps: int = 10000) -> float:
    """Largest per-step energy change along an unactuated contact-free arc."""
    if model.index:
        q = np.array([0.0, 1.2, 0.15, -0.2, 0.05, -0.1, 0.2])
        qd = np.array([1.0, 2.0, 0.5, -1.0, 0.4, 1.5, -2.0])
    else:
        q = np.array([0.0, 1.2, 0.15, -0.2, 0.05])
        qd = np.array([1.0, 2.0, 0.5, -1.0, 0.4])
    zero = ControlGains(*([0.0] * 12))
    e = flight_energy_trace(q, qd, model, params, zero, dt, n_steps)
    return float(np.max(np.abs(np.diff(e))))


def power_mismatch(model, params: BodyParams, gains: ControlGains,
                   integrator: IntegratorConfig = IntegratorConfig()) -> float:
    """Relative RMS gap between analytic power and dE/dt over one cycle.

    Rows next to the cycle ends and to changes of the step size are left out,
    since central differences straddle those.
    """
    tr = cycle_traces(REFERENCE_STATES[model], model, params, gains, integrator)
    fd = tr.finite_difference_power()
    dt = np.diff(tr.t)
    keep = np.ones(tr.t.size, dtype=bool)
    keep[:2] = keep[-2:] = False
    jumps = np.nonzero(np.abs(np.diff(dt)) > 1e-12)[0]
    for j in jumps:
        keep[max(0, j - 1):j + 4] = False
    err = fd[keep] - tr.power[keep]
    return float(np.sqrt(np.mean(err**2)) / np.sqrt(np.mean(tr.power[keep] ** 2)))


def scaling_gap(model, params: BodyParams, gains: ControlGains, factor: float = 10.0,
                n_steps: int = 5) -> float:
    """Largest state difference when all masses and gains are scaled together."""
    a = simulate(REFERENCE_STATES[model], model, n_steps, None, params, gains)
    b = simulate(REFERENCE_STATES[model], model, n_steps, None, params.scaled(factor),
                 gains.scaled(factor))
    if a.rows.shape != b.rows.shape:
        return float("inf")
    return float(np.max(np.abs(a.state - b.state)))


def linear_fidelity(model, params: BodyParams, gains: ControlGains,
                    h: float = 1e-6) -> float:
    """Largest entrywise gap between finite-difference and assembled (A, B).

    Entries are compared relative to max(|entry|, 1).
    """
    ss = assemble(build(model, params, gains))
    n = ss.A.shape[0]
    J = np.empty((n, n + 1))
    for j in range(n + 1):
        e = np.zeros(n)
        if j < n:
            e[j] = h
            up, _ = cart_derivative(e, 0.0, model, params, gains)
            dn, _ = cart_derivative(-e, 0.0, model, params, gains)
        else:
            up, _ = cart_derivative(e, h, model, params, gains)
            dn, _ = cart_derivative(e, -h, model, params, gains)
        J[:, j] = (up - dn) / (2 * h)
    ref = np.column_stack([ss.A, ss.B])
    return float(np.max(np.abs(J - ref) / np.maximum(np.abs(ref), 1.0)))


SURROGATE_Q = np.array([
    [0.10, 0.60, 0.25],
    [0.50, 0.20, 0.25],
    [0.30, 0.30, 0.30],
])


def surrogate_error(n_samples: int = 20000, seed: int = 0) -> float:
    chain = AbsorbingChain(SURROGATE_Q)
    rep = chain.estimate(n_samples, seed)
    exact = chain.mean_absorption_time()
    return abs(rep.mfpt - exact) / exact


def kernel_self_check(params: BodyParams, gains: ControlGains) -> CheckResult:
    xi, _ = run_section_steps(REFERENCE_STATES[MODEL_B], MODEL_B, np.zeros(60), params, gains)
    k = LimitKernel.from_samples(xi[29:])
    inside = all(kernel_contains(k, s) for s in xi[29:]) and kernel_contains(k, k.center)
    far = k.center.copy()
    far[0] += 1e6
    ok = inside and not kernel_contains(k, far)
    return CheckResult("kernel_membership", ok, float(ok), 1.0)


def run_checks(params: BodyParams = BodyParams(), gains: ControlGains = ControlGains(),
               integrator: IntegratorConfig = IntegratorConfig()) -> list[CheckResult]:
    out = [check_parameters(params)]
    out += check_stance_kernel(params, gains)
    for m in (MODEL_A, MODEL_B):
        out.append(_le(f"flight_energy_drift_{m.label}", flight_drift(m, params), 1e-6))
        out.append(_le(f"power_consistency_{m.label}",
                       power_mismatch(m, params, gains, integrator), 0.01))
        out.append(_le(f"mass_scaling_{m.label}", scaling_gap(m, params, gains), 1e-9))
        out.append(_le(f"linear_fidelity_{m.label}", linear_fidelity(m, params, gains), 1e-6))
    out.append(_le("mfpt_estimator_surrogate", surrogate_error(), 0.05))
    out.append(kernel_self_check(params, gains))
    return out
