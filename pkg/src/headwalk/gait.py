"""Pre-impact section analysis: limit cycles, limit kernels and cycle traces."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _core
from .body import REFERENCE_STATES, BodyParams, ControlGains, ModelKind, WalkerState
from .dynamics import IntegratorConfig, SimulationError, STATUS_NAMES, simulate

DEFAULT_THRESHOLD = 1000.0
_trapezoid = getattr(np, "trapezoid", None) or np.trapz


class NoViableCycle(SimulationError):
    def __init__(self, message="no viable cycle"):
        super().__init__("no viable cycle", message)


def _constrain(model: ModelKind, xi: np.ndarray) -> np.ndarray:
    if model.index == _core.MODEL_A:
        xi[6] = xi[8] = xi[4]
        xi[7] = xi[9] = xi[5]
    return xi


def sample_initial_states(model, n: int, seed: int = 0, spread: float = 0.5,
                          center: WalkerState | None = None) -> list[WalkerState]:
    """Uniform draws in a box of +-``spread`` (relative) around ``center``.

    The centre itself is the first returned state. ``center`` defaults to the
    published pre-impact state of ``model``. The slope component stays zero.
    """
    model = ModelKind.parse(model)
    base = (center or REFERENCE_STATES[model]).constrained(model).as_array()
    rng = np.random.default_rng(seed)
    out = [WalkerState.from_array(base)]
    for _ in range(n - 1):
        xi = base * (1.0 + rng.uniform(-spread, spread, base.size))
        out.append(WalkerState.from_array(_constrain(model, xi)))
    return out


def run_section_steps(state: WalkerState, model, slopes, params: BodyParams = BodyParams(),
                      gains: ControlGains = ControlGains(),
                      integrator: IntegratorConfig = IntegratorConfig(),
                      kernel: "LimitKernel | None" = None) -> tuple[np.ndarray, str]:
    """Apply the step map once per slope, starting from a pre-impact state.

    Returns the pre-impact states after each completed step and the stop
    reason ("ok", "fall", "returned", ...). With ``kernel`` the run stops at
    the first state inside it.
    """
    model = ModelKind.parse(model)
    slopes = np.ascontiguousarray(slopes, dtype=np.float64)
    out = np.zeros((slopes.size, 12))
    if kernel is None:
        center, C, d0, check = np.zeros(12), np.zeros((12, 12)), 0.0, False
    else:
        center, C, d0, check = kernel.center, kernel.metric, kernel.threshold, True
    xi0 = state.constrained(model).as_array()
    n, code = _core.run_from_section(model.index, params.as_array(), gains.as_array(),
                                     integrator.as_array(), xi0, slopes, center, C,
                                     float(d0), check, out)
    return out[:n], STATUS_NAMES[code]


@dataclass
class LimitCycle:
    """Flat-ground limit cycle seen at the pre-impact section.

    ``samples`` pools the pre-impact states recorded over the settling window
    of every surviving start; ``fixed_state`` is their mean.
    """

    model: ModelKind
    fixed_state: WalkerState
    samples: np.ndarray
    starts: int = 0
    survivors: int = 0

    @property
    def recorded_samples(self) -> list[WalkerState]:
        return [WalkerState.from_array(s) for s in self.samples]

    @property
    def spread(self) -> np.ndarray:
        """Per-component standard deviation of the pooled samples."""
        return self.samples.std(axis=0)


def find_limit_cycle(model, params: BodyParams = BodyParams(),
                     gains: ControlGains = ControlGains(),
                     initial_states: list[WalkerState] | None = None,
                     n_steps: int = 500, record_from: int = 400,
                     integrator: IntegratorConfig = IntegratorConfig(),
                     n_initial: int = 64, seed: int = 0) -> LimitCycle:
    """Locate the flat-ground limit cycle by forward simulation.

    Each initial state is walked ``n_steps`` steps on flat ground; the
    pre-impact states of steps ``record_from`` to ``n_steps`` of every start
    that does not fall are pooled and averaged.

    Parameters
    ----------
    initial_states : list of WalkerState, optional
        Defaults to ``n_initial`` uniform draws around the published state.

    Raises
    ------
    NoViableCycle
        If every start fails before reaching ``n_steps``.
    """
    model = ModelKind.parse(model)
    if initial_states is None:
        initial_states = sample_initial_states(model, n_initial, seed)
    if not initial_states:
        raise ValueError("at least one initial state is required")
    if not 0 <= record_from < n_steps:
        raise ValueError("need 0 <= record_from < n_steps")
    flat = np.zeros(n_steps)
    pooled = []
    for state in initial_states:
        xi, _ = run_section_steps(state, model, flat, params, gains, integrator)
        if len(xi) == n_steps:
            pooled.append(xi[record_from - 1 if record_from else 0:])
    if not pooled:
        raise NoViableCycle()
    samples = np.concatenate(pooled)
    fixed = WalkerState.from_array(samples.mean(axis=0))
    return LimitCycle(model, fixed, samples, len(initial_states), len(pooled))


@dataclass
class LimitKernel:
    """Ellipsoidal neighbourhood of the limit cycle at the section.

    A state is inside when ``(xi - center)^T C (xi - center) < threshold``
    with ``C`` the pseudoinverse of the sample covariance.
    """

    center: np.ndarray
    metric: np.ndarray
    threshold: float = DEFAULT_THRESHOLD

    @classmethod
    def from_samples(cls, samples, center=None, threshold: float = DEFAULT_THRESHOLD):
        samples = np.asarray(samples, dtype=np.float64)
        if samples.ndim != 2 or samples.shape[1] != 12 or len(samples) < 2:
            raise ValueError("need at least two 12-component samples")
        cov = np.cov(samples, rowvar=False)
        C = np.linalg.pinv(cov, hermitian=True)
        C = 0.5 * (C + C.T)
        c = samples.mean(axis=0) if center is None else np.asarray(center, dtype=np.float64)
        return cls(np.ascontiguousarray(c), np.ascontiguousarray(C), float(threshold))

    @classmethod
    def from_cycle(cls, cycle: LimitCycle, threshold: float = DEFAULT_THRESHOLD):
        return cls.from_samples(cycle.samples, cycle.fixed_state.as_array(), threshold)

    def distance2(self, xi) -> float:
        xi = xi.as_array() if isinstance(xi, WalkerState) else np.asarray(xi, dtype=np.float64)
        return float(_core.mahalanobis2(xi, self.center, self.metric))

    def principal_radii(self) -> tuple[np.ndarray, np.ndarray]:
        """Semi-axes lengths and directions of the kernel ellipsoid (non-degenerate axes)."""
        w, v = np.linalg.eigh(self.metric)
        keep = w > w.max() * 1e-12
        return np.sqrt(self.threshold / w[keep]), v[:, keep]


def kernel_contains(kernel: LimitKernel, xi) -> bool:
    """Whether ``xi`` lies strictly inside ``kernel``."""
    return kernel.distance2(xi) < kernel.threshold


@dataclass
class CycleTraces:
    """One limit cycle sampled at the integration steps.

    ``power`` is the analytic power of the toe force and joint torques; the
    stance exchange at the cycle start is impulsive and excluded from it. Its
    two parts are given as ``impulse_energy`` (toe-off, positive) and
    ``impact_energy`` (landing, negative). ``event`` flags the exchange instant.
    """

    model: ModelKind
    pct_cycle: np.ndarray
    t: np.ndarray
    energy: np.ndarray
    power: np.ndarray
    swing_angle: np.ndarray
    swing_rate: np.ndarray
    state: np.ndarray
    phase: np.ndarray
    event: np.ndarray
    impulse_energy: float
    impact_energy: float
    end_energy: float

    @property
    def period(self) -> float:
        return float(self.t[-1])

    def power_integral(self) -> float:
        return float(_trapezoid(self.power, self.t))

    def dissipated_energy(self) -> float:
        """Energy removed over the cycle: landing loss plus negative power."""
        neg = _trapezoid(np.minimum(self.power, 0.0), self.t)
        return float(-self.impact_energy - neg)

    def energy_balance(self) -> float:
        """Power integral plus impulsive energies (zero on an exact cycle)."""
        return self.power_integral() + self.impulse_energy + self.impact_energy

    def finite_difference_power(self) -> np.ndarray:
        """dE/dt by central differences on the (non-uniform) time grid."""
        return np.gradient(self.energy, self.t)


def cycle_traces(cycle: LimitCycle | WalkerState, model=None,
                 params: BodyParams = BodyParams(), gains: ControlGains = ControlGains(),
                 integrator: IntegratorConfig = IntegratorConfig(),
                 warmup: int = 10) -> CycleTraces:
    """Record one cycle starting from the fixed point.

    ``warmup`` flat steps are taken from the fixed point first so that the
    recorded cycle lies on the attractor rather than at the averaged state.
    """
    if isinstance(cycle, LimitCycle):
        state, model = cycle.fixed_state, cycle.model
    else:
        state = cycle
    model = ModelKind.parse(model)
    traj = simulate(state, model, warmup + 1, None, params, gains, integrator)
    if traj.status != "ok":
        raise SimulationError(traj.status, f"walker failed during the cycle: {traj.status}")
    sel = traj.step_index == warmup
    rows = traj.rows[sel]
    t = rows[:, _core.R_T] - rows[0, _core.R_T]
    ex = traj.exchanges[warmup]
    event = np.zeros(len(rows), dtype=bool)
    event[0] = True
    return CycleTraces(
        model=model, pct_cycle=100.0 * t / t[-1], t=t,
        energy=rows[:, _core.R_E], power=rows[:, _core.R_P],
        swing_angle=-rows[:, _core.R_PSI], swing_rate=-rows[:, _core.R_PSID],
        state=rows[:, _core.R_XI:_core.R_XI + 12], phase=rows[:, _core.R_PHASE].astype(int),
        event=event, impulse_energy=ex.impulse_energy, impact_energy=ex.impact_energy,
        end_energy=float(rows[-1, _core.R_E]),
    )
