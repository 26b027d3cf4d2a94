"""Walker dynamics: actuation laws, stepping, simulation and the cart model.

The numerical work is done by the compiled kernels in ``_core``; this module
wraps them with typed inputs and outputs.

Integration uses a fixed-step classical Runge-Kutta scheme with ``dt_normal``
outside and ``dt_impact`` inside a short window after each exchange.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _core
from .body import BodyParams, ControlGains, ModelKind, WalkerState

STATUS_NAMES = {
    _core.ST_IMPACT: "impact",
    _core.ST_FALL: "fall",
    _core.ST_DIVERGED: "state divergence",
    _core.ST_STALL: "stalled step",
    _core.ST_SINGULAR: "singular",
    _core.ST_RETURNED: "returned",
    _core.ST_OK: "ok",
}
PHASE_NAMES = {_core.PHASE_SWING: "swing", _core.PHASE_IMPACT: "impact",
               _core.PHASE_TAKEOFF: "takeoff"}


class SimulationError(RuntimeError):
    """Raised for domain failures of a simulation (reason in ``reason``)."""

    def __init__(self, reason: str, message: str = ""):
        super().__init__(message or reason)
        self.reason = reason


class MassMatrixSingular(SimulationError):
    def __init__(self, message="mass-matrix singular"):
        super().__init__("mass-matrix singular", message)


class ImpulseSingularity(SimulationError):
    def __init__(self, message="impulse singularity"):
        super().__init__("impulse singularity", message)


class StateDivergence(SimulationError):
    def __init__(self, message="state divergence"):
        super().__init__("state divergence", message)


@dataclass(frozen=True)
class IntegratorConfig:
    """Fixed-step integration and contact settings (seconds, radians)."""

    dt_normal: float = 1e-3
    dt_impact: float = 1e-4
    impact_window: float = 0.01
    clearance_threshold: float = 0.1
    max_step_time: float = 3.0

    def __post_init__(self):
        if not 0 < self.dt_impact <= self.dt_normal:
            raise ValueError("need 0 < dt_impact <= dt_normal")
        if self.impact_window < 0 or self.max_step_time <= 0:
            raise ValueError("impact_window must be >= 0 and max_step_time > 0")

    def as_array(self) -> np.ndarray:
        return np.array([self.dt_normal, self.dt_impact, self.impact_window,
                         self.clearance_threshold, self.max_step_time])


@dataclass(frozen=True)
class ActuationOutputs:
    toe_force: float
    hip_torque: float
    trunk_torque: float
    neck_torque: float
    head_torque: float


def toe_force(lp: float, lp_dot: float, gains: ControlGains = ControlGains(),
              params: BodyParams = BodyParams()) -> float:
    """Unilateral toe spring-damper force along the stance leg.

    ``lp`` is the absolute leg length; the force is clamped at zero.
    """
    raw = -gains.toe_stiffness * (lp - params.leg_rest_length) - gains.toe_damping * lp_dot
    return max(0.0, raw)


def pd_torque(angle: float, rate: float, kp: float, kd: float, reference: float = 0.0) -> float:
    """PD torque ``-kp (angle - reference) - kd rate``."""
    return -kp * (angle - reference) - kd * rate


def impulse_force(apparent_mass: float, rate: float, target: float, dt: float) -> float:
    """Force that brings a leg extension rate to ``target`` within one step ``dt``."""
    if apparent_mass < 1e-9:
        raise ImpulseSingularity()
    return apparent_mass * (target - rate) / dt


@dataclass
class StanceConfiguration:
    """Full stance-phase configuration.

    ``q`` holds (phi, l, psi, alpha) for the rigid-neck model and
    (phi, l, psi, alpha, gamma, beta) for the head-stabilised one; ``qd`` the
    matching rates. ``toe`` is the stance toe position and ``eta`` the slope
    of the ground line through it.
    """

    model: ModelKind
    q: np.ndarray
    qd: np.ndarray
    toe: np.ndarray = field(default_factory=lambda: np.zeros(2))
    eta: float = 0.0

    @classmethod
    def from_state(cls, state: WalkerState, model, params: BodyParams = BodyParams()):
        """Rebuild the configuration of a pre-impact section state.

        The stance toe is placed at the origin and the swing toe on the ground
        line of slope ``state.eta``.
        """
        model = ModelKind.parse(model)
        n = 3 + (3 if model.index else 1)
        q, qd = np.empty(n), np.empty(n)
        xi = state.constrained(model).as_array()
        if not _core.from_section(model.index, xi, params.as_array(), q, qd):
            raise SimulationError("inconsistent state", "no stance angle matches the state")
        return cls(model, q, qd, np.zeros(2), float(state.eta))

    def copy(self) -> "StanceConfiguration":
        return StanceConfiguration(self.model, self.q.copy(), self.qd.copy(),
                                   self.toe.copy(), self.eta)

    def section_state(self, params: BodyParams = BodyParams()) -> WalkerState:
        out = np.empty(12)
        _core.section_state(self.model.index, self.q, self.qd, self.eta, params.as_array(), out)
        return WalkerState.from_array(out)

    def energy(self, params: BodyParams = BodyParams()) -> float:
        """Kinetic plus gravitational energy (reference: hip height 0)."""
        return float(_core.energy(_core.STANCE, self.model.index, self.q, self.qd,
                                  self.toe, params.as_array()))


def _mass_system(mode, model: ModelKind, q, qd, base, params, gains, ext=None):
    n = q.shape[0]
    M, rhs = np.empty((n, n)), np.empty(n)
    act, mom = np.empty(5), np.empty((2, n + 1))
    ext = np.zeros(n) if ext is None else ext
    _core.evaluate(mode, model.index, np.asarray(q, float), np.asarray(qd, float),
                   np.asarray(base, float), params.as_array(), gains.as_array(), ext,
                   M, rhs, act, mom)
    return M, rhs, act, mom


def continuous_dynamics(
    q, qd, model, params: BodyParams = BodyParams(), gains: ControlGains = ControlGains(),
    contact: bool = True, toe=(0.0, 0.0),
) -> tuple[np.ndarray, ActuationOutputs]:
    """Generalised accelerations of the walker.

    With ``contact`` the stance toe is pinned and ``q`` holds stance
    coordinates; otherwise ``q`` is (x, y, phi, psi, alpha[, gamma, beta])
    with the hip at (x, y) and no ground force.

    Raises
    ------
    MassMatrixSingular
        If the mass matrix condition number exceeds 1e12.
    """
    model = ModelKind.parse(model)
    mode = _core.STANCE if contact else _core.FLIGHT
    M, rhs, act, _ = _mass_system(mode, model, q, qd, toe, params, gains)
    if np.linalg.cond(M) > 1e12:
        raise MassMatrixSingular()
    qdd = np.linalg.solve(M, rhs)
    return qdd, ActuationOutputs(*map(float, act))


def apparent_leg_mass(config: StanceConfiguration, params: BodyParams = BodyParams(),
                      gains: ControlGains = ControlGains()) -> float:
    """Inertia felt along the stance leg axis, 1 / (M^-1)_ll."""
    M, _, _, _ = _mass_system(_core.STANCE, config.model, config.q, config.qd,
                              config.toe, params, gains)
    return 1.0 / np.linalg.solve(M, np.eye(M.shape[0])[1])[1]


def toeoff_impulse_force(config: StanceConfiguration, gains: ControlGains = ControlGains(),
                         dt: float = 1e-4, params: BodyParams = BodyParams()) -> float:
    """Axial force on the departing leg that reaches the reference extension rate in ``dt``."""
    m = apparent_leg_mass(config, params, gains)
    return impulse_force(m, float(config.qd[1]), gains.impulse_velocity, dt)


@dataclass(frozen=True)
class StepEvents:
    impact: bool
    fall: bool
    takeoff: bool
    dt: float


def integrate(config: StanceConfiguration, params: BodyParams = BodyParams(),
              gains: ControlGains = ControlGains(),
              integrator: IntegratorConfig = IntegratorConfig(),
              since_impact: float = np.inf) -> tuple[StanceConfiguration, StepEvents]:
    """Advance a stance configuration by one fixed step.

    ``since_impact`` is the time elapsed since the last exchange; it selects
    ``dt_impact`` inside the impact window. Impact is flagged when the swing
    toe crosses the ground with the legs further apart than the clearance
    threshold.

    Raises
    ------
    StateDivergence
        If a state magnitude exceeds 1e6 or the leg deflection reaches half
        the rest length.
    """
    body, g, cfg = params.as_array(), gains.as_array(), integrator.as_array()
    new = config.copy()
    model = config.model.index
    dt = float(_core.choose_dt(new.q, new.qd, new.toe, new.eta, body, cfg, since_impact))
    h0, _ = _core.swing_clearance(new.q, new.qd, new.toe, new.eta, body)
    f0 = _core.toe_force(new.q[1], new.qd[1], body, g)
    if not _core.stance_rk4_step(model, new.q, new.qd, body, g, dt):
        raise MassMatrixSingular()
    if _core.diverged(new.q, new.qd, body):
        raise StateDivergence()
    h1, _ = _core.swing_clearance(new.q, new.qd, new.toe, new.eta, body)
    impact = bool(new.q[0] - new.q[2] > integrator.clearance_threshold and h1 <= 0.0 < h0)
    fall = bool(_core.stance_fallen(model, new.q, new.qd, new.toe, new.eta, body))
    takeoff = bool(f0 > 0.0 and _core.toe_force(new.q[1], new.qd[1], body, g) <= 0.0)
    return new, StepEvents(impact, fall, takeoff, dt)


@dataclass
class ExchangeRecord:
    """Energy bookkeeping of one stance exchange (J, N, kg, m/s)."""

    impact_energy: float
    impulse_energy: float
    impulse_force: float
    apparent_mass: float
    leg_rate: float


TRACE_COLUMNS = ("t", "theta", "theta_dot", "phi_dot", "eta", "alpha", "alpha_dot",
                 "gamma", "gamma_dot", "beta", "beta_dot", "lp", "lp_dot",
                 "energy", "power", "phase")


@dataclass
class Trajectory:
    """Densely sampled walking simulation.

    ``rows`` has one row per integration step with the kernel record layout;
    ``step_index`` gives the step each row belongs to. ``sections`` are the
    pre-impact states reached at the end of each completed step.
    """

    model: ModelKind
    rows: np.ndarray
    step_index: np.ndarray
    sections: np.ndarray
    exchanges: list[ExchangeRecord]
    status: str
    steps: int

    @property
    def t(self):
        return self.rows[:, _core.R_T]

    @property
    def energy(self):
        return self.rows[:, _core.R_E]

    @property
    def power(self):
        return self.rows[:, _core.R_P]

    @property
    def phase(self):
        return self.rows[:, _core.R_PHASE].astype(int)

    @property
    def swing_angle(self):
        """Forward inclination of the swing leg, -psi."""
        return -self.rows[:, _core.R_PSI]

    @property
    def swing_rate(self):
        return -self.rows[:, _core.R_PSID]

    @property
    def state(self):
        return self.rows[:, _core.R_XI:_core.R_XI + 12]

    @property
    def ground_reaction(self):
        return self.rows[:, _core.R_GRF]

    def table(self) -> tuple[tuple[str, ...], list[list]]:
        """Rows in the trajectory CSV layout."""
        out = []
        for r in self.rows:
            vals = [r[_core.R_T], *r[_core.R_XI:_core.R_XI + 12], r[_core.R_E], r[_core.R_P]]
            out.append(vals + [PHASE_NAMES[int(r[_core.R_PHASE])]])
        return TRACE_COLUMNS, out


def simulate(state: WalkerState, model, n_steps: int = 1, slopes=None,
             params: BodyParams = BodyParams(), gains: ControlGains = ControlGains(),
             integrator: IntegratorConfig = IntegratorConfig(),
             record: bool = True) -> Trajectory:
    """Walk from a pre-impact state, recording every integration step.

    Each step starts with the stance exchange (toe-off impulsion on the
    departing leg, then the landing) and ends at the next swing-toe impact.
    ``slopes`` gives the ground slope met during each step (flat if omitted).
    Stops early at a fall or another failure, reported in ``status``.
    """
    model = ModelKind.parse(model)
    slopes = np.zeros(n_steps) if slopes is None else np.asarray(slopes, float)
    body, g, cfg = params.as_array(), gains.as_array(), integrator.as_array()
    conf = StanceConfiguration.from_state(state, model, params)
    q, qd, toe = conf.q, conf.qd, conf.toe
    cap = int(integrator.max_step_time / integrator.dt_impact) + 16 if record else 1
    buf = np.zeros((cap, _core.NREC))
    ex = np.empty(5)
    chunks, owners, sections, exchanges = [], [], [], []
    t0, status, done = 0.0, "ok", 0
    xi = np.empty(12)
    prev = float(state.eta)
    for i, eta in enumerate(slopes):
        if not _core.exchange(model.index, body, g, cfg, q, qd, toe, prev, ex):
            status = "impulse singularity"
            break
        exchanges.append(ExchangeRecord(*map(float, ex)))
        code, elapsed, nrec = _core.advance(model.index, body, g, cfg, q, qd, toe, float(eta),
                                            0.0, buf, record)
        if record and nrec:
            rows = buf[:nrec].copy()
            rows[:, _core.R_T] += t0
            chunks.append(rows)
            owners.append(np.full(nrec, i))
        t0 += elapsed
        if code != _core.ST_IMPACT:
            status = STATUS_NAMES[code]
            break
        _core.section_state(model.index, q, qd, float(eta), body, xi)
        sections.append(xi.copy())
        prev = float(eta)
        done = i + 1
    rows = np.concatenate(chunks) if chunks else np.zeros((0, _core.NREC))
    idx = np.concatenate(owners) if owners else np.zeros(0, int)
    return Trajectory(model, rows, idx, np.array(sections).reshape(-1, 12), exchanges,
                      status, done)


def flight_energy_trace(q, qd, model, params: BodyParams = BodyParams(),
                        gains: ControlGains = ControlGains(), dt: float = 1e-4,
                        n_steps: int = 1000) -> np.ndarray:
    """Mechanical energy along a contact-free arc in flight coordinates.

    ``q`` is (x, y, phi, psi, alpha[, gamma, beta]). Joint torques follow
    ``gains``; pass zero gains for an unactuated arc.
    """
    model = ModelKind.parse(model)
    return _core.flight_energy(model.index, np.array(q, float), np.array(qd, float),
                               params.as_array(), gains.as_array(), dt, n_steps)


# -- cart and upper body -----------------------------------------------------

def cart_state_size(model) -> int:
    return 2 + 2 * (3 if ModelKind.parse(model).index else 1)


def cart_derivative(xi_u, pdd: float, model, params: BodyParams = BodyParams(),
                    gains: ControlGains = ControlGains()) -> tuple[np.ndarray, float]:
    """Time derivative of the cart state and the horizontal hip force.

    ``xi_u`` is (p, pdot, alpha, alpha_dot[, gamma, gamma_dot, beta, beta_dot]).
    The hip follows the cart exactly; the returned force is the horizontal
    force the cart applies to the upper body.
    """
    model = ModelKind.parse(model)
    xi_u = np.asarray(xi_u, float)
    q, qd = xi_u[2::2].copy(), xi_u[3::2].copy()
    base = np.array([xi_u[0], xi_u[1], pdd])
    M, rhs, _, mom = _mass_system(_core.CART, model, q, qd, base, params, gains)
    qdd = np.linalg.solve(M, rhs)
    n = q.shape[0]
    force = float(mom[0, :n] @ qdd + mom[0, n])
    out = np.empty_like(xi_u)
    out[0], out[1] = xi_u[1], pdd
    out[2::2], out[3::2] = qd, qdd
    return out, force


@dataclass
class CartTrajectory:
    t: np.ndarray
    states: np.ndarray
    hip_force: np.ndarray


def simulate_cart(xi_u0, model, pdd, duration: float,
                  params: BodyParams = BodyParams(), gains: ControlGains = ControlGains(),
                  dt: float = 1e-3) -> CartTrajectory:
    """Upper body riding a cart whose acceleration is prescribed.

    Parameters
    ----------
    pdd : callable or float
        Cart acceleration p''(t) in m/s^2.
    """
    accel = pdd if callable(pdd) else (lambda t, a=float(pdd): a)
    n = int(round(duration / dt))
    x = np.asarray(xi_u0, float).copy()
    ts = np.arange(n + 1) * dt
    states = np.empty((n + 1, x.size))
    force = np.empty(n + 1)
    for k in range(n + 1):
        t = ts[k]
        k1, f = cart_derivative(x, accel(t), model, params, gains)
        states[k], force[k] = x, f
        if k == n:
            break
        k2, _ = cart_derivative(x + 0.5 * dt * k1, accel(t + 0.5 * dt), model, params, gains)
        k3, _ = cart_derivative(x + 0.5 * dt * k2, accel(t + 0.5 * dt), model, params, gains)
        k4, _ = cart_derivative(x + dt * k3, accel(t + dt), model, params, gains)
        x = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return CartTrajectory(ts, states, force)
