"""Linearised upper body riding a cart.

The upper body (torso, or torso, neck and head) stands on a cart whose
horizontal acceleration p'' is the input. Around the upright equilibrium the
Newton-Euler equations of the segments read

    L z + E xi_u + F p'' = 0,      xi_u' = G z + M xi_u + H p'',

where ``xi_u`` holds the cart position and rate followed by each segment
angle and rate, and ``z`` collects segment accelerations and internal
horizontal joint forces. Eliminating ``z`` gives xi_u' = A xi_u + B p''.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .body import BodyParams, ControlGains, ModelKind

TORSO_GRAVITY_VARIANTS = ("segment", "alternative")


class SingularSystem(ValueError):
    """Raised when L cannot be inverted."""


@dataclass(frozen=True)
class SegmentLinearization:
    """Lumped data of one upper-body segment around the upright pose."""

    mass: float
    length: float
    lower: float
    upper: float
    inertia: float
    kp: float
    kd: float


def segments(params: BodyParams = BodyParams(),
             gains: ControlGains = ControlGains()) -> list[SegmentLinearization]:
    """Torso, neck and head of the head-stabilised upper body, in order."""
    p, g = params, gains
    return [
        SegmentLinearization(p.torso_mass, p.torso_length, p.torso_length / 2,
                             p.torso_length / 2, 0.0, g.trunk_p, g.trunk_d),
        SegmentLinearization(p.neck_mass, p.neck_length, p.neck_length / 2,
                             p.neck_length / 2, 0.0, g.neck_p, g.neck_d),
        SegmentLinearization(p.head_mass, p.head_length, p.head_length, 0.0, 0.0,
                             g.head_p, g.head_d),
    ]


def torso_gravity_terms(params: BodyParams = BodyParams()) -> dict[str, float]:
    """Gravitational stiffness of the torso row under both readings (N m/rad).

    ``segment`` follows from the segment Euler equation,
    g (l_t1 m_t + l_t (m_n + m_h)), which equals g (l_t1 m + l_t2 (m_n + m_h))
    with m the upper-body mass. ``alternative`` weights the first term by the
    torso mass only, g (l_t1 m_t + l_t2 (m_n + m_h)).
    """
    t, n, h = segments(params)[:3]
    g = params.gravity
    above = n.mass + h.mass
    return {
        "segment": g * (t.lower * (t.mass + above) + t.upper * above),
        "alternative": g * (t.lower * t.mass + t.upper * above),
    }


@dataclass
class LinearUpperBody:
    """Matrices of the implicit linear cart model."""

    model: ModelKind
    L: np.ndarray
    E: np.ndarray
    F: np.ndarray
    G: np.ndarray
    H: np.ndarray
    M: np.ndarray

    @property
    def n_state(self) -> int:
        return self.M.shape[0]

    @property
    def force_row(self) -> int:
        """Index of the hip force f_t in z."""
        return 1

    @property
    def head_index(self) -> int:
        """Index of the head angle in xi_u (the trunk angle when the neck is rigid)."""
        return 6 if self.model.index else 2


@dataclass
class StateSpace:
    """Explicit form xi_u' = A xi_u + B p'' with two outputs.

    ``C_beta`` selects the head angle; ``C_force``, ``D_force`` give the hip
    force f_t applied by the cart to the trunk.
    """

    model: ModelKind
    A: np.ndarray
    B: np.ndarray
    C_beta: np.ndarray
    D_beta: float
    C_force: np.ndarray
    D_force: float
    Z_state: np.ndarray
    Z_input: np.ndarray

    def derivative(self, xi, pdd: float) -> np.ndarray:
        return self.A @ np.asarray(xi, dtype=np.float64) + self.B * pdd

    def internal(self, xi, pdd: float) -> np.ndarray:
        """Auxiliary vector z (segment accelerations and joint forces)."""
        return self.Z_state @ np.asarray(xi, dtype=np.float64) + self.Z_input * pdd

    def hip_force(self, xi, pdd: float = 0.0) -> float:
        return float(self.C_force @ np.asarray(xi, dtype=np.float64) + self.D_force * pdd)

    def output(self, name: str) -> tuple[np.ndarray, float]:
        if name == "head_angle":
            return self.C_beta, self.D_beta
        if name == "hip_force":
            return self.C_force, self.D_force
        raise ValueError(f"unknown output {name!r}")


def build_model_a(params: BodyParams = BodyParams(), gains: ControlGains = ControlGains(),
                  gravity_in_stiffness: bool = True) -> LinearUpperBody:
    """Rigid upper body: one segment with z = (alpha'', f_t).

    ``gravity_in_stiffness=False`` reproduces the literal stiffness entry
    -K_t,p + l_1 m, which lacks the factor g; it is kept for comparison only.
    """
    m, l1, inertia = params.upper_mass, params.upper_com_height, params.upper_inertia
    grav = params.gravity if gravity_in_stiffness else 1.0
    L = np.array([[-inertia, -l1], [m * l1, -1.0]])
    E = np.zeros((2, 4))
    E[0, 2] = -gains.trunk_p + l1 * m * grav
    E[0, 3] = -gains.trunk_d
    F = np.array([0.0, m])
    G = np.zeros((4, 2))
    G[3, 0] = 1.0
    H = np.array([0.0, 1.0, 0.0, 0.0])
    M = np.zeros((4, 4))
    M[0, 1] = M[2, 3] = 1.0
    return LinearUpperBody(ModelKind.RIGID_NECK, L, E, F, G, H, M)


def build_model_b(params: BodyParams = BodyParams(), gains: ControlGains = ControlGains(),
                  torso_gravity: str = "segment") -> LinearUpperBody:
    """Torso, neck and head with z = (alpha'', f_t, gamma'', p1'', f_n, beta'', p2'', f_h).

    ``torso_gravity`` picks the gravitational stiffness of the torso row, see
    ``torso_gravity_terms``.
    """
    if torso_gravity not in TORSO_GRAVITY_VARIANTS:
        raise ValueError(f"torso_gravity must be one of {TORSO_GRAVITY_VARIANTS}")
    t, n, h = segments(params, gains)
    g = params.gravity
    L = np.zeros((8, 8))
    # torso: Euler, Newton, link to the neck base
    L[0, 1], L[0, 4] = -t.lower, -t.upper
    L[0, 0] = -t.inertia
    L[1, 0], L[1, 1], L[1, 4] = t.mass * t.lower, -1.0, 1.0
    L[2, 0], L[2, 3] = t.length, -1.0
    # neck
    L[3, 2] = -n.inertia
    L[3, 4], L[3, 7] = -n.lower, -n.upper
    L[4, 2], L[4, 3], L[4, 4], L[4, 7] = n.mass * n.lower, n.mass, -1.0, 1.0
    L[5, 2], L[5, 3], L[5, 6] = n.length, 1.0, -1.0
    # head
    L[6, 5] = -h.inertia
    L[6, 7] = -h.lower
    L[7, 5], L[7, 6], L[7, 7] = h.mass * h.lower, h.mass, -1.0

    E = np.zeros((8, 8))
    E[0, 2] = -t.kp + torso_gravity_terms(params)[torso_gravity]
    E[0, 3], E[0, 4], E[0, 5] = -t.kd, n.kp, n.kd
    E[3, 4] = -n.kp + n.lower * (n.mass + h.mass) * g + n.upper * h.mass * g
    E[3, 5], E[3, 6], E[3, 7] = -n.kd, h.kp, h.kd
    E[6, 6] = -h.kp + h.length * h.mass * g
    E[6, 7] = -h.kd
    F = np.zeros(8)
    F[1], F[2] = t.mass, 1.0
    G = np.zeros((8, 8))
    G[3, 0] = G[5, 2] = G[7, 5] = 1.0
    H = np.zeros(8)
    H[1] = 1.0
    M = np.zeros((8, 8))
    M[0, 1] = M[2, 3] = M[4, 5] = M[6, 7] = 1.0
    return LinearUpperBody(ModelKind.HEAD_STABILIZED, L, E, F, G, H, M)


def build(model, params: BodyParams = BodyParams(),
          gains: ControlGains = ControlGains()) -> LinearUpperBody:
    model = ModelKind.parse(model)
    return build_model_b(params, gains) if model.index else build_model_a(params, gains)


def assemble(lin: LinearUpperBody) -> StateSpace:
    """Eliminate z: A = M - G L^-1 E, B = H - G L^-1 F.

    Raises
    ------
    SingularSystem
        If the condition number of L exceeds 1e12.
    """
    if not np.linalg.cond(lin.L) < 1e12:
        raise SingularSystem("L singular")
    LE = np.linalg.solve(lin.L, lin.E)
    LF = np.linalg.solve(lin.L, lin.F)
    A = lin.M - lin.G @ LE
    B = lin.H - lin.G @ LF
    C_beta = np.zeros(lin.n_state)
    C_beta[lin.head_index] = 1.0
    r = lin.force_row
    return StateSpace(lin.model, A, B, C_beta, 0.0, -LE[r], float(-LF[r]), -LE, -LF)


def internal_block(A: np.ndarray) -> np.ndarray:
    """A without the cart rows and columns (p, p')."""
    return A[2:, 2:]


def default_grid(n: int = 200, lo: float = 0.1, hi: float = 1000.0) -> np.ndarray:
    return np.logspace(np.log10(lo), np.log10(hi), n)


@dataclass
class FrequencyResponse:
    omega: np.ndarray
    response: np.ndarray
    skipped: np.ndarray

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.response)

    @property
    def magnitude_db(self) -> np.ndarray:
        return 20.0 * np.log10(self.magnitude)

    @property
    def phase_deg(self) -> np.ndarray:
        return np.degrees(np.unwrap(np.angle(self.response)))


def frequency_response(ss: StateSpace, output: str, omega=None) -> FrequencyResponse:
    """C (j w I - A)^-1 B + D on the grid ``omega`` (rad/s).

    Points where j w lies within 1e-9 of an eigenvalue of A are skipped
    (NaN) and flagged in ``skipped``.
    """
    omega = default_grid() if omega is None else np.asarray(omega, dtype=np.float64)
    if (omega <= 0).any():
        raise ValueError("frequencies must be positive")
    C, D = ss.output(output)
    eig = np.linalg.eigvals(ss.A)
    n = ss.A.shape[0]
    out = np.empty(omega.size, dtype=complex)
    skipped = np.zeros(omega.size, dtype=bool)
    for k, w in enumerate(omega):
        s = 1j * w
        if np.min(np.abs(eig - s)) < 1e-9:
            out[k], skipped[k] = np.nan, True
            continue
        out[k] = C @ np.linalg.solve(s * np.eye(n) - ss.A, ss.B) + D
    return FrequencyResponse(omega, out, skipped)


@dataclass
class ImpulseResponse:
    """Cart power after an instantaneous velocity change.

    ``integral`` is the exact time integral of ``power`` over the window; the
    impulsive work at t = 0 itself is not part of it.
    """

    t: np.ndarray
    power: np.ndarray
    hip_force: np.ndarray
    states: np.ndarray
    integral: float


def impulse_power_response(ss: StateSpace, v_pre: float = 1.2, v_post: float = 1.0,
                           duration: float = 2.0, n_points: int = 2001) -> ImpulseResponse:
    """Response to a cart velocity step from ``v_pre`` to ``v_post``.

    The step is an acceleration impulse of area ``v_post - v_pre``; the state
    jumps by B times that area from the upright pose moving at ``v_pre``.
    Afterwards p'' = 0, and the cart power is f_t(t) * p'(t).
    """
    if duration <= 0:
        raise ValueError("duration must be positive")
    n = ss.A.shape[0]
    x0 = np.zeros(n)
    x0[1] = v_pre
    x0 = x0 + ss.B * (v_post - v_pre)
    t = np.linspace(0.0, duration, n_points)
    step = expm(ss.A * (t[1] - t[0]))
    states = np.empty((n_points, n))
    states[0] = x0
    for k in range(1, n_points):
        states[k] = step @ states[k - 1]
    force = states @ ss.C_force
    power = force * states[:, 1]
    # exact integral: p' stays at v_post, so the work is v_post * C_f * int x dt
    blk = np.zeros((2 * n, 2 * n))
    blk[:n, :n] = ss.A
    blk[:n, n:] = np.eye(n)
    integ = expm(blk * duration)[:n, n:] @ x0
    return ImpulseResponse(t, power, force, states, float(v_post * ss.C_force @ integ))
