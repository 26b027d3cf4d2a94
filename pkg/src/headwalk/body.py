"""Anthropometric parameters, control gains and state containers.

All quantities are SI. Angles are absolute segment tilts from the vertical,
positive when the upper end of the segment leans forward.
"""
from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np


class ModelKind(enum.Enum):
    """Upper-body variant of the walker."""

    RIGID_NECK = "a"
    HEAD_STABILIZED = "b"

    @property
    def index(self) -> int:
        return 0 if self is ModelKind.RIGID_NECK else 1

    @property
    def label(self) -> str:
        return "model_a" if self is ModelKind.RIGID_NECK else "model_b"

    @classmethod
    def parse(cls, value: "str | ModelKind") -> "ModelKind":
        if isinstance(value, ModelKind):
            return value
        key = str(value).strip().lower()
        if key in ("a", "model_a", "rigid", "rigid_neck"):
            return cls.RIGID_NECK
        if key in ("b", "model_b", "head", "head_stabilized"):
            return cls.HEAD_STABILIZED
        raise ValueError(f"unknown model kind: {value!r}")


MODEL_A = ModelKind.RIGID_NECK
MODEL_B = ModelKind.HEAD_STABILIZED


@dataclass(frozen=True)
class BodyParams:
    """Segment lengths (m), point masses (kg) and gravity (m/s^2)."""

    head_length: float = 0.09
    neck_length: float = 0.07
    torso_length: float = 0.75
    leg_rest_length: float = 1.0
    leg_com_distance: float = 0.40
    head_mass: float = 4.0
    neck_mass: float = 1.0
    torso_mass: float = 45.0
    leg_mass: float = 15.0
    gravity: float = 9.81

    def as_array(self) -> np.ndarray:
        """Flat layout used by the compiled kernels."""
        return np.array([
            self.head_length, self.neck_length, self.torso_length,
            self.leg_rest_length, self.leg_com_distance, self.head_mass,
            self.neck_mass, self.torso_mass, self.leg_mass, self.gravity,
        ], dtype=np.float64)

    @property
    def upper_mass(self) -> float:
        return self.torso_mass + self.neck_mass + self.head_mass

    @property
    def total_mass(self) -> float:
        return self.upper_mass + 2.0 * self.leg_mass

    @property
    def standing_height(self) -> float:
        return self.leg_rest_length + self.torso_length + self.neck_length + self.head_length

    @property
    def upper_com_height(self) -> float:
        """Distance from the hip to the upper-body centre of mass (l_1)."""
        lt, ln, lh = self.torso_length, self.neck_length, self.head_length
        moment = (self.torso_mass * lt / 2 + self.neck_mass * (lt + ln / 2)
                  + self.head_mass * (lt + ln + lh))
        return moment / self.upper_mass

    @property
    def upper_inertia(self) -> float:
        """Moment of inertia of the rigid upper body about its centre of mass."""
        l1 = self.upper_com_height
        lt, ln, lh = self.torso_length, self.neck_length, self.head_length
        return (self.torso_mass * (l1 - lt / 2) ** 2
                + self.neck_mass * (l1 - lt - ln / 2) ** 2
                + self.head_mass * (l1 - lt - ln - lh) ** 2)

    def scaled(self, factor: float) -> "BodyParams":
        """Same geometry with every mass multiplied by ``factor``."""
        return replace(self, head_mass=self.head_mass * factor,
                       neck_mass=self.neck_mass * factor,
                       torso_mass=self.torso_mass * factor,
                       leg_mass=self.leg_mass * factor)


@dataclass(frozen=True)
class ControlGains:
    """Toe spring-damper, toe-off impulsion and PD gains."""

    toe_stiffness: float = 50000.0
    toe_damping: float = 2000.0
    impulse_velocity: float = 1.0
    hip_p: float = 10.0
    hip_reference: float = 0.3
    hip_d: float = 1.5
    trunk_p: float = 300.0
    trunk_d: float = 150.0
    neck_p: float = 50.0
    neck_d: float = 0.6
    head_p: float = 150.0
    head_d: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"gain {f.name} must be non-negative")

    def as_array(self) -> np.ndarray:
        return np.array([
            self.toe_stiffness, self.toe_damping, self.impulse_velocity,
            self.hip_p, self.hip_reference, self.hip_d, self.trunk_p,
            self.trunk_d, self.neck_p, self.neck_d, self.head_p, self.head_d,
        ], dtype=np.float64)

    def scaled(self, factor: float) -> "ControlGains":
        """Force and torque gains multiplied by ``factor``.

        The impulsion velocity and the hip reference angle are kinematic and
        stay unchanged, so a walker with masses and gains scaled together
        follows the same trajectories.
        """
        keep = {"impulse_velocity", "hip_reference"}
        return replace(self, **{f.name: getattr(self, f.name) * factor
                                for f in fields(self) if f.name not in keep})


STATE_COMPONENTS = (
    "theta", "theta_dot", "phi_dot", "eta", "alpha", "alpha_dot",
    "gamma", "gamma_dot", "beta", "beta_dot", "lp", "lp_dot",
)


@dataclass(frozen=True)
class WalkerState:
    """Pre-impact section state.

    ``lp`` is the stance-leg deflection l_p - l_p0. For the rigid-neck model
    gamma and beta mirror alpha.
    """

    theta: float
    theta_dot: float
    phi_dot: float
    eta: float
    alpha: float
    alpha_dot: float
    gamma: float
    gamma_dot: float
    beta: float
    beta_dot: float
    lp: float
    lp_dot: float

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, k) for k in STATE_COMPONENTS], dtype=np.float64)

    @classmethod
    def from_array(cls, values) -> "WalkerState":
        values = np.asarray(values, dtype=np.float64).ravel()
        if values.shape != (12,):
            raise ValueError("a walker state has 12 components")
        return cls(*(float(v) for v in values))

    def constrained(self, model: ModelKind) -> "WalkerState":
        """Copy with the rigid-neck constraint applied when ``model`` is A."""
        if ModelKind.parse(model) is MODEL_B:
            return self
        return replace(self, gamma=self.alpha, gamma_dot=self.alpha_dot,
                       beta=self.alpha, beta_dot=self.alpha_dot)


# published pre-impact limit-cycle states, used as search seeds
REFERENCE_STATES = {
    MODEL_A: WalkerState(0.623, -0.264, 1.58, 0.0, -0.0288, -0.283,
                         -0.0288, -0.283, -0.0288, -0.283, -0.0112, 0.0153),
    MODEL_B: WalkerState(0.517, 1.07, 1.32, 0.0, -0.0289, -0.277,
                         -0.026, -0.066, -0.00449, -0.0132, -0.0128, 0.0044),
}


@dataclass(frozen=True)
class SegmentPoint:
    """Position and velocity of one point mass."""

    name: str
    position: tuple[float, float]
    velocity: tuple[float, float]


def forward_kinematics(
    phi: float, lp: float, psi: float, alpha: float, gamma: float, beta: float,
    rates: "tuple[float, ...] | None" = None,
    params: BodyParams = BodyParams(),
    toe: tuple[float, float] = (0.0, 0.0),
) -> list[SegmentPoint]:
    """Point-mass positions and velocities for a stance configuration.

    Parameters
    ----------
    phi, psi : float
        Absolute stance and swing leg angles.
    lp : float
        Stance leg length (m).
    alpha, gamma, beta : float
        Absolute torso, neck and head tilts.
    rates : tuple of float, optional
        (phi_dot, lp_dot, psi_dot, alpha_dot, gamma_dot, beta_dot); zero if omitted.

    Returns
    -------
    list of SegmentPoint
        Head (at the top of the head), neck, torso, stance leg and swing leg,
        in that order.
    """
    w = (0.0,) * 6 if rates is None else tuple(float(r) for r in rates)
    wp, lpd, ww, wa, wg, wb = w

    def u(a):
        return np.array([math.sin(a), math.cos(a)])

    def du(a, rate):
        return rate * np.array([math.cos(a), -math.sin(a)])

    hip = np.asarray(toe, dtype=float) + lp * u(phi)
    hip_v = lpd * u(phi) + lp * du(phi, wp)
    lt, ln, lh = params.torso_length, params.neck_length, params.head_length
    ll = params.leg_com_distance

    neck_base = hip + lt * u(alpha)
    neck_base_v = hip_v + lt * du(alpha, wa)
    points = {
        "head": (neck_base + ln * u(gamma) + lh * u(beta),
                 neck_base_v + ln * du(gamma, wg) + lh * du(beta, wb)),
        "neck": (neck_base + 0.5 * ln * u(gamma), neck_base_v + 0.5 * ln * du(gamma, wg)),
        "torso": (hip + 0.5 * lt * u(alpha), hip_v + 0.5 * lt * du(alpha, wa)),
        "stance_leg": (hip - ll * u(phi), hip_v - ll * du(phi, wp)),
        "swing_leg": (hip - ll * u(psi), hip_v - ll * du(psi, ww)),
    }
    return [SegmentPoint(k, tuple(map(float, p)), tuple(map(float, v)))
            for k, (p, v) in points.items()]


def anthropometric_checks(params: BodyParams) -> list[str]:
    """List the violated invariants of ``params``; empty when valid."""
    problems = []
    for name in ("head_length", "neck_length", "torso_length", "leg_rest_length",
                 "leg_com_distance"):
        if not getattr(params, name) > 0:
            problems.append(f"non-positive length: {name}")
    for name in ("head_mass", "neck_mass", "torso_mass", "leg_mass"):
        if not getattr(params, name) > 0:
            problems.append(f"non-positive mass: {name}")
    if not params.gravity > 0:
        problems.append("non-positive gravity")
    if params.leg_com_distance >= params.leg_rest_length:
        problems.append("leg CoM beyond toe")
    return problems


def parse_key_values(text: str, source: str = "<config>") -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ValueError(f"{source}:{lineno}: empty key")
        out[key] = value
    return out


def load_config(path: "str | Path", *targets):
    """Read a key-value file into dataclass instances.

    Each key must name a field of exactly one of the ``targets`` (instances
    whose fields provide the defaults). Returns updated copies in order.
    Unknown keys raise ``ValueError``.
    """
    path = Path(path)
    values = parse_key_values(path.read_text(), str(path))
    owners = {}
    for i, target in enumerate(targets):
        for f in fields(target):
            owners.setdefault(f.name, i)
    updates = [dict() for _ in targets]
    for key, raw in values.items():
        if key not in owners:
            raise ValueError(f"{path}: unknown key {key!r}")
        try:
            updates[owners[key]][key] = float(raw)
        except ValueError:
            raise ValueError(f"{path}: value for {key!r} is not a number: {raw!r}") from None
    return tuple(replace(t, **u) for t, u in zip(targets, updates))


def describe(obj) -> dict[str, float]:
    """Plain dict of a parameter dataclass, for output headers."""
    return asdict(obj)
