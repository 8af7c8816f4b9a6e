"""Flip-and-throw mission logic.

Phase machine: Takeoff -> TransitToRally -> FlipAscend -> FlipThrow ->
Recovery -> Hold -> ReturnHome -> Land, with a failsafe hold sub-mode on
phase timeout. The ascending stage is a full-thrust fixed-tilt boost that
builds launch speed; the flip stage spins the pitch axis at the rate
reference and releases the probe when the accumulated pitch crosses the
planned release pitch (edge trigger, exactly once). mission_step is a pure
function: everything it needs to remember rides on the phase record.

Throw planning inverts the drag-free range equation

    R = V cos(th) (V sin(th) + sqrt((V sin(th))^2 + 2 g h)) / g

for the smallest release speed whose best in-bounds angle attains the
desired range; slower throws keep the flip rate demand low, which is what
limits recovery.
"""

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from . import dynamics
from .dynamics import Params, PayloadState, SystemState
from .errors import ProbeNotAttachedError, UnreachableRangeError

_E3 = np.array([0.0, 0.0, 1.0])


class PhaseName(Enum):
    TAKEOFF = "takeoff"
    TRANSIT = "transit_to_rally"
    FLIP_ASCEND = "flip_ascend"
    FLIP_THROW = "flip_throw"
    RECOVERY = "recovery"
    HOLD = "hold"
    RETURN_HOME = "return_home"
    LAND = "land"


_ORDER = [
    PhaseName.TAKEOFF,
    PhaseName.TRANSIT,
    PhaseName.FLIP_ASCEND,
    PhaseName.FLIP_THROW,
    PhaseName.RECOVERY,
    PhaseName.HOLD,
    PhaseName.RETURN_HOME,
    PhaseName.LAND,
]


@dataclass(frozen=True)
class MissionPhase:
    """Tagged phase record; payload fields are the machine's memory."""

    name: PhaseName = PhaseName.TAKEOFF
    entered_at: float = 0.0
    last_t: float = 0.0
    flip_angle: float = 0.0  # unwrapped pitch integrated from spin start
    flip_angle0: float = 0.0  # pitch at spin entry
    released: bool = False
    failsafe: bool = False

    def advance(self, name: PhaseName, t: float) -> "MissionPhase":
        if _ORDER.index(name) < _ORDER.index(self.name):
            raise ValueError(f"phase regression {self.name} -> {name}")
        return replace(self, name=name, entered_at=t, last_t=t, failsafe=False)


@dataclass(frozen=True)
class MissionTolerances:
    pos: float = 0.1
    vel: float = 0.1
    rate: float = 0.2
    hold_dwell: float = 8.0
    phase_timeout: float = 15.0


@dataclass(frozen=True)
class MissionProfile:
    """Mission geometry and the flip/boost shaping constants."""

    home: np.ndarray = field(default_factory=lambda: np.zeros(3))
    takeoff_alt: float = 2.0
    rally: np.ndarray = field(default_factory=lambda: np.array([4.0, 0.0, 2.0]))
    yaw: float = 0.0
    flip_rate: float = 5.0 * math.pi
    rate_cap: Optional[float] = None  # optional hard cap on the flip rate command
    boost_tilt: float = math.radians(35.0)
    boost_speed: float = 12.6  # speed trigger ending the ascend boost
    boost_timeout: float = 1.6
    thrust_cut_angle: float = math.radians(110.0)  # spin angle where thrust drops
    coast_thrust_frac: float = 0.05
    cruise_speed: float = 2.0  # reference-trajectory approach speed
    brake_accel: float = 1.2  # reference-trajectory braking deceleration
    entry_brake: float = 6.0  # deceleration absorbing vertical entry momentum

    def __post_init__(self):
        object.__setattr__(self, "home", np.asarray(self.home, float).reshape(3).copy())
        object.__setattr__(self, "rally", np.asarray(self.rally, float).reshape(3).copy())

    @property
    def flip_rate_cmd(self) -> float:
        if self.rate_cap is not None:
            return min(self.flip_rate, self.rate_cap)
        return self.flip_rate


@dataclass(frozen=True)
class ThrowPlan:
    release_speed: float
    release_angle: float
    desired_range: float
    release_height: float
    release_pitch: float

    def __post_init__(self):
        if self.release_speed < 0.0:
            raise ValueError("release_speed must be nonnegative")
        if not 0.0 <= self.release_angle <= math.pi / 2.0:
            raise ValueError("release_angle outside [0, pi/2]")


@dataclass(frozen=True)
class ReferenceSet:
    """Per-phase references: 9-vector tracking state, attitude, body rate."""

    x_ref: np.ndarray
    q_d: np.ndarray  # unit quaternion, wxyz
    omega_d: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x_ref", np.asarray(self.x_ref, float).reshape(9).copy())
        q = np.asarray(self.q_d, float).reshape(4).copy()
        n = np.linalg.norm(q)
        if n <= 0.0:
            raise ValueError("q_d must be a unit quaternion")
        object.__setattr__(self, "q_d", q / n)
        object.__setattr__(self, "omega_d", np.asarray(self.omega_d, float).reshape(3).copy())


def projectile_range(V: float, theta_t: float, h: float, g: float = 9.81) -> float:
    """Drag-free horizontal range from release height h at speed V, angle theta_t."""
    if V < 0.0 or h < 0.0 or g <= 0.0:
        raise ValueError("require V >= 0, h >= 0, g > 0")
    vs = V * math.sin(theta_t)
    vc = V * math.cos(theta_t)
    return vc * (vs + math.sqrt(vs * vs + 2.0 * g * h)) / g


def _best_angle(V: float, h: float, bounds: Tuple[float, float], g: float) -> Tuple[float, float]:
    """Golden-section maximization of range over theta (unimodal for fixed V)."""
    lo, hi = bounds
    if hi - lo < 1e-12:
        return lo, projectile_range(V, lo, h, g)
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc = projectile_range(V, c, h, g)
    fd = projectile_range(V, d, h, g)
    for _ in range(90):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = projectile_range(V, c, h, g)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = projectile_range(V, d, h, g)
    th = 0.5 * (a + b)
    return th, projectile_range(V, th, h, g)


def solve_throw_params(
    desired_range: float,
    h: float,
    v_max: float = 20.0,
    theta_bounds: Tuple[float, float] = (math.radians(20.0), math.radians(70.0)),
    g: float = 9.81,
    release_pitch: float = 1.0,
) -> ThrowPlan:
    """Minimum-speed (V, theta) attaining the desired range from height h.

    Since range is strictly increasing in V at any fixed angle, the minimal
    feasible V is found by bisection on the predicate max_theta R(V, theta)
    >= desired_range, then theta is the maximizing angle at that V.
    """
    if desired_range < 0.0:
        raise ValueError("desired_range must be nonnegative")
    lo, hi = theta_bounds
    if not (0.0 <= lo <= hi <= math.pi / 2.0):
        raise ValueError("theta bounds must be a nonempty interval in [0, pi/2]")
    if desired_range == 0.0:
        return ThrowPlan(0.0, 0.5 * (lo + hi), 0.0, h, release_pitch)

    _, reach = _best_angle(v_max, h, theta_bounds, g)
    if reach < desired_range:
        raise UnreachableRangeError(
            f"range {desired_range:.2f} m beyond reach {reach:.2f} m at v_max {v_max:.2f} m/s"
        )
    v_lo, v_hi = 0.0, v_max
    for _ in range(200):
        v_mid = 0.5 * (v_lo + v_hi)
        _, r = _best_angle(v_mid, h, theta_bounds, g)
        if r >= desired_range:
            v_hi = v_mid
        else:
            v_lo = v_mid
        if v_hi - v_lo < 1e-12:
            break
    theta, _ = _best_angle(v_hi, h, theta_bounds, g)
    return ThrowPlan(v_hi, theta, desired_range, h, release_pitch)


def release_speed_from_pitch_rate(omega, quad_velocity, l: float, link_dir=None) -> np.ndarray:
    """Probe inertial velocity at release: quad velocity + omega x (l p).

    omega may be the scalar pitch rate (y axis implied) or a 3-vector;
    link_dir defaults to hanging.
    """
    if l <= 0.0:
        raise ValueError("link length must be positive")
    w = np.asarray(omega, dtype=float)
    if w.ndim == 0:
        w = np.array([0.0, float(w), 0.0])
    p = np.array([0.0, 0.0, -1.0]) if link_dir is None else np.asarray(link_dir, float)
    return np.asarray(quad_velocity, float).reshape(3) + np.cross(w, l * p)


@dataclass(frozen=True)
class ProbeBallisticState:
    """Free-flight probe at the release instant."""

    position: np.ndarray
    velocity: np.ndarray
    t_release: float

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, float).reshape(3).copy())
        object.__setattr__(self, "velocity", np.asarray(self.velocity, float).reshape(3).copy())

    def at(self, t: float, g: float = 9.81) -> Tuple[np.ndarray, np.ndarray]:
        """Position and velocity at absolute time t (clamped at landing)."""
        dt = max(0.0, t - self.t_release)
        tl = self.landing_time(g)
        if tl is not None:
            dt = min(dt, tl - self.t_release)
        pos = self.position + self.velocity * dt
        pos[2] -= 0.5 * g * dt * dt
        vel = self.velocity - np.array([0.0, 0.0, g * dt])
        return pos, vel

    def landing_time(self, g: float = 9.81) -> Optional[float]:
        """Absolute time of the z = 0 crossing (exact parabola root)."""
        z0, vz = float(self.position[2]), float(self.velocity[2])
        disc = vz * vz + 2.0 * g * z0
        if disc < 0.0:
            return None
        dt = (vz + math.sqrt(disc)) / g
        return self.t_release + dt if dt >= 0.0 else None

    def landing_point(self, g: float = 9.81) -> Optional[np.ndarray]:
        tl = self.landing_time(g)
        if tl is None:
            return None
        pos, _ = self.at(tl, g)
        pos[2] = 0.0
        return pos


def release_probe(
    s: SystemState, params: Params, t: float = 0.0
) -> Tuple[SystemState, Params, ProbeBallisticState]:
    """Detach the probe: it departs with the link-tip velocity it already has.

    A massless rigid link transmits no impulse at the detach instant, so
    total linear momentum is conserved with the quadrotor velocity unchanged;
    the felt recoil is carried by the pre-release tension and by the model
    switch (the quad is lighter afterwards). Returns the payload-free state,
    detached params, and the ballistic probe.
    """
    if not params.probe_attached or s.payload is None:
        raise ProbeNotAttachedError("release requested with no probe attached")
    probe = ProbeBallisticState(
        position=dynamics.probe_position(s, params),
        velocity=dynamics.probe_velocity(s, params),
        t_release=t,
    )
    bare = SystemState(quad=s.quad, payload=None)
    return bare, params.detached(), probe


def _quat_yaw(yaw: float) -> np.ndarray:
    return np.array([math.cos(yaw / 2.0), 0.0, 0.0, math.sin(yaw / 2.0)])


def _posref(p) -> np.ndarray:
    out = np.zeros(9)
    out[0:3] = p
    return out


def _pitch_of(R) -> float:
    """Pitch angle about the y axis in (-pi, pi], from the body z column."""
    return math.atan2(R[0, 2], R[2, 2])


def mission_step(
    phase: MissionPhase,
    s: SystemState,
    t: float,
    plan: ThrowPlan,
    tolerances: MissionTolerances = MissionTolerances(),
    profile: MissionProfile = MissionProfile(),
) -> Tuple[MissionPhase, ReferenceSet, bool]:
    """One tick of the phase machine. Pure: state rides on the phase record.

    Returns the advanced phase, the reference set for the control stack, and
    whether the probe release fires on this tick (edge trigger, at most once
    per mission). Phase timeouts latch the failsafe flag; the phase then
    holds its reference rather than advancing.
    """
    q = s.quad
    pos = q.position
    speed = float(np.linalg.norm(q.velocity))
    rate = float(np.linalg.norm(q.body_rate))
    dt_local = max(0.0, t - phase.last_t)
    release = False
    name = phase.name
    nxt = replace(phase, last_t=t)

    takeoff_point = profile.home + _E3 * profile.takeoff_alt
    return_point = profile.home + _E3 * profile.takeoff_alt

    if name == PhaseName.TAKEOFF:
        if abs(pos[2] - profile.takeoff_alt) < tolerances.pos and speed < tolerances.vel:
            nxt = nxt.advance(PhaseName.TRANSIT, t)
    elif name == PhaseName.TRANSIT:
        if np.linalg.norm(pos - profile.rally) < tolerances.pos:
            nxt = nxt.advance(PhaseName.FLIP_ASCEND, t)
    elif name == PhaseName.FLIP_ASCEND:
        if speed >= profile.boost_speed or (t - phase.entered_at) >= profile.boost_timeout:
            pitch0 = _pitch_of(q.attitude)
            nxt = replace(
                nxt.advance(PhaseName.FLIP_THROW, t),
                flip_angle=pitch0,
                flip_angle0=pitch0,
            )
    elif name == PhaseName.FLIP_THROW:
        angle = phase.flip_angle + float(q.body_rate[1]) * dt_local
        nxt = replace(nxt, flip_angle=angle)
        if not phase.released:
            crossed = phase.flip_angle < plan.release_pitch <= angle
            # a trigger set past one revolution would never fire: force it
            # at spin completion so release happens exactly once
            done = angle >= phase.flip_angle0 + 2.0 * math.pi
            if crossed or done:
                release = True
                nxt = replace(nxt, released=True)
        if nxt.released and nxt.flip_angle >= phase.flip_angle0 + 2.0 * math.pi:
            nxt = nxt.advance(PhaseName.RECOVERY, t)
    elif name == PhaseName.RECOVERY:
        if q.attitude[2, 2] > 0.95 and rate < tolerances.rate:
            nxt = nxt.advance(PhaseName.HOLD, t)
    elif name == PhaseName.HOLD:
        if (t - phase.entered_at) >= tolerances.hold_dwell:
            nxt = nxt.advance(PhaseName.RETURN_HOME, t)
    elif name == PhaseName.RETURN_HOME:
        if np.linalg.norm(pos - return_point) < tolerances.pos:
            nxt = nxt.advance(PhaseName.LAND, t)
    # LAND is terminal; the sim loop detects touchdown

    if (
        nxt.name == phase.name
        and not nxt.failsafe
        and (t - phase.entered_at) > tolerances.phase_timeout
    ):
        nxt = replace(nxt, failsafe=True)

    refs = _references(nxt, s, plan, profile)
    return nxt, refs, release


def _references(phase: MissionPhase, s: SystemState, plan: ThrowPlan, profile: MissionProfile) -> ReferenceSet:
    level = _quat_yaw(profile.yaw)
    zero3 = np.zeros(3)
    name = phase.name
    if phase.failsafe:
        # hold wherever the timeout latched
        return ReferenceSet(_posref(s.quad.position), level, zero3)
    if name == PhaseName.TAKEOFF:
        return ReferenceSet(_posref(profile.home + _E3 * profile.takeoff_alt), level, zero3)
    if name == PhaseName.TRANSIT:
        return ReferenceSet(_posref(profile.rally), level, zero3)
    if name == PhaseName.FLIP_ASCEND:
        # climb reference for the position loop; the flip bypass tracks q_d
        cy, sy = math.cos(profile.yaw / 2.0), math.sin(profile.yaw / 2.0)
        cp, sp = math.cos(profile.boost_tilt / 2.0), math.sin(profile.boost_tilt / 2.0)
        q_d = np.array([cy * cp, -sy * sp, cy * sp, sy * cp])
        return ReferenceSet(_posref(profile.rally + _E3), q_d, zero3)
    if name == PhaseName.FLIP_THROW:
        return ReferenceSet(
            _posref(profile.rally + _E3),
            level,
            np.array([0.0, profile.flip_rate_cmd, 0.0]),
        )
    if name == PhaseName.RECOVERY:
        return ReferenceSet(_posref(profile.rally), level, zero3)
    if name == PhaseName.HOLD:
        return ReferenceSet(_posref(profile.rally), level, zero3)
    if name == PhaseName.RETURN_HOME:
        return ReferenceSet(_posref(profile.home + _E3 * profile.takeoff_alt), level, zero3)
    return ReferenceSet(_posref(profile.home), level, zero3)
