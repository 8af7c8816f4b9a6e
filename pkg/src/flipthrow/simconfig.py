"""Mission configuration: a single versioned JSON document with embedded
defaults, so an empty file (or {}) runs the stock flip-and-throw mission.

Sections: params (plant constants), mpc, attitude (outer/inner loop gains),
mission (tolerances, profile geometry, throw target), sim (rates, duration,
seed, output). The controller mass and default input bounds derive from the
plant constants rather than being configured twice.
"""

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .attitude import AttitudeGains
from .dynamics import Params
from .errors import ConfigError
from .mission import MissionProfile, MissionTolerances, ThrowPlan, solve_throw_params
from .mpc import MpcConfig

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class LoopGains:
    """Outer lateral PD and inner rate-servo constants."""

    attitude: AttitudeGains = field(default_factory=AttitudeGains)
    rate_tau: float = 0.03
    moment_limit: float = 6.0
    lateral_kp: float = 2.0
    lateral_kv: float = 2.8
    lateral_accel_limit: float = 6.8
    # reference trim: proportional boost compensates the short-horizon
    # solver's weak small-error authority, the integrator absorbs bias
    ref_trim_kp: float = 4.0
    ref_trim_ki: float = 0.5
    ref_trim_cap: float = 1.0
    ref_trim_int_cap: float = 0.5

    def __post_init__(self):
        if self.rate_tau <= 0.0 or self.moment_limit <= 0.0:
            raise ValueError("rate_tau and moment_limit must be positive")
        if self.lateral_kp < 0.0 or self.lateral_kv < 0.0 or self.lateral_accel_limit <= 0.0:
            raise ValueError("lateral gains must be nonnegative, accel limit positive")
        if min(self.ref_trim_kp, self.ref_trim_ki, self.ref_trim_cap, self.ref_trim_int_cap) < 0:
            raise ValueError("reference trim constants must be nonnegative")


@dataclass(frozen=True)
class ThrowTarget:
    desired_range: float = 20.0
    v_max: float = 20.0
    theta_min: float = math.radians(20.0)
    theta_max: float = math.radians(70.0)
    release_height: float = 5.8  # planner height hint
    release_pitch: float = 2.6  # accumulated-pitch trigger, tuned default

    def __post_init__(self):
        if self.desired_range < 0.0 or self.v_max <= 0.0:
            raise ValueError("desired_range must be >= 0 and v_max > 0")
        if not (0.0 <= self.theta_min <= self.theta_max <= math.pi / 2.0):
            raise ValueError("theta bounds must be ordered within [0, pi/2]")


@dataclass(frozen=True)
class SimConfig:
    params: Params = field(default_factory=Params)
    mpc: MpcConfig = field(default_factory=MpcConfig)
    gains: LoopGains = field(default_factory=LoopGains)
    tolerances: MissionTolerances = field(default_factory=MissionTolerances)
    profile: MissionProfile = field(default_factory=MissionProfile)
    throw: ThrowTarget = field(default_factory=ThrowTarget)
    sim_dt: float = 0.001
    duration: float = 40.0
    seed: int = 0
    out_dir: str = "out"

    def __post_init__(self):
        # duration 0 is the legal boundary case: a run that logs nothing
        if self.duration < 0.0:
            raise ValueError("duration must be nonnegative")
        if self.sim_dt <= 0.0:
            raise ValueError("sim_dt must be positive")
        ratio = self.mpc.dt / self.sim_dt
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
            raise ValueError("sim_dt must divide the mpc period")

    @property
    def mpc_every(self) -> int:
        return int(round(self.mpc.dt / self.sim_dt))

    def throw_plan(self) -> ThrowPlan:
        return solve_throw_params(
            self.throw.desired_range,
            self.throw.release_height,
            v_max=self.throw.v_max,
            theta_bounds=(self.throw.theta_min, self.throw.theta_max),
            g=self.params.gravity,
            release_pitch=self.throw.release_pitch,
        )


def _section(doc, key, problems):
    sec = doc.pop(key, {})
    if not isinstance(sec, dict):
        problems.append(f"section '{key}' must be an object")
        return {}
    return sec


def _take(sec, key, default, problems, where, kind=float):
    val = sec.pop(key, None)
    if val is None:
        return default
    try:
        if kind is float:
            out = float(val)
            if not math.isfinite(out):
                raise ValueError
            return out
        if kind is int:
            return int(val)
        if kind is str:
            return str(val)
        if kind is bool:
            return bool(val)
        return val
    except (TypeError, ValueError):
        problems.append(f"{where}.{key}: expected {kind.__name__}, got {val!r}")
        return default


def _take_vec(sec, key, default, problems, where, n):
    val = sec.pop(key, None)
    if val is None:
        return default
    try:
        arr = np.asarray(val, dtype=float).reshape(n)
        if not np.all(np.isfinite(arr)):
            raise ValueError
        return arr
    except (TypeError, ValueError):
        problems.append(f"{where}.{key}: expected {n} finite numbers, got {val!r}")
        return default


def _leftovers(sec, where, problems):
    prefix = f"{where}." if where else ""
    for key in sec:
        problems.append(f"unknown key {prefix}{key}")


def config_from_dict(doc: dict) -> SimConfig:
    """Build a SimConfig from a parsed JSON document, defaults filled in.

    All schema problems are collected and reported in one ConfigError.
    """
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    doc = json.loads(json.dumps(doc))  # deep copy; also rejects non-JSON types
    problems: list = []

    version = doc.pop("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        problems.append(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")

    d = SimConfig()  # defaults source

    sec = _section(doc, "params", problems)
    inertia = _take_vec(sec, "inertia_diag", np.diag(d.params.inertia), problems, "params", 3)
    try:
        params = Params(
            quad_mass=_take(sec, "quad_mass", d.params.quad_mass, problems, "params"),
            probe_mass=_take(sec, "probe_mass", d.params.probe_mass, problems, "params"),
            link_length=_take(sec, "link_length", d.params.link_length, problems, "params"),
            inertia=np.diag(inertia),
            gravity=_take(sec, "gravity", d.params.gravity, problems, "params"),
        )
    except ValueError as exc:
        problems.append(f"params: {exc}")
        params = d.params
    _leftovers(sec, "params", problems)

    sec = _section(doc, "mpc", problems)
    mass = params.total_mass
    u_max = sec.pop("u_max", None)
    if u_max is not None:
        try:
            u_max = float(u_max)
        except (TypeError, ValueError):
            problems.append(f"mpc.u_max: expected number, got {u_max!r}")
            u_max = None
    try:
        mpc_cfg = MpcConfig(
            horizon=_take(sec, "horizon", d.mpc.horizon, problems, "mpc", int),
            dt=_take(sec, "dt", d.mpc.dt, problems, "mpc"),
            q_diag=_take_vec(sec, "q_diag", d.mpc.q_diag, problems, "mpc", 9),
            p_diag=_take_vec(sec, "p_diag", d.mpc.p_diag, problems, "mpc", 9),
            r_weight=_take(sec, "r_weight", d.mpc.r_weight, problems, "mpc"),
            u_min=_take(sec, "u_min", d.mpc.u_min, problems, "mpc"),
            u_max=u_max,
            max_sqp_iters=_take(sec, "max_sqp_iters", d.mpc.max_sqp_iters, problems, "mpc", int),
            kkt_tol=_take(sec, "kkt_tol", d.mpc.kkt_tol, problems, "mpc"),
            mass=mass,
            gravity=params.gravity,
            lateral_tau=_take(sec, "lateral_tau", d.mpc.lateral_tau, problems, "mpc"),
        )
    except ValueError as exc:
        problems.append(f"mpc: {exc}")
        mpc_cfg = MpcConfig(mass=mass, gravity=params.gravity)
    _leftovers(sec, "mpc", problems)

    sec = _section(doc, "attitude", problems)
    try:
        gains = LoopGains(
            attitude=AttitudeGains(
                tau_omega=_take(sec, "tau_omega", d.gains.attitude.tau_omega, problems, "attitude")
            ),
            rate_tau=_take(sec, "rate_tau", d.gains.rate_tau, problems, "attitude"),
            moment_limit=_take(sec, "moment_limit", d.gains.moment_limit, problems, "attitude"),
            lateral_kp=_take(sec, "lateral_kp", d.gains.lateral_kp, problems, "attitude"),
            lateral_kv=_take(sec, "lateral_kv", d.gains.lateral_kv, problems, "attitude"),
            lateral_accel_limit=_take(
                sec, "lateral_accel_limit", d.gains.lateral_accel_limit, problems, "attitude"
            ),
            ref_trim_kp=_take(sec, "ref_trim_kp", d.gains.ref_trim_kp, problems, "attitude"),
            ref_trim_ki=_take(sec, "ref_trim_ki", d.gains.ref_trim_ki, problems, "attitude"),
            ref_trim_cap=_take(sec, "ref_trim_cap", d.gains.ref_trim_cap, problems, "attitude"),
            ref_trim_int_cap=_take(
                sec, "ref_trim_int_cap", d.gains.ref_trim_int_cap, problems, "attitude"
            ),
        )
    except ValueError as exc:
        problems.append(f"attitude: {exc}")
        gains = d.gains
    _leftovers(sec, "attitude", problems)

    sec = _section(doc, "mission", problems)
    tol_sec = sec.pop("tolerances", {}) or {}
    try:
        tolerances = MissionTolerances(
            pos=_take(tol_sec, "pos", d.tolerances.pos, problems, "mission.tolerances"),
            vel=_take(tol_sec, "vel", d.tolerances.vel, problems, "mission.tolerances"),
            rate=_take(tol_sec, "rate", d.tolerances.rate, problems, "mission.tolerances"),
            hold_dwell=_take(
                tol_sec, "hold_dwell", d.tolerances.hold_dwell, problems, "mission.tolerances"
            ),
            phase_timeout=_take(
                tol_sec, "phase_timeout", d.tolerances.phase_timeout, problems, "mission.tolerances"
            ),
        )
    except ValueError as exc:
        problems.append(f"mission.tolerances: {exc}")
        tolerances = d.tolerances
    _leftovers(tol_sec, "mission.tolerances", problems)

    prof_sec = sec.pop("profile", {}) or {}
    rate_cap = prof_sec.pop("rate_cap", None)
    if rate_cap is not None:
        try:
            rate_cap = float(rate_cap)
        except (TypeError, ValueError):
            problems.append(f"mission.profile.rate_cap: expected number, got {rate_cap!r}")
            rate_cap = None
    try:
        profile = MissionProfile(
            home=_take_vec(prof_sec, "home", d.profile.home, problems, "mission.profile", 3),
            takeoff_alt=_take(
                prof_sec, "takeoff_alt", d.profile.takeoff_alt, problems, "mission.profile"
            ),
            rally=_take_vec(prof_sec, "rally", d.profile.rally, problems, "mission.profile", 3),
            yaw=_take(prof_sec, "yaw", d.profile.yaw, problems, "mission.profile"),
            flip_rate=_take(
                prof_sec, "flip_rate", d.profile.flip_rate, problems, "mission.profile"
            ),
            rate_cap=rate_cap,
            boost_tilt=math.radians(
                _take(
                    prof_sec,
                    "boost_tilt_deg",
                    math.degrees(d.profile.boost_tilt),
                    problems,
                    "mission.profile",
                )
            ),
            boost_speed=_take(
                prof_sec, "boost_speed", d.profile.boost_speed, problems, "mission.profile"
            ),
            boost_timeout=_take(
                prof_sec, "boost_timeout", d.profile.boost_timeout, problems, "mission.profile"
            ),
            thrust_cut_angle=math.radians(
                _take(
                    prof_sec,
                    "thrust_cut_angle_deg",
                    math.degrees(d.profile.thrust_cut_angle),
                    problems,
                    "mission.profile",
                )
            ),
            coast_thrust_frac=_take(
                prof_sec,
                "coast_thrust_frac",
                d.profile.coast_thrust_frac,
                problems,
                "mission.profile",
            ),
            cruise_speed=_take(
                prof_sec, "cruise_speed", d.profile.cruise_speed, problems, "mission.profile"
            ),
            brake_accel=_take(
                prof_sec, "brake_accel", d.profile.brake_accel, problems, "mission.profile"
            ),
            entry_brake=_take(
                prof_sec, "entry_brake", d.profile.entry_brake, problems, "mission.profile"
            ),
        )
    except ValueError as exc:
        problems.append(f"mission.profile: {exc}")
        profile = d.profile
    _leftovers(prof_sec, "mission.profile", problems)

    throw_sec = sec.pop("throw", {}) or {}
    try:
        throw = ThrowTarget(
            desired_range=_take(
                throw_sec, "desired_range", d.throw.desired_range, problems, "mission.throw"
            ),
            v_max=_take(throw_sec, "v_max", d.throw.v_max, problems, "mission.throw"),
            theta_min=math.radians(
                _take(
                    throw_sec,
                    "theta_min_deg",
                    math.degrees(d.throw.theta_min),
                    problems,
                    "mission.throw",
                )
            ),
            theta_max=math.radians(
                _take(
                    throw_sec,
                    "theta_max_deg",
                    math.degrees(d.throw.theta_max),
                    problems,
                    "mission.throw",
                )
            ),
            release_height=_take(
                throw_sec, "release_height", d.throw.release_height, problems, "mission.throw"
            ),
            release_pitch=_take(
                throw_sec, "release_pitch", d.throw.release_pitch, problems, "mission.throw"
            ),
        )
    except ValueError as exc:
        problems.append(f"mission.throw: {exc}")
        throw = d.throw
    _leftovers(throw_sec, "mission.throw", problems)
    _leftovers(sec, "mission", problems)

    sec = _section(doc, "sim", problems)
    sim_dt = _take(sec, "dt", d.sim_dt, problems, "sim")
    duration = _take(sec, "duration", d.duration, problems, "sim")
    seed = _take(sec, "seed", d.seed, problems, "sim", int)
    out_dir = _take(sec, "out_dir", d.out_dir, problems, "sim", str)
    _leftovers(sec, "sim", problems)
    _leftovers(doc, "", problems)

    if problems:
        raise ConfigError("; ".join(problems))
    try:
        return SimConfig(
            params=params,
            mpc=mpc_cfg,
            gains=gains,
            tolerances=tolerances,
            profile=profile,
            throw=throw,
            sim_dt=sim_dt,
            duration=duration,
            seed=seed,
            out_dir=out_dir,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: Optional[str]) -> SimConfig:
    """Read a JSON config file; None or an empty file yields the defaults."""
    if path is None:
        return SimConfig()
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read().strip()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    if not text:
        return SimConfig()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return config_from_dict(doc)
