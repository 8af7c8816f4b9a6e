"""Closed-loop mission simulator and telemetry writer.

Two-rate loop: dynamics and the attitude/rate stack run every sim_dt tick,
the horizon solver runs every mpc.dt (40 ticks at the defaults). Control
per phase:

  normal phases   cascade: thrust channel from the horizon solver, lateral
                  guidance a PD on the phase reference shaping the force
                  direction, geometric attitude loop, rate servo to moments
  flip ascend     full thrust, attitude held on the boost tilt
  flip throw      body-rate command straight to the rate servo; full thrust
                  until the cut angle, then a small coast fraction

The solver stays in the loop during the bypass phases (its output is simply
not applied) so the rate contract holds tick for tick. Logs are one CSV row
per tick; everything in the control path is deterministic, only the solve
time column carries wall-clock jitter.
"""

import csv
import math
import time
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np

from . import dynamics, mission, mpc
from ._backend import backend_name
from .attitude import attitude_command, attitude_error, body_rate_command
from .dynamics import ControlInput, PayloadState, QuadState, SystemState
from .errors import NoFeasibleHistoryError, SimDivergedError
from .mission import MissionPhase, PhaseName, ProbeBallisticState
from .simconfig import SimConfig

CSV_HEADER = (
    "t,phase,px,py,pz,vx,vy,vz,qw,qx,qy,qz,wx,wy,wz,"
    "pl_x,pl_y,pl_z,pl_vx,pl_vy,pl_vz,probe_attached,"
    "thrust,mx,my,mz,mpc_cost,mpc_status,mpc_solve_us"
)


@dataclass(frozen=True)
class LogRecord:
    t: float
    phase: str
    position: np.ndarray
    velocity: np.ndarray
    quat: np.ndarray  # wxyz
    body_rate: np.ndarray
    payload: np.ndarray  # link dir+omega while attached, probe pos+vel after
    probe_attached: bool
    thrust: float
    moment: np.ndarray
    mpc_cost: float
    mpc_status: str
    mpc_solve_us: float

    def row(self) -> list:
        out = [self.t, self.phase]
        out += list(self.position) + list(self.velocity)
        out += list(self.quat) + list(self.body_rate)
        out += list(self.payload) + [1 if self.probe_attached else 0]
        out += [self.thrust] + list(self.moment)
        out += [self.mpc_cost, self.mpc_status, self.mpc_solve_us]
        return out


@dataclass
class PhaseStats:
    phase: str
    t_enter: float
    displacement: float
    arrived: bool = False
    max_error: float = 0.0
    steady_error: float = 0.0

    def as_dict(self) -> dict:
        return {
            "phase": self.phase,
            "t_enter": self.t_enter,
            "displacement": self.displacement,
            "arrived": self.arrived,
            "max_error": self.max_error,
            "steady_error": self.steady_error if self.arrived else None,
        }


@dataclass
class SimReport:
    completed: bool
    final_phase: str
    duration_simulated: float
    wall_time_s: float
    phase_timeline: List[dict]
    tracking: List[dict]
    peak_pitch_rate: float
    release: Optional[dict]
    landing: Optional[dict]
    range_from_release: Optional[float]
    mpc_stats: dict
    record_count: int
    seed: int
    backend: str
    records: List[LogRecord] = field(default_factory=list, repr=False)

    def as_dict(self) -> dict:
        return {
            "completed": self.completed,
            "final_phase": self.final_phase,
            "duration_simulated": self.duration_simulated,
            "wall_time_s": self.wall_time_s,
            "phase_timeline": self.phase_timeline,
            "tracking": self.tracking,
            "peak_pitch_rate": self.peak_pitch_rate,
            "release": self.release,
            "landing": self.landing,
            "range_from_release": self.range_from_release,
            "mpc": self.mpc_stats,
            "record_count": self.record_count,
            "seed": self.seed,
            "backend": self.backend,
        }


def _mat_to_quat(R) -> np.ndarray:
    """Rotation matrix to unit quaternion (wxyz), stable branch selection."""
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0.0:
        s = math.sqrt(tr + 1.0) * 2.0
        return np.array(
            [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
        )
    i = int(np.argmax([R[0, 0], R[1, 1], R[2, 2]]))
    if i == 0:
        s = math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2.0
        q = [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
    elif i == 1:
        s = math.sqrt(1.0 - R[0, 0] + R[1, 1] - R[2, 2]) * 2.0
        q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
    else:
        s = math.sqrt(1.0 - R[0, 0] - R[1, 1] + R[2, 2]) * 2.0
        q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
    return np.array(q)


def _quat_to_mat(q) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def _rate_servo(omega_cmd, state: QuadState, params, rate_tau: float, clamp: float) -> np.ndarray:
    """Feedback-linearizing moment: I (cmd - rate)/tau + rate x I rate."""
    I = params.inertia
    Om = state.body_rate
    M = I @ ((omega_cmd - Om) / rate_tau) + np.cross(Om, I @ Om)
    return np.clip(M, -clamp, clamp)


class _TrajRef:
    """Time-indexed reference: entry braking, then a trapezoidal transfer.

    A constant far setpoint makes the short-horizon solver timid (the payoff
    of moving sits mostly beyond the window), so each phase gets a feasible
    trajectory in time and the solver samples it at t + k*dt. Any entry
    velocity is first ramped to rest along its own direction (otherwise a
    handoff with momentum overshoots a rest-to-rest profile), and the
    point-to-point transfer starts from the stopping point. Built once per
    target change; past arrival it clamps to the endpoint at rest.
    """

    def __init__(self, t0: float, p0, v0, p1, cruise: float, brake: float, entry_brake: float):
        self.t0 = t0
        self.p1 = np.asarray(p1, float).copy()
        self.pb = np.asarray(p0, float).copy()
        v0 = np.asarray(v0, float)
        speed0 = float(np.linalg.norm(v0))
        if speed0 > 0.05 and entry_brake > 0.0:
            self.v0 = v0.copy()
            self.vdir = v0 / speed0
            self.eb = entry_brake
            self.t_b = speed0 / entry_brake
            self.ps = self.pb + self.vdir * (speed0 * speed0 / (2.0 * entry_brake))
        else:
            self.v0 = np.zeros(3)
            self.vdir = np.zeros(3)
            self.eb = 0.0
            self.t_b = 0.0
            self.ps = self.pb.copy()
        d = self.p1 - self.ps
        self.dist = float(np.linalg.norm(d))
        self.axis = d / self.dist if self.dist > 1e-12 else np.zeros(3)
        self.brake = brake
        self.v_peak = min(cruise, math.sqrt(brake * self.dist)) if self.dist > 0 else 0.0
        self.t_a = self.v_peak / brake if brake > 0 else 0.0
        d_a = 0.5 * brake * self.t_a * self.t_a
        self.t_c = (self.dist - 2.0 * d_a) / self.v_peak if self.v_peak > 0 else 0.0
        self.total = self.t_b + 2.0 * self.t_a + self.t_c

    def _transfer(self, tau: float):
        b = self.brake
        if self.dist <= 1e-12 or tau >= 2.0 * self.t_a + self.t_c:
            return self.dist, 0.0, 0.0
        if tau < self.t_a:
            return 0.5 * b * tau * tau, b * tau, b
        if tau < self.t_a + self.t_c:
            d_a = 0.5 * b * self.t_a * self.t_a
            return d_a + self.v_peak * (tau - self.t_a), self.v_peak, 0.0
        tb = 2.0 * self.t_a + self.t_c - tau
        return self.dist - 0.5 * b * tb * tb, b * tb, -b

    def sample(self, tau: float):
        if tau < self.t_b:
            pos = self.pb + self.v0 * tau - self.vdir * (0.5 * self.eb * tau * tau)
            vel = self.v0 - self.vdir * (self.eb * tau)
            return pos, vel, -self.vdir * self.eb
        s, v, a = self._transfer(tau - self.t_b)
        return self.ps + self.axis * s, self.axis * v, self.axis * a

    def rows(self, t: float, n: int, dt: float) -> np.ndarray:
        out = np.zeros((n + 1, 9))
        for k in range(n + 1):
            pos, vel, acc = self.sample(max(0.0, t - self.t0) + k * dt)
            out[k, 0:3] = pos
            out[k, 3:6] = vel
            out[k, 6:9] = acc
        return out


def _initial_state(config: SimConfig, offset) -> SystemState:
    pos = config.profile.home + np.asarray(offset, float).reshape(3)
    return SystemState(
        quad=QuadState(
            position=pos, velocity=np.zeros(3), attitude=np.eye(3), body_rate=np.zeros(3)
        ),
        payload=PayloadState(link_dir=[0.0, 0.0, -1.0], link_omega=np.zeros(3)),
    )


def run(config: SimConfig, initial_offset=(0.0, 0.0, 0.0)) -> SimReport:
    """Execute the mission closed-loop and return the report with records.

    Raises SimDivergedError when any state component goes NaN or beyond 1e6;
    the offending tick is on the exception.
    """
    t_wall = time.perf_counter()
    params = config.params
    plan = config.throw_plan()
    mpc_cfg = config.mpc
    gains = config.gains
    profile = config.profile
    tol = config.tolerances
    dt = config.sim_dt
    every = config.mpc_every
    u_max = mpc_cfg.u_max

    state = _initial_state(config, initial_offset)
    phase = MissionPhase(name=PhaseName.TAKEOFF)
    probe: Optional[ProbeBallisticState] = None
    last_input = ControlInput(thrust=0.0, moment=np.zeros(3))
    sol: Optional[mpc.MpcSolution] = None
    traj: Optional[_TrajRef] = None
    ref_int = np.zeros(3)
    u_prev = mpc_cfg.hover_input
    u_mpc = mpc_cfg.hover_input

    records: List[LogRecord] = []
    timeline: List[dict] = [{"phase": phase.name.value, "t_enter": 0.0}]
    stats: List[PhaseStats] = []
    solve_times: List[float] = []
    status_counts = {"optimal": 0, "max_iters": 0, "infeasible": 0, "fallback": 0}
    iter_total = 0
    peak_pitch_rate = 0.0
    release_info = None
    mpc_calls = 0
    completed = False
    ticks = int(round(config.duration / dt))

    def _phase_ref(refs):
        return refs.x_ref[0:3]

    cur_stats: Optional[PhaseStats] = None

    for k in range(ticks):
        t = k * dt
        prev_name = phase.name
        phase, refs, release = mission.mission_step(phase, state, t, plan, tol, profile)

        if phase.name != prev_name:
            ref_int[:] = 0.0
            timeline.append({"phase": phase.name.value, "t_enter": t})
            cur_stats = PhaseStats(
                phase=phase.name.value,
                t_enter=t,
                displacement=float(np.linalg.norm(_phase_ref(refs) - state.quad.position)),
            )
            stats.append(cur_stats)
        elif cur_stats is None:
            cur_stats = PhaseStats(
                phase=phase.name.value,
                t_enter=t,
                displacement=float(np.linalg.norm(_phase_ref(refs) - state.quad.position)),
            )
            stats.append(cur_stats)

        if release:
            state, params, probe = mission.release_probe(state, params, t)
            mpc_cfg = replace(mpc_cfg, mass=params.quad_mass)
            release_info = {
                "t": t,
                "position": [float(v) for v in probe.position],
                "velocity": [float(v) for v in probe.velocity],
                "speed": float(np.linalg.norm(probe.velocity)),
                "elevation_deg": math.degrees(
                    math.atan2(probe.velocity[2], math.hypot(probe.velocity[0], probe.velocity[1]))
                ),
            }

        if k % every == 0:
            acc = dynamics.derivative(state, last_input, params).velocity
            x0 = np.concatenate([state.quad.position, state.quad.velocity, acc])
            target = refs.x_ref[0:3].copy()
            if phase.name == PhaseName.LAND:
                # aim slightly below ground so descent carries through the
                # touchdown gate instead of stalling on the asymptotic tail
                target[2] -= 0.05
            if traj is None or float(np.linalg.norm(target - traj.p1)) > 1e-9:
                # entry braking absorbs the vertical momentum only: lateral
                # is the PD's job, and folding a fast lateral entry into the
                # brake arc would drag the altitude reference along with it
                v_entry = np.array([0.0, 0.0, state.quad.velocity[2]])
                traj = _TrajRef(
                    t,
                    state.quad.position,
                    v_entry,
                    target,
                    profile.cruise_speed,
                    profile.brake_accel,
                    profile.entry_brake,
                )
            reference = traj.rows(t, mpc_cfg.horizon, mpc_cfg.dt)
            err = reference[0, 0:3] - state.quad.position
            cap = gains.ref_trim_int_cap
            ref_int = np.clip(ref_int + gains.ref_trim_ki * mpc_cfg.dt * err, -cap, cap)
            trim = np.clip(gains.ref_trim_kp * err, -gains.ref_trim_cap, gains.ref_trim_cap)
            reference[:, 0:3] += trim + ref_int
            problem = mpc.MpcProblem(
                x0=x0,
                reference=reference,
                u_prev=u_prev,
                config=mpc_cfg,
            )
            cand = mpc.solve(problem, warm_start=sol)
            if cand.status == mpc.MpcStatus.INFEASIBLE:
                status_counts["infeasible"] += 1
                try:
                    cand = mpc.fallback(sol)
                    status_counts["fallback"] += 1
                except NoFeasibleHistoryError:
                    cand = replace(
                        cand,
                        inputs=np.full(mpc_cfg.horizon, mpc_cfg.hover_input),
                        degraded=True,
                    )
            else:
                status_counts[cand.status.value] += 1
            sol = cand
            u_mpc = float(sol.inputs[0])
            solve_times.append(sol.solve_time_us)
            iter_total += sol.iterations
            mpc_calls += 1

        # control stack for this tick
        name = phase.name
        if name == PhaseName.FLIP_ASCEND:
            R_d = _quat_to_mat(refs.q_d)
            e = attitude_error(state.quad.attitude, R_d)
            omega_cmd = body_rate_command(e, gains.attitude)
            thrust = u_max
        elif name == PhaseName.FLIP_THROW:
            omega_cmd = refs.omega_d
            spin = phase.flip_angle - phase.flip_angle0
            thrust = u_max if spin < profile.thrust_cut_angle else profile.coast_thrust_frac * u_max
        else:
            ref_pos = refs.x_ref[0:3]
            ref_vel = refs.x_ref[3:6]
            a_lat = gains.lateral_kp * (ref_pos - state.quad.position)
            a_lat += gains.lateral_kv * (ref_vel - state.quad.velocity)
            a_lat[2] = 0.0
            n = np.linalg.norm(a_lat)
            if n > gains.lateral_accel_limit:
                a_lat *= gains.lateral_accel_limit / n
            m_ctl = mpc_cfg.mass
            force = np.array([m_ctl * a_lat[0], m_ctl * a_lat[1], max(u_mpc, 1e-6)])
            cmd = attitude_command(force, profile.yaw, state.quad.attitude, gains.attitude)
            omega_cmd = cmd.body_rate_cmd
            thrust = min(cmd.thrust_cmd, u_max)

        moment = _rate_servo(omega_cmd, state.quad, params, gains.rate_tau, gains.moment_limit)
        u = ControlInput(thrust=float(np.clip(thrust, 0.0, u_max)), moment=moment)

        # telemetry row: state at t, input applied over [t, t+dt)
        if probe is None:
            payload_cols = np.concatenate([state.payload.link_dir, state.payload.link_omega])
        else:
            ppos, pvel = probe.at(t, params.gravity)
            payload_cols = np.concatenate([ppos, pvel])
        records.append(
            LogRecord(
                t=t,
                phase=name.value + ("*" if phase.failsafe else ""),
                position=state.quad.position.copy(),
                velocity=state.quad.velocity.copy(),
                quat=_mat_to_quat(state.quad.attitude),
                body_rate=state.quad.body_rate.copy(),
                payload=payload_cols,
                probe_attached=probe is None,
                thrust=u.thrust,
                moment=u.moment.copy(),
                mpc_cost=sol.cost if sol is not None else 0.0,
                mpc_status="fallback" if (sol is not None and sol.degraded) else (sol.status.value if sol is not None else "none"),
                mpc_solve_us=sol.solve_time_us if sol is not None else 0.0,
            )
        )

        state = dynamics.step(state, u, params, dt)
        u_prev = float(np.clip(u.thrust, mpc_cfg.u_min, mpc_cfg.u_max))
        last_input = u

        x = dynamics.pack_state(state)
        if not np.all(np.isfinite(x)) or np.max(np.abs(x[0:6])) > 1e6:
            raise SimDivergedError(k, f"at t={t:.3f}s phase={name.value}")

        # maneuver metric: the spin itself, not recovery-loop transients
        if phase.name == PhaseName.FLIP_THROW:
            peak_pitch_rate = max(peak_pitch_rate, abs(float(state.quad.body_rate[1])))

        if cur_stats is not None:
            err = float(np.linalg.norm(refs.x_ref[0:3] - state.quad.position))
            cur_stats.max_error = max(cur_stats.max_error, err)
            if not cur_stats.arrived and err < tol.pos:
                cur_stats.arrived = True
            if cur_stats.arrived:
                cur_stats.steady_error = max(cur_stats.steady_error, err)

        if (
            phase.name == PhaseName.LAND
            and state.quad.position[2] <= 0.02
            and abs(float(state.quad.velocity[2])) < 0.5
        ):
            completed = True
            break

    landing = None
    rng = None
    if probe is not None:
        lp = probe.landing_point(config.params.gravity)
        lt = probe.landing_time(config.params.gravity)
        if lp is not None:
            landing = {"t": lt, "x": float(lp[0]), "y": float(lp[1]), "z": 0.0}
            rng = float(math.hypot(lp[0] - probe.position[0], lp[1] - probe.position[1]))

    n_solv = len(solve_times)
    mpc_stats = {
        "solves": mpc_calls,
        "expected_solves": (ticks + every - 1) // every if ticks else 0,
        "statuses": status_counts,
        "median_solve_us": float(np.median(solve_times)) if n_solv else None,
        "p95_solve_us": float(np.percentile(solve_times, 95)) if n_solv else None,
        "max_solve_us": float(np.max(solve_times)) if n_solv else None,
        "mean_iterations": iter_total / n_solv if n_solv else None,
        "ticks": len(records),
    }

    return SimReport(
        completed=completed,
        final_phase=phase.name.value,
        duration_simulated=len(records) * dt,
        wall_time_s=time.perf_counter() - t_wall,
        phase_timeline=timeline,
        tracking=[s.as_dict() for s in stats],
        peak_pitch_rate=peak_pitch_rate,
        release=release_info,
        landing=landing,
        range_from_release=rng,
        mpc_stats=mpc_stats,
        record_count=len(records),
        seed=config.seed,
        backend=backend_name(),
        records=records,
    )


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.9g}"


def write_logs(records: List[LogRecord], path, report: Optional[SimReport] = None):
    """CSV telemetry (header + one row per tick, 9 significant digits, LF).

    When a report is given, a companion JSON lands next to the CSV with the
    same stem.
    """
    import io
    import json
    import os

    with io.open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(CSV_HEADER + "\n")
        for rec in records:
            fh.write(",".join(_fmt(v) for v in rec.row()) + "\n")
    if report is not None:
        base, _ = os.path.splitext(str(path))
        with io.open(base + ".json", "w", encoding="utf-8", newline="\n") as fh:
            json.dump(report.as_dict(), fh, indent=2)
            fh.write("\n")
    return path


def determinism_signature(records) -> str:
    """Hash of the log contents minus the wall-clock solve-time column.

    Accepts LogRecord lists (from run) or parsed dict rows (from read_logs).
    """
    import hashlib

    columns = CSV_HEADER.split(",")[:-1]  # drop mpc_solve_us
    h = hashlib.sha256()
    for rec in records:
        if isinstance(rec, dict):
            row = [rec[c] for c in columns]
        else:
            row = rec.row()[:-1]
        h.update(",".join(_fmt(v) for v in row).encode())
        h.update(b"\n")
    return h.hexdigest()


def read_logs(path) -> List[dict]:
    """Round-trip reader for the CSV format (used by tests and tooling)."""
    out = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            parsed = {}
            for key, val in row.items():
                if key in ("phase", "mpc_status"):
                    parsed[key] = val
                elif key == "probe_attached":
                    parsed[key] = val == "1"
                else:
                    parsed[key] = float(val)
            out.append(parsed)
    return out
