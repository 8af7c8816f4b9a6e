"""Coupled quadrotor + cable-suspended probe dynamics.

Frame: inertial ENU (z up), gravity -g e3. Body z axis carries the thrust.
The probe is a point mass on a massless rigid link of length l attached at
the quadrotor center of gravity; its configuration is the inertial unit
vector p (quad -> probe) plus a link angular rate w with w.p = 0, which
avoids the polar-angle chart singularity at the hanging point. Integration
is fixed-step RK4 with post-step projection back onto SO(3) x S^2; the hot
packed-array kernels live in _kernel_py/_core and are selected by _backend.

All types here are value objects; operations are pure functions.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._backend import kernel
from .errors import NotSkewError, ProbeNotAttachedError

_E3 = np.array([0.0, 0.0, 1.0])


def hat(v) -> np.ndarray:
    """Cross-product matrix: hat(v) w = v x w."""
    v = np.asarray(v, dtype=float)
    return np.array(
        [
            [0.0, -v[2], v[1]],
            [v[2], 0.0, -v[0]],
            [-v[1], v[0], 0.0],
        ]
    )


def vee(S, tol: float = 1e-9) -> np.ndarray:
    """Inverse of hat. Rejects matrices that are not skew within tol."""
    S = np.asarray(S, dtype=float)
    if np.linalg.norm(S + S.T) >= tol:
        raise NotSkewError(f"||S + S^T|| = {np.linalg.norm(S + S.T):.3e} >= {tol:.1e}")
    return np.array([S[2, 1], S[0, 2], S[1, 0]])


def _vec3(x) -> np.ndarray:
    a = np.asarray(x, dtype=float).reshape(3).copy()
    return a


def _mat3(x) -> np.ndarray:
    a = np.asarray(x, dtype=float).reshape(3, 3).copy()
    return a


@dataclass(frozen=True)
class Params:
    """Physical constants of the coupled system."""

    quad_mass: float = 1.0
    probe_mass: float = 0.2
    link_length: float = 0.5
    inertia: np.ndarray = field(default_factory=lambda: np.diag([0.01, 0.01, 0.02]))
    gravity: float = 9.81
    probe_attached: bool = True

    def __post_init__(self):
        object.__setattr__(self, "inertia", _mat3(self.inertia))
        if self.quad_mass <= 0.0:
            raise ValueError("quad_mass must be positive")
        if self.probe_mass < 0.0:
            raise ValueError("probe_mass must be nonnegative")
        if self.link_length <= 0.0:
            raise ValueError("link_length must be positive")
        if self.gravity <= 0.0:
            raise ValueError("gravity must be positive")
        I = self.inertia
        if np.max(np.abs(I - I.T)) > 1e-12:
            raise ValueError("inertia must be symmetric")
        if np.min(np.linalg.eigvalsh(I)) <= 0.0:
            raise ValueError("inertia must be positive definite")

    @property
    def total_mass(self) -> float:
        return self.quad_mass + (self.probe_mass if self.probe_attached else 0.0)

    def packed(self) -> np.ndarray:
        """23-vector consumed by the integration kernels."""
        out = np.empty(23)
        out[0] = self.quad_mass
        out[1] = self.probe_mass
        out[2] = self.link_length
        out[3] = self.gravity
        out[4] = 1.0 if self.probe_attached else 0.0
        out[5:14] = self.inertia.reshape(9)
        out[14:23] = np.linalg.inv(self.inertia).reshape(9)
        return out

    def detached(self) -> "Params":
        return Params(
            quad_mass=self.quad_mass,
            probe_mass=self.probe_mass,
            link_length=self.link_length,
            inertia=self.inertia,
            gravity=self.gravity,
            probe_attached=False,
        )


@dataclass(frozen=True)
class QuadState:
    position: np.ndarray
    velocity: np.ndarray
    attitude: np.ndarray
    body_rate: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", _vec3(self.position))
        object.__setattr__(self, "velocity", _vec3(self.velocity))
        object.__setattr__(self, "attitude", _mat3(self.attitude))
        object.__setattr__(self, "body_rate", _vec3(self.body_rate))

    def orthonormality_defect(self) -> float:
        R = self.attitude
        return float(np.linalg.norm(R.T @ R - np.eye(3)))


@dataclass(frozen=True)
class PayloadState:
    link_dir: np.ndarray
    link_omega: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "link_dir", _vec3(self.link_dir))
        object.__setattr__(self, "link_omega", _vec3(self.link_omega))

    @property
    def alpha(self) -> float:
        """Polar swing angle from the hanging direction (read-only chart)."""
        return float(np.arccos(np.clip(-self.link_dir[2], -1.0, 1.0)))

    @property
    def beta(self) -> float:
        """Azimuth of the link about e3 (read-only chart)."""
        return float(np.arctan2(self.link_dir[1], self.link_dir[0]))


@dataclass(frozen=True)
class SystemState:
    quad: QuadState
    payload: Optional[PayloadState] = None


@dataclass(frozen=True)
class ControlInput:
    thrust: float
    moment: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "thrust", float(self.thrust))
        object.__setattr__(self, "moment", _vec3(self.moment))
        if not np.isfinite(self.thrust):
            raise ValueError("thrust must be finite")

    def packed(self) -> np.ndarray:
        out = np.empty(4)
        out[0] = self.thrust
        out[1:4] = self.moment
        return out


@dataclass(frozen=True)
class StateDerivative:
    """Time derivative of SystemState, same field layout."""

    position: np.ndarray
    velocity: np.ndarray
    attitude: np.ndarray
    body_rate: np.ndarray
    link_dir: np.ndarray
    link_omega: np.ndarray


_HANG = np.array([0.0, 0.0, -1.0])


def pack_state(s: SystemState) -> np.ndarray:
    """24-vector kernel layout; detached states carry a hanging placeholder."""
    x = np.empty(24)
    x[0:3] = s.quad.position
    x[3:6] = s.quad.velocity
    x[6:15] = s.quad.attitude.reshape(9)
    x[15:18] = s.quad.body_rate
    if s.payload is not None:
        x[18:21] = s.payload.link_dir
        x[21:24] = s.payload.link_omega
    else:
        x[18:21] = _HANG
        x[21:24] = 0.0
    return x


def unpack_state(x, attached: bool) -> SystemState:
    quad = QuadState(
        position=x[0:3],
        velocity=x[3:6],
        attitude=x[6:15].reshape(3, 3),
        body_rate=x[15:18],
    )
    payload = PayloadState(link_dir=x[18:21], link_omega=x[21:24]) if attached else None
    return SystemState(quad=quad, payload=payload)


def _check_payload(s: SystemState, params: Params):
    if params.probe_attached and s.payload is None:
        raise ValueError("probe_attached params but state has no payload")
    if not params.probe_attached and s.payload is not None:
        raise ValueError("detached params but state carries a payload")


def derivative(s: SystemState, u: ControlInput, params: Params) -> StateDerivative:
    """Equations of motion of the coupled (or bare) system.

    With the probe attached (mt = Mq + Mp, uf = f R e3):

        mt Vdot = (p.uf) p + (mt/Mq)(uf - (p.uf) p) + Mp l |w|^2 p - mt g e3
        pdot    = w x p
        l wdot  = -(p x uf)/Mq
        Rdot    = R hat(Om)
        I Omdot = M - Om x I Om

    With probe_mass = 0 or detached this reduces exactly to the single rigid
    body Mq(Vdot + g e3) = f R e3.
    """
    _check_payload(s, params)
    dx = kernel.deriv(pack_state(s), u.packed(), params.packed())
    return StateDerivative(
        position=dx[0:3].copy(),
        velocity=dx[3:6].copy(),
        attitude=dx[6:15].reshape(3, 3).copy(),
        body_rate=dx[15:18].copy(),
        link_dir=dx[18:21].copy(),
        link_omega=dx[21:24].copy(),
    )


def step(s: SystemState, u: ControlInput, params: Params, dt: float) -> SystemState:
    """RK4 advance by dt with manifold projection (see kernel docs)."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    _check_payload(s, params)
    x = kernel.step(pack_state(s), u.packed(), params.packed(), float(dt))
    return unpack_state(x, params.probe_attached)


def probe_position(s: SystemState, params: Params) -> np.ndarray:
    """Inertial probe (link tip) position."""
    if s.payload is None:
        raise ProbeNotAttachedError("no payload on state")
    return s.quad.position + params.link_length * s.payload.link_dir


def probe_velocity(s: SystemState, params: Params) -> np.ndarray:
    """Inertial probe velocity: quad velocity + l (w x p)."""
    if s.payload is None:
        raise ProbeNotAttachedError("no payload on state")
    return s.quad.velocity + params.link_length * np.cross(
        s.payload.link_omega, s.payload.link_dir
    )


def kinetic_energy(s: SystemState, params: Params) -> float:
    """(1/2)Mq|Vq|^2 + (1/2)Om.I Om + (1/2)Mp|Vl|^2."""
    q = s.quad
    ke = 0.5 * params.quad_mass * float(q.velocity @ q.velocity)
    ke += 0.5 * float(q.body_rate @ (params.inertia @ q.body_rate))
    if params.probe_attached and s.payload is not None:
        vl = probe_velocity(s, params)
        ke += 0.5 * params.probe_mass * float(vl @ vl)
    return ke


def potential_energy(s: SystemState, params: Params) -> float:
    """Mq g z + Mp g (z + l p_z); zero reference at z = 0."""
    z = float(s.quad.position[2])
    pe = params.quad_mass * params.gravity * z
    if params.probe_attached and s.payload is not None:
        pe += params.probe_mass * params.gravity * (
            z + params.link_length * float(s.payload.link_dir[2])
        )
    return pe


def total_energy(s: SystemState, params: Params) -> float:
    return kinetic_energy(s, params) + potential_energy(s, params)


def linearize(s: SystemState, u: ControlInput, params: Params):
    """Analytic Jacobians of the packed-state derivative.

    Returns (A, B): A is 24x24 = d(dx)/dx, B is 24x4 = d(dx)/du in the
    kernel's packed coordinates ([f, M] input order). Ambient derivatives,
    no manifold reduction; finite-difference checks perturb the same packed
    coordinates.
    """
    _check_payload(s, params)
    Mq = params.quad_mass
    Mp = params.probe_mass if params.probe_attached else 0.0
    l = params.link_length
    f = u.thrust
    R = s.quad.attitude
    Om = s.quad.body_rate
    I3 = np.eye(3)
    Iner = params.inertia
    Iinv = np.linalg.inv(Iner)
    r3 = R[:, 2]
    uf = f * r3
    rcol = [8, 11, 14]  # packed indices of R's third column

    A = np.zeros((24, 24))
    B = np.zeros((24, 4))

    A[0:3, 3:6] = I3

    attached = params.probe_attached and Mp > 0.0
    if attached:
        mt = Mq + Mp
        p = s.payload.link_dir
        w = s.payload.link_omega
        sdot = float(p @ uf)
        wsq = float(w @ w)
        dvdu = np.outer(p, p) / mt + (I3 - np.outer(p, p)) / Mq
        # d Vdot / d p, w
        A[3:6, 18:21] = (1.0 / mt - 1.0 / Mq) * (np.outer(p, uf) + sdot * I3)
        A[3:6, 18:21] += (Mp * l * wsq / mt) * I3
        A[3:6, 21:24] = (2.0 * Mp * l / mt) * np.outer(p, w)
        # link rows
        A[18:21, 18:21] = hat(w)
        A[18:21, 21:24] = -hat(p)
        A[21:24, 18:21] = hat(uf) / (Mq * l)
        dwdu = -hat(p) / (Mq * l)
        for i in range(3):
            A[3:6, rcol[i]] = f * dvdu[:, i]
            A[21:24, rcol[i]] = f * dwdu[:, i]
        B[3:6, 0] = dvdu @ r3
        B[21:24, 0] = dwdu @ r3
    else:
        for i in range(3):
            A[3 + i, rcol[i]] = f / Mq
        B[3:6, 0] = r3 / Mq

    # Rdot = R hat(Om): dRdot_ab/dR_cd = delta_ac hat(Om)_db
    hOm = hat(Om)
    for a in range(3):
        for b in range(3):
            row = 6 + 3 * a + b
            for d in range(3):
                A[row, 6 + 3 * a + d] = hOm[d, b]
            for k in range(3):
                ek = np.zeros(3)
                ek[k] = 1.0
                A[row, 15 + k] = (R @ hat(ek))[a, b]

    A[15:18, 15:18] = Iinv @ (-hOm @ Iner + hat(Iner @ Om))
    B[15:18, 1:4] = Iinv
    return A, B
