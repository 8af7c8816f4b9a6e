"""Geometric attitude pipeline: commanded force -> desired attitude ->
attitude error -> first-order body-rate command.

Convention: the force vector handed to desired_attitude is the TOTAL
commanded force on the vehicle, gravity compensation already included, so
the desired body z axis is simply its direction. The rate law returns
(2/tau) e literally; to converge, the closed loop evaluates the error with
the current attitude in the first slot (attitude_error is antisymmetric, so
that orientation makes the commanded rate oppose the error).
"""

from dataclasses import dataclass

import numpy as np

from .dynamics import hat, vee
from .errors import DegenerateThrustError, SingularYawError


@dataclass(frozen=True)
class AttitudeGains:
    tau_omega: float = 0.1

    def __post_init__(self):
        if self.tau_omega <= 0.0:
            raise ValueError("tau_omega must be positive")


@dataclass(frozen=True)
class AttitudeCmd:
    desired_attitude: np.ndarray
    body_rate_cmd: np.ndarray
    thrust_cmd: float


def desired_attitude(u, yaw_d: float, params=None) -> np.ndarray:
    """Rotation whose third column is the direction of the commanded force.

    Columns are [b2 x b3, b2, b3] with b3 = u/||u||, b1 = [cos yaw, sin yaw, 0],
    b2 = (b3 x b1)/||b3 x b1||. params is accepted for signature symmetry with
    the rest of the control stack; the direction comes from u alone.
    """
    u = np.asarray(u, dtype=float).reshape(3)
    n = np.linalg.norm(u)
    if n <= 1e-8:
        raise DegenerateThrustError(f"commanded force magnitude {n:.2e} too small")
    b3 = u / n
    b1 = np.array([np.cos(yaw_d), np.sin(yaw_d), 0.0])
    c = np.cross(b3, b1)
    cn = np.linalg.norm(c)
    if cn <= 1e-8:
        raise SingularYawError("yaw heading parallel to thrust direction")
    b2 = c / cn
    return np.column_stack((np.cross(b2, b3), b2, b3))


def attitude_error(R_d, R) -> np.ndarray:
    """e = (1/2) vee(R_d^T R - R^T R_d). Antisymmetric in its arguments."""
    R_d = np.asarray(R_d, dtype=float)
    R = np.asarray(R, dtype=float)
    return 0.5 * vee(R_d.T @ R - R.T @ R_d, tol=1e-6)


def body_rate_command(e_R, gains: AttitudeGains) -> np.ndarray:
    """First-order rate law (2/tau) e."""
    return (2.0 / gains.tau_omega) * np.asarray(e_R, dtype=float)


def thrust_projection(u, R) -> float:
    """Scalar thrust: commanded force projected on the current body z axis."""
    u = np.asarray(u, dtype=float).reshape(3)
    R = np.asarray(R, dtype=float)
    return float(u @ R[:, 2])


def attitude_command(u, yaw_d: float, R_current, gains: AttitudeGains) -> AttitudeCmd:
    """Full pipeline for one control tick.

    The error is evaluated as attitude_error(R_current, R_desired): with the
    literal (2/tau) e rate law this is the orientation under which the error
    norm decreases along the closed loop.
    """
    R_d = desired_attitude(u, yaw_d)
    e = attitude_error(R_current, R_d)
    return AttitudeCmd(
        desired_attitude=R_d,
        body_rate_cmd=body_rate_command(e, gains),
        thrust_cmd=max(0.0, thrust_projection(u, R_current)),
    )
