"""Geometric attitude pipeline against an independent frame construction."""

import math

import numpy as np
import pytest

from flipthrow import (
    AttitudeCmd,
    AttitudeGains,
    DegenerateThrustError,
    SingularYawError,
    attitude_command,
    attitude_error,
    body_rate_command,
    desired_attitude,
    hat,
)
from flipthrow.attitude import thrust_projection

from oracles import gram_schmidt_attitude, random_rotation


class TestDesiredAttitude:
    @pytest.mark.parametrize("seed", range(8))
    def test_matches_gram_schmidt_oracle(self, seed):
        rng = np.random.default_rng(seed)
        u = rng.uniform(-5.0, 5.0, 3)
        u[2] = rng.uniform(2.0, 15.0)  # keep thrust mostly upward
        yaw = rng.uniform(-math.pi, math.pi)
        R = desired_attitude(u, yaw)
        assert np.allclose(R, gram_schmidt_attitude(u, yaw), atol=1e-12)

    def test_rotation_properties(self):
        R = desired_attitude(np.array([1.0, -2.0, 9.0]), 0.7)
        assert np.max(np.abs(R.T @ R - np.eye(3))) < 1e-12
        assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-12)

    def test_third_column_is_force_direction(self):
        u = np.array([0.5, 0.2, 11.0])
        R = desired_attitude(u, 0.0)
        assert np.allclose(R[:, 2], u / np.linalg.norm(u), atol=1e-14)

    def test_hover_identity(self):
        R = desired_attitude(np.array([0.0, 0.0, 9.81]), 0.0)
        assert np.allclose(R, np.eye(3), atol=1e-14)

    def test_zero_thrust_raises(self):
        with pytest.raises(DegenerateThrustError):
            desired_attitude(np.zeros(3), 0.0)

    def test_thrust_parallel_to_heading_raises(self):
        with pytest.raises(SingularYawError):
            desired_attitude(np.array([1.0, 0.0, 0.0]), 0.0)


class TestAttitudeError:
    def test_zero_at_agreement(self):
        R = random_rotation(np.random.default_rng(3))
        assert np.allclose(attitude_error(R, R), 0.0, atol=1e-14)

    def test_antisymmetric_in_arguments(self):
        rng = np.random.default_rng(4)
        Ra, Rb = random_rotation(rng), random_rotation(rng)
        assert np.allclose(attitude_error(Ra, Rb), -attitude_error(Rb, Ra), atol=1e-13)

    def test_small_angle_recovers_axis(self):
        axis = np.array([0.0, 1.0, 0.0])
        ang = 1e-4
        R_d = np.eye(3)
        # R = exp(ang * hat(axis)) to second order
        R = np.eye(3) + math.sin(ang) * hat(axis) + (1 - math.cos(ang)) * hat(axis) @ hat(axis)
        e = attitude_error(R, R_d)
        assert np.allclose(e, -ang * axis, atol=1e-9)


class TestRateLaw:
    def test_literal_gain(self):
        e = np.array([0.1, -0.2, 0.05])
        g = AttitudeGains(tau_omega=0.1)
        assert np.allclose(body_rate_command(e, g), 20.0 * e, atol=1e-15)

    def test_gain_validation(self):
        with pytest.raises(ValueError):
            AttitudeGains(tau_omega=0.0)

    def test_closed_kinematic_loop_converges(self):
        """Integrating R_dot = R hat(omega_cmd) must drive R to R_d."""
        rng = np.random.default_rng(5)
        R = random_rotation(rng)
        R_d = random_rotation(rng)
        gains = AttitudeGains(tau_omega=0.1)
        dt = 1e-3

        def err_norm(Rc):
            return float(np.linalg.norm(attitude_error(Rc, R_d)))

        e0 = err_norm(R)
        for _ in range(3000):
            w = body_rate_command(attitude_error(R, R_d), gains)
            R = R @ (np.eye(3) + dt * hat(w) + 0.5 * dt * dt * hat(w) @ hat(w))
            U, _, Vt = np.linalg.svd(R)
            R = U @ Vt
        assert err_norm(R) < 1e-6 * max(e0, 1.0)


class TestThrustProjection:
    def test_projects_on_body_z(self):
        rng = np.random.default_rng(6)
        R = random_rotation(rng)
        u = rng.standard_normal(3)
        assert thrust_projection(u, R) == pytest.approx(float(u @ R[:, 2]), abs=1e-15)

    def test_identity_attitude_reads_vertical_component(self):
        assert thrust_projection(np.array([3.0, 4.0, 12.0]), np.eye(3)) == pytest.approx(12.0)


class TestPipeline:
    def test_command_bundle_consistency(self):
        rng = np.random.default_rng(7)
        R = random_rotation(rng)
        u = np.array([1.0, 0.5, 12.0])
        gains = AttitudeGains()
        cmd = attitude_command(u, 0.3, R, gains)
        assert isinstance(cmd, AttitudeCmd)
        assert np.allclose(cmd.desired_attitude, desired_attitude(u, 0.3), atol=1e-15)
        e = attitude_error(R, cmd.desired_attitude)
        assert np.allclose(cmd.body_rate_cmd, body_rate_command(e, gains), atol=1e-13)
        assert cmd.thrust_cmd == pytest.approx(max(0.0, thrust_projection(u, R)), abs=1e-13)

    def test_thrust_never_negative(self):
        # commanded force opposite the body z axis projects negative; the
        # scalar command clamps at zero rather than reversing the rotors
        R = np.diag([1.0, -1.0, -1.0])
        cmd = attitude_command(np.array([0.1, 0.0, 9.81]), 0.0, R, AttitudeGains())
        assert cmd.thrust_cmd == 0.0
