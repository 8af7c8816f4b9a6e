"""Coupled quad/payload dynamics against first-principles oracles."""

import math

import numpy as np
import pytest

from flipthrow import (
    ControlInput,
    NotSkewError,
    Params,
    PayloadState,
    ProbeNotAttachedError,
    QuadState,
    SystemState,
    derivative,
    hat,
    kinetic_energy,
    linearize,
    potential_energy,
    probe_position,
    probe_velocity,
    step,
    total_energy,
    vee,
)
from flipthrow.dynamics import pack_state, unpack_state

from oracles import (
    chart_from_link,
    euler_lagrange_accels,
    link_accels_from_chart,
    random_link,
    random_rotation,
)


def _hover_state(params, attached=True):
    payload = (
        PayloadState(link_dir=np.array([0.0, 0.0, -1.0]), link_omega=np.zeros(3))
        if attached
        else None
    )
    return SystemState(
        quad=QuadState(
            position=np.zeros(3),
            velocity=np.zeros(3),
            attitude=np.eye(3),
            body_rate=np.zeros(3),
        ),
        payload=payload,
    )


def _random_state(rng, attached=True):
    p, w = random_link(rng)
    payload = PayloadState(link_dir=p, link_omega=w) if attached else None
    return SystemState(
        quad=QuadState(
            position=rng.standard_normal(3),
            velocity=rng.standard_normal(3),
            attitude=random_rotation(rng),
            body_rate=rng.standard_normal(3),
        ),
        payload=payload,
    )


def _random_input(rng):
    return ControlInput(
        thrust=float(rng.uniform(2.0, 20.0)), moment=0.2 * rng.standard_normal(3)
    )


class TestHatVee:
    def test_hat_matches_cross_product(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            a, b = rng.standard_normal(3), rng.standard_normal(3)
            assert np.allclose(hat(a) @ b, np.cross(a, b), atol=1e-14)

    def test_vee_inverts_hat(self):
        v = np.array([0.3, -1.2, 2.0])
        assert np.allclose(vee(hat(v)), v, atol=1e-15)

    def test_vee_rejects_non_skew(self):
        with pytest.raises(NotSkewError):
            vee(np.eye(3))

    def test_vee_tolerance_admits_numerical_skew(self):
        m = hat(np.array([1.0, 2.0, 3.0]))
        m[0, 1] += 1e-9
        vee(m, tol=1e-6)
        with pytest.raises(NotSkewError):
            vee(m, tol=1e-12)


class TestParams:
    def test_defaults(self):
        p = Params()
        assert p.quad_mass == 1.0
        assert p.probe_mass == 0.2
        assert p.link_length == 0.5
        assert p.gravity == 9.81
        assert p.probe_attached

    def test_total_mass_tracks_attachment(self):
        p = Params()
        assert p.total_mass == pytest.approx(1.2)
        assert p.detached().total_mass == pytest.approx(1.0)
        assert not p.detached().probe_attached

    def test_rejects_nonpositive_masses(self):
        with pytest.raises(ValueError):
            Params(quad_mass=0.0)
        with pytest.raises(ValueError):
            Params(probe_mass=-0.1)
        with pytest.raises(ValueError):
            Params(link_length=0.0)

    def test_rejects_bad_inertia(self):
        with pytest.raises(ValueError):
            Params(inertia=np.diag([1.0, -1.0, 1.0]))

    def test_packed_layout_roundtrips_scalars(self):
        p = Params()
        par = p.packed()
        assert par.shape == (23,)
        assert par[0] == p.quad_mass
        assert np.isin(p.probe_mass, par)
        assert np.isin(p.link_length, par)
        assert np.isin(p.gravity, par)


class TestPacking:
    def test_roundtrip_attached(self):
        rng = np.random.default_rng(2)
        s = _random_state(rng)
        x = pack_state(s)
        assert x.shape == (24,)
        s2 = unpack_state(x, attached=True)
        assert np.allclose(s2.quad.position, s.quad.position)
        assert np.allclose(s2.quad.velocity, s.quad.velocity)
        assert np.allclose(s2.quad.attitude, s.quad.attitude)
        assert np.allclose(s2.quad.body_rate, s.quad.body_rate)
        assert np.allclose(s2.payload.link_dir, s.payload.link_dir)
        assert np.allclose(s2.payload.link_omega, s.payload.link_omega)

    def test_detached_pack_uses_hanging_placeholder(self):
        s = _hover_state(Params(), attached=False)
        x = pack_state(s)
        assert np.allclose(x[18:21], [0.0, 0.0, -1.0])
        assert np.allclose(x[21:24], 0.0)
        assert unpack_state(x, attached=False).payload is None


class TestHoverEquilibrium:
    def test_exact_hover_attached(self):
        params = Params()
        s = _hover_state(params)
        u = ControlInput(thrust=params.total_mass * params.gravity, moment=np.zeros(3))
        d = derivative(s, u, params)
        for field in (d.position, d.velocity, d.attitude, d.body_rate, d.link_dir, d.link_omega):
            assert np.max(np.abs(field)) < 1e-12

    def test_exact_hover_detached(self):
        params = Params().detached()
        s = _hover_state(params, attached=False)
        u = ControlInput(thrust=params.total_mass * params.gravity, moment=np.zeros(3))
        d = derivative(s, u, params)
        assert np.max(np.abs(d.velocity)) < 1e-12
        assert np.allclose(d.link_dir, 0.0) and np.allclose(d.link_omega, 0.0)

    def test_thrust_deficit_accelerates_down(self):
        params = Params()
        s = _hover_state(params)
        u = ControlInput(thrust=0.5 * params.total_mass * params.gravity, moment=np.zeros(3))
        d = derivative(s, u, params)
        assert d.velocity[2] == pytest.approx(-0.5 * params.gravity, rel=1e-12)


class TestEulerLagrangeOracle:
    """Translational and link accelerations from an independent
    finite-difference Euler-Lagrange solve in a minimal chart."""

    @pytest.mark.parametrize("seed", range(6))
    def test_accelerations_match_chart_mechanics(self, seed):
        rng = np.random.default_rng(100 + seed)
        params = Params()
        s = _random_state(rng)
        u = _random_input(rng)
        d = derivative(s, u, params)

        force_world = u.thrust * s.quad.attitude[:, 2]
        alpha, beta, ad, bd = chart_from_link(s.payload.link_dir, np.cross(s.payload.link_omega, s.payload.link_dir))
        q = np.concatenate([s.quad.position, [alpha, beta]])
        qd = np.concatenate([s.quad.velocity, [ad, bd]])
        qdd = euler_lagrange_accels(
            q, qd, force_world, params.quad_mass, params.probe_mass, params.link_length
        )

        assert np.allclose(d.velocity, qdd[0:3], atol=2e-5), (d.velocity, qdd[0:3])

        pdd = link_accels_from_chart(alpha, beta, ad, bd, qdd[3], qdd[4])
        w_dot_oracle = np.cross(s.payload.link_dir, pdd)
        assert np.allclose(d.link_omega, w_dot_oracle, atol=2e-4)

    def test_zero_probe_mass_reduces_to_free_quad(self):
        rng = np.random.default_rng(3)
        params = Params(probe_mass=1e-12)
        s = _random_state(rng)
        u = _random_input(rng)
        d = derivative(s, u, params)
        expected = (
            u.thrust * s.quad.attitude[:, 2] / params.quad_mass
            - np.array([0.0, 0.0, params.gravity])
        )
        assert np.allclose(d.velocity, expected, atol=1e-9)

    def test_detached_translation_is_point_mass(self):
        rng = np.random.default_rng(4)
        params = Params().detached()
        s = _random_state(rng, attached=False)
        u = _random_input(rng)
        d = derivative(s, u, params)
        expected = (
            u.thrust * s.quad.attitude[:, 2] / params.quad_mass
            - np.array([0.0, 0.0, params.gravity])
        )
        assert np.allclose(d.velocity, expected, atol=1e-12)

    def test_attitude_kinematics(self):
        rng = np.random.default_rng(5)
        s = _random_state(rng)
        d = derivative(s, _random_input(rng), Params())
        assert np.allclose(d.attitude, s.quad.attitude @ hat(s.quad.body_rate), atol=1e-13)

    def test_body_rate_euler_equation(self):
        rng = np.random.default_rng(6)
        params = Params()
        s = _random_state(rng)
        u = _random_input(rng)
        d = derivative(s, u, params)
        J = params.inertia
        expected = np.linalg.solve(J, u.moment - np.cross(s.quad.body_rate, J @ s.quad.body_rate))
        assert np.allclose(d.body_rate, expected, atol=1e-12)


class TestEnergy:
    def test_hover_energy_is_purely_potential(self):
        params = Params()
        s = _hover_state(params)
        assert kinetic_energy(s, params) == pytest.approx(0.0, abs=1e-15)
        # quad at origin, probe hangs one link length below
        expected_pe = -params.probe_mass * params.gravity * params.link_length
        assert potential_energy(s, params) == pytest.approx(expected_pe, rel=1e-12)

    def test_free_fall_conserves_energy(self):
        rng = np.random.default_rng(7)
        params = Params()
        s = _random_state(rng)
        u = ControlInput(thrust=0.0, moment=np.zeros(3))
        e0 = total_energy(s, params)
        dt = 1e-3
        for _ in range(400):
            s = step(s, u, params, dt)
        drift = abs(total_energy(s, params) - e0)
        assert drift < 1e-6, f"energy drifted {drift:.3e} J over 0.4 s of free fall"

    def test_probe_kinetic_energy_counts_link_swing(self):
        params = Params()
        p = np.array([0.0, 0.0, -1.0])
        w = np.array([2.0, 0.0, 0.0])
        s = SystemState(
            quad=QuadState(np.zeros(3), np.zeros(3), np.eye(3), np.zeros(3)),
            payload=PayloadState(link_dir=p, link_omega=w),
        )
        # probe speed = l * |w| with the quad pinned
        expected = 0.5 * params.probe_mass * (params.link_length * 2.0) ** 2
        assert kinetic_energy(s, params) == pytest.approx(expected, rel=1e-12)


class TestProjectionInvariants:
    def test_long_rollout_preserves_manifold(self):
        rng = np.random.default_rng(8)
        params = Params()
        s = _random_state(rng)
        u = ControlInput(thrust=params.total_mass * params.gravity, moment=np.zeros(3))
        for _ in range(2000):
            s = step(s, u, params, 1e-3)
        R = s.quad.attitude
        assert np.max(np.abs(R.T @ R - np.eye(3))) < 1e-9
        assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-9)
        assert np.linalg.norm(s.payload.link_dir) == pytest.approx(1.0, abs=1e-9)
        assert abs(s.payload.link_dir @ s.payload.link_omega) < 1e-9

    def test_step_matches_derivative_to_first_order(self):
        rng = np.random.default_rng(9)
        params = Params()
        s = _random_state(rng)
        u = _random_input(rng)
        d = derivative(s, u, params)
        dt = 1e-6
        s2 = step(s, u, params, dt)
        assert np.allclose((s2.quad.position - s.quad.position) / dt, d.position, atol=1e-4)
        assert np.allclose((s2.quad.velocity - s.quad.velocity) / dt, d.velocity, atol=1e-4)


class TestProbeGeometry:
    def test_position_and_velocity_composition(self):
        rng = np.random.default_rng(10)
        params = Params()
        s = _random_state(rng)
        expected_pos = s.quad.position + params.link_length * s.payload.link_dir
        assert np.allclose(probe_position(s, params), expected_pos, atol=1e-14)
        expected_vel = s.quad.velocity + params.link_length * np.cross(
            s.payload.link_omega, s.payload.link_dir
        )
        assert np.allclose(probe_velocity(s, params), expected_vel, atol=1e-14)

    def test_detached_queries_raise(self):
        s = _hover_state(Params(), attached=False)
        with pytest.raises(ProbeNotAttachedError):
            probe_position(s, Params().detached())
        with pytest.raises(ProbeNotAttachedError):
            probe_velocity(s, Params().detached())


class TestLinearize:
    def test_matches_finite_differences(self):
        rng = np.random.default_rng(11)
        params = Params()
        s = _random_state(rng)
        u = _random_input(rng)
        A, B = linearize(s, u, params)
        assert A.shape == (24, 24) and B.shape == (24, 4)

        from flipthrow.dynamics import kernel

        x0 = pack_state(s)
        u0 = np.concatenate([[u.thrust], u.moment])
        par = params.packed()
        eps = 1e-6
        for idx in rng.choice(24, size=6, replace=False):
            e = np.zeros(24)
            e[idx] = eps
            col = (kernel.deriv(x0 + e, u0, par) - kernel.deriv(x0 - e, u0, par)) / (2 * eps)
            assert np.allclose(A[:, idx], col, atol=1e-4), f"state column {idx}"
        for idx in range(4):
            e = np.zeros(4)
            e[idx] = eps
            col = (kernel.deriv(x0, u0 + e, par) - kernel.deriv(x0, u0 - e, par)) / (2 * eps)
            assert np.allclose(B[:, idx], col, atol=1e-4), f"input column {idx}"
