import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from magflow.config import build_space, load_config
from magflow.dynamics import (
    IntegratorConfig,
    PhaseState,
    RescaleConfig,
    convergence_gap,
    flow_residual,
    hamiltonian_field,
    integrate,
    limiting_field,
    limiting_period,
    rescaled_field,
    rk4_flow,
    sample_region,
    split_components,
)
from magflow.geometry import (
    BaseManifold,
    BlockMagnetic,
    ConformalMetric,
    ConstantMagnetic,
    ConstantMetric,
    TwistedPhaseSpace,
    fibre_data,
    hamiltonian,
    twisted_form_matrix,
)
from magflow.symplectic import williamson

from conftest import flat_t2

finite = st.floats(min_value=-3, max_value=3, allow_nan=False)


class TestField:
    def test_zero_section_is_critical(self, perturbed, kahler):
        for sp in (perturbed, kahler):
            qdot, pdot = hamiltonian_field(sp, np.full(sp.dim, 0.7), np.zeros(sp.dim))
            assert not qdot.any() and not pdot.any()

    def test_cyclotron_components(self):
        B = 1.3
        p = np.array([0.4, -0.9])
        qdot, pdot = hamiltonian_field(flat_t2(B), [0.0, 0.0], p)
        assert np.allclose(qdot, p)
        assert np.allclose(pdot, B * np.array([p[1], -p[0]]))

    def test_matches_dense_solve(self):
        sp = flat_t2(1.3)
        q, p = np.array([0.1, 0.2]), np.array([0.4, -0.9])
        grad = np.concatenate([[0.0, 0.0], p])
        x = np.linalg.solve(twisted_form_matrix(sp, q), grad)
        assert np.allclose(np.concatenate(hamiltonian_field(sp, q, p)), x, atol=1e-14)

    def test_untwisted_is_geodesic(self):
        sp = TwistedPhaseSpace(BaseManifold.torus(2), ConstantMetric(np.eye(2)), ConstantMagnetic(np.zeros((2, 2))))
        traj = integrate(sp, PhaseState([0.0, 0.0], [0.3, 0.2]), 10.0, IntegratorConfig(h=0.01))
        assert np.allclose(traj.q_unwrapped[-1], [3.0, 2.0], atol=1e-12)
        assert np.allclose(traj.q[-1], np.mod([3.0, 2.0], 2 * np.pi))

    @pytest.mark.parametrize("name", ["perturbed_t2", "t4_kahler", "t4_sqrt2"])
    def test_residual_1000_states(self, name):
        sp = build_space(load_config(name))
        rng = np.random.default_rng(3)
        q = rng.random((1000, sp.dim)) * 2 * np.pi
        p = rng.normal(size=(1000, sp.dim))
        worst = max(flow_residual(sp, qi, pi) for qi, pi in zip(q, p))
        assert worst <= 1e-12

    def test_conformal_metric_residual(self):
        sp = TwistedPhaseSpace(BaseManifold.torus(2), ConformalMetric(2, 1.0, 0.5, 1), BlockMagnetic((2.0,)))
        assert flow_residual(sp, [0.3, 1.2], [0.5, -0.2]) <= 1e-12


class TestIntegrate:
    def test_cyclotron_closure_and_radius(self):
        E, B = 0.5, 1.0
        state = PhaseState([0.0, 0.0], [np.sqrt(2 * E), 0.0])
        traj = integrate(flat_t2(B), state, 2 * np.pi / B, IntegratorConfig(h=1e-3))
        closure = np.linalg.norm(np.concatenate([traj.q_unwrapped[-1] - traj.q_unwrapped[0], traj.p[-1] - traj.p[0]]))
        assert closure <= 1e-6
        centre = traj.q_unwrapped.mean(axis=0)
        radius = np.linalg.norm(traj.q_unwrapped[:-1] - traj.q_unwrapped[:-1].mean(axis=0), axis=1)
        assert np.abs(radius - np.sqrt(2 * E) / B).max() <= 1e-6
        assert centre.shape == (2,)

    def test_energy_drift_perturbed(self, perturbed):
        traj = integrate(perturbed, PhaseState([1.0, 0.0], [0.1, 0.0]), 100.0, IntegratorConfig(h=1e-3))
        assert traj.drift <= 1e-6
        assert not traj.flagged
        assert np.all(np.diff(traj.t) > 0)

    def test_reversibility(self, perturbed):
        cfg = IntegratorConfig(h=1e-2)
        start = PhaseState([1.0, 2.0], [0.3, -0.2])
        fwd = integrate(perturbed, start, 5.0, cfg)
        back = integrate(perturbed, PhaseState(fwd.q_unwrapped[-1], fwd.p[-1]), -5.0, cfg)
        err = np.linalg.norm(np.concatenate([back.q_unwrapped[-1] - start.q, back.p[-1] - start.p]))
        assert err <= 10 * max(fwd.drift, 1e-14)
        assert np.all(np.diff(back.t) < 0)

    def test_adaptive_agrees_with_rk4(self, perturbed):
        start = PhaseState([1.0, 2.0], [0.3, -0.2])
        a = integrate(perturbed, start, 3.0, IntegratorConfig(h=1e-3))
        b = integrate(perturbed, start, 3.0, IntegratorConfig(method="adaptive"))
        assert np.allclose(a.q_unwrapped[-1], b.q_unwrapped[-1], atol=1e-8)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_non_finite_truncates(self):
        class Exploding(BlockMagnetic):
            def matrix(self, q):
                return super().matrix(q) * np.exp(np.abs(q).sum(axis=-1) * 200)[..., None, None]

        sp = TwistedPhaseSpace(BaseManifold.torus(2), ConstantMetric(np.eye(2)), Exploding((1.0,)))
        traj = integrate(sp, PhaseState([1.0, 1.0], [5.0, 5.0]), 50.0, IntegratorConfig(h=0.1))
        assert traj.error is not None and traj.flagged

    def test_invalid_step(self, flat):
        with pytest.raises(ValueError):
            integrate(flat, PhaseState([0, 0], [1, 0]), 1.0, IntegratorConfig(h=0.0))

    def test_phase_state_rejects_nan(self):
        with pytest.raises(ValueError):
            PhaseState([np.nan, 0.0], [0.0, 0.0])

    def test_batched_flow_matches_single(self, perturbed):
        x = np.array([[1.0, 2.0, 0.3, -0.2], [0.1, 0.5, -0.1, 0.4]])
        both = rk4_flow(perturbed, x, np.array([1.0, 2.0]), 50)
        one = rk4_flow(perturbed, x[1], 2.0, 50)
        assert np.array_equal(both[1], one)


class TestRescaling:
    def test_zero_fibre(self, perturbed):
        for eps in (0.5, 0.1):
            qdot, ydot = rescaled_field(perturbed, RescaleConfig(eps), [0.4, 0.2], [0.0, 0.0])
            assert not qdot.any() and not ydot.any()

    @given(finite, finite, finite, finite)
    @settings(max_examples=50, deadline=None)
    def test_unit_epsilon_is_hamiltonian_field(self, q1, q2, y1, y2):
        sp = build_space(load_config("perturbed_t2"))
        a = rescaled_field(sp, RescaleConfig(1.0, 1.0), [q1, q2], [y1, y2])
        b = hamiltonian_field(sp, [q1, q2], [y1, y2])
        assert all(np.array_equal(u, v) for u, v in zip(a, b))

    def test_chain_rule(self, perturbed):
        eps = 0.07
        q, y = np.array([0.3, 0.9]), np.array([0.5, -1.2])
        qdot, ydot = rescaled_field(perturbed, RescaleConfig(eps), q, y)
        xq, xp = hamiltonian_field(perturbed, q, eps * y)
        dinv = np.diag([1, 1, 1 / eps, 1 / eps])
        assert np.allclose(np.concatenate([qdot, ydot]), dinv @ np.concatenate([xq, xp]), rtol=1e-14)

    def test_literal_clock(self, perturbed):
        eps = 0.1
        q, y = [0.3, 0.9], [0.5, -1.2]
        phys = rescaled_field(perturbed, RescaleConfig(eps), q, y)
        lit = rescaled_field(perturbed, RescaleConfig(eps, clock="literal"), q, y)
        assert np.allclose(lit[1], phys[1] / eps**2)

    def test_flat_base_component_vanishes(self, flat):
        rng = np.random.default_rng(0)
        q, y = rng.random(2) * 6, rng.normal(size=2)
        for e in (0.2, 0.1, 0.05):
            base, fibre = split_components(flat, RescaleConfig(e), q, y)
            assert base <= 1e-15 * fibre

    def test_base_fibre_ratio_is_order_eps_squared(self):
        sp = TwistedPhaseSpace(BaseManifold.torus(2), ConformalMetric(2, 1.0, 0.5, 0), BlockMagnetic((2.0,)))
        q, y = np.array([0.3, 1.0]), np.array([0.8, -0.5])
        ratios = [np.divide(*split_components(sp, RescaleConfig(e), q, y)) for e in (0.2, 0.1, 0.05)]
        assert ratios[0] > ratios[1] > ratios[2] > 0
        # the base norm is exactly quadratic; the fibre norm moves by O(eps^2)
        assert ratios[1] / ratios[0] == pytest.approx(0.25, rel=1e-2)
        assert ratios[2] / ratios[1] == pytest.approx(0.25, rel=1e-2)


class TestLimit:
    def test_zero(self, perturbed):
        assert not limiting_field(perturbed, [0.1, 0.2], [0.0, 0.0]).any()

    def test_normal_coordinate_rotation(self, perturbed):
        q = [0.4, 1.0]
        pair = fibre_data(perturbed, q)
        w = williamson(pair.omega_f, pair.form)
        a = w.eigenvalues[0]
        ydot = limiting_field(perturbed, q, w.basis[:, 0])
        zdot = np.linalg.solve(w.basis, ydot)
        # one rotation of speed 2a, orientation fixed by Omega X = grad H
        assert np.allclose(np.abs(zdot), [0.0, 2 * a], atol=1e-12)
        assert limiting_period(perturbed, q) == pytest.approx(np.pi / a, rel=1e-14)

    def test_flat_period_is_cyclotron(self, flat):
        pair = fibre_data(flat, [0.0, 0.0])
        a = williamson(pair.omega_f, pair.form).eigenvalues[0]
        assert limiting_period(flat, [0.0, 0.0]) == pytest.approx(np.pi / a, rel=1e-10)
        assert limiting_period(flat, [0.0, 0.0]) == pytest.approx(2 * np.pi, rel=1e-10)

    def test_matches_fibre_part_of_flow(self, perturbed):
        q, y = np.array([0.3, 2.0]), np.array([0.4, 0.3])
        _, ydot = hamiltonian_field(perturbed, q, y)
        assert np.allclose(limiting_field(perturbed, q, y), ydot, atol=1e-12)

    def test_preserves_normal_form(self, kahler):
        q = np.array([0.1, 1.2, 2.3, 0.4])
        pair = fibre_data(kahler, q)
        period = limiting_period(kahler, q)
        n = 2000
        h = period / n
        y = np.array([0.3, -0.2, 0.5, 0.1])
        q0 = pair.form(y)
        f = lambda v: limiting_field(kahler, q, v)
        values = []
        for _ in range(n):
            k1 = f(y)
            k2 = f(y + h / 2 * k1)
            k3 = f(y + h / 2 * k2)
            k4 = f(y + h * k3)
            y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            values.append(pair.form(y))
        assert np.abs(np.array(values) - q0).max() <= 1e-10


class TestConvergence:
    def test_gap_sequence(self, flat):
        region = sample_region(flat, 256, seed=0)
        gaps = [convergence_gap(flat, RescaleConfig(e), region) for e in (0.2, 0.1, 0.05, 0.025)]
        assert all(b < a for a, b in zip(gaps, gaps[1:]))
        assert all(b / a <= 0.6 for a, b in zip(gaps, gaps[1:]))

    def test_constant_coefficients_fibre_gap_vanishes(self, flat):
        gap = convergence_gap(flat, RescaleConfig(0.05), n_samples=64, components="fibre")
        assert gap <= 1e-14

    def test_unit_epsilon_gap_positive(self, flat):
        assert convergence_gap(flat, RescaleConfig(1.0, 1.0), n_samples=16) > 0

    def test_region_on_unit_level(self, kahler):
        q, y = sample_region(kahler, 32, seed=1)
        assert np.allclose(hamiltonian(kahler, q, y), 1.0)
