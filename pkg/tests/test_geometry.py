import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from magflow.config import build_space, load_config
from magflow.geometry import (
    BaseManifold,
    BlockMagnetic,
    CompatibleMetric,
    ConformalMetric,
    ConstantMagnetic,
    ConstantMetric,
    MetricField,
    SingularMetricError,
    TwistedPhaseSpace,
    canonical_form,
    check_closed,
    eigenvalue_field,
    fibre_data,
    hamiltonian,
    twisted_form_matrix,
)
from magflow.symplectic import DegenerateFormError, williamson, williamson_oracle

from conftest import flat_t2


def space_with(metric, magnetic, dim=2):
    return TwistedPhaseSpace(BaseManifold.torus(dim), metric, magnetic)


class TestBaseManifold:
    def test_torus_constants(self):
        t2 = BaseManifold.torus(2)
        assert (t2.cuplength, t2.crit) == (2, 3)
        assert BaseManifold.torus(4).cuplength == 4

    def test_wrap_and_delta(self):
        t2 = BaseManifold.torus(2)
        assert np.allclose(t2.wrap([-0.5, 7.0]), [2 * np.pi - 0.5, 7.0 - 2 * np.pi])
        assert np.allclose(t2.delta([6.2, 0.0], [0.1, 0.0]), [6.2 - 0.1 - 2 * np.pi, 0.0])

    def test_invalid_periods(self):
        with pytest.raises(ValueError):
            BaseManifold(2, (1.0, -1.0))

    def test_patch_does_not_wrap(self):
        patch = BaseManifold(2)
        assert np.array_equal(patch.wrap([10.0, -3.0]), [10.0, -3.0])


class TestHamiltonian:
    def test_zero_section(self, flat):
        assert hamiltonian(flat, [1.0, 2.0], [0.0, 0.0]) == 0.0

    def test_unit_momentum(self, flat):
        assert hamiltonian(flat, [0.0, 0.0], [1.0, 0.0]) == pytest.approx(0.5)

    def test_scaled_metric(self):
        sp = space_with(ConstantMetric(2 * np.eye(2)), BlockMagnetic((1.0,)))
        assert hamiltonian(sp, [0.0, 0.0], [1.0, 1.0]) == pytest.approx(0.5)

    def test_singular_metric_reports_condition(self):
        class Singular(MetricField):
            def matrix(self, q):
                return np.zeros(np.shape(q)[:-1] + (2, 2))

        sp = space_with(Singular(), BlockMagnetic((1.0,)))
        with pytest.raises(SingularMetricError) as err:
            hamiltonian(sp, [0.0, 0.0], [1.0, 0.0])
        assert "cond" in str(err.value)


class TestTwistedForm:
    def test_untwisted(self):
        sp = space_with(ConstantMetric(np.eye(2)), ConstantMagnetic(np.zeros((2, 2))))
        big = twisted_form_matrix(sp, [0.3, 0.4])
        expected = np.block([[np.zeros((2, 2)), -np.eye(2)], [np.eye(2), np.zeros((2, 2))]])
        assert np.array_equal(big, expected)

    def test_constant_field_block(self):
        big = twisted_form_matrix(flat_t2(2.5), [0.0, 0.0])
        assert np.array_equal(big[:2, :2], [[0.0, 2.5], [-2.5, 0.0]])

    def test_perturbed_block(self, perturbed):
        big = twisted_form_matrix(perturbed, [np.pi / 2, 0.0])
        assert big[0, 1] == pytest.approx(3.0) and big[1, 0] == pytest.approx(-3.0)

    @pytest.mark.parametrize("name", ["flat_t2", "perturbed_t2", "t4_c2", "t4_sqrt2", "t4_kahler"])
    def test_antisymmetric_nondegenerate_on_grid(self, name):
        cfg = load_config(name)
        sp = build_space(cfg)
        grid = sp.base.grid(6)
        big = twisted_form_matrix(sp, grid)
        assert np.array_equal(big, -np.swapaxes(big, -1, -2))
        assert np.abs(np.linalg.det(big)).min() > 1e-6


class TestFibreData:
    def test_flat_t2_matches_oracle(self):
        B = 1.7
        pair = fibre_data(flat_t2(B), [0.2, 1.1])
        # vertical frame: Omega^F = inv(omega), A = g^{-1}/2
        assert np.allclose(pair.omega_f.entries, np.linalg.inv([[0.0, B], [-B, 0.0]]), atol=1e-12)
        assert np.allclose(pair.form.entries, 0.5 * np.eye(2), atol=1e-12)
        a = williamson(pair.omega_f, pair.form).eigenvalues
        assert a[0] == pytest.approx(williamson_oracle(pair.omega_f, pair.form)[0], rel=1e-12)
        assert a[0] == pytest.approx(B / 2, rel=1e-12)

    @pytest.mark.parametrize("fixture", ["perturbed_t2", "t4_kahler", "t4_sqrt2"])
    def test_base_frame_is_minus_omega(self, fixture, rng):
        sp = build_space(load_config(fixture))
        for q in rng.random((5, sp.dim)) * 2 * np.pi:
            pair = fibre_data(sp, q, frame="base")
            w = sp.magnetic.matrix(q)
            assert np.abs(pair.omega_f.entries + w).max() <= 1e-10

    def test_frames_share_eigenvalues(self, perturbed):
        q = [0.7, 2.0]
        a_v = williamson(*_pair(fibre_data(perturbed, q))).eigenvalues
        a_b = williamson(*_pair(fibre_data(perturbed, q, frame="base"))).eigenvalues
        assert np.allclose(a_v, a_b, rtol=1e-12)

    def test_form_is_hamiltonian_on_fibre(self, kahler, rng):
        q = rng.random(4) * 2 * np.pi
        pair = fibre_data(kahler, q)
        y = rng.normal(size=4)
        assert pair.form(y) == pytest.approx(hamiltonian(kahler, q, y), rel=1e-12)

    def test_degenerate_magnetic_names_point(self):
        sp = space_with(ConstantMetric(np.eye(2)), ConstantMagnetic(np.zeros((2, 2))))
        with pytest.raises(DegenerateFormError) as err:
            fibre_data(sp, [0.5, 0.25])
        assert "0.5" in str(err.value)

    def test_t4_ratios(self):
        for name, q, ratio in [("t4_c2", 1, 2.0), ("t4_sqrt2", 2, np.sqrt(2))]:
            sp = build_space(load_config(name))
            field = eigenvalue_field(sp, sp.base.grid(3))
            a = field.eigenvalues
            assert np.allclose(a[:, 1] / a[:, 0], ratio, rtol=1e-12)
            assert field.partition.q == q


def _pair(pair):
    return pair.omega_f, pair.form


class TestCompatibleMetric:
    def test_kahler_equal_eigenvalues(self, kahler):
        grid = kahler.base.grid(16, axes=[1, 2])
        field = eigenvalue_field(kahler, grid)
        assert field.relative_spread() <= 1e-9
        assert field.partition.q == 1
        # absolute value pinned by the oracle, not a literal constant
        pair = fibre_data(kahler, grid[5])
        assert field.eigenvalues[5] == pytest.approx(williamson_oracle(pair.omega_f, pair.form), rel=1e-12)

    def test_complex_structure_squares_to_minus_one(self, kahler, rng):
        q = rng.random(4) * 2 * np.pi
        jmat = kahler.metric.complex_structure(q)
        assert np.allclose(jmat @ jmat, -np.eye(4), atol=1e-12)

    def test_fast_path_matches_expm(self, rng):
        from scipy.linalg import expm

        m = np.zeros((4, 4))
        m[0, 0], m[1, 1] = 0.3, -0.3
        met = CompatibleMetric(4, (m,), (1,))
        assert met._fast is not None
        q = rng.random((3, 4)) * 6
        s = expm(np.sin(q[:, 1])[:, None, None] * (np.linalg.inv(canonical_form(4)) @ m))
        assert np.allclose(met.matrix(q), np.swapaxes(s, 1, 2) @ s, atol=1e-13)

    def test_analytic_derivative_matches_fd(self, kahler, rng):
        q = rng.random((4, 4)) * 6
        fd = MetricField.derivative(kahler.metric, q)
        assert np.abs(kahler.metric.derivative(q) - fd).max() < 1e-8


class TestClosedness:
    def test_constant_form(self):
        w = np.zeros((4, 4))
        w[0, 1], w[1, 0], w[2, 3], w[3, 2] = 1.0, -1.0, 2.0, -2.0
        grid = BaseManifold.torus(4).grid(3)
        assert check_closed(ConstantMagnetic(w), grid) == 0.0

    def test_surface_form_closed(self, perturbed):
        assert check_closed(perturbed.magnetic, perturbed.base.grid(16), 1e-3) < 1e-6

    def test_nonclosed_control_flagged(self):
        sp = build_space(load_config("nonclosed_t4"))
        assert check_closed(sp.magnetic, sp.base.grid(4), 1e-3) > 1e-2

    def test_closed_t4_with_in_block_modulation(self):
        mag = BlockMagnetic((2.0, 2.0), (1.0, 0.5), (0, 3))
        assert check_closed(mag, BaseManifold.torus(4).grid(4)) < 1e-6


class TestEigenvalueField:
    def test_lipschitz_refinement(self):
        sp = space_with(ConformalMetric(2, 1.0, 0.4, 1), BlockMagnetic((2.0,), (1.0,), (0,)))
        jumps = []
        for n in (8, 16, 32):
            grid = sp.base.grid(n)
            a = eigenvalue_field(sp, grid).eigenvalues[:, 0].reshape(n, n)
            jumps.append(max(np.abs(np.diff(a, axis=0)).max(), np.abs(np.diff(a, axis=1)).max()))
        assert jumps[0] > jumps[1] > jumps[2]

    @given(st.floats(min_value=0.2, max_value=5.0))
    @settings(max_examples=20, deadline=None)
    def test_constant_field_eigenvalue(self, B):
        field = eigenvalue_field(flat_t2(B), BaseManifold.torus(2).grid(2))
        assert np.allclose(field.eigenvalues, B / 2, rtol=1e-12)
