"""Coordinate-descent activity decoder: steps, updates, objectives, support."""

import numpy as np
import pytest

from uracov import _sweeps
from uracov.channel import BudgetExceededError, sample_coding_matrix
from uracov.decoder import (
    DecoderSettings,
    DecoderState,
    InverseDriftError,
    coordinate_descent,
    khatri_rao_objective,
    ml_coordinate_step,
    ml_cost,
    nnls_coordinate_step,
    nnls_residual,
    rank_one_inverse_update,
    sample_covariance,
    threshold_support,
    topk_support,
)

from _oracles import (
    dense_ml_cost,
    dense_sigma,
    full_khatri_rao_objective,
    grid_argmin_ml,
    grid_argmin_nnls,
)


def state_at(matrix, gamma, sigma2):
    state = DecoderState.initial(matrix, sigma2)
    state.gamma = np.asarray(gamma, dtype=np.float64).copy()
    state.resync()
    return state


def random_instance(seed, slot_len=8, bits=5, sparsity=3, antennas=64,
                    sigma2=1.0):
    rng = np.random.default_rng(seed)
    matrix = sample_coding_matrix(slot_len, bits, seed=seed)
    gamma = np.zeros(matrix.num_columns)
    support = rng.choice(matrix.num_columns, size=sparsity, replace=False)
    gamma[support] = rng.uniform(0.5, 2.0, size=sparsity)
    h = (rng.standard_normal((matrix.num_columns, antennas))
         + 1j * rng.standard_normal((matrix.num_columns, antennas)))
    h *= np.sqrt(gamma / 2.0)[:, None]
    z = np.sqrt(sigma2 / 2.0) * (
        rng.standard_normal((slot_len, antennas))
        + 1j * rng.standard_normal((slot_len, antennas)))
    y = matrix.entries @ h + z
    return matrix, gamma, sample_covariance(y)


class TestSampleCovariance:
    def test_is_hermitian_and_psd(self):
        rng = np.random.default_rng(0)
        y = rng.standard_normal((6, 20)) + 1j * rng.standard_normal((6, 20))
        sc = sample_covariance(y)
        assert np.array_equal(sc, sc.conj().T)
        assert np.linalg.eigvalsh(sc).min() > -1e-12

    def test_single_antenna_is_rank_one(self):
        rng = np.random.default_rng(1)
        y = rng.standard_normal((5, 1)) + 1j * rng.standard_normal((5, 1))
        sc = sample_covariance(y)
        assert np.allclose(sc, np.outer(y[:, 0], y[:, 0].conj()), rtol=1e-12)

    def test_rejects_bad_shapes(self):
        with pytest.raises(ValueError):
            sample_covariance(np.zeros(5))
        with pytest.raises(ValueError):
            sample_covariance(np.zeros((5, 0)))


class TestMlCost:
    def test_zero_state_closed_form(self):
        matrix = sample_coding_matrix(6, 3, seed=0)
        state = DecoderState.initial(matrix, 2.0)
        sc = 2.0 * np.eye(6, dtype=np.complex128)
        assert ml_cost(state, sc) == pytest.approx(6 * np.log(2.0) + 6.0,
                                                   rel=1e-12)

    def test_matches_dense_evaluation(self):
        matrix, _, sc = random_instance(7)
        rng = np.random.default_rng(8)
        gamma = rng.uniform(0.0, 1.5, size=matrix.num_columns)
        state = state_at(matrix, gamma, 1.0)
        expected = dense_ml_cost(matrix.entries, gamma, 1.0, sc)
        assert ml_cost(state, sc) == pytest.approx(expected, rel=1e-8)


class TestCoordinateSteps:
    @pytest.mark.parametrize("seed", [0, 1, 2, 3, 4, 5])
    def test_ml_step_matches_grid_search(self, seed):
        matrix, _, sc = random_instance(seed)
        rng = np.random.default_rng(100 + seed)
        gamma = np.where(rng.random(matrix.num_columns) < 0.2,
                         rng.uniform(0.2, 1.0, size=matrix.num_columns), 0.0)
        state = state_at(matrix, gamma, 1.0)
        k = int(rng.integers(matrix.num_columns))
        d = ml_coordinate_step(state, sc, k)
        best_x = grid_argmin_ml(matrix.entries, gamma, 1.0, sc, k)
        assert abs(d - (best_x - gamma[k])) < 1.5e-4

    @pytest.mark.parametrize("seed", [0, 1, 2, 3, 4, 5])
    def test_nnls_step_matches_grid_search(self, seed):
        matrix, _, sc = random_instance(10 + seed)
        rng = np.random.default_rng(200 + seed)
        gamma = np.where(rng.random(matrix.num_columns) < 0.2,
                         rng.uniform(0.2, 1.0, size=matrix.num_columns), 0.0)
        state = state_at(matrix, gamma, 1.0)
        k = int(rng.integers(matrix.num_columns))
        d = nnls_coordinate_step(state, sc, k)
        best_x = grid_argmin_nnls(matrix.entries, gamma, 1.0, sc, k)
        assert abs(d - (best_x - gamma[k])) < 1.5e-4

    def test_true_model_covariance_is_a_fixed_point(self):
        matrix, gamma, _ = random_instance(20)
        sc = dense_sigma(matrix.entries, gamma, 1.0)
        state = state_at(matrix, gamma, 1.0)
        for k in range(matrix.num_columns):
            assert abs(ml_coordinate_step(state, sc, k)) < 1e-9
            assert abs(nnls_coordinate_step(state, sc, k)) < 1e-9

    def test_steps_clamp_at_minus_gamma(self):
        # sample covariance far below the model pulls the coefficient to zero
        matrix = sample_coding_matrix(8, 4, seed=3)
        gamma = np.zeros(16)
        gamma[5] = 1.0
        state = state_at(matrix, gamma, 1.0)
        sc = 0.01 * np.eye(8, dtype=np.complex128)
        assert ml_coordinate_step(state, sc, 5) == -1.0
        assert nnls_coordinate_step(state, sc, 5) == -1.0

    def test_nnls_step_recovers_planted_rank_one(self):
        matrix = sample_coding_matrix(8, 4, seed=4)
        state = DecoderState.initial(matrix, 1.0)
        a = matrix.entries[:, 9]
        c = 0.7317
        sc = np.eye(8, dtype=np.complex128) + c * np.outer(a, a.conj())
        assert nnls_coordinate_step(state, sc, 9) == pytest.approx(c, rel=1e-12)


class TestRankOneInverseUpdate:
    def test_matches_closed_form_from_identity(self):
        matrix = sample_coding_matrix(8, 4, seed=5)
        sigma2, d, k = 2.0, 0.6, 3
        state = DecoderState.initial(matrix, sigma2)
        rank_one_inverse_update(state, k, d)
        a = matrix.entries[:, k]
        expected = (np.eye(8) / sigma2
                    - (d / (sigma2 * (sigma2 + d * 8.0))) * np.outer(a, a.conj()))
        assert np.allclose(state.sigma_inv, expected, atol=1e-12)
        assert state.gamma[k] == d

    def test_stays_consistent_with_dense_inverse(self):
        matrix = sample_coding_matrix(8, 5, seed=6)
        state = DecoderState.initial(matrix, 1.0)
        rng = np.random.default_rng(7)
        for _ in range(200):
            k = int(rng.integers(32))
            d = float(rng.uniform(-1.0, 1.0))
            d = max(d, -state.gamma[k])
            if d != 0.0:
                rank_one_inverse_update(state, k, d)
        dense = np.linalg.inv(state.sigma)
        rel = np.linalg.norm(state.sigma_inv - dense) / np.linalg.norm(dense)
        assert rel < 1e-8

    def test_zero_step_is_a_no_op(self):
        matrix = sample_coding_matrix(4, 2, seed=0)
        state = DecoderState.initial(matrix, 1.0)
        before = state.sigma_inv.copy()
        rank_one_inverse_update(state, 0, 0.0)
        assert np.array_equal(state.sigma_inv, before)

    def test_negative_coefficient_rejected(self):
        matrix = sample_coding_matrix(4, 2, seed=0)
        state = DecoderState.initial(matrix, 1.0)
        with pytest.raises(ValueError):
            rank_one_inverse_update(state, 0, -0.5)

    def test_corrupted_inverse_raises_drift_error(self):
        matrix = sample_coding_matrix(4, 2, seed=0)
        state = DecoderState.initial(matrix, 1.0)
        state.sigma_inv = -np.eye(4, dtype=np.complex128)
        with pytest.raises(InverseDriftError):
            rank_one_inverse_update(state, 0, 1.0)

    def test_resync_recovers_from_corruption(self):
        matrix = sample_coding_matrix(4, 2, seed=0)
        state = DecoderState.initial(matrix, 1.0)
        rank_one_inverse_update(state, 1, 0.8)
        state.sigma_inv = -np.eye(4, dtype=np.complex128)
        state.resync()
        dense = np.linalg.inv(dense_sigma(matrix.entries, state.gamma, 1.0))
        assert np.allclose(state.sigma_inv, dense, atol=1e-10)


class TestKhatriRaoObjective:
    def test_matches_materialized_matrix(self):
        matrix, _, sc = random_instance(30)
        rng = np.random.default_rng(31)
        gamma = rng.uniform(0.0, 1.0, size=matrix.num_columns)
        got = khatri_rao_objective(gamma, matrix, sc, 1.0)
        want = full_khatri_rao_objective(matrix.entries, gamma, 1.0, sc)
        assert got == pytest.approx(want, rel=1e-10)

    def test_equals_covariance_residual(self):
        matrix, _, sc = random_instance(32)
        rng = np.random.default_rng(33)
        gamma = rng.uniform(0.0, 1.0, size=matrix.num_columns)
        state = state_at(matrix, gamma, 1.0)
        assert khatri_rao_objective(gamma, matrix, sc, 1.0) == pytest.approx(
            nnls_residual(state, sc), rel=1e-10)

    def test_chunk_size_does_not_change_the_value(self):
        matrix, _, sc = random_instance(34)
        rng = np.random.default_rng(35)
        gamma = rng.uniform(0.0, 1.0, size=matrix.num_columns)
        a = khatri_rao_objective(gamma, matrix, sc, 1.0, chunk_cols=1)
        b = khatri_rao_objective(gamma, matrix, sc, 1.0, chunk_cols=256)
        assert a == pytest.approx(b, rel=1e-12)

    def test_scratch_budget_enforced(self):
        matrix, _, sc = random_instance(36)
        with pytest.raises(BudgetExceededError):
            khatri_rao_objective(np.zeros(matrix.num_columns), matrix, sc, 1.0,
                                 chunk_cols=256, max_entries=100)


class TestCoordinateDescent:
    def test_noise_only_covariance_keeps_gamma_at_zero(self):
        # with sigma2 a power of two and S = sigma2 I, quad and den agree
        # bit for bit, every proposed step is exactly zero
        matrix = sample_coding_matrix(8, 4, seed=40)
        sc = 0.25 * np.eye(8, dtype=np.complex128)
        for backend in ("reference", "kernel"):
            gamma = coordinate_descent(sc, matrix, 0.25, rng=0, backend=backend)
            assert np.array_equal(gamma, np.zeros(16))

    def test_noise_only_covariance_generic_sigma2(self):
        matrix = sample_coding_matrix(8, 4, seed=41)
        sc = 0.3 * np.eye(8, dtype=np.complex128)
        gamma = coordinate_descent(sc, matrix, 0.3, rng=0)
        assert np.allclose(gamma, 0.0, atol=1e-10)

    @pytest.mark.skipif(not _sweeps.HAVE_NUMBA, reason="compiled kernels absent")
    def test_kernel_matches_reference_loop(self):
        matrix, _, sc = random_instance(42, slot_len=12, bits=6, antennas=128)
        settings = DecoderSettings(max_sweeps=4, rel_tol=0.0)
        ref = coordinate_descent(sc, matrix, 1.0, settings, rng=9,
                                 backend="reference")
        ker = coordinate_descent(sc, matrix, 1.0, settings, rng=9,
                                 backend="kernel")
        assert np.allclose(ref, ker, rtol=1e-8, atol=1e-10)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_exact_covariance_recovers_sparse_gamma(self, seed):
        matrix, gamma, _ = random_instance(50 + seed, slot_len=16, bits=6,
                                           sparsity=5)
        sc = dense_sigma(matrix.entries, gamma, 1.0)
        settings = DecoderSettings(max_sweeps=30)
        fitted = coordinate_descent(sc, matrix, 1.0, settings, rng=seed)
        rel = np.abs(fitted - gamma).sum() / gamma.sum()
        assert rel < 0.05

    def test_ml_cost_never_increases_along_accepted_steps(self):
        matrix, _, sc = random_instance(60)
        state = DecoderState.initial(matrix, 1.0)
        rng = np.random.default_rng(61)
        cost = ml_cost(state, sc)
        for _ in range(150):
            k = int(rng.integers(matrix.num_columns))
            d = ml_coordinate_step(state, sc, k)
            if d == 0.0:
                continue
            rank_one_inverse_update(state, k, d)
            new_cost = ml_cost(state, sc)
            assert new_cost <= cost + 1e-9 * abs(cost)
            cost = new_cost

    def test_nnls_descent_reduces_residual(self):
        matrix, _, sc = random_instance(62)
        settings = DecoderSettings(method="nnls", max_sweeps=10)
        gamma = coordinate_descent(sc, matrix, 1.0, settings, rng=0)
        at_zero = state_at(matrix, np.zeros(matrix.num_columns), 1.0)
        fitted = state_at(matrix, gamma, 1.0)
        assert nnls_residual(fitted, sc) < nnls_residual(at_zero, sc)

    def test_cyclic_schedule_is_deterministic(self):
        matrix, _, sc = random_instance(63)
        settings = DecoderSettings(schedule="cyclic")
        a = coordinate_descent(sc, matrix, 1.0, settings, rng=0)
        b = coordinate_descent(sc, matrix, 1.0, settings, rng=99)
        assert np.array_equal(a, b)

    def test_input_validation(self):
        matrix = sample_coding_matrix(4, 2, seed=0)
        eye = np.eye(4, dtype=np.complex128)
        with pytest.raises(ValueError):
            coordinate_descent(eye, matrix, 0.0)
        with pytest.raises(ValueError):
            coordinate_descent(eye, matrix, 1.0, backend="gpu")
        with pytest.raises(ValueError):
            coordinate_descent(np.eye(5, dtype=np.complex128), matrix, 1.0)
        skew = eye.copy()
        skew[0, 1] = 1.0
        with pytest.raises(ValueError):
            coordinate_descent(skew, matrix, 1.0)


class TestDecoderSettings:
    def test_validation(self):
        with pytest.raises(ValueError):
            DecoderSettings(method="map")
        with pytest.raises(ValueError):
            DecoderSettings(max_sweeps=0)
        with pytest.raises(ValueError):
            DecoderSettings(rel_tol=-1.0)
        with pytest.raises(ValueError):
            DecoderSettings(schedule="sorted")
        with pytest.raises(ValueError):
            DecoderSettings(resync_period=0)


class TestSupportRules:
    def test_threshold_keeps_values_at_or_above_nu(self):
        decision = threshold_support(np.array([0.2, 0.0, 0.7, 0.4]), 0.35)
        assert decision.indices.tolist() == [2, 3]
        assert decision.mode == "threshold"

    def test_threshold_boundary_is_inclusive(self):
        decision = threshold_support(np.array([0.35, 0.349]), 0.35)
        assert decision.indices.tolist() == [0]

    def test_topk_breaks_ties_toward_lower_index(self):
        decision = topk_support(np.array([1.0, 1.0, 0.0, 2.0]), 2)
        assert decision.indices.tolist() == [0, 3]
        assert decision.mode == "topk"

    def test_topk_edge_sizes(self):
        gamma = np.array([0.3, 0.1, 0.2])
        assert topk_support(gamma, 0).indices.size == 0
        assert topk_support(gamma, 10).indices.tolist() == [0, 1, 2]
