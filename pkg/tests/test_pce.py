import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import eval_legendre

from pileuq.doe import PriorSpec, lhs_design
from pileuq.errors import (
    DegenerateTarget,
    DimensionMismatch,
    OutOfSupport,
    RankDeficient,
)
from pileuq.pce import (
    MultiIndexSet,
    PceModel,
    adapt_degree,
    design_matrix,
    eval_pce,
    fit_lars,
    fit_ols,
    gen_multi_indices,
    legendre_orthonormal,
    loo_error,
)

UNIT_PRIOR_1D = PriorSpec.from_bounds(["u"], [-1.0], [1.0])
UNIT_PRIOR_2D = PriorSpec.from_bounds(["u1", "u2"], [-1.0, -1.0], [1.0, 1.0])


class TestLegendreBasis:
    def test_point_values(self):
        assert legendre_orthonormal(0, 0.37) == 1.0
        assert legendre_orthonormal(1, 0.5) == pytest.approx(np.sqrt(3) / 2, rel=1e-14)
        assert legendre_orthonormal(2, 0.5) == pytest.approx(-np.sqrt(5) / 8, rel=1e-14)
        p3 = (5 * (-0.3) ** 3 - 3 * (-0.3)) / 2
        assert legendre_orthonormal(3, -0.3) == pytest.approx(np.sqrt(7) * p3, rel=1e-13)

    def test_endpoint_values(self):
        for k in range(8):
            assert legendre_orthonormal(k, 1.0) == pytest.approx(np.sqrt(2 * k + 1))

    def test_vector_input(self):
        u = np.linspace(-1, 1, 7)
        vals = legendre_orthonormal(2, u)
        assert vals.shape == (7,)
        np.testing.assert_allclose(
            vals, [legendre_orthonormal(2, ui) for ui in u], rtol=1e-14
        )

    def test_orthonormal_under_uniform_density(self):
        # Gauss-Legendre with 16 nodes integrates products up to degree 31
        nodes, weights = np.polynomial.legendre.leggauss(16)
        table = np.column_stack([legendre_orthonormal(k, nodes) for k in range(13)])
        gram = 0.5 * table.T @ (weights[:, None] * table)
        np.testing.assert_allclose(gram, np.eye(13), atol=1e-10)

    def test_negative_degree_rejected(self):
        with pytest.raises(DimensionMismatch):
            legendre_orthonormal(-1, 0.0)

    @settings(max_examples=60, deadline=None)
    @given(k=st.integers(0, 12), u=st.floats(-1.0, 1.0))
    def test_matches_reference_polynomials(self, k, u):
        expected = np.sqrt(2 * k + 1) * eval_legendre(k, u)
        assert legendre_orthonormal(k, u) == pytest.approx(expected, abs=1e-10)


class TestMultiIndices:
    def test_univariate(self):
        ms = gen_multi_indices(1, 3, 1.0)
        assert ms.indices == ((0,), (1,), (2,), (3,))

    def test_graded_lex_order(self):
        ms = gen_multi_indices(2, 2, 1.0)
        assert ms.indices == ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2))

    @pytest.mark.parametrize("M,p", [(2, 3), (3, 2), (3, 4), (4, 3)])
    def test_full_count_at_q_one(self, M, p):
        from math import comb

        assert len(gen_multi_indices(M, p, 1.0)) == comb(M + p, p)

    def test_hyperbolic_truncation(self):
        ms = gen_multi_indices(3, 3, 0.75)
        assert (0, 0, 0) in ms.indices
        assert (3, 0, 0) in ms.indices  # pure powers always survive
        assert (1, 1, 0) in ms.indices
        assert (2, 1, 0) not in ms.indices
        assert (1, 1, 1) not in ms.indices
        assert len(ms) == 13

    def test_zero_tuple_first(self):
        for M, p, q in [(1, 4, 1.0), (3, 3, 0.75), (4, 2, 0.5)]:
            assert gen_multi_indices(M, p, q).indices[0] == (0,) * M

    def test_invalid_parameters(self):
        with pytest.raises(DimensionMismatch):
            gen_multi_indices(0, 2, 1.0)
        with pytest.raises(DimensionMismatch):
            gen_multi_indices(2, 2, 0.0)
        with pytest.raises(DimensionMismatch):
            gen_multi_indices(2, 2, 1.5)


class TestDesignMatrix:
    def test_constant_first_column(self):
        X = lhs_design(UNIT_PRIOR_2D, 10, seed=1).rows
        Psi = design_matrix(X, UNIT_PRIOR_2D, gen_multi_indices(2, 2, 1.0))
        assert Psi.shape == (10, 6)
        np.testing.assert_allclose(Psi[:, 0], 1.0)

    def test_affine_input_map(self):
        prior = PriorSpec.from_bounds(["x"], [2.0], [6.0])
        ms = gen_multi_indices(1, 1, 1.0)
        Psi = design_matrix(np.array([[2.0], [4.0], [6.0]]), prior, ms)
        np.testing.assert_allclose(Psi[:, 1], np.sqrt(3) * np.array([-1.0, 0.0, 1.0]))

    def test_out_of_support(self):
        ms = gen_multi_indices(1, 2, 1.0)
        with pytest.raises(OutOfSupport):
            design_matrix(np.array([[1.0 + 1e-6]]), UNIT_PRIOR_1D, ms)

    def test_dimension_mismatch(self):
        ms = gen_multi_indices(2, 2, 1.0)
        with pytest.raises(DimensionMismatch):
            design_matrix(np.zeros((3, 1)), UNIT_PRIOR_1D, ms)


class TestOls:
    def test_exact_recovery(self):
        rng = np.random.default_rng(5)
        ms = gen_multi_indices(3, 3, 1.0)
        prior = PriorSpec.from_bounds(["a", "b", "c"], [-1, -1, -1], [1, 1, 1])
        Psi = design_matrix(lhs_design(prior, 50, seed=2).rows, prior, ms)
        c_true = rng.normal(size=len(ms))
        coef = fit_ols(Psi, Psi @ c_true)
        np.testing.assert_allclose(coef, c_true, atol=1e-10)

    def test_constant_target(self):
        X = lhs_design(UNIT_PRIOR_1D, 8, seed=3).rows
        Psi = design_matrix(X, UNIT_PRIOR_1D, gen_multi_indices(1, 2, 1.0))
        coef = fit_ols(Psi, np.full(8, 4.2))
        np.testing.assert_allclose(coef, [4.2, 0.0, 0.0], atol=1e-12)

    def test_quadratic_projection_oracle(self):
        # f(u) = 2 + 3u - u^2 in the orthonormal basis:
        # c0 = 5/3, c1 = sqrt(3), c2 = -2*sqrt(5)/15
        X = lhs_design(UNIT_PRIOR_1D, 5, seed=7).rows
        u = X[:, 0]
        Psi = design_matrix(X, UNIT_PRIOR_1D, gen_multi_indices(1, 2, 1.0))
        coef = fit_ols(Psi, 2 + 3 * u - u**2)
        np.testing.assert_allclose(
            coef, [5 / 3, np.sqrt(3), -2 * np.sqrt(5) / 15], atol=1e-10
        )

    def test_underdetermined_raises(self):
        with pytest.raises(RankDeficient):
            fit_ols(np.ones((2, 3)), np.zeros(2))

    def test_duplicate_column_raises(self):
        rng = np.random.default_rng(0)
        col = rng.normal(size=10)
        Psi = np.column_stack([np.ones(10), col, col])
        with pytest.raises(RankDeficient):
            fit_ols(Psi, rng.normal(size=10))


class TestLooError:
    def test_matches_brute_force(self):
        rng = np.random.default_rng(11)
        Psi = np.column_stack([np.ones(9), rng.normal(size=(9, 2))])
        z = rng.normal(size=9)
        coef = fit_ols(Psi, z)
        analytic = loo_error(Psi, z, coef)
        deleted = []
        for k in range(9):
            keep = np.arange(9) != k
            c_k = np.linalg.lstsq(Psi[keep], z[keep], rcond=None)[0]
            deleted.append((z[k] - Psi[k] @ c_k) ** 2)
        brute = np.mean(deleted) / np.var(z, ddof=1)
        assert analytic == pytest.approx(brute, rel=1e-10)

    def test_constant_model_brute_force(self):
        z = np.array([1.0, 2.0, 4.0, 7.0])
        Psi = np.ones((4, 1))
        coef = fit_ols(Psi, z)
        deleted = [(z[k] - np.delete(z, k).mean()) ** 2 for k in range(4)]
        brute = np.mean(deleted) / np.var(z, ddof=1)
        assert loo_error(Psi, z, coef) == pytest.approx(brute, rel=1e-12)

    def test_saturated_fit_is_infinite(self):
        rng = np.random.default_rng(2)
        Psi = rng.normal(size=(4, 4))
        z = rng.normal(size=4)
        coef = np.linalg.solve(Psi, z)
        assert loo_error(Psi, z, coef) == np.inf

    def test_exact_fit_is_exactly_zero(self):
        X = lhs_design(UNIT_PRIOR_1D, 12, seed=4).rows
        Psi = design_matrix(X, UNIT_PRIOR_1D, gen_multi_indices(1, 3, 1.0))
        c_true = np.array([0.5, -1.0, 2.0, 0.25])
        z = Psi @ c_true
        assert loo_error(Psi, z, fit_ols(Psi, z)) == 0.0

    def test_constant_target_without_constant_column(self):
        rng = np.random.default_rng(6)
        Psi = rng.normal(size=(6, 1))
        z = np.full(6, 3.0)
        coef = fit_ols(Psi, z)
        with pytest.raises(DegenerateTarget):
            loo_error(Psi, z, coef)

    def test_constant_target_with_constant_column(self):
        Psi = np.column_stack([np.ones(5), np.arange(5.0)])
        z = np.full(5, 3.0)
        assert loo_error(Psi, z, fit_ols(Psi, z)) == 0.0


class TestHybridLars:
    def test_one_sparse_recovery(self):
        X = lhs_design(UNIT_PRIOR_2D, 20, seed=9).rows
        Psi = design_matrix(X, UNIT_PRIOR_2D, gen_multi_indices(2, 3, 1.0))
        z = 2.5 * Psi[:, 4]
        active, coef, loo = fit_lars(Psi, z)
        assert active[4]
        assert coef[4] == pytest.approx(2.5, abs=1e-8)
        others = np.delete(coef, [0, 4])
        np.testing.assert_allclose(others, 0.0, atol=1e-8)
        assert loo == 0.0

    def test_null_signal(self):
        X = lhs_design(UNIT_PRIOR_2D, 15, seed=1).rows
        Psi = design_matrix(X, UNIT_PRIOR_2D, gen_multi_indices(2, 2, 1.0))
        active, coef, loo = fit_lars(Psi, np.zeros(15))
        assert active[0] and active.sum() == 1
        np.testing.assert_array_equal(coef, np.zeros(6))
        assert loo == 0.0

    def test_two_sparse_recovery(self):
        ms = gen_multi_indices(2, 4, 1.0)
        assert len(ms) == 15
        i1 = ms.indices.index((2, 0))
        i2 = ms.indices.index((0, 1))
        X = lhs_design(UNIT_PRIOR_2D, 30, seed=13).rows
        Psi = design_matrix(X, UNIT_PRIOR_2D, ms)
        z = 1.0 * Psi[:, i1] - 0.5 * Psi[:, i2]
        active, coef, _ = fit_lars(Psi, z)
        assert active[i1] and active[i2]
        assert coef[i1] == pytest.approx(1.0, abs=1e-6)
        assert coef[i2] == pytest.approx(-0.5, abs=1e-6)
        spurious = np.delete(coef, [0, i1, i2])
        np.testing.assert_allclose(spurious, 0.0, atol=1e-6)

    def test_reproduces_ols_on_full_rank_data(self):
        rng = np.random.default_rng(17)
        ms = gen_multi_indices(2, 2, 1.0)
        X = lhs_design(UNIT_PRIOR_2D, 40, seed=5).rows
        Psi = design_matrix(X, UNIT_PRIOR_2D, ms)
        z = Psi @ rng.normal(size=6)
        _, coef_lars, _ = fit_lars(Psi, z, max_terms=6)
        np.testing.assert_allclose(coef_lars, fit_ols(Psi, z), atol=1e-8)

    def test_max_terms_cap(self):
        rng = np.random.default_rng(23)
        X = lhs_design(UNIT_PRIOR_2D, 25, seed=2).rows
        Psi = design_matrix(X, UNIT_PRIOR_2D, gen_multi_indices(2, 4, 1.0))
        z = rng.normal(size=25)
        active, _, _ = fit_lars(Psi, z, max_terms=3)
        assert active.sum() <= 3

    def test_sample_count_cap(self):
        rng = np.random.default_rng(29)
        X = lhs_design(UNIT_PRIOR_2D, 4, seed=3).rows
        Psi = design_matrix(X, UNIT_PRIOR_2D, gen_multi_indices(2, 3, 1.0))
        z = rng.normal(size=4)
        active, _, loo = fit_lars(Psi, z)
        assert active.sum() <= 3
        assert np.isfinite(loo)

    def test_inactive_coefficients_are_exact_zeros(self):
        rng = np.random.default_rng(31)
        X = lhs_design(UNIT_PRIOR_2D, 20, seed=8).rows
        Psi = design_matrix(X, UNIT_PRIOR_2D, gen_multi_indices(2, 3, 1.0))
        active, coef, _ = fit_lars(Psi, Psi[:, 1] + 0.01 * rng.normal(size=20))
        assert np.all(coef[~active] == 0.0)


class TestEvalPce:
    @staticmethod
    def _constant_model(value):
        ms = gen_multi_indices(2, 1, 1.0)
        coef = np.zeros(3)
        coef[0] = value
        active = np.array([True, False, False])
        return PceModel(ms, coef, active, UNIT_PRIOR_2D, 0.0)

    def test_constant_model(self):
        model = self._constant_model(4.2)
        assert eval_pce(model, [0.3, -0.7]) == pytest.approx(4.2)
        assert eval_pce(model, [-1.0, 1.0]) == pytest.approx(4.2)

    def test_linear_reproduction(self):
        prior = PriorSpec.from_bounds(["x1"], [0.0], [2.0])
        X = lhs_design(prior, 10, seed=6).rows
        model = adapt_degree(X, X[:, 0], prior, p_candidates=(1,))
        assert eval_pce(model, np.array([1.3])) == pytest.approx(1.3, abs=1e-10)

    def test_matches_direct_summation(self):
        ms = gen_multi_indices(2, 4, 1.0)
        i1 = ms.indices.index((2, 0))
        i2 = ms.indices.index((0, 1))
        X = lhs_design(UNIT_PRIOR_2D, 30, seed=13).rows
        Psi = design_matrix(X, UNIT_PRIOR_2D, ms)
        active, coef, loo = fit_lars(Psi, Psi[:, i1] - 0.5 * Psi[:, i2])
        model = PceModel(ms, coef, active, UNIT_PRIOR_2D, loo)
        rng = np.random.default_rng(19)
        pts = rng.uniform(-1, 1, size=(20, 2))
        from pileuq.pce import legendre_orthonormal as psi

        for x in pts:
            direct = sum(
                c * np.prod([psi(a, xi) for a, xi in zip(alpha, x)])
                for alpha, c in zip(ms.indices, coef)
            )
            assert eval_pce(model, x) == pytest.approx(direct, abs=1e-12)

    def test_batch_evaluation(self):
        model = self._constant_model(1.5)
        out = eval_pce(model, np.zeros((4, 2)))
        np.testing.assert_allclose(out, 1.5)

    def test_out_of_support(self):
        model = self._constant_model(1.0)
        with pytest.raises(OutOfSupport):
            eval_pce(model, [1.5, 0.0])


class TestAdaptDegree:
    def test_quadratic_tie_breaks_to_smaller_degree(self):
        X = lhs_design(UNIT_PRIOR_1D, 25, seed=21).rows
        u = X[:, 0]
        model = adapt_degree(X, 1.0 + 2.0 * u**2, UNIT_PRIOR_1D, p_candidates=(1, 2, 3))
        assert model.degree == 2
        assert model.loo_error == 0.0

    def test_loo_decreases_up_to_selected_degree(self):
        X = lhs_design(UNIT_PRIOR_1D, 30, seed=33).rows
        z = np.exp(X[:, 0])
        loos = []
        for p in range(1, 7):
            ms = gen_multi_indices(1, p, 1.0)
            Psi = design_matrix(X, UNIT_PRIOR_1D, ms)
            loos.append(fit_lars(Psi, z)[2])
        model = adapt_degree(X, z, UNIT_PRIOR_1D, p_candidates=tuple(range(1, 7)))
        selected = model.degree
        assert model.loo_error == min(loos)
        assert all(np.diff(loos[: selected]) < 0)

    def test_tiny_ensemble_returns_capped_model(self):
        # 3 samples cap the active set at 2, so high-degree candidates still
        # produce a finite-LOO submodel rather than a saturated fit
        X = lhs_design(UNIT_PRIOR_1D, 3, seed=41).rows
        z = np.array([0.3, 1.1, -0.4])
        model = adapt_degree(X, z, UNIT_PRIOR_1D, p_candidates=(5,))
        assert np.isfinite(model.loo_error)
        assert model.active.sum() <= 2

    def test_empty_candidates_rejected(self):
        with pytest.raises(DimensionMismatch):
            adapt_degree(np.zeros((3, 1)), np.zeros(3), UNIT_PRIOR_1D, p_candidates=())

    def test_hyperbolic_default_matches_explicit_indices(self):
        model = adapt_degree(
            lhs_design(UNIT_PRIOR_2D, 20, seed=2).rows,
            np.arange(20.0),
            UNIT_PRIOR_2D,
            p_candidates=(3,),
            q=0.75,
        )
        assert model.index_set.q_norm == 0.75
        assert model.index_set.indices == gen_multi_indices(2, 3, 0.75).indices


class TestSpectralMoments:
    def test_mean_and_variance_identities(self):
        ms = gen_multi_indices(2, 4, 1.0)
        i1 = ms.indices.index((2, 0))
        i2 = ms.indices.index((0, 1))
        X = lhs_design(UNIT_PRIOR_2D, 40, seed=3).rows
        Psi = design_matrix(X, UNIT_PRIOR_2D, ms)
        z = 0.7 + 1.0 * Psi[:, i1] - 0.5 * Psi[:, i2]
        active, coef, loo = fit_lars(Psi, z)
        model = PceModel(ms, coef, active, UNIT_PRIOR_2D, loo)
        fresh = UNIT_PRIOR_2D.sample(10**5, np.random.default_rng(77))
        preds = eval_pce(model, fresh)
        assert coef[0] == pytest.approx(preds.mean(), rel=0.01)
        assert np.sum(coef[1:] ** 2) == pytest.approx(preds.var(), rel=0.02)


def test_polynomial_exactness_property():
    # any degree <= p polynomial is reproduced at unseen points
    prior = PriorSpec.from_bounds(["a", "b"], [0.0, -2.0], [4.0, 2.0])
    X = lhs_design(prior, 2 * 15, seed=51).rows

    def f(pts):
        return 1.0 + pts[:, 0] - 0.5 * pts[:, 1] ** 2 + 0.25 * pts[:, 0] * pts[:, 1]

    model = adapt_degree(X, f(X), prior, p_candidates=(4,), q=1.0)
    unseen = prior.sample(50, np.random.default_rng(53))
    preds = eval_pce(model, unseen)
    truth = f(unseen)
    assert np.max(np.abs(preds - truth)) <= 1e-8 * max(1.0, np.max(np.abs(truth)))
