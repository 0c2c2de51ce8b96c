import math

import numpy as np
import pytest

from slipuq.basis import (PCBasis, PCExpansion, basis_eval, basis_norm_sq,
                          legendre_eval, pce_eval, pce_eval_many, pce_mean,
                          pce_variance, sobol_indices, total_order_indices)


class TestTotalOrderIndices:
    def test_1d_enumeration(self):
        idx = total_order_indices(1, 3)
        assert idx.tolist() == [[0], [1], [2], [3]]

    def test_count_m6_p5(self):
        assert total_order_indices(6, 5).shape == (462, 6)

    def test_m2_p2_set_and_order(self):
        idx = total_order_indices(2, 2)
        assert idx.tolist() == [[0, 0], [1, 0], [0, 1], [2, 0], [1, 1], [0, 2]]

    def test_counts_match_binomial(self):
        for m, p in [(2, 4), (3, 3), (4, 0), (5, 2)]:
            assert total_order_indices(m, p).shape[0] == math.comb(m + p, p)

    def test_all_zeros_first(self):
        assert not total_order_indices(4, 3)[0].any()

    def test_deterministic_regeneration(self):
        a = total_order_indices(5, 4)
        b = total_order_indices(5, 4)
        assert np.array_equal(a, b)

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            total_order_indices(0, 2)
        with pytest.raises(ValueError):
            total_order_indices(2, -1)


class TestLegendreEval:
    def test_degree_zero(self):
        for x in (-1.0, -0.3, 0.0, 0.9, 1.0):
            assert legendre_eval(0, x) == 1.0

    def test_degree_two_closed_form(self):
        assert legendre_eval(2, 0.5) == pytest.approx(-0.125, abs=1e-15)

    def test_degree_five_closed_form(self):
        # oracle: (63 x^5 - 70 x^3 + 15 x) / 8
        for x in np.linspace(-1, 1, 23):
            exact = (63 * x**5 - 70 * x**3 + 15 * x) / 8
            assert legendre_eval(5, x) == pytest.approx(exact, abs=1e-14)

    def test_endpoint_normalization(self):
        for n in range(9):
            assert legendre_eval(n, 1.0) == pytest.approx(1.0, abs=1e-14)

    def test_domain_error(self):
        with pytest.raises(ValueError):
            legendre_eval(3, 1.001)


class TestBasisEval:
    def test_constant_term(self):
        assert basis_eval([0, 0], [0.37, -0.8]) == 1.0

    def test_linear_term(self):
        assert basis_eval([1, 0], [0.4, 0.9]) == pytest.approx(0.4)

    def test_product_of_1d_values(self):
        # L2(0.5) * L1(-1) = (-0.125) * (-1)
        assert basis_eval([2, 1], [0.5, -1.0]) == pytest.approx(0.125, abs=1e-15)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            basis_eval([1, 0, 0], [0.2, 0.3])


class TestBasisNormSq:
    def test_constant(self):
        assert basis_norm_sq([0, 0, 0]) == 1.0

    def test_linear(self):
        assert basis_norm_sq([1, 0]) == pytest.approx(1 / 3)

    def test_product_rule(self):
        assert basis_norm_sq([2, 1]) == pytest.approx(1 / 15)


class TestOrthogonality:
    def test_gauss_tensor_quadrature_oracle(self):
        # all index pairs up to p=4 in m=3 against a tensor Gauss rule
        # exact to degree 11 >= 2*4
        basis = PCBasis(3, 4)
        nodes_1d, weights_1d = np.polynomial.legendre.leggauss(6)
        weights_1d = weights_1d / 2.0  # uniform probability measure
        mesh = np.meshgrid(nodes_1d, nodes_1d, nodes_1d, indexing="ij")
        pts = np.stack([g.ravel() for g in mesh], axis=1)
        w = np.einsum("i,j,k->ijk", weights_1d, weights_1d, weights_1d).ravel()
        psi = basis.eval_matrix(pts)
        gram = psi.T @ (w[:, None] * psi)
        expected = np.diag(basis.norms_sq())
        assert np.max(np.abs(gram - expected)) < 1e-10


class TestPceEval:
    def test_constant_expansion(self):
        basis = PCBasis(3, 2)
        coeffs = np.zeros((len(basis), 1))
        coeffs[0, 0] = 2.5
        exp = PCExpansion(basis, coeffs)
        for xi in ([0, 0, 0], [0.9, -0.2, 0.5]):
            assert pce_eval(exp, xi)[0] == pytest.approx(2.5)

    def test_two_term_example(self):
        basis = PCBasis(2, 1)  # indices (0,0), (1,0), (0,1)
        coeffs = np.array([[1.0], [3.0], [0.0]])
        exp = PCExpansion(basis, coeffs)
        assert pce_eval(exp, [0.2, 0.7])[0] == pytest.approx(1.6)

    def test_against_bruteforce_sum(self):
        rng = np.random.default_rng(11)
        basis = PCBasis(3, 3)
        coeffs = rng.normal(size=(len(basis), 2))
        exp = PCExpansion(basis, coeffs)
        for _ in range(10):
            xi = rng.uniform(-1, 1, size=3)
            # oracle: explicit term-by-term summation
            expected = np.zeros(2)
            for k, index in enumerate(basis.indices):
                expected += coeffs[k] * basis_eval(index, xi)
            assert pce_eval(exp, xi) == pytest.approx(expected, abs=1e-12)

    def test_dimension_mismatch(self):
        exp = PCExpansion(PCBasis(2, 1), np.zeros((3, 1)))
        with pytest.raises(ValueError):
            pce_eval(exp, [0.1, 0.2, 0.3])


def _expansion_from_terms(m, p, terms):
    """terms: {multi-index tuple: coefficient}"""
    basis = PCBasis(m, p)
    coeffs = np.zeros((len(basis), 1))
    lookup = {tuple(ix): k for k, ix in enumerate(basis.indices)}
    for index, value in terms.items():
        coeffs[lookup[index], 0] = value
    return PCExpansion(basis, coeffs)


class TestMoments:
    def test_uniform_variable(self):
        # G = xi_1 on m=3: mean 0, variance 1/3 (variance of U(-1,1))
        exp = _expansion_from_terms(3, 2, {(1, 0, 0): 1.0})
        assert pce_mean(exp)[0] == pytest.approx(0.0)
        assert pce_variance(exp)[0] == pytest.approx(1 / 3)

    def test_constant_surrogate(self):
        exp = _expansion_from_terms(2, 2, {(0, 0): 4.2})
        assert pce_mean(exp)[0] == pytest.approx(4.2)
        assert pce_variance(exp)[0] == 0.0

    def test_interaction_variance_against_monte_carlo(self):
        # G = xi_1 + xi_1 xi_2: Var = 1/3 + 1/9 = 4/9
        exp = _expansion_from_terms(2, 2, {(1, 0): 1.0, (1, 1): 1.0})
        assert pce_variance(exp)[0] == pytest.approx(4 / 9, abs=1e-14)
        rng = np.random.default_rng(0)
        xi = rng.uniform(-1, 1, size=(1_000_000, 2))
        samples = xi[:, 0] + xi[:, 0] * xi[:, 1]
        mc_var = samples.var()
        se = math.sqrt(2.0 / samples.size) * mc_var  # rough SE of the variance
        assert abs(pce_variance(exp)[0] - mc_var) < 3 * max(se, 1e-3)

    def test_random_expansion_variance_vs_monte_carlo(self):
        rng = np.random.default_rng(7)
        basis = PCBasis(3, 3)
        coeffs = rng.normal(size=(len(basis), 1))
        exp = PCExpansion(basis, coeffs)
        n = 1_000_000
        xi = rng.uniform(-1, 1, size=(n, 3))
        vals = pce_eval_many(exp, xi)[:, 0]
        mc_var = vals.var()
        # SE of a sample variance ~ sqrt(2/n) * var for near-normal output
        se = math.sqrt(2.0 / n) * mc_var
        assert abs(pce_variance(exp)[0] - mc_var) < 3 * max(se, 3e-3)


class TestSobolIndices:
    def test_single_variable(self):
        exp = _expansion_from_terms(2, 2, {(1, 0): 1.0})
        main, total = sobol_indices(exp, 0)
        assert main[0] == pytest.approx(1.0)
        assert total[0] == pytest.approx(1.0)
        main2, total2 = sobol_indices(exp, 1)
        assert main2[0] == 0.0 and total2[0] == 0.0

    def test_interaction_split(self):
        # G = xi_1 + xi_1 xi_2: dim1 (3/4, 1), dim2 (0, 1/4)
        exp = _expansion_from_terms(2, 2, {(1, 0): 1.0, (1, 1): 1.0})
        main1, total1 = sobol_indices(exp, 0)
        main2, total2 = sobol_indices(exp, 1)
        assert main1[0] == pytest.approx(3 / 4)
        assert total1[0] == pytest.approx(1.0)
        assert main2[0] == pytest.approx(0.0)
        assert total2[0] == pytest.approx(1 / 4)

    def test_interaction_split_vs_monte_carlo_oracle(self):
        # pick-freeze Sobol estimator for the main effect of dim 1
        rng = np.random.default_rng(19)
        n = 400_000
        a = rng.uniform(-1, 1, size=(n, 2))
        b = rng.uniform(-1, 1, size=(n, 2))

        def g(x):
            return x[:, 0] + x[:, 0] * x[:, 1]

        mixed = np.column_stack([a[:, 0], b[:, 1]])
        ya, yab = g(a), g(mixed)
        var = ya.var()
        main_mc = np.mean(ya * yab - ya.mean() * yab.mean()) / var
        exp = _expansion_from_terms(2, 2, {(1, 0): 1.0, (1, 1): 1.0})
        main, _ = sobol_indices(exp, 0)
        assert abs(main[0] - main_mc) < 0.02

    def test_constant_expansion_flagged(self):
        exp = _expansion_from_terms(2, 2, {(0, 0): 3.0})
        with pytest.warns(RuntimeWarning):
            main, total = sobol_indices(exp, 0)
        assert main[0] == 0.0 and total[0] == 0.0

    def test_index_sum_properties(self):
        rng = np.random.default_rng(23)
        basis = PCBasis(4, 3)
        exp = PCExpansion(basis, rng.normal(size=(len(basis), 1)))
        mains, totals = zip(*(sobol_indices(exp, d) for d in range(4)))
        mains = np.array([m[0] for m in mains])
        totals = np.array([t[0] for t in totals])
        assert np.all(totals - mains >= -1e-12)
        assert mains.sum() <= 1.0 + 1e-12
        assert totals.sum() >= 1.0 - 1e-12  # interactions present


class TestExpansionValidation:
    def test_row_count_checked(self):
        with pytest.raises(ValueError):
            PCExpansion(PCBasis(2, 2), np.zeros((5, 1)))

    def test_nonfinite_rejected(self):
        coeffs = np.zeros((6, 1))
        coeffs[3] = np.nan
        with pytest.raises(ValueError):
            PCExpansion(PCBasis(2, 2), coeffs)
