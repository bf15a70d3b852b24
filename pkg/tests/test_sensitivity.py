"""
Tests Unitaires pour la sensibilité en h
Matrices de linéarisation, dérivée de λ₁, système linéarisé et reste de Taylor
"""

import pytest
import numpy as np

import sys
import os
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from core.assembly import element_gradients, gradient_norms, quadrature_values, weighted_load
from core.domain import build_interval_domain, build_radial_domain
from core.eigensolver import EigenSolveSettings, PLaplaceEigenSolver, RobinField, boundary_flux
from core.errors import InvalidParameter, UnsupportedExponent
from core.sensitivity import (
    CoefficientKind, coefficient_field, derivative_remainder_probe, ellipticity_window, lambda_derivative,
    linearized_matrix, monotonicity_lower_bound, path_matrix_report, regularized_matrix, smooth_cutoff,
    solve_linearized, vector_p_map,
)
from studies.oracles import robin_sine_trace_power

TIGHT = EigenSolveSettings(tol_lambda=1e-12, tol_u=1e-12)


class TestPointwiseFormulas:
    """Tests pour les formules ponctuelles F, A et A_δ."""

    @pytest.mark.parametrize("p", [1.5, 2.0, 3.0, 4.5])
    def test_monotonicity_inequality(self, p):
        """⟨F(b) - F(a), b - a⟩ ≥ minorant, 1000 couples aléatoires."""
        rng = np.random.default_rng(11)
        for _ in range(1000):
            a, b = rng.normal(size=2), rng.normal(size=2)
            inner = float(np.dot(vector_p_map(b, p) - vector_p_map(a, p), b - a))
            assert inner >= monotonicity_lower_bound(a, b, p) - 1e-12

    def test_vector_map_at_zero(self):
        assert np.array_equal(vector_p_map(np.zeros(2), 3.0), np.zeros(2))

    def test_linearized_matrix_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        step = 1e-6
        for _ in range(20):
            grad = rng.normal(size=2)
            matrix = linearized_matrix(grad, 3.0)
            for j in range(2):
                e = np.zeros(2)
                e[j] = step
                column = (vector_p_map(grad + e, 3.0) - vector_p_map(grad - e, 3.0)) / (2 * step)
                np.testing.assert_allclose(matrix[:, j], column, rtol=1e-6, atol=1e-8)

    def test_regularized_equals_raw_away_from_zero(self):
        rng = np.random.default_rng(5)
        delta = 0.1
        grads = rng.normal(size=(500, 2))
        far = gradient_norms(grads) >= 2.5 * delta
        raw = linearized_matrix(grads[far], 3.0)
        regularized = regularized_matrix(grads[far], 3.0, delta)
        np.testing.assert_array_equal(raw, regularized)

    def test_regularized_ellipticity_window(self):
        """Valeurs propres de A_δ dans [θ_δ, Θ_δ], gradient nul compris."""
        rng = np.random.default_rng(9)
        delta, grad_max, p = 0.1, 2.0, 3.0
        grads = rng.normal(size=(400, 2))
        grads *= (grad_max * rng.uniform(0, 1, 400) / gradient_norms(grads))[:, None]
        grads[0] = 0.0
        eigenvalues = np.linalg.eigvalsh(regularized_matrix(grads, p, delta))
        lo, hi = ellipticity_window(p, delta, grad_max)
        assert eigenvalues.min() >= lo * (1 - 1e-12)
        assert eigenvalues.max() <= hi * (1 + 1e-12)

    def test_smooth_cutoff(self):
        delta = 0.2
        values = smooth_cutoff(np.array([0.0, 0.1, 0.2, 0.3, 0.4, 1.0]), delta)
        assert values[0] == 1.0 and values[2] == 1.0
        assert 0.0 < values[3] < 1.0
        assert values[4] == 0.0 and values[5] == 0.0

    def test_below_two_rejected(self):
        with pytest.raises(UnsupportedExponent):
            linearized_matrix(np.ones(2), 1.5)
        with pytest.raises(InvalidParameter):
            regularized_matrix(np.ones(2), 3.0, 0.0)


class TestPathMatrix:
    """Tests pour path_matrix_report."""

    def test_one_dimension_scalar_identity(self):
        """En 1D, Ā = (p-1)∫|t∇u₁ + (1-t)∇u₂|^{p-2}dt."""
        domain = build_interval_domain(64)
        solver = PLaplaceEigenSolver()
        u1 = solver.solve(domain, 3.0, RobinField.constant(domain, 1.0))
        u2 = solver.solve(domain, 3.0, RobinField.constant(domain, 2.0))
        report = path_matrix_report(u1, u2, 3.0)
        assert report.theta_min == pytest.approx(2.0 * report.lower_bound_integral, rel=1e-12)
        assert report.theta_min > 0
        assert report.theta_max >= report.theta_min
        assert report.coefficients.is_symmetric()

    def test_coefficient_field_kinds(self):
        domain = build_interval_domain(32)
        pair = PLaplaceEigenSolver().solve(domain, 2.0, RobinField.constant(domain, 1.0))
        raw = coefficient_field(domain, pair.u, 2.0, CoefficientKind.RAW_A)
        np.testing.assert_allclose(raw.matrices[:, 0, 0], 1.0)
        with pytest.raises(InvalidParameter):
            coefficient_field(domain, pair.u, 2.0, CoefficientKind.PATH_ABAR)


class TestLambdaDerivative:
    """Tests pour λ' = ∫_γ ξ|u|^p."""

    @pytest.fixture
    def domain(self):
        return build_interval_domain(256, "right")

    def test_trace_power_oracle(self, domain):
        """ξ = 1, h = 1: λ' = |u(1)|² ≈ 1.345."""
        pair = PLaplaceEigenSolver().solve(domain, 2.0, RobinField.constant(domain, 1.0))
        value = lambda_derivative(pair, RobinField.direction([1.0]), domain)
        assert value == pytest.approx(robin_sine_trace_power(1.0), rel=1e-3)
        assert value == pytest.approx(1.345, abs=1e-3)

    def test_formula_matches_linearized_p2(self, domain):
        h = RobinField.constant(domain, 1.0)
        xi = RobinField.direction([1.0])
        pair = PLaplaceEigenSolver(TIGHT).solve(domain, 2.0, h)
        linearized = solve_linearized(domain, 2.0, h, pair, xi)
        assert linearized.lambda_prime == pytest.approx(lambda_derivative(pair, xi, domain), abs=1e-9)
        assert linearized.constraint_residual < 1e-10

    def test_formula_matches_linearized_p3(self, domain):
        h = RobinField.constant(domain, 1.0)
        xi = RobinField.direction([1.0])
        pair = PLaplaceEigenSolver(TIGHT).solve(domain, 3.0, h)
        linearized = solve_linearized(domain, 3.0, h, pair, xi)
        assert linearized.lambda_prime == pytest.approx(lambda_derivative(pair, xi, domain), abs=1e-10)
        assert linearized.constraint_residual < 1e-10

    @pytest.mark.parametrize("radial", [False, True])
    def test_formula_matches_central_difference(self, radial):
        domain = build_radial_domain(64, 0.5, 1.0, 2) if radial else build_interval_domain(128)
        h = RobinField.constant(domain, 1.0)
        xi = RobinField.direction([1.0])
        solver = PLaplaceEigenSolver(TIGHT)
        pair = solver.solve(domain, 2.0, h)
        t = 1e-4
        plus = solver.solve(domain, 2.0, h.perturbed(xi, t), initial=pair.u).eigenvalue
        minus = solver.solve(domain, 2.0, h.perturbed(xi, -t), initial=pair.u).eigenvalue
        central = (plus - minus) / (2 * t)
        assert lambda_derivative(pair, xi, domain) == pytest.approx(central, rel=1e-4)

    def test_other_domain_rejected(self, domain):
        pair = PLaplaceEigenSolver().solve(domain, 2.0, RobinField.constant(domain, 1.0))
        with pytest.raises(InvalidParameter):
            lambda_derivative(pair, RobinField.direction([1.0]), build_interval_domain(16))


class TestLinearizedSystem:
    """Tests pour solve_linearized."""

    @pytest.fixture
    def setup(self):
        domain = build_interval_domain(128, "right")
        h = RobinField.constant(domain, 1.0)
        pair = PLaplaceEigenSolver(TIGHT).solve(domain, 2.0, h)
        return domain, h, pair

    def test_delta_independent_at_p2(self, setup):
        domain, h, pair = setup
        xi = RobinField.direction([1.0])
        first = solve_linearized(domain, 2.0, h, pair, xi, delta_reg=1e-3)
        second = solve_linearized(domain, 2.0, h, pair, xi, delta_reg=1e-1)
        np.testing.assert_allclose(first.u_prime, second.u_prime, atol=1e-12)
        assert first.lambda_prime == pytest.approx(second.lambda_prime, abs=1e-12)

    def test_orthogonality_constraint(self, setup):
        domain, h, pair = setup
        linearized = solve_linearized(domain, 2.0, h, pair, RobinField.direction([1.0]))
        load = weighted_load(domain, quadrature_values(domain, pair.u))
        assert abs(load @ linearized.u_prime) < 1e-10
        assert linearized.condition_estimate > 1
        assert np.all(linearized.u_prime[domain.constrained_nodes] == 0)

    def test_flux_derivative_matches_finite_difference(self, setup):
        """Flux de u' sur Γ_D = dérivée centrale du flux de u."""
        domain, h, pair = setup
        xi = RobinField.direction([1.0])
        linearized = solve_linearized(domain, 2.0, h, pair, xi)
        solver = PLaplaceEigenSolver(TIGHT)
        t = 1e-3
        plus = solver.solve(domain, 2.0, h.perturbed(xi, t), initial=pair.u)
        minus = solver.solve(domain, 2.0, h.perturbed(xi, -t), initial=pair.u)
        central = (boundary_flux(domain, 2.0, plus).face_values
                   - boundary_flux(domain, 2.0, minus).face_values) / (2 * t)
        np.testing.assert_allclose(linearized.dirichlet_flux.face_values, central, rtol=1e-4)

    def test_rejects_p_below_two(self, setup):
        domain, h, pair = setup
        with pytest.raises(UnsupportedExponent):
            solve_linearized(domain, 1.5, h, pair, RobinField.direction([1.0]))

    def test_rejects_mismatched_exponent(self, setup):
        domain, h, pair = setup
        with pytest.raises(InvalidParameter):
            solve_linearized(domain, 3.0, h, pair, RobinField.direction([1.0]))


class TestRemainderOrder:
    """Tests pour derivative_remainder_probe."""

    def test_second_order_remainder(self):
        domain = build_interval_domain(128)
        h = RobinField.constant(domain, 1.0)
        check = derivative_remainder_probe(domain, 2.0, h, RobinField.direction([1.0]),
                                           [0.1, 0.05, 0.025, 0.0125], TIGHT)
        assert check.remainder_order >= 1.9
        assert np.all(np.diff(check.remainders) < 0)
        assert set(check.rows[0]) == {'t', 'lambda_t', 'finite_difference', 'lambda_prime', 'remainder'}

    def test_nonpositive_step(self):
        domain = build_interval_domain(16)
        with pytest.raises(InvalidParameter):
            derivative_remainder_probe(domain, 2.0, RobinField.constant(domain, 1.0),
                                       RobinField.direction([1.0]), [0.1, 0.0])


class TestCubicExponent:
    """Tests de la sensibilité à p = 3 (A_δ non triviale)."""

    @pytest.fixture
    def setup(self):
        domain = build_interval_domain(128, "right")
        h = RobinField.constant(domain, 1.0)
        solver = PLaplaceEigenSolver(TIGHT)
        pair = solver.solve(domain, 3.0, h)
        return domain, h, solver, pair

    def test_delta_reduction_invisible(self, setup):
        """λ' et flux sur Γ_D inchangés quand δ passe à δ/10."""
        domain, h, _, pair = setup
        xi = RobinField.direction([1.0])
        reference = solve_linearized(domain, 3.0, h, pair, xi)
        # δ reste sous min|∇u|/2 pour que A_δ = A sur chaque élément
        smallest = gradient_norms(element_gradients(domain, pair.u)).min()
        delta = min(reference.delta, 0.25 * smallest)
        coarse = solve_linearized(domain, 3.0, h, pair, xi, delta_reg=delta)
        fine = solve_linearized(domain, 3.0, h, pair, xi, delta_reg=delta / 10)
        assert fine.lambda_prime == pytest.approx(coarse.lambda_prime, abs=1e-12)
        np.testing.assert_allclose(fine.dirichlet_flux.face_values, coarse.dirichlet_flux.face_values,
                                   rtol=0, atol=1e-12)

    def test_formula_matches_central_difference(self, setup):
        domain, h, solver, pair = setup
        xi = RobinField.direction([1.0])
        t = 1e-4
        plus = solver.solve(domain, 3.0, h.perturbed(xi, t), initial=pair.u).eigenvalue
        minus = solver.solve(domain, 3.0, h.perturbed(xi, -t), initial=pair.u).eigenvalue
        assert lambda_derivative(pair, xi, domain) == pytest.approx((plus - minus) / (2 * t), rel=1e-4)

    def test_u_prime_matches_nodal_difference(self, setup):
        domain, h, solver, pair = setup
        xi = RobinField.direction([1.0])
        linearized = solve_linearized(domain, 3.0, h, pair, xi)
        t = 1e-4
        plus = solver.solve(domain, 3.0, h.perturbed(xi, t), initial=pair.u).u
        minus = solver.solve(domain, 3.0, h.perturbed(xi, -t), initial=pair.u).u
        central = (plus - minus) / (2 * t)
        np.testing.assert_allclose(linearized.u_prime, central, rtol=0, atol=1e-5 * np.abs(central).max())

    def test_remainder_order(self, setup):
        domain, h, _, _ = setup
        check = derivative_remainder_probe(domain, 3.0, h, RobinField.direction([1.0]),
                                           [0.1, 0.05, 0.025, 0.0125], TIGHT)
        assert check.remainder_order >= 1.5
