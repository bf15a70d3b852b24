"""
Tests Unitaires pour le solveur propre
Couple propre principal, quotient de Rayleigh, flux sur Γ_D et problème à deux phases
"""

import pytest
import numpy as np
import scipy.sparse as sp

import sys
import os
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from core.assembly import lp_integral
from core.domain import BoundaryLabel, ThicknessProfile, attach_coating, build_interval_domain, build_radial_domain
from core.eigensolver import (
    EigenSolveSettings, PLaplaceEigenSolver, RobinField, boundary_flux, energy, principal_eigenpair,
    rayleigh_quotient, two_phase_eigenpair,
)
from core.errors import ConstraintViolation, DegenerateInput, InvalidParameter, NoConvergence, UnsupportedProblem
from core.meshes import unit_square_mesh
from core.newton import damped_newton
from studies.oracles import (
    dirichlet_plaplace_eigenvalue, robin_eigenvalue, robin_sine_flux, shoot_plaplace_eigenvalue,
    two_phase_interval_eigenvalue,
)


class TestPrincipalEigenpair:
    """Tests pour principal_eigenpair en 1D."""

    @pytest.fixture
    def domain(self):
        return build_interval_domain(256, "right")

    def test_robin_oracle(self, domain):
        """p = 2, h = 1: k cos k + sin k = 0, λ ≈ 4.11586."""
        pair = principal_eigenpair(domain, 2.0, RobinField.constant(domain, 1.0))
        assert pair.converged
        assert pair.eigenvalue == pytest.approx(robin_eigenvalue(1.0), abs=1e-3)
        assert pair.eigenvalue == pytest.approx(4.11586, abs=1e-3)

    def test_dirichlet_limit(self):
        """γ vide: λ₁ = π²."""
        domain = build_interval_domain(256, "none")
        pair = principal_eigenpair(domain, 2.0, RobinField.constant(domain, 0.0))
        assert pair.eigenvalue == pytest.approx(np.pi ** 2, abs=1e-3)

    def test_dirichlet_p3(self):
        """p = 3: formule fermée (p-1)(π_p)^p et tir."""
        domain = build_interval_domain(256, "none")
        pair = principal_eigenpair(domain, 3.0, RobinField.constant(domain, 0.0))
        exact = dirichlet_plaplace_eigenvalue(3.0)
        assert pair.eigenvalue == pytest.approx(exact, rel=1e-3)
        assert shoot_plaplace_eigenvalue(3.0) == pytest.approx(exact, rel=1e-5)

    def test_robin_p3_against_shooting(self, domain):
        pair = principal_eigenpair(domain, 3.0, RobinField.constant(domain, 1.0))
        assert pair.eigenvalue == pytest.approx(shoot_plaplace_eigenvalue(3.0, h=1.0), rel=1e-3)

    def test_normalization_and_positivity(self, domain):
        """∫|u|^p = 1, u > 0 sur les nœuds libres, quotient = λ."""
        h = RobinField.constant(domain, 1.0)
        pair = principal_eigenpair(domain, 2.0, h)
        assert lp_integral(domain, pair.u, 2.0) == pytest.approx(1.0, abs=1e-12)
        assert pair.positive
        assert np.all(pair.u[domain.free_nodes] > 0)
        assert pair.u[0] == 0.0
        assert rayleigh_quotient(domain, 2.0, h, pair.u) == pytest.approx(pair.eigenvalue, rel=1e-12)
        assert energy(domain, 2.0, h, pair.u) == pytest.approx(pair.eigenvalue, rel=1e-12)

    def test_monotone_in_h(self, domain):
        values = [principal_eigenpair(domain, 2.0, RobinField.constant(domain, h)).eigenvalue
                  for h in (0.0, 0.5, 1.0, 2.0, 10.0)]
        assert np.all(np.diff(values) > 0)
        assert values[-1] < np.pi ** 2

    def test_monotone_random_pairs(self):
        """h₁ ≤ h₂ ⇒ λ(h₁) ≤ λ(h₂) sur des couples tirés au hasard."""
        domain = build_interval_domain(32, "right")
        rng = np.random.default_rng(7)
        solver = PLaplaceEigenSolver(EigenSolveSettings(tol_lambda=1e-11))
        for _ in range(20):
            h1 = rng.uniform(0.0, 3.0, 1)
            h2 = h1 + rng.uniform(0.0, 1.0, 1)
            p = rng.uniform(2.0, 3.0)
            lam1 = solver.solve(domain, p, RobinField(h1)).eigenvalue
            lam2 = solver.solve(domain, p, RobinField(h2)).eigenvalue
            assert lam1 <= lam2 + 1e-9 * lam2

    def test_radial_two_dimensions(self):
        """Couronne de ℝ²: λ entre le cas Neumann et le cas Dirichlet sur γ."""
        domain = build_radial_domain(64, 0.5, 1.0, 2)
        values = [principal_eigenpair(domain, 2.0, RobinField.constant(domain, h)).eigenvalue
                  for h in (0.0, 1.0, 1e6)]
        assert values[0] < values[1] < values[2]

    def test_planar_square(self):
        """Carré avec γ = côté du haut, h = 0: λ = 5π²/4."""
        domain = unit_square_mesh(16, gamma_sides=("top",))
        pair = principal_eigenpair(domain, 2.0, RobinField.constant(domain, 0.0))
        assert pair.eigenvalue == pytest.approx(1.25 * np.pi ** 2, rel=5e-2)

    def test_seed_reproducibility(self, domain):
        h = RobinField.constant(domain, 1.0)
        first = principal_eigenpair(domain, 2.5, h, EigenSolveSettings(seed=3))
        second = principal_eigenpair(domain, 2.5, h, EigenSolveSettings(seed=3))
        assert first.eigenvalue == second.eigenvalue
        assert np.array_equal(first.u, second.u)


class TestSolverErrors:
    """Tests pour les erreurs du solveur."""

    def test_no_dirichlet_part(self):
        domain = build_interval_domain(16, "both")
        with pytest.raises(UnsupportedProblem):
            principal_eigenpair(domain, 2.0, RobinField.constant(domain, 1.0))

    def test_negative_h(self):
        with pytest.raises(InvalidParameter):
            RobinField(np.array([-1.0]))

    def test_bad_exponent(self):
        domain = build_interval_domain(16)
        with pytest.raises(InvalidParameter, match="p must lie"):
            principal_eigenpair(domain, 0.5, RobinField.constant(domain, 1.0))

    def test_wrong_field_size(self):
        domain = build_interval_domain(16)
        with pytest.raises(InvalidParameter):
            principal_eigenpair(domain, 2.0, RobinField(np.ones(3)))

    def test_max_outer_reached(self):
        """max_outer = 1: NoConvergence avec le meilleur itéré."""
        domain = build_interval_domain(64)
        settings = EigenSolveSettings(max_outer=1)
        with pytest.raises(NoConvergence) as info:
            principal_eigenpair(domain, 2.0, RobinField.constant(domain, 1.0), settings)
        assert info.value.best is not None
        assert not info.value.best.converged

    def test_rayleigh_constraint(self):
        domain = build_interval_domain(8)
        h = RobinField.constant(domain, 1.0)
        with pytest.raises(ConstraintViolation):
            rayleigh_quotient(domain, 2.0, h, np.ones(domain.n_nodes))
        with pytest.raises(DegenerateInput):
            rayleigh_quotient(domain, 2.0, h, np.zeros(domain.n_nodes))

    def test_invalid_settings(self):
        with pytest.raises(InvalidParameter):
            EigenSolveSettings(tol_lambda=0.0)

    def test_settings_from_config(self):
        settings = EigenSolveSettings.from_config({'solver': {'tol_lambda': '1e-9', 'max_outer': 12}}, seed=4)
        assert settings.tol_lambda == 1e-9
        assert settings.max_outer == 12
        assert settings.seed == 4


class TestBoundaryFlux:
    """Tests pour boundary_flux."""

    def test_flux_oracle(self):
        """Flux sur Γ_D = {0}: -k/‖sin(k·)‖₂ ≈ -2.624."""
        domain = build_interval_domain(256, "right")
        pair = principal_eigenpair(domain, 2.0, RobinField.constant(domain, 1.0))
        trace = boundary_flux(domain, 2.0, pair)
        assert trace.label == BoundaryLabel.DIRICHLET
        assert trace.hopf_ok
        assert trace.face_values[0] == pytest.approx(robin_sine_flux(1.0), abs=1e-2)
        assert trace.face_values[0] == pytest.approx(-2.624, abs=1e-2)

    def test_flux_negative_on_square(self):
        """Flux < 0 sur chaque face de Γ_D, nœuds de ζ exclus."""
        domain = unit_square_mesh(8, gamma_sides=("top",))
        pair = principal_eigenpair(domain, 2.0, RobinField.constant(domain, 1.0))
        trace = boundary_flux(domain, 2.0, pair)
        assert not np.isin(domain.partition.interface_nodes, trace.node_ids).any()
        assert np.all(trace.face_values[trace.valid_faces] < 0)
        frame = trace.to_frame()
        assert list(frame.columns) == ['face_id', 'measure', 'flux']

    def test_flux_other_domain(self):
        domain = build_interval_domain(16)
        other = build_interval_domain(32)
        pair = principal_eigenpair(domain, 2.0, RobinField.constant(domain, 1.0))
        with pytest.raises(InvalidParameter):
            boundary_flux(other, 2.0, pair)


class TestTwoPhase:
    """Tests pour two_phase_eigenpair."""

    def test_interval_against_determinant(self):
        base = build_interval_domain(256, "right")
        coated = attach_coating(base, ThicknessProfile.constant(base, 1.0), 0.1, 8)
        result = two_phase_eigenpair(coated, 2.0)
        assert result.eigenvalue == pytest.approx(two_phase_interval_eigenvalue(0.1, 1.0), rel=1e-3)
        assert result.substrate_restriction.size == base.n_nodes
        assert 0 < result.coating_mass < 1

    def test_thick_coating_against_determinant(self):
        base = build_interval_domain(64, "right")
        coated = attach_coating(base, ThicknessProfile.constant(base, 2.0), 0.05, 4)
        result = two_phase_eigenpair(coated, 2.0)
        assert result.eigenvalue == pytest.approx(two_phase_interval_eigenvalue(0.05, 2.0), rel=1e-3)
        assert result.eigenvalue < np.pi ** 2
        assert result.to_dict()['epsilon'] == 0.05


class TestDampedNewton:
    """Tests pour damped_newton."""

    def test_quadratic_one_step(self):
        matrix = sp.diags([2.0, 3.0, 4.0]).tocsc()
        rhs = np.array([1.0, 1.0, 1.0])
        result = damped_newton(lambda x: 0.5 * x @ (matrix @ x) - rhs @ x,
                               lambda x: matrix @ x - rhs, lambda x: matrix, np.zeros(3))
        assert result.converged
        np.testing.assert_allclose(result.x, [0.5, 1 / 3, 0.25], rtol=1e-12)
        assert result.iterations <= 2

    def test_quartic_energy(self):
        """J(x) = Σ x⁴/4 + x²/2 - x, minimum en x³ + x = 1."""
        result = damped_newton(lambda x: np.sum(x ** 4 / 4 + x ** 2 / 2 - x),
                               lambda x: x ** 3 + x - 1,
                               lambda x: sp.diags(3 * x ** 2 + 1),
                               np.full(2, 10.0))
        assert result.converged
        np.testing.assert_allclose(result.x ** 3 + result.x, 1.0, atol=1e-10)
