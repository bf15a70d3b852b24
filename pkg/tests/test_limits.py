"""
Tests Unitaires pour les études de limites
Revêtement mince, limites en p, quotients L^∞ et BV
"""

import pytest
import numpy as np

import sys
import os
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from core.domain import ThicknessProfile, build_interval_domain
from core.eigensolver import EigenSolveSettings, RobinField
from core.errors import DegenerateInput, InsufficientData, InvalidParameter
from studies.limits import (
    BVProfile, InfinityLimit, LimitScanResult, bv_quotient_eval, bv_step_minimum, bv_trend, coating_sweep,
    effective_h, linf_knee_search, linf_rayleigh_eval, p_continuity_scan, p_limit_classify_inf, p_limit_scan_one,
)
from studies.oracles import robin_eigenvalue


class TestEffectiveCoefficient:
    """Tests pour h = ρ^{-(p-1)}."""

    def test_values(self):
        assert effective_h(ThicknessProfile(np.array([2.0])), 3.0).values.tolist() == [0.25]
        assert effective_h(ThicknessProfile(np.array([1.0])), 5.0).values.tolist() == [1.0]
        assert effective_h(ThicknessProfile(np.array([2.0])), 2.0).values.tolist() == [0.5]


class TestCoatingSweep:
    """Tests pour coating_sweep."""

    @pytest.mark.parametrize("p, rho", [(2.0, 1.0), (2.0, 2.0), (3.0, 2.0), (1.5, 1.0)])
    def test_first_order_convergence(self, p, rho):
        """|Λ₁(ε) - μ₁| décroît avec ε, ordre fitté ≥ 0.8."""
        base = build_interval_domain(64)
        epsilons = [0.1, 0.05, 0.025, 0.0125]
        result = coating_sweep(base, ThicknessProfile.constant(base, rho), p, epsilons)
        assert result.rate >= 0.8
        assert result.extras['gap_monotone']
        assert result.extras['limit_validated']
        masses = result.observables['coating_mass']
        assert np.all(masses / np.asarray(epsilons) < 10.0)
        assert list(result.to_frame().columns) == ['epsilon', 'Lambda1', 'coating_mass', 'mu1', 'abs_gap']

    def test_limit_matches_oracle(self):
        base = build_interval_domain(64)
        result = coating_sweep(base, ThicknessProfile.constant(base, 1.0), 2.0, [0.1, 0.05])
        assert result.extras['mu1'] == pytest.approx(robin_eigenvalue(1.0), rel=1e-3)

    def test_epsilons_must_decrease(self):
        base = build_interval_domain(16)
        with pytest.raises(InvalidParameter):
            coating_sweep(base, ThicknessProfile.constant(base, 1.0), 2.0, [0.05, 0.1])


class TestPLimits:
    """Tests pour les limites p → 1 et p → ∞ du coefficient effectif."""

    def test_p_to_one(self):
        result = p_limit_scan_one([0.5, 2.0], [2.0, 1.5, 1.25, 1.1, 1.05])
        frame = result.to_frame()
        last = frame.iloc[-1]
        assert last['deviation_rho=0.5'] == pytest.approx(2.0 ** 0.05 - 1, rel=1e-12)
        assert last['deviation_rho=2'] == pytest.approx(1 - 2.0 ** -0.05, rel=1e-12)
        assert last['sup_deviation'] <= 0.05
        assert np.all(np.diff(result.observables['sup_deviation']) < 0)
        assert 0.9 < result.rate < 1.3

    def test_p_grid_out_of_range(self):
        with pytest.raises(InvalidParameter):
            p_limit_scan_one([2.0], [2.5, 1.5])
        with pytest.raises(InvalidParameter):
            p_limit_scan_one([2.0], [1.1, 1.5])

    @pytest.mark.parametrize("rho, expected", [
        (2.0, InfinityLimit.NEUMANN_LIMIT),
        (1.0, InfinityLimit.UNIT_LIMIT),
        (0.5, InfinityLimit.DIRICHLET_LIMIT),
    ])
    def test_classification(self, rho, expected):
        assert p_limit_classify_inf(rho) == expected

    def test_classification_bad_rho(self):
        with pytest.raises(InvalidParameter):
            p_limit_classify_inf(0.0)


class TestContinuityScan:
    """Tests pour p_continuity_scan."""

    @pytest.fixture
    def domain(self):
        return build_interval_domain(128)

    def test_smooth_in_p(self, domain):
        grid = [1.8, 1.85, 1.9, 1.95, 2.0, 2.05, 2.1, 2.15, 2.2]
        result = p_continuity_scan(domain, RobinField.constant(domain, 1.0), 2.0, grid)
        assert result.extras['continuity_ok']
        assert result.max_jump > 0
        assert result.observables['lambda1'][4] == pytest.approx(robin_eigenvalue(1.0), rel=1e-3)

    def test_single_point(self, domain):
        result = p_continuity_scan(domain, RobinField.constant(domain, 1.0), 2.0, [2.0])
        assert result.max_jump is None
        assert 'continuity_ok' not in result.extras

    def test_grid_must_increase(self, domain):
        with pytest.raises(InvalidParameter):
            p_continuity_scan(domain, RobinField.constant(domain, 1.0), 2.0, [2.0, 1.9])

    def test_parallel_matches_serial(self, domain):
        h = RobinField.constant(domain, 1.0)
        serial = p_continuity_scan(domain, h, 2.0, [1.9, 2.0, 2.1])
        threaded = p_continuity_scan(domain, h, 2.0, [1.9, 2.0, 2.1], max_workers=3)
        np.testing.assert_array_equal(serial.observables['lambda1'], threaded.observables['lambda1'])


class TestLinfQuotient:
    """Tests pour le quotient L^∞."""

    @pytest.fixture
    def domain(self):
        return build_interval_domain(64)

    def test_profiles(self, domain):
        x = domain.nodes[:, 0]
        assert linf_rayleigh_eval(x, domain) == pytest.approx(1.0, rel=1e-12)
        assert linf_rayleigh_eval(np.minimum(2 * x, 1.0), domain) == pytest.approx(2.0, rel=1e-12)

    def test_scale_invariance(self, domain):
        u = np.sin(0.5 * np.pi * domain.nodes[:, 0])
        assert linf_rayleigh_eval(3.0 * u, domain) == pytest.approx(linf_rayleigh_eval(u, domain), rel=1e-12)

    def test_zero_function(self, domain):
        with pytest.raises(DegenerateInput):
            linf_rayleigh_eval(np.zeros(domain.n_nodes), domain)

    def test_knee_search(self, domain):
        grid = np.linspace(0.1, 0.9, 9)
        value, (a, b) = linf_knee_search(domain, grid, grid)
        assert value == pytest.approx(1.0, rel=1e-9)
        assert a == pytest.approx(b)


class TestBVQuotient:
    """Tests pour le quotient BV."""

    @pytest.fixture
    def domain(self):
        return build_interval_domain(64)

    def test_step_minimum(self, domain):
        value, position = bv_step_minimum(domain, np.linspace(0.0, 0.9, 10))
        assert value == pytest.approx(2.0)
        assert position == 0.0

    def test_linear_profile(self, domain):
        profile = BVProfile.from_nodal(domain, domain.nodes[:, 0])
        assert bv_quotient_eval(profile, domain) == pytest.approx(4.0, rel=1e-12)

    def test_scale_invariance(self, domain):
        step = BVProfile.step(0.3)
        tall = BVProfile.step(0.3, height=5.0)
        assert bv_quotient_eval(tall, domain) == pytest.approx(bv_quotient_eval(step, domain))

    def test_sign_change_integral(self):
        profile = BVProfile([0.0, 1.0], [-1.0], [1.0])
        assert profile.absolute_integral() == pytest.approx(0.5)
        assert profile.total_variation() == pytest.approx(2.0)

    def test_invalid_profile(self, domain):
        with pytest.raises(InvalidParameter):
            BVProfile([0.0, 0.0, 1.0], [0.0, 1.0], [0.0, 1.0])
        with pytest.raises(DegenerateInput):
            bv_quotient_eval(BVProfile([0.0, 1.0], [0.0], [0.0]), domain)

    def test_trend_towards_bv_level(self, domain):
        settings = EigenSolveSettings(tol_lambda=1e-9, tol_u=1e-7)
        result = bv_trend(domain, [1.6, 1.4, 1.2], settings=settings)
        assert result.extras['bv_level'] == pytest.approx(2.0)
        assert result.extras['gap_monotone']
        assert np.all(result.observables['lambda1'] > 0)

    def test_trend_needs_two_points(self, domain):
        with pytest.raises(InsufficientData):
            bv_trend(domain, [1.2])


class TestScanResult:
    """Tests pour LimitScanResult."""

    def test_rejects_non_monotone_grid(self):
        with pytest.raises(InvalidParameter):
            LimitScanResult('p', [1.0, 2.0, 1.5], {'x': [0.0, 0.0, 0.0]})

    def test_rejects_mismatched_observable(self):
        with pytest.raises(InvalidParameter):
            LimitScanResult('p', [1.0, 2.0], {'x': [0.0]})

    def test_to_dict_keeps_scalars(self):
        result = LimitScanResult('p', [1.0, 2.0], {'x': [0.0, 1.0]}, rate=1.0, extras={'ok': True, 'arr': [1, 2]})
        summary = result.to_dict()
        assert summary['ok'] is True
        assert 'arr' not in summary
