import math

import numpy as np
import pytest

from fracsolve.errors import ConstraintViolation, DomainError, IterationFailure
from fracsolve.fivp import (
    PicardPolicy,
    SourceSpec,
    continue_maximal,
    data_continuity_constant,
    existence_feasibility,
    fixed_point_residual,
    global_bound,
    gronwall_bound,
    gronwall_majorant,
    smallest_feasible_radius,
    solve_fivp,
    solve_power_volterra,
)
from fracsolve.kernels import Orders, TimeGrid
from fracsolve.mlf import beta_fn, gamma_fn, ml
from fracsolve.spectrum import SpectralOperator

LAP8 = SpectralOperator.dirichlet_laplacian(8)
ZETA8 = 1.0 / np.arange(1, 9) ** 2


class TestLinearSolves:
    def test_heat_mode_is_exact(self):
        o = Orders(1.0, 1.0)
        g = TimeGrid.graded(1.0, 32, 1.0)
        traj = solve_fivp(o, LAP8, np.eye(8)[0], SourceSpec.zero(), g)
        assert np.allclose(traj.coeffs[:, 0], np.exp(-math.pi**2 * g.nodes), rtol=1e-13, atol=0)
        assert np.all(traj.coeffs[:, 1:] == 0)

    def test_fractional_mode_is_exact(self):
        o = Orders(0.5, 1.0)
        g = TimeGrid.graded(1.0, 32, 0.5)
        traj = solve_fivp(o, LAP8, np.eye(8)[0], SourceSpec.zero(), g)
        ref = [ml(0.5, 1, -math.pi**2 * math.sqrt(t)) for t in g.nodes]
        assert np.allclose(traj.coeffs[:, 0], ref, rtol=1e-12, atol=0)

    def test_linear_reaction_closed_form(self):
        op = SpectralOperator.explicit([math.pi**2])
        g = TimeGrid.graded(1.0, 256, 1.0)
        traj = solve_fivp(Orders(1.0, 1.0), op, [1.0], SourceSpec.linear(1.0), g)
        exact = np.exp((1 - math.pi**2) * g.nodes)
        assert np.max(np.abs(traj.coeffs[:, 0] - exact)) < 1e-4

    def test_initial_condition_and_residual(self):
        o = Orders(0.4, 1.0)
        g = TimeGrid.graded(1.0, 64, o.alpha)
        src = SourceSpec.pointwise(lambda u: 0.5 * np.sin(u), 0.5)
        pol = PicardPolicy(tol=1e-11)
        traj = solve_fivp(o, LAP8, ZETA8, src, g, pol)
        assert np.array_equal(traj.coeffs[0], ZETA8)
        assert fixed_point_residual(traj, ZETA8, g) <= pol.tol * (1 + LAP8.sobolev_norm(ZETA8))

    def test_singular_source_residual(self):
        o = Orders(0.6, 1.0)
        g = TimeGrid.graded(1.0, 64, o.alpha)
        src = SourceSpec.linear(2.0, nu=0.25)
        traj = solve_fivp(o, LAP8, ZETA8, src, g)
        assert fixed_point_residual(traj, ZETA8, g) <= 1e-10 * (1 + LAP8.sobolev_norm(ZETA8))

    def test_iteration_budget(self):
        o = Orders(0.5, 1.0)
        g = TimeGrid.graded(1.0, 32, o.alpha)
        with pytest.raises(IterationFailure) as exc:
            solve_fivp(o, LAP8, ZETA8, SourceSpec.linear(5.0), g, PicardPolicy(max_iters=2))
        assert len(exc.value.residuals) == 2


class TestSourceConstraints:
    def test_nu_above_half_alpha(self):
        with pytest.raises(ConstraintViolation) as exc:
            solve_fivp(Orders(0.5, 1.0), LAP8, ZETA8, SourceSpec.linear(1.0, nu=0.5), TimeGrid(1.0, 8))
        assert "nu_exceeds_alpha_half" in exc.value.names

    def test_critical_nu_needs_small_kappa(self):
        o = Orders(0.5, 1.0)
        critical = math.pi / math.sqrt(gamma_fn(0.5))
        ok = SourceSpec.linear(0.9 * critical, nu=0.25)
        assert ok.violations(o, LAP8) == []
        bad = SourceSpec.linear(1.1 * critical, nu=0.25)
        with pytest.raises(ConstraintViolation) as exc:
            solve_fivp(o, LAP8, ZETA8, bad, TimeGrid(1.0, 8))
        assert exc.value.names == ["kappa_exceeds_critical"]
        assert "critical kappa" in str(exc.value)

    def test_lipschitz_spot_check(self):
        src = SourceSpec.pointwise(np.sin, 0.5)
        assert "lipschitz_spot_check_failed" in src.violations(Orders(0.5, 1.0), LAP8)
        assert SourceSpec.pointwise(np.sin, 1.0).violations(Orders(0.5, 1.0), LAP8) == []

    def test_all_violations_reported(self):
        src = SourceSpec.pointwise(np.sin, 0.5, nu=0.4)
        names = src.violations(Orders(0.5, 1.0), LAP8, s=2.0)
        assert names == ["nu_exceeds_alpha_half", "s_out_of_range", "lipschitz_spot_check_failed"]


class TestGronwall:
    def test_classical_case(self):
        t = np.linspace(0, 2, 9)
        assert np.allclose(gronwall_bound(1.0, 0.0, 1.0, 1.0, t), np.exp(t), rtol=1e-13)

    def test_zero_growth(self):
        assert gronwall_bound(0.4, 0.2, 3.0, 0.0, 0.7) == pytest.approx(3.0, rel=1e-14)

    def test_frozen_value(self, oracles):
        ref = float(oracles["values"]["gronwall_0.5_0.25"])
        assert gronwall_bound(0.5, 0.25, 1.0, 1.0, 1.0) == pytest.approx(ref, rel=1e-10)

    def test_domain(self):
        with pytest.raises(DomainError):
            gronwall_bound(0.5, 0.5, 1.0, 1.0, 1.0)

    def test_majorant_matches_exact_series(self, oracles):
        for case in oracles["volterra"]:
            got = gronwall_majorant(case["alpha"], case["q"], 1.0, 1.0, case["t"])
            assert got == pytest.approx(float(case["exact"]), rel=1e-12)

    def test_bound_formula_falls_short_for_nonzero_q(self, oracles):
        """Frozen mpmath values: the exact solution exceeds the closed-form bound unless q = 0."""
        for case in oracles["volterra"]:
            exact, bound = float(case["exact"]), float(case["bound"])
            assert gronwall_bound(case["alpha"], case["q"], 1.0, 1.0, case["t"]) == pytest.approx(bound, rel=1e-10)
            if case["q"] == 0.0:
                assert exact == pytest.approx(bound, rel=1e-14)
            else:
                assert exact > 1.04 * bound

    @pytest.mark.parametrize("alpha,q", [(0.5, 0.0), (0.7, 0.3), (0.45, -0.119), (1.0, 0.5)])
    def test_discrete_solution_under_majorant(self, alpha, q):
        g = TimeGrid(1.0, 256, 2.0)
        u = solve_power_volterra(alpha, q, 1.0, 1.0, g)
        major = gronwall_majorant(alpha, q, 1.0, 1.0, g.nodes)
        assert np.all(u <= 1.001 * major)
        assert np.max(np.abs(u / major - 1)) < 1e-3


class TestGlobalBound:
    def test_no_growth(self):
        assert global_bound(Orders(0.6, 1.0), 0.0, 0.0, 0.1, 1.5, math.pi**2, 0.8) == pytest.approx(2 * 1.5**2, rel=1e-14)

    def test_exponential_case(self):
        val = global_bound(Orders(1.0, 1.0), 0.5, 0.7, 0.0, 2.0, 1.0, 0.6)
        assert val == pytest.approx(2 * 4.0 * math.exp(2 * 0.49 * 0.6), rel=1e-13)

    def test_rejects_critical_nu(self):
        with pytest.raises(DomainError):
            global_bound(Orders(0.6, 1.0), 0.0, 1.0, 0.3, 1.0, 1.0, 1.0)

    @pytest.mark.parametrize("alpha,c,nu,s", [(0.5, 3.0, 0.0, 0.0), (0.8, -2.0, 0.2, 0.25), (1.0, 10.0, 0.0, 0.5)])
    def test_solver_respects_bound(self, alpha, c, nu, s):
        o = Orders(alpha, 1.0)
        g = TimeGrid.graded(1.0, 128, alpha)
        traj = solve_fivp(o, LAP8, ZETA8, SourceSpec.linear(c, nu=nu), g, s=s)
        g_sup = LAP8.sobolev_norm(ZETA8, s)
        bound = global_bound(o, s, abs(c), nu, g_sup, LAP8.theta, g.nodes)
        assert np.all(traj.norms(s) ** 2 <= bound)

    def test_data_continuity(self):
        rng = np.random.default_rng(4)
        o = Orders(0.6, 1.0)
        g = TimeGrid.graded(1.0, 64, o.alpha)
        src = SourceSpec.linear(5.0, nu=0.1)
        const = data_continuity_constant(o, 0.0, 5.0, 0.1, LAP8.theta, 1.0)
        for _ in range(5):
            a, b = rng.standard_normal((2, 8))
            ua = solve_fivp(o, LAP8, a, src, g).coeffs
            ub = solve_fivp(o, LAP8, b, src, g).coeffs
            ratio = np.max(LAP8.sobolev_norm(ua - ub)) / LAP8.sobolev_norm(a - b)
            assert ratio <= 1.1 * const


class TestFeasibility:
    def test_square_root_growth(self):
        alpha, beta, nu, s, theta, T = 0.5, 1.0, 0.1, 0.0, math.pi**2, 1.0
        c = math.sqrt(2 / gamma_fn(alpha)) * theta ** (s - beta / 2) * math.sqrt(beta_fn(alpha, 1 - 2 * nu) * T ** (alpha - 2 * nu))
        args = (0.0, s, theta, beta, alpha, nu, [(1.0, 0.5)], 0.0, T)
        assert existence_feasibility(*args, m=1.01 * c * c)
        assert not existence_feasibility(*args, m=0.99 * c * c)

    def test_no_source(self):
        args = (2.0, 0.0, 1.0, 1.0, 0.5, 0.0, [(1.0, 0.5)], 0.0, 1.0)
        assert existence_feasibility(*args, m=2.0001, kappa=0.0)
        assert not existence_feasibility(*args, m=2.0, kappa=0.0)

    def test_sublinear_growth_always_feasible(self):
        psi = [(3.0, 0.9), (10.0, 0.5)]
        m = smallest_feasible_radius(1.0, 0.0, 1.0, 1.0, 0.5, 0.0, psi, 2.0, 1.0)
        assert m is not None
        assert existence_feasibility(1.0, 0.0, 1.0, 1.0, 0.5, 0.0, psi, 2.0, 1.0, m=m)


class TestContinuation:
    def test_zero_source(self):
        res = continue_maximal(Orders(0.5, 1.0), LAP8, ZETA8, SourceSpec.zero(), 0.25, 10.0, horizon=1.0)
        assert res.status == "ReachedHorizon"
        assert res.horizons == [0.25, 0.5, 0.75, 1.0]
        assert np.all(np.diff(res.trajectory.norms()) <= 1e-15)

    def test_damped_linear(self):
        res = continue_maximal(Orders(0.7, 1.0), LAP8, ZETA8, SourceSpec.linear(2.0), 0.5, 10.0, horizon=1.0)
        assert res.status == "ReachedHorizon"
        n = res.trajectory.norms()
        assert n[-1] < n[0]

    def test_quadratic_blow_up(self):
        # u' = -u + u**2, u(0) = 2 blows up at ln 2
        op = SpectralOperator.explicit([1.0])
        src = SourceSpec.pointwise(lambda u: np.asarray(u) ** 2, 20.0)
        res = continue_maximal(Orders(1.0, 1.0), op, [2.0], src, 0.1, 20.0, horizon=2.0, nodes_per_step=256)
        assert res.status == "BlowUpSuspected"
        assert abs(res.t_est - math.log(2)) / math.log(2) < 0.2
        # threshold crossing of the exact solution 1 / (1 - e**t / 2)
        assert res.t_est == pytest.approx(math.log(2 * (1 - 1 / 20)), rel=1e-3)

    def test_rejects_small_threshold(self):
        with pytest.raises(DomainError):
            continue_maximal(Orders(0.5, 1.0), LAP8, ZETA8, SourceSpec.zero(), 0.1, 0.1)
