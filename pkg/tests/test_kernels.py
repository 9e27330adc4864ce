import math

import numpy as np
import pytest
from scipy.integrate import quad

from fracsolve.errors import AmplificationOverflowError, ConstraintViolation, DomainError
from fracsolve.fivp import power_kernel_weights
from fracsolve.kernels import (
    Convolution,
    Orders,
    OrdersDomain,
    TimeGrid,
    backward_multiplier,
    backward_multipliers,
    convolve_Q,
    estimate_E_constant,
    kernel_E,
    kernel_integral_exact,
    propagate,
    propagator,
)
from fracsolve.mlf import gamma_fn, ml
from fracsolve.spectrum import SpectralOperator

LAP8 = SpectralOperator.dirichlet_laplacian(8)


def quad_kernel(orders, lam, t1, t2):
    """Adaptive quadrature of the kernel after the substitution u = (t2 - tau)**alpha.

    The substitution absorbs the (t2 - tau)**(alpha-1) singularity and leaves
    the smooth integrand E_{alpha,alpha}(-c u) / alpha.
    """
    a = orders.alpha
    c = lam**orders.beta
    val, _ = quad(lambda u: ml(a, a, -c * u) / a, 0.0, (t2 - t1) ** a, epsabs=1e-14, epsrel=1e-13, limit=200)
    return val


class TestTypes:
    def test_orders_constraints(self):
        with pytest.raises(ConstraintViolation) as exc:
            Orders(1.2, -1.0)
        assert exc.value.names == ["alpha_out_of_range", "beta_nonpositive"]

    def test_domain_constraints(self):
        with pytest.raises(ConstraintViolation) as exc:
            OrdersDomain(0.2, 0.5, 0.9, 1.1)
        assert "alpha_hi_exceeds_twice_alpha_lo" in exc.value.names
        box = OrdersDomain(0.2, 0.35, 0.9, 1.1)
        assert box.contains(Orders(0.3, 1.0))
        assert not box.contains(Orders(0.3, 1.2))

    def test_grid(self):
        g = TimeGrid.graded(2.0, 10, 0.25)
        t = g.nodes
        assert g.grading == 4.0
        assert t[0] == 0.0 and t[-1] == 2.0
        assert np.all(np.diff(t) > 0)
        assert TimeGrid.graded(1.0, 4, 0.8).grading == pytest.approx(2.5)


class TestPropagator:
    def test_identity_at_zero(self):
        c = np.arange(1.0, 9.0)
        assert np.array_equal(propagate(LAP8, Orders(0.5, 1.0), c, 0.0), c)

    def test_heat_semigroup(self):
        out = propagate(LAP8, Orders(1.0, 1.0), np.eye(8)[0], 0.1)
        assert out[0] == pytest.approx(math.exp(-0.1 * math.pi**2), rel=1e-14)
        assert out[0] == pytest.approx(0.372708, rel=1e-5)
        assert np.all(out[1:] == 0)

    def test_fractional_modes(self):
        P = propagator(LAP8, Orders(0.5, 1.0), [0.3])[0]
        ref = [ml(0.5, 1, -lam * math.sqrt(0.3)) for lam in LAP8.eigenvalues]
        assert np.allclose(P, ref, rtol=1e-13)


class TestKernel:
    def test_exponential_case(self):
        assert kernel_E(Orders(1.0, 1.0), 1.0, 1.0, 0.0) == pytest.approx(math.exp(-1), rel=1e-14)

    def test_singular_limit(self):
        o = Orders(0.4, 1.0)
        s = 1e-20
        assert kernel_E(o, 3.0, s, 0.0) * s**0.6 == pytest.approx(1 / gamma_fn(0.4), rel=1e-6)

    def test_fractional_value(self):
        ref = 0.5**-0.5 * ml(0.5, 0.5, -4 * 0.5**0.5)
        assert kernel_E(Orders(0.5, 1.0), 4.0, 1.0, 0.5) == pytest.approx(ref, rel=1e-14)

    def test_tau_must_precede_t(self):
        with pytest.raises(DomainError):
            kernel_E(Orders(0.5, 1.0), 1.0, 1.0, 1.0)

    def test_positivity(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            o = Orders(rng.uniform(0.05, 1.0), rng.uniform(0.2, 2.0))
            t = rng.uniform(1e-6, 10)
            assert kernel_E(o, 10 ** rng.uniform(0, 4), t, rng.uniform(0, t)) >= 0


class TestExactIntegral:
    def test_exponential_case(self):
        assert kernel_integral_exact(Orders(1.0, 1.0), 1.0, 0.0, 1.0) == pytest.approx(1 - math.exp(-1), rel=1e-14)

    def test_large_lambda_limit(self):
        assert kernel_integral_exact(Orders(0.6, 1.0), 1e12, 0.0, 1.0) == pytest.approx(1e-12, rel=1e-6)

    def test_frozen_quadrature(self, oracles):
        ref = float(oracles["values"]["kernel_int_0.5_pi2_0.3"])
        assert kernel_integral_exact(Orders(0.5, 1.0), math.pi**2, 0.0, 0.3) == pytest.approx(ref, abs=1e-12)
        assert quad_kernel(Orders(0.5, 1.0), math.pi**2, 0.0, 0.3) == pytest.approx(ref, abs=1e-9)

    def test_order_of_endpoints(self):
        with pytest.raises(DomainError):
            kernel_integral_exact(Orders(0.5, 1.0), 1.0, 0.5, 0.5)


class TestBackward:
    def test_examples(self, oracles):
        assert backward_multiplier(Orders(0.5, 1.0), 3.0, 0.7, 0.7) == pytest.approx(1.0, rel=1e-15)
        assert backward_multiplier(Orders(1.0, 1.0), 1.0, 1e-300, 1.0) == pytest.approx(math.e, rel=1e-14)
        ref = float(oracles["values"]["backward_0.5_pi2_0.1"])
        assert backward_multiplier(Orders(0.5, 1.0), math.pi**2, 0.1, 1.0) == pytest.approx(ref, rel=1e-12)

    def test_at_least_one(self):
        P = backward_multipliers(LAP8.eigenvalues, Orders(0.4, 1.3), np.linspace(0.01, 2.0, 50), 2.0)
        assert np.all(P >= 1.0 - 1e-15)

    def test_overflow_lists_modes(self):
        op = SpectralOperator.dirichlet_laplacian(64)
        with pytest.raises(AmplificationOverflowError) as exc:
            backward_multipliers(op.eigenvalues, Orders(1.0, 1.0), [0.5], 1.0)
        err = exc.value
        assert err.modes[0] == err.safe_modes + 1
        assert f"N={err.safe_modes}" in str(err)
        backward_multipliers(op.eigenvalues[: err.safe_modes], Orders(1.0, 1.0), [0.5], 1.0)


class TestEConstant:
    def test_single_eigenvalue_at_T(self):
        op = SpectralOperator.explicit([2.0])
        assert estimate_E_constant(Orders(0.5, 1.0), op, 1.0, times=[1.0]) == pytest.approx(1.05, rel=1e-15)

    def test_exponential_case_is_finite(self):
        op = SpectralOperator.dirichlet_laplacian(3)
        E = estimate_E_constant(Orders(1.0, 1.0), op, 1.0)
        assert math.isfinite(E) and E > 1.05

    def test_refinement_and_safety_factor(self):
        o = Orders(0.3, 1.0)
        op = SpectralOperator.dirichlet_laplacian(64)
        E100 = estimate_E_constant(o, op, 1.0, 100)
        E200 = estimate_E_constant(o, op, 1.0, 200)
        assert 0 < E100 < math.inf
        assert abs(E200 - E100) / E100 < 0.02
        lam = np.geomspace(op.theta, op.eigenvalues[-1], 1000)
        t = np.geomspace(1e-10, 1.0, 1000)
        dense = backward_multipliers(lam, o, t, 1.0) * (t[:, None] ** o.alpha)
        assert dense.max() <= E100

    def test_needs_enough_samples(self):
        with pytest.raises(DomainError):
            estimate_E_constant(Orders(0.5, 1.0), LAP8, 1.0, 50)


class TestConvolution:
    def test_zero_source(self):
        g = TimeGrid.graded(1.0, 16, 0.5)
        assert np.all(convolve_Q(LAP8, Orders(0.5, 1.0), g, np.zeros((17, 8))) == 0)

    @pytest.mark.parametrize("rule", ["linear", "constant"])
    def test_constant_source_is_exact(self, rule):
        o = Orders(0.45, 1.2)
        g = TimeGrid.graded(1.0, 20, o.alpha)
        Q = convolve_Q(LAP8, o, g, np.ones((21, 8)), rule)
        for k, lam in enumerate(LAP8.eigenvalues):
            exact = [kernel_integral_exact(o, lam, 0.0, t) for t in g.nodes[1:]]
            assert np.allclose(Q[1:, k], exact, rtol=1e-12, atol=1e-16)

    def test_linear_source_closed_form(self):
        op = SpectralOperator.explicit([1.0])
        g = TimeGrid(1.0, 64, 2.0)
        F = g.nodes[:, None]
        Q = convolve_Q(op, Orders(1.0, 1.0), g, F)
        assert abs(Q[-1, 0] - math.exp(-1)) < 1e-4

    def test_second_order_for_smooth_source(self):
        op = SpectralOperator.explicit([3.0])
        o = Orders(0.6, 1.0)
        f = lambda tau: np.cos(2 * tau)
        ref = -0.0362068831019787132  # mpmath quadrature of the series-expanded kernel
        errs = []
        for M in (32, 64, 128):
            g = TimeGrid(1.0, M, 1.0)
            errs.append(abs(convolve_Q(op, o, g, f(g.nodes)[:, None])[-1, 0] - ref))
        assert errs[0] / errs[1] > 3.3 and errs[1] / errs[2] > 3.3

    def test_singular_first_panel(self):
        # F = tau**(-nu) exactly: the first-panel rule reproduces it, the rest is piecewise linear
        op = SpectralOperator.explicit([2.0])
        o, nu = Orders(0.5, 1.0), 0.2
        g = TimeGrid(1.0, 128, 2.0)
        t = g.nodes
        F = np.zeros((129, 1))
        F[1:, 0] = t[1:] ** -nu
        Q = Convolution(op, o, g, "singular", nu).apply(F)
        ref = quad(lambda tau: ml(0.5, 0.5, -2.0 * max(1 - tau, 0.0) ** 0.5), 0, 1, weight="alg", wvar=(-nu, -0.5), epsabs=1e-13)[0]
        assert Q[-1, 0] == pytest.approx(ref, rel=1e-4)

    @pytest.mark.parametrize("rule,nu", [("linear", 0.0), ("constant", 0.0), ("singular", 0.15)])
    def test_off_grid_matches_nodes(self, rule, nu):
        o = Orders(0.35, 1.0)
        g = TimeGrid.graded(1.0, 24, o.alpha)
        conv = Convolution(LAP8, o, g, rule, nu)
        F = np.random.default_rng(2).standard_normal((25, 8))
        Q = conv.apply(F)
        for j in (1, 2, 7, 24):
            assert np.allclose(conv.at(g.nodes[j], F), Q[j], rtol=1e-10, atol=1e-13)

    def test_q_estimate(self):
        rng = np.random.default_rng(8)
        op = SpectralOperator.dirichlet_laplacian(6)
        for _ in range(10):
            o = Orders(rng.uniform(0.2, 1.0), rng.uniform(0.5, 1.5))
            s, r = rng.uniform(0, o.beta / 2), rng.uniform(0, 0.5)
            t1 = rng.uniform(0, 0.5)
            t2 = t1 + rng.uniform(0.05, 0.5)
            g = TimeGrid(t2 - t1, 64, 1.0)
            # piecewise linear w on a coarse grid of [t1, t2]
            knots = np.linspace(0, t2 - t1, 5)
            vals = rng.standard_normal((5, 6)) / op.eigenvalues**r
            w = np.array([np.interp(g.nodes, knots, vals[:, k]) for k in range(6)]).T
            Q = convolve_Q(op, o, g, w)[-1]
            lhs = op.sobolev_norm(Q, s + r) ** 2
            lam = np.concatenate([op.eigenvalues, np.geomspace(op.theta, 1e6, 400)])
            c = lam**o.beta
            H0 = 1 - np.array([ml(o.alpha, 1, -ci * (t2 - t1) ** o.alpha) for ci in c])
            sup = np.max(lam ** (2 * s - o.beta) * H0)
            norm_r = lambda sig: op.sobolev_norm(np.array([np.interp(sig, knots, vals[:, k]) for k in range(6)]), r) ** 2
            integral = quad(norm_r, 0, t2 - t1, weight="alg", wvar=(0, o.alpha - 1), points=None, limit=200)[0]
            assert lhs <= sup * integral / gamma_fn(o.alpha) + 1e-4


def test_power_kernel_weights_integrate_linear_functions():
    nodes = TimeGrid(1.0, 10, 2.0).nodes
    w = power_kernel_weights(0.4, 0.2, nodes, 10)
    ref = quad(lambda tau: 1 + 3 * tau, 0, 1, weight="alg", wvar=(-0.2, -0.6))[0]
    assert np.dot(w, 1 + 3 * nodes) == pytest.approx(ref, rel=1e-12)
