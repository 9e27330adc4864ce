"""Forward (initial-value) problem: mild solutions by whole-interval Picard iteration.

The mild solution satisfies, mode by mode,

    u(t) = E_alpha(-lam**beta t**alpha) zeta + int_0^t K(t - tau) f(tau, u(tau)) dtau

with ``K`` the kernel of :mod:`fracsolve.kernels`. Every Picard sweep re-applies
the right side on the whole time grid until successive sweeps agree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import beta as beta_function
from scipy.special import betainc

from .errors import (
    BlowUpSuspected,
    ConstraintViolation,
    DomainError,
    IterationFailure,
)
from .kernels import Convolution, Orders, TimeGrid, propagator
from .mlf import gamma_fn, lgamma_pos, ml
from .spectrum import SpectralOperator, fmt17

__all__ = [
    "SourceSpec",
    "PicardPolicy",
    "Trajectory",
    "solve_fivp",
    "fixed_point_residual",
    "gronwall_bound",
    "gronwall_majorant",
    "power_kernel_weights",
    "solve_power_volterra",
    "global_bound",
    "data_continuity_constant",
    "existence_feasibility",
    "smallest_feasible_radius",
    "MaximalResult",
    "continue_maximal",
]

LIPSCHITZ_SLACK = 1.01


@dataclass(frozen=True)
class SourceSpec:
    """Nonlinearity ``f(t, u) = t**(-nu) f0(u) + h(t)``.

    ``kind`` is ``"zero"`` (f0 = 0), ``"linear"`` (f0(u) = c u) or
    ``"pointwise"`` (f0(u) = g(u) applied in physical space on the Laplacian
    basis, or to the coefficients of an explicit operator). ``forcing`` maps an
    array of times to an array of shape ``(len(t), N)``.
    """

    kind: str = "zero"
    c: float = 0.0
    g: Callable[[np.ndarray], np.ndarray] | None = None
    lipschitz: float = 0.0
    nu: float = 0.0
    forcing: Callable[[np.ndarray], np.ndarray] | None = None
    kappa: float | None = None

    def __post_init__(self):
        if self.kind not in ("zero", "linear", "pointwise"):
            raise DomainError(f"unknown source kind {self.kind!r}")
        if self.kind == "pointwise" and self.g is None:
            raise DomainError("pointwise source needs a scalar map g")
        if self.kappa is None:
            budget = {"zero": 0.0, "linear": abs(self.c), "pointwise": self.lipschitz}[self.kind]
            object.__setattr__(self, "kappa", float(budget))

    @classmethod
    def zero(cls, forcing=None) -> "SourceSpec":
        return cls("zero", forcing=forcing)

    @classmethod
    def linear(cls, c: float, nu: float = 0.0, forcing=None) -> "SourceSpec":
        return cls("linear", c=float(c), nu=float(nu), forcing=forcing)

    @classmethod
    def pointwise(cls, g, lipschitz: float, nu: float = 0.0, forcing=None) -> "SourceSpec":
        return cls("pointwise", g=g, lipschitz=float(lipschitz), nu=float(nu), forcing=forcing)

    @property
    def is_trivial(self) -> bool:
        return self.kind == "zero" and self.forcing is None

    def kappa_s(self, op: SpectralOperator, s: float) -> float:
        """Lipschitz budget measured from ``D(A^s)`` into ``H``."""
        return float(self.kappa) * op.theta ** (-s)

    def spot_check(self, rng: np.random.Generator | None = None, n_pairs: int = 10_000) -> bool:
        if self.kind != "pointwise":
            return True
        rng = rng or np.random.default_rng(12345)
        a = rng.uniform(-10.0, 10.0, n_pairs)
        b = rng.uniform(-10.0, 10.0, n_pairs)
        lhs = np.abs(np.asarray(self.g(a), dtype=float) - np.asarray(self.g(b), dtype=float))
        return bool(np.all(lhs <= LIPSCHITZ_SLACK * self.lipschitz * np.abs(a - b) + 1e-300))

    def violations(self, orders: Orders, op: SpectralOperator, s: float = 0.0) -> list[str]:
        bad = []
        if self.nu < 0:
            bad.append("nu_negative")
        if self.nu > orders.alpha / 2.0:
            bad.append("nu_exceeds_alpha_half")
        if not (0.0 <= s <= orders.beta / 2.0):
            bad.append("s_out_of_range")
        if self.nu == orders.alpha / 2.0 and self.kind != "zero" and orders.alpha < 1.0:
            critical = op.theta ** (orders.beta / 2.0 - s) / math.sqrt(gamma_fn(1.0 - orders.alpha))
            if not self.kappa_s(op, 0.0) < critical:
                bad.append("kappa_exceeds_critical")
        if self.kind == "pointwise" and not self.spot_check():
            bad.append("lipschitz_spot_check_failed")
        return bad

    def evaluate(self, op: SpectralOperator, times: np.ndarray, U: np.ndarray) -> np.ndarray:
        """Samples ``f(t_j, U_j)`` with shape (len(times), N); ``t = 0`` rows are zeroed when nu > 0."""
        t = np.asarray(times, dtype=float)
        if self.kind == "zero":
            F = np.zeros_like(U)
        elif self.kind == "linear":
            F = self.c * U
        elif op.kind == "laplacian":
            F = op.analyze(np.asarray(self.g(op.synthesize(U)), dtype=float))
        else:
            F = np.asarray(self.g(U), dtype=float)
        if self.nu > 0 and self.kind != "zero":
            weight = np.zeros_like(t)
            pos = t > 0
            weight[pos] = t[pos] ** (-self.nu)
            F = F * weight[:, None]
        if self.forcing is not None:
            F = F + np.asarray(self.forcing(t), dtype=float).reshape(F.shape)
        return F


@dataclass(frozen=True)
class PicardPolicy:
    tol: float = 1e-10
    max_iters: int = 200
    divergence_factor: float = 1e6

    def __post_init__(self):
        if not (self.tol > 0) or self.max_iters < 1 or not (self.divergence_factor > 1):
            raise DomainError("policy needs tol > 0, max_iters >= 1, divergence_factor > 1")


@dataclass
class Trajectory:
    """Coefficients ``coeffs[j, k]`` of the solution at ``times[j]``."""

    times: np.ndarray
    coeffs: np.ndarray
    op: SpectralOperator
    orders: Orders
    source: SourceSpec | None = None
    residuals: list[float] = field(default_factory=list)
    certified: bool = True

    def norms(self, s: float = 0.0) -> np.ndarray:
        return self.op.sobolev_norm(self.coeffs, s)

    def to_csv(self, mode: str = "coefficients", s: float = 0.0) -> str:
        if mode == "coefficients":
            header = ["t"] + [f"c{k}" for k in range(1, self.op.n_modes + 1)]
            rows = np.column_stack([self.times, self.coeffs])
        elif mode == "norms":
            header = ["t", "norm_0", "norm_s"]
            rows = np.column_stack([self.times, self.norms(0.0), self.norms(s)])
        else:
            raise DomainError(f"unknown output mode {mode!r}")
        lines = [",".join(header)]
        lines.extend(",".join(fmt17(v) for v in row) for row in rows)
        return "\n".join(lines) + "\n"


def _convolution_for(op, orders, grid, source) -> Convolution:
    if source.nu > 0 and source.kind != "zero":
        return Convolution(op, orders, grid, "singular", source.nu)
    return Convolution(op, orders, grid, "linear")


def _mild_map(base, conv, source, op, t, U):
    return base + conv.apply(source.evaluate(op, t, U))


def solve_fivp(
    orders: Orders,
    op: SpectralOperator,
    zeta,
    source: SourceSpec,
    grid: TimeGrid,
    policy: PicardPolicy = PicardPolicy(),
    s: float = 0.0,
    convolution: Convolution | None = None,
) -> Trajectory:
    zeta = np.asarray(zeta, dtype=float)
    if zeta.shape != (op.n_modes,):
        raise DomainError("initial data must have one coefficient per mode")
    bad = source.violations(orders, op, s)
    if bad:
        raise ConstraintViolation(bad, _budget_report(orders, op, source, s))
    t = grid.nodes
    base = propagator(op, orders, t) * zeta[None, :]
    base[0] = zeta
    if source.is_trivial:
        return Trajectory(t, base, op, orders, source, [0.0])

    conv = convolution or _convolution_for(op, orders, grid, source)
    scale = 1.0 + float(op.sobolev_norm(zeta))
    ceiling = policy.divergence_factor * scale
    U = base.copy()
    history: list[float] = []
    for _ in range(policy.max_iters):
        new = _mild_map(base, conv, source, op, t, U)
        new[0] = zeta
        res = float(np.max(op.sobolev_norm(new - U)))
        history.append(res)
        U = new
        if not np.all(np.isfinite(U)) or float(np.max(op.sobolev_norm(U))) > ceiling:
            raise BlowUpSuspected("Picard iterates exceeded the divergence ceiling", None, history)
        if res <= policy.tol * scale:
            return Trajectory(t, U, op, orders, source, history)
    raise IterationFailure(f"no convergence after {policy.max_iters} sweeps", history)


def fixed_point_residual(traj: Trajectory, zeta, grid: TimeGrid) -> float:
    """``max_j ||u(t_j) - F(u)(t_j)||_0`` for a computed trajectory."""
    op, orders, source = traj.op, traj.orders, traj.source
    base = propagator(op, orders, grid.nodes) * np.asarray(zeta, dtype=float)[None, :]
    base[0] = zeta
    if source is None or source.is_trivial:
        return float(np.max(op.sobolev_norm(traj.coeffs - base)))
    conv = _convolution_for(op, orders, grid, source)
    image = _mild_map(base, conv, source, op, grid.nodes, traj.coeffs)
    image[0] = zeta
    return float(np.max(op.sobolev_norm(traj.coeffs - image)))


def _budget_report(orders, op, source, s) -> str:
    if source.kind == "zero" or orders.alpha >= 1.0:
        return f"nu={source.nu}, alpha={orders.alpha}"
    critical = op.theta ** (orders.beta / 2.0 - s) / math.sqrt(gamma_fn(1.0 - orders.alpha))
    return f"nu={source.nu}, alpha={orders.alpha}, kappa={source.kappa:.6g}, critical kappa={critical:.6g}"


# ---------------------------------------------------------------------------
# a-priori bounds


def gronwall_bound(alpha: float, q: float, v_sup: float, g_sup: float, t) -> np.ndarray | float:
    """``Gamma(1-q) v E_{alpha-q,1-q}(g Gamma(alpha) t**(alpha-q))``."""
    if not (0.0 < alpha <= 1.0) or not q < alpha:
        raise DomainError("gronwall_bound needs 0 < alpha <= 1 and q < alpha")
    if v_sup < 0 or g_sup < 0:
        raise DomainError("sup norms must be non-negative")
    scalar = np.ndim(t) == 0
    tt = np.atleast_1d(np.asarray(t, dtype=float))
    z = g_sup * gamma_fn(alpha) * tt ** (alpha - q)
    out = np.array([gamma_fn(1.0 - q) * v_sup * ml(alpha - q, 1.0 - q, zi) for zi in z])
    return float(out[0]) if scalar else out


def gronwall_majorant(alpha: float, q: float, v_sup: float, g_sup: float, t) -> np.ndarray | float:
    """Solution of ``u = v + g int_0^t (t-tau)**(alpha-1) tau**(-q) u dtau`` for constant v, g.

    Its series is ``v sum_k c_k z**k`` with ``z = g Gamma(alpha) t**(alpha-q)``,
    ``c_0 = 1`` and ``c_{k+1}/c_k = Gamma(1-q+k p)/Gamma(1+(k+1) p)``, ``p = alpha-q``.
    By the comparison principle it bounds every solution with ``0 <= v <= v_sup``
    and ``0 <= g <= g_sup``. It coincides with :func:`gronwall_bound` when q = 0
    and exceeds it for other q.
    """
    if not (0.0 < alpha <= 1.0) or not q < alpha:
        raise DomainError("need 0 < alpha <= 1 and q < alpha")
    p = alpha - q
    scalar = np.ndim(t) == 0
    tt = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.empty_like(tt)
    for idx, ti in enumerate(tt):
        z = g_sup * gamma_fn(alpha) * ti**p
        if z == 0.0:
            out[idx] = v_sup
            continue
        log_c, total, k = 0.0, 1.0, 0
        log_z = math.log(z)
        while True:
            log_c += lgamma_pos(1.0 - q + k * p) - lgamma_pos(1.0 + (k + 1) * p)
            k += 1
            term = math.exp(log_c + k * log_z)
            total += term
            if (k * p > z ** (1.0 / p) + 2.0 and term <= 1e-17 * total) or k > 10_000:
                break
        out[idx] = v_sup * total
    return float(out[0]) if scalar else out


def _power_moments(alpha: float, q: float, t_target: float, a: np.ndarray, b: np.ndarray, m: float):
    """``int_a^b (t - tau)**(alpha-1) tau**(m - q) dtau`` for panels inside [0, t]."""
    p = m - q + 1.0
    scale = t_target ** (alpha + m - q) * beta_function(p, alpha)
    xa, xb = a / t_target, b / t_target
    # I_x(p, alpha) differences; the complementary form keeps digits near x = 1
    upper = betainc(alpha, p, 1.0 - xa) - betainc(alpha, p, 1.0 - xb)
    lower = betainc(p, alpha, xb) - betainc(p, alpha, xa)
    return scale * np.where(xa > 0.5, upper, lower)


def power_kernel_weights(alpha: float, q: float, nodes: np.ndarray, j: int) -> np.ndarray:
    """Weights ``w_i`` with ``int_0^{t_j} (t_j-tau)**(alpha-1) tau**(-q) y(tau) dtau = sum_i w_i y(t_i)``.

    Exact when ``y`` is piecewise linear on ``nodes[:j+1]``.
    """
    a, b = nodes[:j], nodes[1 : j + 1]
    h = b - a
    m0 = _power_moments(alpha, q, nodes[j], a, b, 0.0)
    m1 = _power_moments(alpha, q, nodes[j], a, b, 1.0)
    # hat functions: (b - tau)/h on the left node, (tau - a)/h on the right
    w = np.zeros(j + 1)
    w[:-1] += (b * m0 - m1) / h
    w[1:] += (m1 - a * m0) / h
    return w


def solve_power_volterra(alpha: float, q: float, v, g, grid: TimeGrid) -> np.ndarray:
    """Product-integration solution of ``u = v + g int_0^t (t-tau)**(alpha-1) tau**(-q) u dtau``.

    ``v`` and ``g`` are callables of time (vectorised) or constants. ``u`` is
    interpolated linearly on each panel; the weight ``(t-tau)**(alpha-1) tau**(-q)``
    is integrated exactly, so the only error is the interpolation of ``u``.
    """
    if not (0.0 < alpha <= 1.0) or not q < alpha:
        raise DomainError("need 0 < alpha <= 1 and q < alpha")
    t = grid.nodes
    vv = np.broadcast_to(v(t) if callable(v) else np.asarray(v, dtype=float), t.shape)
    gg = np.broadcast_to(g(t) if callable(g) else np.asarray(g, dtype=float), t.shape)
    u = np.empty_like(t)
    u[0] = vv[0]
    for j in range(1, t.size):
        w = power_kernel_weights(alpha, q, t, j)
        known = float(np.dot(w[:-1], u[:j]))
        u[j] = (vv[j] + gg[j] * known) / (1.0 - gg[j] * w[-1])
    return u


def global_bound(orders: Orders, s: float, kappa: float, nu: float, g_sup: float, theta: float, t):
    """Bound on ``||u(t)||_s**2``: ``2 Gamma(1-2nu) g**2 E_{alpha-2nu,1-2nu}(2 theta**(2s-beta) kappa**2 t**(alpha-2nu))``."""
    alpha, beta = orders.alpha, orders.beta
    if not nu < alpha / 2.0 or nu < 0:
        raise DomainError("global_bound needs 0 <= nu < alpha/2")
    if not (0.0 <= s <= beta / 2.0):
        raise DomainError("global_bound needs 0 <= s <= beta/2")
    scalar = np.ndim(t) == 0
    tt = np.atleast_1d(np.asarray(t, dtype=float))
    p = alpha - 2.0 * nu
    z = 2.0 * theta ** (2.0 * s - beta) * kappa**2 * tt**p
    out = np.array([2.0 * gamma_fn(1.0 - 2.0 * nu) * g_sup**2 * ml(p, 1.0 - 2.0 * nu, zi) for zi in z])
    return float(out[0]) if scalar else out


def data_continuity_constant(orders: Orders, s: float, kappa: float, nu: float, theta: float, T: float) -> float:
    """Lipschitz constant of ``zeta -> u`` in the max-over-time ``s``-norm."""
    return math.sqrt(global_bound(orders, s, kappa, nu, 1.0, theta, T))


def existence_feasibility(
    zeta_norm_s: float,
    s: float,
    theta: float,
    beta: float,
    alpha: float,
    nu: float,
    psi: Sequence[tuple[float, float]],
    m_T: float,
    T: float,
    m: float,
    kappa: float = 1.0,
) -> bool:
    """Strict radius inequality for the a-priori ball of radius ``m``.

    ``psi`` is a list of ``(a_i, p_i)`` describing ``psi(z) = sum a_i z**p_i``.
    """
    psi_m = sum(a * m**p for a, p in psi)
    inner = m_T + beta_function(alpha, 1.0 - 2.0 * nu) * kappa**2 * T ** (alpha - 2.0 * nu) * psi_m**2
    rhs = zeta_norm_s + math.sqrt(2.0 / gamma_fn(alpha)) * theta ** (s - beta / 2.0) * math.sqrt(inner)
    return bool(m > rhs)


def smallest_feasible_radius(*args, m_max: float = 1e12, n_grid: int = 600, **kwargs) -> float | None:
    """Scan a log grid on ``(1e-12, m_max]``; None when nothing up to ``m_max`` is feasible."""
    for m in np.geomspace(1e-12, m_max, n_grid):
        if existence_feasibility(*args, m=float(m), **kwargs):
            return float(m)
    return None


# ---------------------------------------------------------------------------
# continuation up to blow-up


@dataclass(frozen=True)
class _TruncatedSource:
    """``f_M(t, v) = f(t, M v / max(M, ||v||_s))`` wrapped around a source."""

    inner: SourceSpec
    radius: float
    s: float

    def __getattr__(self, name):
        return getattr(self.inner, name)

    def violations(self, orders, op, s=0.0):
        return self.inner.violations(orders, op, s)

    def evaluate(self, op, times, U):
        n = op.sobolev_norm(U, self.s)
        shrink = self.radius / np.maximum(self.radius, n)
        return self.inner.evaluate(op, times, U * shrink[:, None])


@dataclass
class MaximalResult:
    trajectory: Trajectory
    status: str  # "ReachedHorizon" or "BlowUpSuspected"
    t_est: float | None = None
    horizons: list[float] = field(default_factory=list)


def continue_maximal(
    orders: Orders,
    op: SpectralOperator,
    zeta,
    source: SourceSpec,
    step: float,
    M_blow: float,
    policy: PicardPolicy = PicardPolicy(),
    horizon: float = 1.0,
    s: float = 0.0,
    nodes_per_step: int = 64,
) -> MaximalResult:
    """Extend the horizon by ``step`` until ``horizon`` or until ``||u||_s >= M_blow``.

    Each extension re-solves from t = 0 with the source truncated at twice the
    running sup-norm. If the accepted trajectory reaches the truncation radius
    the radius is doubled and the same horizon is solved again, so the
    truncation never acts on the returned trajectory. Blow-up detection is a
    threshold heuristic; ``t_est`` is the linearly interpolated first crossing.
    """
    zeta = np.asarray(zeta, dtype=float)
    if not step > 0:
        raise DomainError("step must be positive")
    zeta_norm = float(op.sobolev_norm(zeta, s))
    if not M_blow > zeta_norm:
        raise DomainError("M_blow must exceed the norm of the initial data")
    sup = max(zeta_norm, 1e-300)
    T = min(step, horizon)
    horizons: list[float] = []
    while True:
        n_nodes = max(16, int(math.ceil(nodes_per_step * T / step)))
        grid = TimeGrid.graded(T, n_nodes, orders.alpha)
        radius = 2.0 * sup
        while True:
            truncated = _TruncatedSource(source, radius, s)
            traj = solve_fivp(orders, op, zeta, truncated, grid, policy, s)
            norms = traj.norms(s)
            crossing = np.nonzero(norms >= M_blow)[0]
            if crossing.size or float(np.max(norms)) < radius:
                break
            radius *= 2.0
        horizons.append(T)
        traj.source = source
        if crossing.size:
            j = int(crossing[0])
            t = traj.times
            lo, hi = norms[j - 1], norms[j]
            frac = (M_blow - lo) / (hi - lo) if hi > lo else 1.0
            t_est = float(t[j - 1] + frac * (t[j] - t[j - 1]))
            kept = Trajectory(t[: j + 1], traj.coeffs[: j + 1], op, orders, source, traj.residuals)
            return MaximalResult(kept, "BlowUpSuspected", t_est, horizons)
        sup = max(sup, float(np.max(norms)))
        if T >= horizon:
            return MaximalResult(traj, "ReachedHorizon", None, horizons)
        T = min(T + step, horizon)
