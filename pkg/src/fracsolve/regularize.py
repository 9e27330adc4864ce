"""Ill-posedness at t = 0, the t_eps regularization rule and order-stability experiments.

Experiments compare empirical log-log slopes of error against perturbation size
with Hölder exponents; the constants in front of those rates are never checked.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConstraintViolation, DomainError, FracSolveError, InsufficientData
from .ffvp import WeightedSpace, solve_ffvp
from .fivp import PicardPolicy, SourceSpec, Trajectory, solve_fivp
from .kernels import Convolution, Orders, OrdersDomain, TimeGrid, backward_multipliers
from .mlf import ml
from .spectrum import SpectralOperator, fmt17

__all__ = [
    "RateParams",
    "PerturbationPlan",
    "IllposedRow",
    "illposed_demo",
    "illposed_csv",
    "choose_t_eps",
    "scaled_noise",
    "ffvp_value_at",
    "regularized_initial",
    "RateReport",
    "fit_slope",
    "fivp_order_stability",
    "ffvp_order_stability",
    "regularization_experiment",
    "holder_class_check",
]


@dataclass(frozen=True)
class RateParams:
    """Extra-regularity exponents and the Hölder rates built from them."""

    r1: float = 1.0
    r2: float = 1.0
    r: float = 1.0
    alpha_star: float = 0.5
    beta_star: float = 1.0
    s: float = 0.0
    rho: float = 0.5

    def __post_init__(self):
        bad = []
        if not (self.r1 > 0 and self.r2 > 0 and self.r > 0):
            bad.append("regularity_exponent_nonpositive")
        if not self.gamma2 > 0:
            bad.append("gamma2_nonpositive")
        if not (self.rho > 0 and self.alpha_star > 0 and self.beta_star > 0):
            bad.append("rate_parameter_nonpositive")
        if bad:
            raise ConstraintViolation(bad)

    @property
    def gamma1(self) -> float:
        return max(self.beta_star + 2 * (self.s - self.r1), 2 * (self.s - self.r2), 0.0)

    @property
    def gamma2(self) -> float:
        return min(self.beta_star + 2 * (self.r1 - self.s), 2 * self.r2)

    @property
    def fivp_exponent(self) -> float:
        return self.gamma2 / (2 * (self.gamma1 + self.gamma2 + 2))

    @property
    def ffvp_exponent(self) -> float:
        return self.r / (2 * (self.r + 2 * self.beta_star + 1))

    @property
    def t_eps_exponent(self) -> float:
        return self.r / (2 * (self.alpha_star + self.rho) * (self.r + 2 * self.beta_star + 1))

    @property
    def reg_exponent(self) -> float:
        return self.rho * self.t_eps_exponent


@dataclass(frozen=True)
class PerturbationPlan:
    """Order perturbations ``|alpha - alpha_k| + |beta - beta_k| = eps``.

    ``alpha_share`` of each ``eps`` lowers alpha, the remainder raises beta.
    """

    orders: Orders
    domain: OrdersDomain
    eps: tuple[float, ...] = tuple(np.logspace(-1, -4, 7))
    alpha_share: float = 0.5
    data_mode: str = "none"
    seed: int = 0

    def __post_init__(self):
        if self.data_mode not in ("none", "scaled-noise"):
            raise DomainError(f"unknown data perturbation mode {self.data_mode!r}")
        if not (0.0 <= self.alpha_share <= 1.0):
            raise DomainError("alpha_share must lie in [0, 1]")
        bad = []
        if not self.domain.contains(self.orders):
            bad.append("base_orders_outside_domain")
        if any(not e > 0 for e in self.eps):
            bad.append("eps_nonpositive")
        elif not all(self.domain.contains(self.perturbed(e)) for e in self.eps):
            bad.append("perturbed_orders_outside_domain")
        if bad:
            raise ConstraintViolation(bad)

    def perturbed(self, eps: float) -> Orders:
        return Orders(
            self.orders.alpha - self.alpha_share * eps,
            self.orders.beta + (1.0 - self.alpha_share) * eps,
        )


# ---------------------------------------------------------------------------
# ill-posedness


@dataclass(frozen=True)
class IllposedRow:
    n: int
    lam: float
    data_norm: float
    beta_n: float
    fixed_norm: float
    perturbed_norm: float
    identity_error: float
    flagged: bool


def illposed_demo(orders: Orders, op: SpectralOperator, T: float, mode_indices: Sequence[int]) -> list[IllposedRow]:
    """Data ``Phi_n = phi_n / (lam_n**beta ln lam_n)`` shrinks while its recovery under ``beta_n`` grows.

    ``beta_n = beta + 2 ln ln lam_n / ln lam_n`` makes ``lam_n**(beta_n - beta) = ln(lam_n)**2``.
    A row is flagged when ``E_alpha`` underflows; its norm is then a lower bound.
    """
    rows = []
    alpha, beta = orders.alpha, orders.beta
    for n in mode_indices:
        if not (1 <= n <= op.n_modes):
            raise DomainError(f"mode index {n} outside 1..{op.n_modes}")
        lam = float(op.eigenvalues[n - 1])
        if not lam > math.e:
            raise DomainError(f"mode {n}: eigenvalue {lam} must exceed e")
        ln = math.log(lam)
        beta_n = beta + 2.0 * math.log(ln) / ln
        data = 1.0 / (lam**beta * ln)
        identity_error = abs(math.exp((beta_n - beta) * ln) - ln * ln) / (ln * ln)
        flagged = False
        norms = []
        for b in (beta, beta_n):
            decay = ml(alpha, 1.0, -(lam**b) * T**alpha)
            if decay > 1e-300:
                norms.append(data / decay)
            else:
                flagged = True
                norms.append(data / 1e-300)
        rows.append(IllposedRow(n, lam, data, beta_n, norms[0], norms[1], identity_error, flagged))
    return rows


def illposed_csv(rows: Sequence[IllposedRow]) -> str:
    lines = ["n,lambda,data_norm,beta_n,fixed_order_norm,perturbed_order_norm,identity_error,flagged"]
    for r in rows:
        vals = [str(r.n)] + [fmt17(v) for v in (r.lam, r.data_norm, r.beta_n, r.fixed_norm, r.perturbed_norm, r.identity_error)]
        lines.append(",".join(vals + [str(int(r.flagged))]))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# regularization by reading off u(t_eps)


def choose_t_eps(eps: float, r: float, rho: float, alpha_star: float, beta_star: float, t_floor: float = 0.0) -> float:
    """``eps**(r / (2 (alpha_star + rho) (r + 2 beta_star + 1)))``, clamped below at ``t_floor``."""
    if not (0.0 < eps < 1.0):
        raise DomainError("eps must lie in (0, 1)")
    t = eps ** (r / (2.0 * (alpha_star + rho) * (r + 2.0 * beta_star + 1.0)))
    return max(t, t_floor)


def scaled_noise(op: SpectralOperator, norm_index: float, eps: float, rng: np.random.Generator) -> np.ndarray:
    """Gaussian coefficients rescaled so that ``||delta||_{norm_index} = eps`` exactly."""
    d = rng.standard_normal(op.n_modes)
    return d * (eps / float(op.sobolev_norm(d, norm_index)))


def ffvp_value_at(traj: Trajectory, phi, grid: TimeGrid, t: float) -> np.ndarray:
    """Backward solution at an arbitrary ``0 < t <= T`` from its fixed-point representation."""
    op, orders, source = traj.op, traj.orders, traj.source
    phi = np.asarray(phi, dtype=float)
    P = backward_multipliers(op.eigenvalues, orders, [t], grid.T)[0]
    if source is None or source.is_trivial:
        return P * phi
    rule = "singular" if (source.nu > 0 and source.kind != "zero") else "constant"
    conv = Convolution(op, orders, grid, rule, source.nu)
    full = np.zeros((grid.M + 1, op.n_modes))
    full[1:] = traj.coeffs
    F = source.evaluate(op, grid.nodes, full)
    return P * (phi - conv.at(grid.T, F)) + conv.at(t, F)


def regularized_initial(
    phi_eps,
    orders_eps: Orders,
    eps: float,
    rate: RateParams,
    op: SpectralOperator,
    source: SourceSpec,
    grid: TimeGrid,
    space: WeightedSpace,
    policy: PicardPolicy = PicardPolicy(),
    truth=None,
    sigma: float = 0.0,
    force: bool = False,
) -> tuple[np.ndarray, dict]:
    """Approximate ``u(0)`` by the backward solution at ``t_eps``."""
    nodes = grid.nodes
    t_raw = choose_t_eps(eps, rate.r, rate.rho, rate.alpha_star, rate.beta_star)
    t_eps = min(max(t_raw, float(nodes[1])), grid.T)
    traj = solve_ffvp(orders_eps, op, phi_eps, source, grid, space, policy, force=force)
    value = ffvp_value_at(traj, phi_eps, grid, t_eps)
    report = {
        "eps": eps,
        "t_eps": t_eps,
        "clamped": t_eps != t_raw,
        "exponent": rate.reg_exponent,
        "certified": traj.certified,
    }
    if truth is not None:
        report["error"] = float(op.sobolev_norm(value - np.asarray(truth, dtype=float), sigma))
    return value, report


# ---------------------------------------------------------------------------
# rate experiments


@dataclass
class RateReport:
    eps: list[float]
    err: list[float]
    slope: float
    theory: float
    monotone: bool
    decayed: bool
    passed: bool
    failures: list[str] = field(default_factory=list)

    def verdict(self) -> str:
        return f"SLOPE={self.slope:.6f} THEORY={self.theory:.6f} {'PASS' if self.passed else 'FAIL'}"

    def to_csv(self) -> str:
        lines = ["eps,err,log10_eps,log10_err"]
        for e, r in zip(self.eps, self.err):
            le = fmt17(math.log10(r)) if r > 0 else "-inf"
            lines.append(f"{fmt17(e)},{fmt17(r)},{fmt17(math.log10(e))},{le}")
        return "\n".join(lines) + "\n"


def fit_slope(eps: Sequence[float], err: Sequence[float]) -> float:
    """Least-squares slope of ``log err`` against ``log eps``."""
    e = np.asarray(eps, dtype=float)
    r = np.asarray(err, dtype=float)
    if e.size < 4:
        raise InsufficientData("need >= 4 points for slope fit")
    if np.any(r <= 0):
        raise InsufficientData("slope fit needs positive errors")
    return float(np.polyfit(np.log(e), np.log(r), 1)[0])


def _monotone(eps, err, slack: float = 0.05) -> bool:
    """Errors must not grow (beyond ``slack``) as eps decreases."""
    order = np.argsort(eps)[::-1]
    vals = np.asarray(err)[order]
    return bool(np.all(vals[1:] <= vals[:-1] * (1.0 + slack)))


def _report(eps, err, theory, failures, require_decay: bool) -> RateReport:
    if failures:
        return RateReport(list(eps), list(err), math.nan, theory, False, False, False, failures)
    slope = fit_slope(eps, err)
    mono = _monotone(eps, err)
    order = np.argsort(eps)[::-1]
    first, last = err[order[0]], err[order[-1]]
    decayed = bool(last < first / 10.0)
    passed = slope >= theory - 0.1 and mono and (decayed or not require_decay)
    return RateReport(list(eps), list(err), slope, theory, mono, decayed, passed)


def _map(fn: Callable, items, threads: int):
    if threads <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _run_points(fn, eps, threads):
    def guarded(e):
        try:
            return fn(e), None
        except FracSolveError as exc:
            return math.nan, f"eps={e:.6g}: {type(exc).__name__}: {exc}"

    out = _map(guarded, list(eps), threads)
    return [v for v, _ in out], [f for _, f in out if f]


def fivp_order_stability(
    plan: PerturbationPlan,
    op: SpectralOperator,
    zeta,
    source: SourceSpec,
    rate: RateParams,
    T: float = 1.0,
    M: int = 256,
    policy: PicardPolicy = PicardPolicy(),
    threads: int = 1,
) -> RateReport:
    """``max_j ||u_k(t_j) - u(t_j)||_s`` for orders perturbed by each eps (same data, same grid)."""
    grid = TimeGrid.graded(T, M, plan.orders.alpha)
    base = solve_fivp(plan.orders, op, zeta, source, grid, policy, rate.s)

    def point(e):
        moved = solve_fivp(plan.perturbed(e), op, zeta, source, grid, policy, rate.s)
        return float(np.max(op.sobolev_norm(moved.coeffs - base.coeffs, rate.s)))

    err, failures = _run_points(point, plan.eps, threads)
    return _report(plan.eps, err, rate.fivp_exponent, failures, require_decay=True)


def ffvp_order_stability(
    plan: PerturbationPlan,
    op: SpectralOperator,
    phi,
    source: SourceSpec,
    rate: RateParams,
    space: WeightedSpace,
    T: float = 1.0,
    M: int = 256,
    policy: PicardPolicy = PicardPolicy(),
    threads: int = 1,
) -> RateReport:
    """``|||u_k - u|||_{min(beta, beta_k)/2, rho}`` for orders perturbed by each eps."""
    grid = TimeGrid.graded(T, M, plan.orders.alpha)
    base = solve_ffvp(plan.orders, op, phi, source, grid, space, policy)

    def point(e):
        orders_k = plan.perturbed(e)
        moved = solve_ffvp(orders_k, op, phi, source, grid, space, policy)
        s_cmp = min(plan.orders.beta, orders_k.beta) / 2.0
        diff = op.sobolev_norm(moved.coeffs - base.coeffs, s_cmp)
        return float(np.max(base.times**space.rho * diff))

    err, failures = _run_points(point, plan.eps, threads)
    return _report(plan.eps, err, rate.ffvp_exponent, failures, require_decay=True)


def holder_class_check(traj: Trajectory, gamma: float, window: tuple[float, float]) -> tuple[float, float]:
    """Fit ``||u(t) - u(0)||_gamma ~ E_fit t**rho_fit`` over nodes inside ``window``.

    Returns ``(0.0, inf)`` when the trajectory is constant on the window.
    """
    if traj.times[0] != 0.0:
        raise DomainError("Hölder check needs the value at t = 0")
    lo, hi = window
    keep = (traj.times > 0) & (traj.times >= lo) & (traj.times <= hi)
    if int(np.sum(keep)) < 4:
        raise InsufficientData("fewer than 4 nodes in the fitting window")
    d = traj.op.sobolev_norm(traj.coeffs[keep] - traj.coeffs[0], gamma)
    if np.all(d == 0):
        return 0.0, math.inf
    if np.any(d <= 0):
        raise InsufficientData("zero increments inside the fitting window")
    slope, icpt = np.polyfit(np.log(traj.times[keep]), np.log(d), 1)
    return float(math.exp(icpt)), float(slope)


def regularization_experiment(
    orders: Orders,
    domain: OrdersDomain,
    op: SpectralOperator,
    u0,
    source: SourceSpec,
    space: WeightedSpace,
    r: float = 1.0,
    sigma: float = 0.0,
    eps: Sequence[float] = tuple(np.logspace(-1, -4, 7)),
    alpha_share: float = 0.5,
    seed: int = 0,
    T: float = 1.0,
    M: int = 256,
    holder_window: tuple[float, float] = (1e-9, 1e-5),
    policy: PicardPolicy = PicardPolicy(),
    threads: int = 1,
) -> tuple[RateReport, RateParams, list[dict]]:
    """Synthetic-truth run of the t_eps rule.

    A forward solve from ``u0`` gives the exact final state; each eps perturbs
    the data by seeded noise of size eps in the ``beta_star/2 + r`` norm and the
    orders by eps in total, then recovers ``u(0)`` from ``u(t_eps)``.
    """
    u0 = np.asarray(u0, dtype=float)
    grid = TimeGrid.graded(T, M, orders.alpha)
    truth = solve_fivp(orders, op, u0, source, grid, policy, sigma)
    _, rho_fit = holder_class_check(truth, sigma, holder_window)
    rate = RateParams(r=r, alpha_star=domain.alpha_hi, beta_star=domain.beta_hi, s=sigma, rho=rho_fit)
    plan = PerturbationPlan(orders, domain, tuple(eps), alpha_share, "scaled-noise", seed)
    phi = truth.coeffs[-1]
    noise_index = rate.beta_star / 2.0 + r
    details: dict[int, dict] = {}

    def point(idx):
        e = plan.eps[idx]
        rng = np.random.default_rng([seed, idx])
        phi_eps = phi + scaled_noise(op, noise_index, e, rng)
        orders_eps = plan.perturbed(e)
        grid_eps = TimeGrid.graded(T, M, orders_eps.alpha)
        _, rep = regularized_initial(phi_eps, orders_eps, e, rate, op, source, grid_eps, space, policy, truth=u0, sigma=sigma)
        details[idx] = rep
        return rep["error"]

    err, failures = _run_points(point, range(len(plan.eps)), threads)
    failures = [f.replace("eps=", "point=") for f in failures]
    report = _report(plan.eps, err, rate.reg_exponent, failures, require_decay=True)
    return report, rate, [details.get(i, {}) for i in range(len(plan.eps))]
