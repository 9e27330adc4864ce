"""Backward (final-value) problem in the weighted space ``C_{s,rho}(T)``.

Given the final state ``phi`` the solution is the fixed point of

    B(u)(t) = P(t) (phi - Q(u)(T)) + Q(u)(t),   P(t) = E_alpha(-A^beta t^alpha) / E_alpha(-A^beta T^alpha)

on ``t in (0, T]``, where ``Q(u)(t) = int_0^t K(t - tau) f(tau, u(tau)) dtau``.
The weighted norm ``|||w|||_{s,rho} = sup_t t**rho ||w(t)||_s`` tolerates a
``t**(-rho)`` singularity at the origin, which is where the backward map
amplifies high modes. The value at ``t = 0`` is not computed here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    CertificateUnavailable,
    ConstraintViolation,
    ContractionBudgetError,
    DivergingIteration,
    DomainError,
    IterationFailure,
)
from .fivp import PicardPolicy, SourceSpec, Trajectory, power_kernel_weights
from .kernels import (
    Convolution,
    Orders,
    OrdersDomain,
    TimeGrid,
    backward_multipliers,
    estimate_E_constant,
)
from .mlf import gamma_fn
from .spectrum import SpectralOperator

__all__ = [
    "WeightedSpace",
    "FfvpConstants",
    "compute_constants",
    "solve_ffvp",
    "weighted_norm",
    "upper_bound_certificate",
    "perturbation_response",
    "minimal_budget",
]


@dataclass(frozen=True)
class WeightedSpace:
    """Regularity ``s``, weight exponent ``rho`` and source singularity ``nu``."""

    s: float = 0.0
    rho: float = 0.0
    nu: float = 0.0

    def __post_init__(self):
        bad = []
        if self.s < 0:
            bad.append("s_negative")
        if not self.nu < 0.5 - self.rho:
            bad.append("nu_not_below_half_minus_rho")
        if not 1.0 - 2.0 * self.rho - 2.0 * self.nu > 0:
            bad.append("beta_argument_nonpositive")
        if bad:
            raise ConstraintViolation(bad, f"s={self.s}, rho={self.rho}, nu={self.nu}")

    def violations(self, orders: Orders) -> list[str]:
        bad = []
        if self.s > orders.beta / 2.0:
            bad.append("s_exceeds_beta_half")
        if self.rho < orders.alpha:
            bad.append("rho_below_alpha")
        if self.nu > orders.alpha / 2.0:
            bad.append("nu_exceeds_alpha_half")
        return bad


@dataclass(frozen=True)
class FfvpConstants:
    E0: float
    E: float
    K0: float
    contraction_factor: float
    L: float
    Theta_T: float
    alpha: float
    beta: float
    theta: float
    s: float
    rho: float

    def report(self) -> str:
        keys = ("E0", "E", "K0", "contraction_factor", "L", "Theta_T")
        return "\n".join(f"{k} = {format(getattr(self, k), '.17g')}" for k in keys) + "\n"


def _theta_alpha(orders: Orders, op: SpectralOperator, source: SourceSpec, grid: TimeGrid) -> np.ndarray:
    """``Theta_alpha(t_j) = int_0^{t_j} (t_j-tau)**(alpha-1) ||f(tau, 0)||**2 dtau`` on the nodes."""
    t = grid.nodes
    zero = np.zeros((t.size, op.n_modes))
    F0 = source.evaluate(op, t, zero)
    sq = np.sum(F0 * F0, axis=1)
    if not np.any(sq):
        return np.zeros_like(t)
    q = 2.0 * source.nu if source.kind != "zero" else 0.0
    # integrate tau**(-2nu) exactly and interpolate the regular factor
    reg = sq * np.where(t > 0, t, 0.0) ** q
    if q > 0:
        reg[0] = reg[1]
    out = np.zeros_like(t)
    for j in range(1, t.size):
        out[j] = float(np.dot(power_kernel_weights(orders.alpha, q, t, j), reg[: j + 1]))
    return out


def compute_constants(
    orders: Orders,
    op: SpectralOperator,
    space: WeightedSpace,
    T: float,
    source: SourceSpec,
    grid: TimeGrid | None = None,
    E: float | None = None,
) -> FfvpConstants:
    bad = space.violations(orders)
    if bad:
        raise ConstraintViolation(bad)
    alpha, beta = orders.alpha, orders.beta
    a = 1.0 - 2.0 * space.rho - 2.0 * space.nu
    try:
        E0 = gamma_fn(a) / gamma_fn(1.0 + alpha - 2.0 * space.rho - 2.0 * space.nu)
    except (DomainError, OverflowError) as exc:
        raise ConstraintViolation(["gamma_pole_in_E0"], str(exc)) from exc
    if E is None:
        E = estimate_E_constant(orders, op, T)
    theta = op.theta
    K0 = 1.0 / (theta ** (space.s - beta / 2.0) * math.sqrt(E0) * E * T ** (alpha / 2.0 - space.nu))
    kappa = source.kappa_s(op, space.s)
    factor = kappa * (1.0 + 1.0 / E) / K0
    grid = grid or TimeGrid.graded(T, 256, alpha)
    theta_alpha = _theta_alpha(orders, op, source, grid)
    Theta_T = float(np.max(grid.nodes ** (2.0 * space.rho) * theta_alpha))
    return FfvpConstants(
        E0=E0,
        E=E,
        K0=K0,
        contraction_factor=factor,
        L=math.sqrt(2.0) * factor,
        Theta_T=Theta_T,
        alpha=alpha,
        beta=beta,
        theta=theta,
        s=space.s,
        rho=space.rho,
    )


def weighted_norm(traj: Trajectory, s: float, rho: float, t_min: float = 0.0) -> float:
    """``sup_{t_j >= t_min, t_j > 0} t_j**rho ||u(t_j)||_s``."""
    keep = (traj.times > 0) & (traj.times >= t_min)
    return float(np.max(traj.times[keep] ** rho * traj.norms(s)[keep]))


def solve_ffvp(
    orders: Orders,
    op: SpectralOperator,
    phi,
    source: SourceSpec,
    grid: TimeGrid,
    space: WeightedSpace,
    policy: PicardPolicy = PicardPolicy(),
    force: bool = False,
    constants: FfvpConstants | None = None,
) -> Trajectory:
    """Fixed-point iteration from ``u0(t) = P(t) phi``; returns nodes ``t_1..t_M``.

    Raises :class:`ContractionBudgetError` when the contraction factor is not
    below one, unless ``force`` is set, in which case the result is marked
    ``certified = False``.
    """
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (op.n_modes,):
        raise DomainError("final data must have one coefficient per mode")
    if space.nu != source.nu and source.kind != "zero":
        raise ConstraintViolation(["source_nu_mismatch"], f"space nu={space.nu}, source nu={source.nu}")
    bad = source.violations(orders, op, space.s) + space.violations(orders)
    if bad:
        raise ConstraintViolation(sorted(set(bad)))
    constants = constants or compute_constants(orders, op, space, grid.T, source, grid)
    certified = constants.contraction_factor < 1.0
    if not certified and not force:
        raise ContractionBudgetError(constants.contraction_factor)

    t_all = grid.nodes
    t = t_all[1:]
    P = backward_multipliers(op.eigenvalues, orders, t, grid.T)
    U = P * phi[None, :]
    if source.is_trivial:
        return Trajectory(t, U, op, orders, source, [0.0], certified)

    rule = "singular" if (source.nu > 0 and source.kind != "zero") else "constant"
    conv = Convolution(op, orders, grid, rule, source.nu)
    weight = t**space.rho
    scale = 1.0 + grid.T**space.rho * float(op.sobolev_norm(phi, space.s))
    history: list[float] = []
    full = np.zeros((t_all.size, op.n_modes))
    for _ in range(policy.max_iters):
        full[1:] = U
        Q = conv.apply(source.evaluate(op, t_all, full))[1:]
        new = P * (phi - Q[-1])[None, :] + Q
        res = float(np.max(weight * op.sobolev_norm(new - U, space.s)))
        history.append(res)
        U = new
        if not np.all(np.isfinite(U)):
            raise DivergingIteration("backward iterates became non-finite", history)
        if len(history) >= 4 and all(history[-k] > history[-k - 1] for k in (1, 2, 3)):
            raise DivergingIteration("residual grew over three consecutive sweeps", history)
        if res <= policy.tol * scale:
            return Trajectory(t, U, op, orders, source, history, certified)
    raise IterationFailure(f"no convergence after {policy.max_iters} sweeps", history)


def upper_bound_certificate(constants: FfvpConstants, phi, op: SpectralOperator, T: float) -> float:
    """``(1-L)**-1 (E T**rho ||phi||_s + sqrt(2) (1+E) theta**(s-beta/2) (Theta_T/Gamma(alpha))**(1/2))``."""
    c = constants
    if not c.L < 1.0:
        raise CertificateUnavailable(f"L = {c.L:.6g} is not below 1")
    data = c.E * T**c.rho * float(op.sobolev_norm(phi, c.s))
    src = math.sqrt(2.0) * (1.0 + c.E) * c.theta ** (c.s - c.beta / 2.0) * math.sqrt(c.Theta_T / gamma_fn(c.alpha))
    return (data + src) / (1.0 - c.L)


def perturbation_response(
    orders: Orders,
    op: SpectralOperator,
    phi,
    delta_phi,
    t_min: float,
    source: SourceSpec,
    grid: TimeGrid,
    space: WeightedSpace,
    policy: PicardPolicy = PicardPolicy(),
) -> float:
    """``sup_{t_j >= t_min} ||u_{phi+dphi}(t_j) - u_phi(t_j)||_s / ||dphi||_s``."""
    if not t_min > 0:
        raise DomainError("t_min must be positive")
    delta_phi = np.asarray(delta_phi, dtype=float)
    size = float(op.sobolev_norm(delta_phi, space.s))
    if size == 0.0:
        return 0.0
    constants = compute_constants(orders, op, space, grid.T, source, grid)
    base = solve_ffvp(orders, op, phi, source, grid, space, policy, constants=constants)
    moved = solve_ffvp(orders, op, np.asarray(phi) + delta_phi, source, grid, space, policy, constants=constants)
    keep = base.times >= t_min
    diff = op.sobolev_norm(moved.coeffs[keep] - base.coeffs[keep], space.s)
    return float(np.max(diff)) / size


def minimal_budget(
    domain: OrdersDomain,
    op: SpectralOperator,
    space: WeightedSpace,
    T: float,
    n_grid: int = 32,
    n_samples: int = 100,
) -> float:
    """``K_m = min over the order box of K0 / (sqrt(2) (1 + 1/E))`` by a brute-force grid scan."""
    best = math.inf
    zero = SourceSpec.zero()
    for alpha in np.linspace(domain.alpha_lo, domain.alpha_hi, n_grid):
        if alpha > 1.0:
            continue
        for beta in np.linspace(domain.beta_lo, domain.beta_hi, n_grid):
            orders = Orders(float(alpha), float(beta))
            E = estimate_E_constant(orders, op, T, n_samples)
            c = compute_constants(orders, op, WeightedSpace(min(space.s, beta / 2.0), max(space.rho, alpha), space.nu), T, zero, TimeGrid(T, 1), E)
            best = min(best, c.K0 / (math.sqrt(2.0) * (1.0 + 1.0 / E)))
    return best
