"""Solution operators, the Volterra kernel and product-integration weights.

For one eigenvalue ``lam`` with ``c = lam**beta`` the kernel is
``K(s) = s**(alpha-1) E_{alpha,alpha}(-c s**alpha)`` with ``s = t - tau``.
Its primitives have closed forms that involve no cancellation:

* ``G(s) = int_0^s K = s**alpha E_{alpha,1+alpha}(-c s**alpha)``
* ``H(s) = int_0^s G = s**(1+alpha) E_{alpha,2+alpha}(-c s**alpha)``

so both moments of the kernel against a linear hat function are exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import roots_jacobi

from .errors import AmplificationOverflowError, ConstraintViolation, DomainError
from .mlf import gamma_fn, ml_array
from .spectrum import SpectralOperator

__all__ = [
    "Orders",
    "OrdersDomain",
    "TimeGrid",
    "propagator",
    "propagate",
    "kernel_E",
    "kernel_integral_exact",
    "backward_multiplier",
    "backward_multipliers",
    "estimate_E_constant",
    "Convolution",
    "convolve_Q",
]


@dataclass(frozen=True)
class Orders:
    """Fractional time order ``alpha`` in (0, 1] and operator power ``beta`` > 0."""

    alpha: float
    beta: float

    def __post_init__(self):
        bad = []
        if not (0.0 < self.alpha <= 1.0):
            bad.append("alpha_out_of_range")
        if not (self.beta > 0.0) or not math.isfinite(self.beta):
            bad.append("beta_nonpositive")
        if bad:
            raise ConstraintViolation(bad, f"alpha={self.alpha}, beta={self.beta}")


@dataclass(frozen=True)
class OrdersDomain:
    """Admissible box of orders used by the stability experiments."""

    alpha_lo: float
    alpha_hi: float
    beta_lo: float
    beta_hi: float

    def __post_init__(self):
        bad = []
        if not (0.0 < self.alpha_lo < self.alpha_hi < 2.0):
            bad.append("alpha_bounds_unordered")
        if not (self.alpha_hi < 2.0 * self.alpha_lo):
            bad.append("alpha_hi_exceeds_twice_alpha_lo")
        if not (0.0 < self.beta_lo < self.beta_hi):
            bad.append("beta_bounds_unordered")
        if bad:
            raise ConstraintViolation(bad)

    def contains(self, orders: Orders) -> bool:
        return (
            self.alpha_lo <= orders.alpha <= self.alpha_hi
            and self.beta_lo <= orders.beta <= self.beta_hi
        )


@dataclass(frozen=True)
class TimeGrid:
    """Graded nodes ``t_j = T (j/M)**grading``, j = 0..M."""

    T: float
    M: int
    grading: float = 1.0

    def __post_init__(self):
        if not (self.T > 0) or self.M < 1 or not (self.grading >= 1.0):
            raise DomainError("grid needs T > 0, M >= 1 and grading >= 1")

    @classmethod
    def graded(cls, T: float, M: int, alpha: float, grading: float | None = None) -> "TimeGrid":
        g = min(2.0 / alpha, 4.0) if grading is None else grading
        return cls(float(T), int(M), float(g))

    @property
    def nodes(self) -> np.ndarray:
        j = np.arange(self.M + 1, dtype=float)
        t = self.T * (j / self.M) ** self.grading
        t[-1] = self.T
        return t


# ---------------------------------------------------------------------------
# pointwise operators


def propagator(op: SpectralOperator, orders: Orders, times) -> np.ndarray:
    """``E_alpha(-lam_k**beta t**alpha)`` for every time (rows) and mode (columns)."""
    t = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(t < 0):
        raise DomainError("times must be non-negative")
    c = op.eigenvalues**orders.beta
    x = c[None, :] * t[:, None] ** orders.alpha
    return ml_array(orders.alpha, 1.0, -x)


def propagate(op: SpectralOperator, orders: Orders, coeffs, t: float) -> np.ndarray:
    coeffs = np.asarray(coeffs, dtype=float)
    if t == 0:
        return coeffs.copy()
    return propagator(op, orders, [t])[0] * coeffs


def kernel_E(orders: Orders, lam: float, t: float, tau: float) -> float:
    if not tau < t:
        raise DomainError("kernel needs tau < t")
    s = t - tau
    x = lam**orders.beta * s**orders.alpha
    return float(s ** (orders.alpha - 1.0) * ml_array(orders.alpha, orders.alpha, -x))


def kernel_integral_exact(orders: Orders, lam: float, t1: float, t2: float) -> float:
    """``int_{t1}^{t2} K(t2 - tau) dtau = (1 - E_alpha(-lam**beta (t2-t1)**alpha)) / lam**beta``."""
    if not t1 < t2:
        raise DomainError("need t1 < t2")
    s = t2 - t1
    x = lam**orders.beta * s**orders.alpha
    return float(s**orders.alpha * ml_array(orders.alpha, 1.0 + orders.alpha, -x))


def backward_multiplier(orders: Orders, lam: float, t: float, T: float) -> float:
    return float(backward_multipliers(np.array([lam]), orders, np.array([t]), T)[0, 0])


def backward_multipliers(eigenvalues, orders: Orders, times, T: float) -> np.ndarray:
    """``E_alpha(-lam**beta t**alpha) / E_alpha(-lam**beta T**alpha)``; rows = times."""
    lam = np.asarray(eigenvalues, dtype=float)
    t = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(t <= 0) or np.any(t > T * (1 + 1e-14)):
        raise DomainError("backward multiplier needs 0 < t <= T")
    c = lam**orders.beta
    denom = ml_array(orders.alpha, 1.0, -c * T**orders.alpha)
    num = ml_array(orders.alpha, 1.0, -c[None, :] * t[:, None] ** orders.alpha)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        out = num / denom[None, :]
    bad = np.nonzero(~(denom > 1e-300) | ~np.all(np.isfinite(out), axis=0))[0]
    if bad.size:
        raise AmplificationOverflowError(float(lam[bad[0]]), T, (bad + 1).tolist(), int(bad[0]))
    return out


def estimate_E_constant(
    orders: Orders, op: SpectralOperator, T: float, n_samples: int = 100, times=None
) -> float:
    """Empirical ``sup P(t) (t/T)**alpha`` over sampled (lam, t), times 1.05."""
    if n_samples < 100:
        raise DomainError("estimate_E_constant needs at least 100 samples")
    lo, hi = op.theta, float(op.eigenvalues[-1])
    lam = np.array([lo]) if hi == lo else np.geomspace(lo, hi, n_samples)
    if times is None:
        t = np.geomspace(T * 1e-10, T, n_samples)
    else:
        t = np.asarray(times, dtype=float)
    P = backward_multipliers(lam, orders, t, T)
    vals = P * (t[:, None] / T) ** orders.alpha
    return 1.05 * float(np.max(vals))


# ---------------------------------------------------------------------------
# product integration


def _primitives(alpha: float, c: np.ndarray, s: np.ndarray):
    """G(s), H(s) for eigen-power c (broadcast against s)."""
    s = np.asarray(s, dtype=float)
    x = c * s**alpha
    G = s**alpha * ml_array(alpha, 1.0 + alpha, -x)
    H = s ** (1.0 + alpha) * ml_array(alpha, 2.0 + alpha, -x)
    return G, H


def _singular_first_panel(alpha: float, nu: float, c: np.ndarray, t1: float, targets: np.ndarray):
    """``t1**nu int_0^t1 K(t - tau) tau**(-nu) dtau`` for each target t >= t1 (rows) and mode."""
    out = np.empty((targets.size, c.size))
    on = np.isclose(targets, t1, rtol=0, atol=0)
    if on.any():
        # separable case: the Beta integral sums to an ML function
        val = t1**alpha * gamma_fn(1.0 - nu) * ml_array(alpha, alpha + 1.0 - nu, -c * t1**alpha)
        out[on] = val[None, :]
    off = ~on
    if off.any():
        jx, jw = roots_jacobi(16, 0.0, -nu)
        tau = 0.5 * t1 * (jx + 1.0)
        wq = (0.5 * t1) ** (1.0 - nu) * jw
        s = targets[off, None] - tau[None, :]
        x = c[None, None, :] * s[:, :, None] ** alpha
        K = s[:, :, None] ** (alpha - 1.0) * ml_array(alpha, alpha, -x)
        out[off] = t1**nu * np.einsum("q,tqk->tk", wq, K)
    return out


class Convolution:
    """Product-integration weights for ``Q(F)(t_j) = int_0^{t_j} K(t_j - tau) F(tau) dtau``.

    ``first_panel`` controls the treatment of ``[t_0, t_1]``:

    * ``"linear"``: F interpolated linearly between t_0 and t_1;
    * ``"constant"``: F taken equal to its value at t_1 (no value at t_0);
    * ``"singular"``: F behaves like ``(t_1/tau)**nu F(t_1)`` there.
    """

    _STORE_LIMIT = 40_000_000

    def __init__(
        self,
        op: SpectralOperator,
        orders: Orders,
        grid: TimeGrid,
        first_panel: str = "linear",
        nu: float = 0.0,
    ):
        if first_panel not in ("linear", "constant", "singular"):
            raise DomainError(f"unknown first-panel rule {first_panel!r}")
        if first_panel == "singular" and not (0.0 < nu < 1.0):
            raise DomainError("singular first panel needs 0 < nu < 1")
        self.op = op
        self.orders = orders
        self.grid = grid
        self.first_panel = first_panel
        self.nu = nu
        self.nodes = grid.nodes
        self.c = op.eigenvalues**orders.beta
        self._W: np.ndarray | None = None

    # -- weights ------------------------------------------------------------

    def _rows(self, j_lo: int, j_hi: int) -> np.ndarray:
        """Weights for node targets j_lo..j_hi-1, shape (rows, M+1, N)."""
        t = self.nodes
        M = self.grid.M
        alpha = self.orders.alpha
        c = self.c
        rows = np.arange(j_lo, j_hi)
        W = np.zeros((rows.size, M + 1, c.size))
        s = t[rows, None] - t[None, :]
        mask = s > 0
        ss = s[mask]
        G = np.zeros(s.shape + (c.size,))
        H = np.zeros_like(G)
        g_vals, h_vals = _primitives(alpha, c[None, :], ss[:, None])
        G[mask] = g_vals
        H[mask] = h_vals
        h = np.diff(t)
        # panel i spans [t_i, t_{i+1}]; its entries vanish once t_i >= t_j
        m0 = G[:, :-1] - G[:, 1:]
        m1 = (H[:, :-1] - H[:, 1:]) / h[None, :, None] - G[:, 1:]
        W[:, :-1] += m0 - m1
        W[:, 1:] += m1
        if self.first_panel == "constant":
            W[:, 1] += W[:, 0]
            W[:, 0] = 0.0
        elif self.first_panel == "singular":
            W[:, 1] -= m1[:, 0]
            W[:, 0] = 0.0
            live = rows >= 1
            W[live, 1] += _singular_first_panel(alpha, self.nu, c, t[1], t[rows[live]])
        W[rows == 0] = 0.0
        return W

    def _row_blocks(self):
        M = self.grid.M
        per_row = (M + 1) * self.c.size
        block = max(1, int(3_000_000 // per_row))
        for j_lo in range(0, M + 1, block):
            yield j_lo, min(M + 1, j_lo + block)

    @property
    def weights(self) -> np.ndarray:
        if self._W is None:
            M = self.grid.M
            size = (M + 1) ** 2 * self.c.size
            if size > self._STORE_LIMIT:
                raise MemoryError("weight tensor too large to store; use apply()")
            W = np.empty((M + 1, M + 1, self.c.size))
            for j_lo, j_hi in self._row_blocks():
                W[j_lo:j_hi] = self._rows(j_lo, j_hi)
            self._W = W
        return self._W

    def apply(self, F: np.ndarray) -> np.ndarray:
        """Q at every node; F has shape (M+1, N) (row 0 ignored unless linear)."""
        F = np.asarray(F, dtype=float)
        M = self.grid.M
        if F.shape != (M + 1, self.c.size):
            raise DomainError("source samples must have shape (M+1, N)")
        if self.first_panel != "linear":
            F = F.copy()
            F[0] = 0.0
        size = (M + 1) ** 2 * self.c.size
        if size <= self._STORE_LIMIT:
            return np.einsum("jik,ik->jk", self.weights, F)
        out = np.empty_like(F)
        for j_lo, j_hi in self._row_blocks():
            out[j_lo:j_hi] = np.einsum("jik,ik->jk", self._rows(j_lo, j_hi), F)
        return out

    def weights_at(self, t: float) -> np.ndarray:
        """Weights (M+1, N) for an arbitrary target time 0 < t <= T."""
        nodes = self.nodes
        if not (0.0 < t <= self.grid.T):
            raise DomainError("target time must lie in (0, T]")
        alpha = self.orders.alpha
        c = self.c
        m = int(np.searchsorted(nodes, t, side="left"))  # nodes[m-1] < t <= nodes[m]
        local = np.append(nodes[:m], t)
        s = t - local
        G, H = _primitives(alpha, c[None, :], s[:, None])
        G[-1] = 0.0
        H[-1] = 0.0
        h = np.diff(local)
        m0 = G[:-1] - G[1:]
        m1 = (H[:-1] - H[1:]) / h[:, None] - G[1:]
        w_local = np.zeros((local.size, c.size))
        w_local[:-1] += m0 - m1
        w_local[1:] += m1
        W = np.zeros((self.grid.M + 1, c.size))
        W[: m] += w_local[:-1]
        # the value at t is interpolated from nodes m-1 and m
        lam = (t - nodes[m - 1]) / (nodes[m] - nodes[m - 1])
        W[m - 1] += (1.0 - lam) * w_local[-1]
        W[m] += lam * w_local[-1]
        if self.first_panel == "constant":
            W[1] += W[0]
            W[0] = 0.0
        elif self.first_panel == "singular":
            W[:] = 0.0
            if m == 1:
                # target inside the first panel: F ~ (t_1/tau)**nu F_1 on [0, t]
                W[1] = (nodes[1] ** self.nu * t ** (alpha - self.nu) * gamma_fn(1.0 - self.nu)
                        * ml_array(alpha, alpha + 1.0 - self.nu, -c * t**alpha))
                return W
            W[1:m] += w_local[1:-1]
            W[1] -= m1[0]
            W[m - 1] += (1.0 - lam) * w_local[-1]
            W[m] += lam * w_local[-1]
            W[1] += _singular_first_panel(alpha, self.nu, c, nodes[1], np.array([t]))[0]
        return W

    def at(self, t: float, F: np.ndarray) -> np.ndarray:
        F = np.asarray(F, dtype=float)
        if self.first_panel != "linear":
            F = F.copy()
            F[0] = 0.0
        return np.einsum("ik,ik->k", self.weights_at(t), F)


def convolve_Q(op: SpectralOperator, orders: Orders, grid: TimeGrid, samples, first_panel: str = "linear", nu: float = 0.0) -> np.ndarray:
    """Product-integration approximation of Q(F) at every grid node."""
    return Convolution(op, orders, grid, first_panel, nu).apply(samples)
