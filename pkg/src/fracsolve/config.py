"""TOML run configuration with load-time validation of every cross-field constraint.

Grammar (all sections optional unless a subcommand needs them)::

    seed = 0

    [operator]   kind = "laplacian" | "explicit"; n_modes; collocation; eigenvalues = [...]
    [orders]     alpha; beta
    [domain]     alpha_lo; alpha_hi; beta_lo; beta_hi
    [grid]       T; M; grading
    [initial]    coefficients = [...]  or  amplitude, power  (c_k = amplitude / k**power)
    [final]      same keys as [initial], or from_forward = true
    [source]     kind = "zero" | "linear" | "pointwise"; c; g = "sin" | "tanh" | "square";
                 amplitude; lipschitz; nu; kappa
    [space]      s; rho; nu
    [policy]     tol; max_iters; divergence_factor
    [experiment] eps = [...] or eps_hi, eps_lo, n_eps; alpha_share; r1; r2; r; sigma;
                 holder_window = [lo, hi]; modes = [...]
    [output]     mode = "coefficients" | "norms"; s
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError, ConstraintViolation, DomainError
from .ffvp import WeightedSpace
from .fivp import PicardPolicy, SourceSpec
from .kernels import Orders, OrdersDomain, TimeGrid
from .spectrum import SpectralOperator

__all__ = ["RunConfig", "load_config", "parse_config", "POINTWISE_MAPS"]


def _sin(a):
    return lambda u: a * np.sin(u)


def _tanh(a):
    return lambda u: a * np.tanh(u)


def _square(a):
    return lambda u: a * np.asarray(u) ** 2


# name -> (factory, Lipschitz constant on the whole line or None if unbounded)
POINTWISE_MAPS = {
    "sin": (_sin, lambda a: abs(a)),
    "tanh": (_tanh, lambda a: abs(a)),
    "square": (_square, lambda a: None),
}


@dataclass
class ExperimentSpec:
    eps: tuple[float, ...] = tuple(np.logspace(-1, -4, 7))
    alpha_share: float = 0.5
    r1: float = 1.0
    r2: float = 1.0
    r: float = 1.0
    sigma: float = 0.0
    holder_window: tuple[float, float] = (1e-9, 1e-5)
    modes: tuple[int, ...] = (2, 4, 8, 16, 32)


@dataclass
class RunConfig:
    op: SpectralOperator
    orders: Orders
    grid: TimeGrid
    source: SourceSpec
    space: WeightedSpace
    policy: PicardPolicy
    experiment: ExperimentSpec
    zeta: np.ndarray | None = None
    phi: np.ndarray | None = None
    phi_from_forward: bool = False
    domain: OrdersDomain | None = None
    output_mode: str = "coefficients"
    output_s: float = 0.0
    seed: int = 0
    raw: dict = field(default_factory=dict, repr=False)

    def summary(self) -> dict[str, Any]:
        """Plain-value view used for snapshot comparisons."""
        return {
            "operator": {"kind": self.op.kind, "n_modes": self.op.n_modes, "collocation": self.op.collocation},
            "orders": {"alpha": self.orders.alpha, "beta": self.orders.beta},
            "grid": {"T": self.grid.T, "M": self.grid.M, "grading": self.grid.grading},
            "source": {"kind": self.source.kind, "c": self.source.c, "nu": self.source.nu, "kappa": self.source.kappa},
            "space": {"s": self.space.s, "rho": self.space.rho, "nu": self.space.nu},
            "policy": {"tol": self.policy.tol, "max_iters": self.policy.max_iters, "divergence_factor": self.policy.divergence_factor},
            "zeta": None if self.zeta is None else [float(x) for x in self.zeta],
            "phi_from_forward": self.phi_from_forward,
            "domain": None if self.domain is None else [self.domain.alpha_lo, self.domain.alpha_hi, self.domain.beta_lo, self.domain.beta_hi],
            "experiment": {"eps": [float(e) for e in self.experiment.eps], "r": self.experiment.r, "alpha_share": self.experiment.alpha_share},
            "output": {"mode": self.output_mode, "s": self.output_s},
            "seed": self.seed,
        }


def load_config(path) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        data = tomllib.loads(p.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{p}: parse error: {exc}") from exc
    return parse_config(data)


class _Collector:
    """Gathers constraint names from several constructors before failing once."""

    def __init__(self):
        self.names: list[str] = []
        self.details: list[str] = []

    def attempt(self, fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConstraintViolation as exc:
            self.names.extend(exc.names)
        except DomainError as exc:
            self.names.append("invalid_value")
            self.details.append(str(exc))
        return None


def _coefficients(section: dict, n: int, name: str, bad: _Collector) -> np.ndarray | None:
    if "coefficients" in section:
        c = np.asarray(section["coefficients"], dtype=float)
        if c.shape != (n,):
            bad.names.append(f"{name}_length_mismatch")
            return None
        return c
    amp = float(section.get("amplitude", 1.0))
    power = float(section.get("power", 2.0))
    k = np.arange(1, n + 1, dtype=float)
    return amp / k**power


def _source(sec: dict, bad: _Collector) -> SourceSpec | None:
    kind = sec.get("kind", "zero")
    nu = float(sec.get("nu", 0.0))
    if kind == "zero":
        return SourceSpec.zero()
    if kind == "linear":
        return bad.attempt(SourceSpec, "linear", c=float(sec.get("c", 0.0)), nu=nu, kappa=sec.get("kappa"))
    if kind == "pointwise":
        name = sec.get("g", "sin")
        if name not in POINTWISE_MAPS:
            bad.names.append("unknown_pointwise_map")
            return None
        factory, lip = POINTWISE_MAPS[name]
        amp = float(sec.get("amplitude", 1.0))
        declared = sec.get("lipschitz", lip(amp))
        if declared is None:
            bad.names.append("lipschitz_required")
            return None
        return bad.attempt(SourceSpec, "pointwise", g=factory(amp), lipschitz=float(declared), nu=nu, kappa=sec.get("kappa"))
    bad.names.append("unknown_source_kind")
    return None


def parse_config(data: dict) -> RunConfig:
    bad = _Collector()
    op_sec = data.get("operator", {})
    kind = op_sec.get("kind", "laplacian")
    if kind == "laplacian":
        op = bad.attempt(SpectralOperator.dirichlet_laplacian, int(op_sec.get("n_modes", 32)), int(op_sec.get("collocation", 0)))
    elif kind == "explicit":
        op = bad.attempt(SpectralOperator.explicit, op_sec.get("eigenvalues", []))
    else:
        bad.names.append("unknown_operator_kind")
        op = None

    ord_sec = data.get("orders", {})
    orders = bad.attempt(Orders, float(ord_sec.get("alpha", 0.5)), float(ord_sec.get("beta", 1.0)))

    domain = None
    if "domain" in data:
        d = data["domain"]
        domain = bad.attempt(OrdersDomain, float(d["alpha_lo"]), float(d["alpha_hi"]), float(d["beta_lo"]), float(d["beta_hi"]))
        if domain is not None and orders is not None and not domain.contains(orders):
            bad.names.append("orders_outside_domain")

    g_sec = data.get("grid", {})
    grid = None
    if orders is not None:
        grid = bad.attempt(TimeGrid.graded, float(g_sec.get("T", 1.0)), int(g_sec.get("M", 256)), orders.alpha, g_sec.get("grading"))

    source = _source(data.get("source", {}), bad)
    sp = data.get("space", {})
    space = bad.attempt(WeightedSpace, float(sp.get("s", 0.0)), float(sp.get("rho", 0.0)), float(sp.get("nu", source.nu if source else 0.0)))
    pol = data.get("policy", {})
    policy = bad.attempt(PicardPolicy, float(pol.get("tol", 1e-10)), int(pol.get("max_iters", 200)), float(pol.get("divergence_factor", 1e6)))

    ex = data.get("experiment", {})
    if "eps" in ex:
        eps = tuple(float(e) for e in ex["eps"])
    else:
        eps = tuple(np.logspace(math.log10(ex.get("eps_hi", 1e-1)), math.log10(ex.get("eps_lo", 1e-4)), int(ex.get("n_eps", 7))))
    experiment = ExperimentSpec(
        eps=eps,
        alpha_share=float(ex.get("alpha_share", 0.5)),
        r1=float(ex.get("r1", 1.0)),
        r2=float(ex.get("r2", 1.0)),
        r=float(ex.get("r", 1.0)),
        sigma=float(ex.get("sigma", 0.0)),
        holder_window=tuple(ex.get("holder_window", (1e-9, 1e-5))),
        modes=tuple(int(m) for m in ex.get("modes", (2, 4, 8, 16, 32))),
    )

    out = data.get("output", {})
    mode = out.get("mode", "coefficients")
    if mode not in ("coefficients", "norms"):
        bad.names.append("unknown_output_mode")

    zeta = phi = None
    phi_from_forward = False
    if op is not None:
        if "initial" in data:
            zeta = _coefficients(data["initial"], op.n_modes, "initial", bad)
        if "final" in data:
            fin = data["final"]
            phi_from_forward = bool(fin.get("from_forward", False))
            if phi_from_forward and zeta is None:
                bad.names.append("from_forward_needs_initial")
            elif not phi_from_forward:
                phi = _coefficients(fin, op.n_modes, "final", bad)

    # cross-field constraints
    if None not in (orders, op, source):
        s_index = space.s if space is not None else 0.0
        bad.names.extend(source.violations(orders, op, s_index))
    if None not in (orders, space) and ("final" in data):
        bad.names.extend(space.violations(orders))
    if space is not None and source is not None and source.kind != "zero" and space.nu != source.nu:
        bad.names.append("source_nu_mismatch")

    if bad.names:
        names = list(dict.fromkeys(bad.names))
        raise ConstraintViolation(names, "; ".join(bad.details))
    return RunConfig(
        op=op,
        orders=orders,
        grid=grid,
        source=source,
        space=space,
        policy=policy,
        experiment=experiment,
        zeta=zeta,
        phi=phi,
        phi_from_forward=phi_from_forward,
        domain=domain,
        output_mode=mode,
        output_s=float(out.get("s", 0.0)),
        seed=int(data.get("seed", 0)),
        raw=data,
    )
