"""Truncated diagonal operators and their sine-basis transforms."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.fft import dst

from .errors import DomainError

__all__ = ["SpectralOperator", "fmt17"]


def fmt17(x: float) -> str:
    """Round-trippable float formatting used in every CSV."""
    return format(float(x), ".17g")


@dataclass(frozen=True)
class SpectralOperator:
    """A positive self-adjoint operator truncated to its first N eigenpairs.

    ``kind`` is ``"laplacian"`` for the Dirichlet Laplacian on (0, 1), where
    the eigenfunctions are ``sqrt(2) sin(k pi x)``, or ``"explicit"`` when only
    the eigenvalues are known.
    """

    eigenvalues: np.ndarray
    kind: str = "explicit"
    collocation: int = 0

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues, dtype=float)
        if lam.ndim != 1 or lam.size == 0:
            raise DomainError("eigenvalues must be a non-empty 1-D array")
        if not np.all(np.isfinite(lam)) or np.any(lam <= 0):
            raise DomainError("eigenvalues must be finite and positive")
        if np.any(np.diff(lam) <= 0):
            raise DomainError("eigenvalues must be strictly increasing")
        lam.setflags(write=False)
        object.__setattr__(self, "eigenvalues", lam)
        if self.kind not in ("laplacian", "explicit"):
            raise DomainError(f"unknown operator kind {self.kind!r}")
        n = lam.size
        coll = self.collocation or 2 * n
        if coll < 2 * n:
            raise DomainError("collocation size must be at least twice the mode count")
        object.__setattr__(self, "collocation", coll)

    @classmethod
    def dirichlet_laplacian(cls, n_modes: int, collocation: int = 0) -> "SpectralOperator":
        if n_modes < 1:
            raise DomainError("need at least one mode")
        k = np.arange(1, n_modes + 1, dtype=float)
        return cls((k * math.pi) ** 2, "laplacian", collocation)

    @classmethod
    def explicit(cls, values) -> "SpectralOperator":
        return cls(np.asarray(values, dtype=float), "explicit")

    @property
    def n_modes(self) -> int:
        return self.eigenvalues.size

    @property
    def theta(self) -> float:
        """Smallest eigenvalue."""
        return float(self.eigenvalues[0])

    def sobolev_norm(self, coeffs, s: float = 0.0):
        """``(sum lam**(2s) c**2)**(1/2)`` along the last axis."""
        c = np.asarray(coeffs, dtype=float)
        w = self.eigenvalues ** (2.0 * s)
        return np.sqrt(np.sum(w * c * c, axis=-1))

    def apply_power(self, coeffs, beta: float) -> np.ndarray:
        return self.eigenvalues**beta * np.asarray(coeffs, dtype=float)

    # -- physical space ---------------------------------------------------

    def _require_basis(self) -> None:
        if self.kind != "laplacian":
            raise DomainError("physical-space transforms need the Laplacian basis")

    def grid(self) -> np.ndarray:
        n = self.collocation
        return np.arange(1, n + 1) / (n + 1.0)

    def synthesize(self, coeffs) -> np.ndarray:
        """Mode coefficients to samples on :meth:`grid` (last axis)."""
        self._require_basis()
        c = np.asarray(coeffs, dtype=float)
        pad = np.zeros(c.shape[:-1] + (self.collocation,))
        pad[..., : self.n_modes] = c
        # DST-I: y_j = 2 sum_k c_k sin(pi j k / (n+1))
        return dst(pad, type=1, axis=-1) / math.sqrt(2.0)

    def analyze(self, values) -> np.ndarray:
        """Samples on :meth:`grid` to the first N coefficients (last axis)."""
        self._require_basis()
        u = np.asarray(values, dtype=float)
        if u.shape[-1] != self.collocation:
            raise DomainError("sample count does not match the collocation size")
        full = dst(u, type=1, axis=-1) / (math.sqrt(2.0) * (self.collocation + 1.0))
        return full[..., : self.n_modes]

    def modes_csv(self, coeffs) -> str:
        """Rows ``k, lambda_k, c_k``."""
        lines = ["k,lambda,coefficient"]
        for k, (lam, c) in enumerate(zip(self.eigenvalues, np.asarray(coeffs, dtype=float)), start=1):
            lines.append(f"{k},{fmt17(lam)},{fmt17(c)}")
        return "\n".join(lines) + "\n"
