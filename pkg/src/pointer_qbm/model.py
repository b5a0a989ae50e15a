"""Dimensionless parametrization of quantum Brownian motion.

Everything downstream consumes only ``kappa = k_B T_env / (2 gamma hbar)``.
Physical inputs (mass, temperature, friction) are optional and only used
to report the time, length and momentum units.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional


class DomainError(ValueError):
    """Raised when an input lies outside the domain of an operation."""


class DimensionlessOnlyError(DomainError):
    """Raised when physical scales are requested but no physical inputs exist."""


@dataclass(frozen=True)
class PhysicalInputs:
    mass: float
    temperature: float
    friction: float
    k_B: float = 1.0

    def __post_init__(self):
        for name in ("mass", "temperature", "friction", "k_B"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive, got {getattr(self, name)!r}")


@dataclass(frozen=True)
class Scales:
    T: float
    L: float
    P: float


@dataclass(frozen=True)
class ModelParams:
    kappa: float
    physical: Optional[PhysicalInputs] = None
    hbar: Optional[float] = field(default=None, compare=False)

    def __post_init__(self):
        if not (self.kappa > 0 and math.isfinite(self.kappa)):
            raise DomainError(f"kappa must be positive and finite, got {self.kappa!r}")

    @classmethod
    def from_physical(cls, mass, temperature, friction, hbar, k_B=1.0) -> "ModelParams":
        phys = PhysicalInputs(mass, temperature, friction, k_B)
        kappa = kappa_from_physical(mass, temperature, friction, hbar, k_B=k_B)
        return cls(kappa=kappa, physical=phys, hbar=hbar)


@dataclass(frozen=True)
class Moments:
    """First and second moments of a wave packet.

    ``cov_xp`` is <{x, p}> - 2 <x><p>, i.e. twice the symmetrized covariance.
    """

    mean_x: float
    mean_p: float
    var_x: float
    var_p: float
    cov_xp: float

    def as_tuple(self):
        return (self.mean_x, self.mean_p, self.var_x, self.var_p, self.cov_xp)

    def uncertainty_excess(self, kappa: float) -> float:
        """4 V_x V_p - 1/kappa^2 - C_xp^2; zero for Gaussians, >= 0 for any state."""
        return 4.0 * self.var_x * self.var_p - 1.0 / kappa**2 - self.cov_xp**2


def scales(params: ModelParams) -> Scales:
    """Time, length and momentum units for the given physical inputs."""
    phys = params.physical
    if phys is None:
        raise DimensionlessOnlyError(
            "dimensionless-only mode: no physical inputs (mass, temperature, friction)"
        )
    T = 1.0 / (2.0 * phys.friction)
    thermal = phys.k_B * phys.temperature
    return Scales(T=T, L=T * math.sqrt(thermal / phys.mass), P=math.sqrt(phys.mass * thermal))


def kappa_from_physical(m, T_env, gamma, hbar, k_B=1.0) -> float:
    for name, v in (("m", m), ("T_env", T_env), ("gamma", gamma), ("hbar", hbar), ("k_B", k_B)):
        if not v > 0:
            raise DomainError(f"{name} must be positive, got {v!r}")
    return k_B * T_env / (2.0 * gamma * hbar)


def kappa_from_scales(s: Scales, hbar: float) -> float:
    """Recover kappa from reported units (L * P = T * k_B * T_env)."""
    return s.L * s.P / hbar
