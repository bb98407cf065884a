"""Closed-form reference solutions on round spheres.

Concentric round spheres are simultaneously distance surfaces and leaves of
the expanding H/R flow, and on them the lapse equation reduces to the ODE

    du/dr = (n - 2) (u - u^3) / (2 r)

in the area radius ``r`` (distance parametrisation).  Substituting
``w = u^-2`` makes it linear, which gives every reference below.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DomainError
from .grid import sphere_volume

DISTANCE = "distance"
HRFLOW = "hrflow"


def schwarzschild_lapse(m, r, n: int = 3):
    """``(1 - 2m / r^(n-2))^(-1/2)``, the lapse of the spatial Schwarzschild metric."""
    r = np.asarray(r, dtype=float)
    if m < 0:
        raise ValueError("mass must be non-negative")
    x = 2.0 * m / r ** (n - 2)
    if np.any(x >= 1):
        raise DomainError(f"radius inside the horizon (2m/r^(n-2) = {np.max(x):.6g})")
    u = 1.0 / np.sqrt(1.0 - x)
    return float(u) if u.ndim == 0 else u


def reduced_lapse_rhs(u, r, n: int = 3):
    """Right-hand side of the lapse ODE on concentric spheres, in the radius."""
    return (n - 2) * (u - u**3) / (2.0 * r)


def sphere_band_lapse(u0, r0, r, n: int = 3):
    """Solution of the reduced ODE with ``u(r0) = u0``."""
    r = np.asarray(r, dtype=float)
    w = 1.0 + (u0**-2 - 1.0) * (r0 / r) ** (n - 2)
    if np.any(w <= 0):
        raise DomainError("the lapse blows up before this radius")
    u = w**-0.5
    return float(u) if u.ndim == 0 else u


def schwarzschild_mass_function(m, r, n: int = 3):
    """``m(t)`` on the Schwarzschild band: ``(n-1) |S^(n-1)| r^(n-2) (1 - 1/u)``."""
    r = np.asarray(r, dtype=float)
    u = schwarzschild_lapse(m, r, n)
    return (n - 1) * sphere_volume(n - 1) * r ** (n - 2) * (1.0 - 1.0 / u)


def sphere_flow_radius(r0, t, n: int = 3):
    """Radius of a round sphere under the H/R flow: ``r0 exp(t / (n - 2))``."""
    if r0 <= 0:
        raise ValueError("r0 must be positive")
    return r0 * np.exp(np.asarray(t, dtype=float) / (n - 2))


@dataclass(frozen=True)
class SphereBandOracle:
    n: int = 3
    r0: float = 1.0
    mode: str = DISTANCE

    def __post_init__(self):
        if self.n < 3:
            raise ValueError("ambient dimension must be at least 3")
        if self.r0 <= 0:
            raise ValueError("r0 must be positive")
        if self.mode not in (DISTANCE, HRFLOW):
            raise ValueError(f"unknown band mode {self.mode!r}")

    def radius(self, t):
        if self.mode == DISTANCE:
            return self.r0 + np.asarray(t, dtype=float)
        return sphere_flow_radius(self.r0, t, self.n)


class BandFields(NamedTuple):
    scale: float
    H1: float
    hsq1: float
    K: float
    H1p: float
    eta: float


def sphere_band_fields(oracle: SphereBandOracle, t) -> BandFields:
    """Exact leaf data at time ``t``; ``scale`` multiplies the unit round metric."""
    n = oracle.n
    r = oracle.radius(t)
    one = np.ones_like(r)
    K = (n - 1) * (n - 2) / (2.0 * r * r)
    if oracle.mode == DISTANCE:
        vals = (r * r, (n - 1) / r, (n - 1) / r**2, K, -(n - 1) / r**2, one)
    else:
        vals = (r * r, (n - 1) / (n - 2) * one, (n - 1) / (n - 2) ** 2 * one, K, 0 * one, r / (n - 2))
    if np.ndim(r) == 0:
        vals = [float(v) for v in vals]
    return BandFields(*vals)


def brown_york_sphere(m, r=1.0):
    """``int (H_hat - H)`` for a round sphere of radius r in spatial Schwarzschild (n = 3)."""
    return 8 * math.pi * r * (1.0 - math.sqrt(1.0 - 2.0 * m / r))


__all__ = [
    "DISTANCE",
    "HRFLOW",
    "schwarzschild_lapse",
    "reduced_lapse_rhs",
    "sphere_band_lapse",
    "schwarzschild_mass_function",
    "sphere_flow_radius",
    "SphereBandOracle",
    "BandFields",
    "sphere_band_fields",
    "brown_york_sphere",
]
