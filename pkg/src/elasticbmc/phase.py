"""Geometry of warping functions on the unit Hilbert sphere.

Every warp gamma is represented by psi = sqrt(gamma'), a unit-norm function
in L2[0, 1].  Tangent vectors ("shooting vectors") are taken at the identity
psi = 1, the only base point supported here.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .grid import Grid, _frozen

log = logging.getLogger(__name__)

__all__ = [
    "WarpingFunction",
    "SrsfPsi",
    "ShootingVector",
    "identity_warp",
    "gamma_to_psi",
    "psi_to_gamma",
    "phase_distance",
    "exp_map_identity",
    "inv_exp_map",
    "gamma_to_shooting",
    "shooting_to_gamma",
    "project_tangent",
    "InjectivityError",
]

TANGENCY_TOL = 1e-6
_SERIES_CUTOFF = 1e-4


class InjectivityError(ValueError):
    """A tangent vector or sphere point is outside the invertible domain."""


def _check_unit(grid: Grid):
    if abs(grid.lo) > 1e-12 or abs(grid.hi - 1.0) > 1e-12:
        raise ValueError("warping-related grids must span [0, 1]")


def _norm(values, t) -> float:
    return float(np.sqrt(max(np.trapezoid(values * values, t), 0.0)))


@dataclass(frozen=True, eq=False)
class WarpingFunction:
    """Boundary-pinned nondecreasing map of [0, 1] onto itself."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        _check_unit(self.grid)
        vals = _frozen(self.values)
        if vals.shape != (len(self.grid),):
            raise ValueError("warp values must match the grid length")
        if not np.all(np.isfinite(vals)):
            raise ValueError("warp values must be finite")
        if vals[0] != 0.0 or vals[-1] != 1.0:
            raise ValueError("warp must satisfy gamma(0) = 0 and gamma(1) = 1")
        if np.any(np.diff(vals) < 0):
            raise ValueError("warp must be nondecreasing")
        if vals.min() < 0.0 or vals.max() > 1.0:
            raise ValueError("warp values must lie in [0, 1]")
        object.__setattr__(self, "values", vals)

    @property
    def t(self) -> np.ndarray:
        return self.grid.points

    def derivative(self) -> np.ndarray:
        return np.gradient(self.values, self.grid.points, edge_order=1)

    def inverse(self) -> "WarpingFunction":
        # Repair beforehand guarantees strict increase, so swapping axes is valid.
        inv = np.interp(self.t, self.values, self.t)
        inv[0], inv[-1] = 0.0, 1.0
        return WarpingFunction(self.grid, np.maximum.accumulate(inv))


def identity_warp(grid: Grid) -> WarpingFunction:
    return WarpingFunction(grid, grid.points.copy())


def repair_warp(values: np.ndarray, eps: float = 1e-8) -> np.ndarray:
    """Force strict increase by eps-clamping, then renormalize to [0, 1]."""
    g = np.array(values, dtype=float)
    g[0] = 0.0
    for i in range(1, g.size):
        if g[i] < g[i - 1] + eps:
            g[i] = g[i - 1] + eps
    g = g / g[-1]
    g[0], g[-1] = 0.0, 1.0
    return g


@dataclass(frozen=True, eq=False)
class SrsfPsi:
    """Unit-norm, nonnegative point on the Hilbert sphere.

    Values are renormalized on construction; the factor is logged at debug
    level since it only reflects quadrature drift.
    """

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        _check_unit(self.grid)
        vals = np.array(self.values, dtype=float)
        if vals.shape != (len(self.grid),) or not np.all(np.isfinite(vals)):
            raise ValueError("psi values must be finite and match the grid")
        if vals.min() < -1e-10:
            raise InjectivityError("psi leaves the positive orthant")
        vals = np.maximum(vals, 0.0)
        nrm = _norm(vals, self.grid.points)
        if nrm == 0.0:
            raise ValueError("psi has zero norm")
        if abs(nrm - 1.0) > 1e-12:
            log.debug("renormalizing psi by factor %.3e", 1.0 / nrm)
        object.__setattr__(self, "values", _frozen(vals / nrm))


@dataclass(frozen=True, eq=False)
class ShootingVector:
    """Tangent vector at the identity; must integrate to zero and have norm < pi."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        _check_unit(self.grid)
        vals = _frozen(self.values)
        if vals.shape != (len(self.grid),) or not np.all(np.isfinite(vals)):
            raise ValueError("shooting vector values must be finite and match the grid")
        mean = float(np.trapezoid(vals, self.grid.points))
        if abs(mean) > TANGENCY_TOL:
            raise ValueError(
                f"not tangent at the identity: integral {mean:.3e} exceeds {TANGENCY_TOL}"
            )
        if _norm(vals, self.grid.points) >= np.pi:
            raise InjectivityError("shooting vector norm must be below pi")
        object.__setattr__(self, "values", vals)

    @property
    def norm(self) -> float:
        return _norm(self.values, self.grid.points)


def project_tangent(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Remove the component along psi = 1 (its mean over [0, 1])."""
    values = np.asarray(values, dtype=float)
    return values - np.trapezoid(values, grid.points)


def gamma_to_psi(gamma: WarpingFunction) -> SrsfPsi:
    dg = gamma.derivative()
    if np.any(dg <= 0):
        raise ValueError("warp derivative must be positive everywhere")
    return SrsfPsi(gamma.grid, np.sqrt(dg))


def psi_to_gamma(psi: SrsfPsi) -> WarpingFunction:
    g = cumulative_trapezoid(psi.values ** 2, psi.grid.points, initial=0.0)
    g = g / g[-1]
    g[0], g[-1] = 0.0, 1.0
    return WarpingFunction(psi.grid, np.clip(g, 0.0, 1.0))


def _psi_inner(p1: SrsfPsi, p2: SrsfPsi) -> float:
    if not p1.grid.same_as(p2.grid):
        raise ValueError("psi functions are not on a shared grid")
    return float(np.clip(np.trapezoid(p1.values * p2.values, p1.grid.points), -1.0, 1.0))


def phase_distance(g1: WarpingFunction, g2: WarpingFunction) -> float:
    """Arc length between the two warps' psi representations."""
    return float(np.arccos(_psi_inner(gamma_to_psi(g1), gamma_to_psi(g2))))


def _sinc(x: float) -> float:
    # sin(x)/x with a series near zero
    if abs(x) < _SERIES_CUTOFF:
        return 1.0 - x * x / 6.0
    return np.sin(x) / x


def exp_map_identity(v: ShootingVector) -> SrsfPsi:
    nv = v.norm
    if nv >= np.pi:
        raise InjectivityError("shooting vector outside the injectivity radius")
    psi = np.cos(nv) + _sinc(nv) * v.values
    return SrsfPsi(v.grid, psi)


def inv_exp_map(psi: SrsfPsi) -> ShootingVector:
    ones = np.ones(len(psi.grid))
    c = float(np.clip(np.trapezoid(psi.values, psi.grid.points), -1.0, 1.0))
    kappa = float(np.arccos(c))
    if kappa >= np.pi - 1e-6:
        raise InjectivityError("psi is antipodal to the identity")
    if kappa < _SERIES_CUTOFF:
        factor = 1.0 + kappa * kappa / 6.0
    else:
        factor = kappa / np.sin(kappa)
    return ShootingVector(psi.grid, factor * (psi.values - c * ones))


def gamma_to_shooting(gamma: WarpingFunction) -> ShootingVector:
    return inv_exp_map(gamma_to_psi(gamma))


def shooting_to_gamma(v: ShootingVector) -> WarpingFunction:
    return psi_to_gamma(exp_map_identity(v))
