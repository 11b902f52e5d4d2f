"""Elastic pairwise alignment and the warping decomposition of an ensemble."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize

from . import _dp_kernels
from .grid import Grid, GridFunction, Srvf, monotone_cubic, to_srvf
from .phase import (
    ShootingVector,
    WarpingFunction,
    gamma_to_shooting,
    identity_warp,
    repair_warp,
)

__all__ = [
    "AlignmentResult",
    "DecomposedEnsemble",
    "group_action",
    "alignment_cost",
    "dp_align",
    "amplitude_distance",
    "align_curves",
    "compose",
    "unwarp",
    "decompose_ensemble",
]


@dataclass(frozen=True)
class AlignmentResult:
    gamma: WarpingFunction
    aligned: GridFunction
    amplitude_dist: float
    penalty_lambda: float


@dataclass(frozen=True)
class DecomposedEnsemble:
    reference: GridFunction
    aligned_curves: list
    warps: list
    shooting_vectors: list
    inputs: np.ndarray
    penalty_lambda: float = 0.0

    def __post_init__(self):
        n = len(self.aligned_curves)
        if not (len(self.warps) == len(self.shooting_vectors) == n):
            raise ValueError("aligned curves, warps and shooting vectors differ in count")
        if self.inputs is not None and len(self.inputs) != n:
            raise ValueError("input rows do not match the number of curves")
        for f in self.aligned_curves:
            if not f.grid.same_as(self.reference.grid):
                raise ValueError("aligned curves are not on the reference grid")

    def aligned_matrix(self) -> np.ndarray:
        return np.array([f.values for f in self.aligned_curves])

    def shooting_matrix(self) -> np.ndarray:
        return np.array([v.values for v in self.shooting_vectors])

    def warp_matrix(self) -> np.ndarray:
        return np.array([g.values for g in self.warps])


def _as_warp(gamma, grid: Grid) -> WarpingFunction:
    if isinstance(gamma, WarpingFunction):
        return gamma
    return WarpingFunction(grid, np.asarray(gamma, dtype=float))


def _shared(q1: Srvf, q2: Srvf):
    if not q1.grid.same_as(q2.grid):
        raise ValueError("SRVFs are not on a shared grid")


def group_action(q: Srvf, gamma) -> Srvf:
    """(q o gamma) * sqrt(gamma')."""
    gamma = _as_warp(gamma, q.grid)
    if not gamma.grid.same_as(q.grid):
        raise ValueError("warp and SRVF grids differ")
    if np.array_equal(gamma.values, q.grid.points):
        return q
    dg = np.maximum(gamma.derivative(), 0.0)
    vals = np.interp(gamma.values, q.grid.points, q.values) * np.sqrt(dg)
    return Srvf(q.grid, vals, anchor=q.anchor, window=q.window)


def alignment_cost(q_ref: Srvf, q_mov: Srvf, gamma, lam: float = 0.0) -> float:
    """Penalized objective ||q_ref - (q_mov, gamma)||^2 + lam * ||sqrt(gamma') - 1||^2."""
    gamma = _as_warp(gamma, q_ref.grid)
    t = q_ref.grid.points
    diff = q_ref.values - group_action(q_mov, gamma).values
    cost = float(np.trapezoid(diff * diff, t))
    if lam:
        pen = np.sqrt(np.maximum(gamma.derivative(), 0.0)) - 1.0
        cost += lam * float(np.trapezoid(pen * pen, t))
    return cost


def _smooth_once(g: np.ndarray) -> np.ndarray:
    out = g.copy()
    out[1:-1] = 0.25 * g[:-2] + 0.5 * g[1:-1] + 0.25 * g[2:]
    return out


def _refine_grid(t: np.ndarray, r: int) -> np.ndarray:
    if r == 1:
        return t
    frac = np.arange(r) / r
    inner = (t[:-1, None] + np.diff(t)[:, None] * frac).ravel()
    return np.append(inner, t[-1])


def _polish(q_ref: Srvf, q_mov: Srvf, gam0: np.ndarray, lam: float, cell: float,
            maxiter: int = 500) -> np.ndarray:
    """Sub-lattice refinement of a DP warp.

    Each interior warp value may move by at most one lattice cell (and less
    than half the gap to its neighbours, so monotonicity is kept).  The
    objective is the continuous analogue of the DP edge cost: piecewise
    linear warp, trapezoid rule, cubic-spline interpolant of ``q_mov``.
    The DP optimum is quantized to its lattice, which makes warps jump as
    the data move; this step removes that staircase.
    """
    t = q_ref.grid.points
    h = np.diff(t)
    q1 = q_ref.values
    spl = CubicSpline(t, q_mov.values)
    dspl = spl.derivative()

    def fun(x):
        g = np.concatenate([[0.0], x, [1.0]])
        m = np.maximum(np.diff(g) / h, 1e-300)
        sm = np.sqrt(m)
        Q = spl(g)
        A = q1[:-1] - sm * Q[:-1]
        B = q1[1:] - sm * Q[1:]
        J = 0.5 * h @ (A * A + B * B) + lam * (h @ ((sm - 1.0) ** 2))
        dsm = -h * (A * Q[:-1] + B * Q[1:]) + 2.0 * lam * h * (sm - 1.0)
        dm = dsm / (2.0 * sm) / h
        dg = np.zeros_like(g)
        dg[:-1] -= dm
        dg[1:] += dm
        dQ = np.zeros_like(g)
        dQ[:-1] -= h * A * sm
        dQ[1:] -= h * B * sm
        dg += dQ * dspl(g)
        return J, dg[1:-1]

    x0 = gam0[1:-1].copy()
    gaps = np.diff(gam0)
    room = np.minimum(np.minimum(gaps[:-1], gaps[1:]) * 0.45, cell)
    res = minimize(fun, x0, jac=True, method="L-BFGS-B",
                   bounds=list(zip(x0 - room, x0 + room)),
                   options={"maxiter": maxiter, "ftol": 1e-15, "gtol": 1e-12})
    if not np.isfinite(res.fun) or res.fun > fun(x0)[0]:
        return gam0
    return np.concatenate([[0.0], res.x, [1.0]])


def dp_align(
    q_ref: Srvf,
    q_mov: Srvf,
    lam: float = 0.0,
    nbhd: int = 4,
    refine: bool = True,
    resolution: int = 1,
    polish: bool = True,
    use_numba: bool | None = None,
) -> WarpingFunction:
    """Warp aligning ``q_mov`` onto ``q_ref`` by dynamic programming.

    ``resolution`` > 1 runs the DP on a lattice that subdivides every grid
    cell that many times (SRVFs linearly interpolated); the lattice path is
    then interpolated back onto the shared grid.  With ``refine``,
    one [1/4, 1/2, 1/4] smoothing pass is kept if it does not raise the
    objective.  ``polish`` then refines the warp below lattice resolution
    with a bounded continuous descent.  The result is clamped to be strictly increasing.
    """
    if lam < 0:
        raise ValueError("penalty lambda must be nonnegative")
    _shared(q_ref, q_mov)
    t = q_ref.grid.points
    if resolution < 1:
        raise ValueError("lattice resolution must be a positive integer")
    if np.array_equal(q_ref.values, q_mov.values):
        return identity_warp(q_ref.grid)
    tl = _refine_grid(t, int(resolution))
    q1 = np.interp(tl, t, q_ref.values)
    q2 = np.interp(tl, t, q_mov.values)
    path, _ = _dp_kernels.dp_path(q1, q2, tl, lam, nbhd, use_numba)
    gam = np.interp(t, tl[path[:, 0]], tl[path[:, 1]])
    gam[0], gam[-1] = 0.0, 1.0
    if refine:
        cand = _smooth_once(gam)
        if alignment_cost(q_ref, q_mov, cand, lam) <= alignment_cost(q_ref, q_mov, gam, lam):
            gam = cand
    if polish:
        gam = _polish(q_ref, q_mov, repair_warp(gam), lam, float(np.min(np.diff(tl))))
    return WarpingFunction(q_ref.grid, repair_warp(gam))


def amplitude_distance(q_ref: Srvf, q_mov: Srvf, lam: float = 0.0, **kw) -> float:
    """Squared L2 distance between q_ref and the optimally warped q_mov."""
    gamma = dp_align(q_ref, q_mov, lam, **kw)
    diff = q_ref.values - group_action(q_mov, gamma).values
    return float(np.trapezoid(diff * diff, q_ref.grid.points))


def compose(f: GridFunction, gamma: WarpingFunction) -> GridFunction:
    """f o gamma, with gamma acting on the normalized time axis of ``f``."""
    if len(gamma.grid) != len(f.grid):
        raise ValueError("warp and function grids differ in length")
    lo, hi = f.grid.lo, f.grid.hi
    if np.array_equal(gamma.values, gamma.grid.points):
        return f
    x = np.clip(lo + gamma.values * (hi - lo), lo, hi)
    return GridFunction(f.grid, monotone_cubic(f.grid.points, f.values)(x))


def unwarp(aligned: GridFunction, gamma: WarpingFunction) -> GridFunction:
    """Undo an alignment: recover f from f o gamma."""
    return compose(aligned, gamma.inverse())


def align_curves(
    reference: GridFunction, curve: GridFunction, lam: float = 0.0, **kw
) -> AlignmentResult:
    if not reference.grid.same_as(curve.grid):
        raise ValueError("curves are not on a shared grid")
    q_ref, q_mov = to_srvf(reference), to_srvf(curve)
    gamma = dp_align(q_ref, q_mov, lam, **kw)
    diff = q_ref.values - group_action(q_mov, gamma).values
    dist = float(np.trapezoid(diff * diff, q_ref.grid.points))
    return AlignmentResult(gamma, compose(curve, gamma), dist, float(lam))


def decompose_ensemble(
    reference: GridFunction,
    curves,
    inputs=None,
    lam: float = 0.0,
    n_jobs: int = 1,
    **kw,
) -> DecomposedEnsemble:
    """Align every curve to ``reference``; convert warps to shooting vectors.

    Output order matches input order regardless of ``n_jobs``.
    """
    curves = list(curves)
    for c in curves:
        if not c.grid.same_as(reference.grid):
            raise ValueError("all curves must share the reference grid")
    q_ref = to_srvf(reference)

    def one(curve):
        gamma = dp_align(q_ref, to_srvf(curve), lam, **kw)
        return compose(curve, gamma), gamma, gamma_to_shooting(gamma)

    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            results = list(pool.map(one, curves))
    else:
        results = [one(c) for c in curves]
    if inputs is not None:
        inputs = np.asarray(inputs, dtype=float).reshape(len(curves), -1)
    return DecomposedEnsemble(
        reference=reference,
        aligned_curves=[r[0] for r in results],
        warps=[r[1] for r in results],
        shooting_vectors=[r[2] for r in results],
        inputs=inputs,
        penalty_lambda=float(lam),
    )


def self_decomposition(reference: GridFunction):
    """Identity warp and zero shooting vector of the reference itself."""
    unit = reference.grid.normalized()
    return reference, identity_warp(unit), ShootingVector(unit, np.zeros(len(unit)))
