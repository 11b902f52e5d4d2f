"""Synthetic ground truth: Gaussian-bump simulators, designs, Vinet curve."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from .grid import Grid, GridFunction, unit_grid

__all__ = [
    "SyntheticDesign",
    "EXAMPLE1_TRUTH",
    "EXAMPLE2_TRUTH",
    "example1_center",
    "example1_curve",
    "example2_curve",
    "example2_observation",
    "example1_observation",
    "vinet_pressure",
    "sample_design",
    "example1_design",
    "example2_design",
    "SIMULATORS",
]

BUMP_SD = 0.05
EXAMPLE1_TRUTH = (0.1028, 0.5930, 0.0)
EXAMPLE2_TRUTH = (0.3, 0.2)
EXAMPLE2_SHIFT = 0.2


@dataclass(frozen=True, eq=False)
class SyntheticDesign:
    inputs: np.ndarray
    seed: int
    bounds: np.ndarray | None = None

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        lo, hi = (0.0, 1.0) if self.bounds is None else (self.bounds[:, 0], self.bounds[:, 1])
        if np.any(x < lo) or np.any(x > hi):
            raise ValueError("design entries fall outside their bounds")
        object.__setattr__(self, "inputs", x)

    @property
    def n(self) -> int:
        return self.inputs.shape[0]


def _bump(t: np.ndarray, center: float, height: float) -> np.ndarray:
    return height / (BUMP_SD * np.sqrt(2.0 * np.pi)) * np.exp(-0.5 * ((t - center) / BUMP_SD) ** 2)


def _grid(t_grid) -> Grid:
    return t_grid if isinstance(t_grid, Grid) else Grid(np.asarray(t_grid, dtype=float))


def example1_center(u0: float) -> float:
    return np.sin(2.0 * np.pi * u0 ** 2) / 4.0 - u0 / 10.0 + 0.5


def example1_curve(t_grid, u) -> GridFunction:
    """Gaussian bump with height u[1] and center driven by u[0]; u[2] is inert."""
    g = _grid(t_grid)
    u = np.asarray(u, dtype=float)
    if u.shape != (3,):
        raise ValueError("example 1 takes a 3-vector of inputs")
    return GridFunction(g, _bump(g.points, example1_center(u[0]), u[1]))


def example1_observation(t_grid=None) -> GridFunction:
    return example1_curve(unit_grid() if t_grid is None else t_grid, EXAMPLE1_TRUTH)


def example2_curve(t_grid, u) -> GridFunction:
    """Model run: bump centered at u[0] + 0.1 with height u[1].

    Extra trailing entries (the nuisance input) are accepted and ignored.
    """
    g = _grid(t_grid)
    u = np.asarray(u, dtype=float).ravel()
    if u.size < 2:
        raise ValueError("example 2 needs at least 2 inputs")
    return GridFunction(g, _bump(g.points, u[0] + 0.1, u[1]))


def example2_observation(t_grid=None) -> GridFunction:
    """Experiment: the truth bump shifted 0.2 later than the model allows."""
    g = _grid(unit_grid() if t_grid is None else t_grid)
    u0, u1 = EXAMPLE2_TRUTH
    return GridFunction(g, _bump(g.points, u0 + 0.1 + EXAMPLE2_SHIFT, u1))


def vinet_pressure(rho, rho0: float, B0: float, B0prime: float):
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 0) or rho0 <= 0 or B0 <= 0:
        raise ValueError("densities and bulk modulus must be positive")
    eta = np.cbrt(rho0 / rho)
    p = 3.0 * B0 * (1.0 - eta) / eta ** 2 * np.exp(1.5 * (B0prime - 1.0) * (1.0 - eta))
    return float(p) if p.ndim == 0 else p


def sample_design(n: int, p: int, bounds=None, seed: int = 0, method: str = "uniform") -> SyntheticDesign:
    """Seeded uniform or Latin-hypercube sample inside ``bounds`` (p x 2)."""
    if n < 1 or p < 1:
        raise ValueError("n and p must be positive")
    b = np.tile([0.0, 1.0], (p, 1)) if bounds is None else np.asarray(bounds, dtype=float).reshape(p, 2)
    if method == "uniform":
        x = np.random.default_rng(seed).random((n, p))
    elif method == "lhs":
        x = qmc.LatinHypercube(d=p, seed=np.random.default_rng(seed)).random(n)
    else:
        raise ValueError(f"unknown design method {method!r}")
    x = b[:, 0] + x * (b[:, 1] - b[:, 0])
    return SyntheticDesign(x, seed, None if bounds is None else b)


EXAMPLE1_BOUNDS = np.array([[0.0, 1.0]] * 3)
EXAMPLE2_BOUNDS = np.array([[0.0, 0.3], [0.0, 0.3], [0.0, 1.0]])


def example1_design(seed: int, n: int = 100) -> SyntheticDesign:
    return sample_design(n, 3, EXAMPLE1_BOUNDS, seed)


def example2_design(seed: int, n: int = 300) -> SyntheticDesign:
    return sample_design(n, 3, EXAMPLE2_BOUNDS, seed)


# Registered simulators usable in direct (emulator-free) calibration.
SIMULATORS = {
    "example1": example1_curve,
    "example2": example2_curve,
}
