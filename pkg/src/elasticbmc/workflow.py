"""End-to-end assembly: ensemble -> decomposition -> emulators -> calibration problem."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import synthetic
from .align import DecomposedEnsemble, decompose_ensemble
from .calibrate import (
    CalibrationProblem,
    EmulatorForward,
    Experiment,
    Prior,
    SimulatorForward,
    build_shift_discrepancy_basis,
    prior_spec,
)
from .emulator import Emulator, train
from .grid import GridFunction, unit_grid

__all__ = [
    "ALIGN_DEFAULTS",
    "SHIFT_BREAKPOINTS",
    "StageSeeds",
    "stage_seeds",
    "Assembled",
    "assemble",
    "ExampleSetup",
    "example_data",
    "example_priors",
    "build_example",
]

# Small roughness penalty keeps warps in flat tails from wandering; the
# finer lattice plus sub-lattice polish make warps vary smoothly with inputs.
ALIGN_DEFAULTS = {"lam": 0.01, "resolution": 3, "polish": True, "nbhd": 4}

SHIFT_BREAKPOINTS = (0.25, 0.5, 0.75)


@dataclass(frozen=True)
class StageSeeds:
    design: int
    emulator: int
    mcmc: int
    predict: int


def stage_seeds(seed: int) -> StageSeeds:
    """Split one top-level seed into independent per-stage seeds."""
    kids = np.random.SeedSequence(int(seed)).spawn(4)
    return StageSeeds(*(int(k.generate_state(1, dtype=np.uint32)[0]) for k in kids))


@dataclass
class Assembled:
    problem: CalibrationProblem
    decomposition: DecomposedEnsemble | None
    emulator_aligned: Emulator | None
    emulator_shooting: Emulator | None


def assemble(
    observation: GridFunction,
    curves,
    design,
    priors,
    *,
    emulator_seed: int = 0,
    mode: str = "emulator",
    simulator=None,
    elastic: bool = True,
    discrepancy: bool = False,
    discrepancy_sd: float = 1.0,
    breakpoints=SHIFT_BREAKPOINTS,
    active_segment: int = 1,
    emulator_variance: str = "loo",
    variance_target: float = 0.995,
    surrogate: str = "gp",
    decomposition: DecomposedEnsemble | None = None,
    n_jobs: int = 1,
    **align_kw,
) -> Assembled:
    """Build the calibration problem for one observed curve aligned to itself.

    ``elastic=False`` gives the pointwise contrast: a single emulator on the
    raw curves and no shooting block.
    """
    if mode not in ("emulator", "direct"):
        raise ValueError("mode must be 'emulator' or 'direct'")
    if mode == "direct" and simulator is None:
        raise ValueError("direct mode needs a registered simulator")
    if mode == "direct" and not elastic:
        raise ValueError("direct mode requires the elastic likelihood")
    kw = {**ALIGN_DEFAULTS, **align_kw}
    priors = [p if isinstance(p, Prior) else prior_spec(*p) for p in priors]
    design = np.atleast_2d(np.asarray(design, float))
    ranges = np.array([p.support for p in priors])
    if not np.all(np.isfinite(ranges)):
        ranges = np.column_stack([design.min(axis=0), design.max(axis=0)])
    grid = observation.grid
    exp = Experiment.aligned_to_self(observation)
    disc_v = None
    if discrepancy and elastic:
        disc_v = build_shift_discrepancy_basis(grid.normalized(), breakpoints,
                                               active_segment=active_segment, prior_sd=discrepancy_sd)
    if mode == "direct":
        fw = SimulatorForward(simulator, lam=kw["lam"], resolution=kw["resolution"],
                              nbhd=kw["nbhd"], polish=kw["polish"])
        prob = CalibrationProblem([exp], fw, priors, discrepancy_shooting=disc_v,
                                  emulator_variance=emulator_variance)
        return Assembled(prob, None, None, None)

    if not elastic:
        em_a = train(design, [c.values for c in curves], variance_target, surrogate,
                     input_ranges=ranges, grid=grid, seed=emulator_seed)
        prob = CalibrationProblem([exp], EmulatorForward(em_a, None), priors, use_shooting=False,
                                  emulator_variance=emulator_variance)
        return Assembled(prob, None, em_a, None)

    dec = decomposition
    if dec is None:
        dec = decompose_ensemble(observation, curves, design, n_jobs=n_jobs, **kw)
    em_a = train(design, dec.aligned_matrix(), variance_target, surrogate,
                 input_ranges=ranges, grid=grid, seed=emulator_seed)
    em_v = train(design, dec.shooting_matrix(), variance_target, surrogate,
                 input_ranges=ranges, grid=grid.normalized(), seed=emulator_seed + 1)
    prob = CalibrationProblem([exp], EmulatorForward(em_a, em_v), priors,
                              discrepancy_shooting=disc_v, emulator_variance=emulator_variance)
    return Assembled(prob, dec, em_a, em_v)


def example_priors(example: int):
    if example == 1:
        return [prior_spec("uniform", 0.0, 1.0)] * 3
    return [prior_spec("uniform", 0.0, 0.3), prior_spec("uniform", 0.0, 0.3),
            prior_spec("uniform", 0.0, 1.0)]


def example_data(example: int, seed: int, n_runs: int | None = None, n_grid: int = 101):
    """(observation, design, curves, truth, simulator) for a synthetic study."""
    grid = unit_grid(n_grid)
    seeds = stage_seeds(seed)
    if example == 1:
        obs = synthetic.example1_observation(grid)
        design = synthetic.example1_design(seeds.design, n_runs or 100).inputs
        sim, truth = synthetic.example1_curve, synthetic.EXAMPLE1_TRUTH
    elif example == 2:
        obs = synthetic.example2_observation(grid)
        design = synthetic.example2_design(seeds.design, n_runs or 300).inputs
        sim, truth = synthetic.example2_curve, synthetic.EXAMPLE2_TRUTH
    else:
        raise ValueError("example must be 1 or 2")
    return obs, design, [sim(grid, u) for u in design], truth, sim


@dataclass
class ExampleSetup:
    example: int
    seed: int
    observation: GridFunction
    design: np.ndarray
    curves: list
    decomposition: DecomposedEnsemble | None
    emulator_aligned: Emulator | None
    emulator_shooting: Emulator | None
    problem: CalibrationProblem
    truth: tuple
    seeds: StageSeeds
    info: dict = field(default_factory=dict)


def build_example(
    example: int,
    seed: int = 0,
    n_runs: int | None = None,
    n_grid: int = 101,
    mode: str = "emulator",
    elastic: bool = True,
    discrepancy: bool | None = None,
    **kw,
) -> ExampleSetup:
    """Synthetic example 1 or 2, ready to sample.

    The shift discrepancy is on by default for example 2 only.
    """
    obs, design, curves, truth, sim = example_data(example, seed, n_runs, n_grid)
    seeds = stage_seeds(seed)
    if discrepancy is None:
        discrepancy = example == 2
    a = assemble(obs, curves, design, example_priors(example), emulator_seed=seeds.emulator,
                 mode=mode, simulator=sim, elastic=elastic, discrepancy=discrepancy, **kw)
    info = {"mode": mode, "elastic": elastic, "discrepancy": discrepancy}
    return ExampleSetup(example, seed, obs, design, curves, a.decomposition, a.emulator_aligned,
                        a.emulator_shooting, a.problem, truth, seeds, info)
