"""Bayesian model calibration for functional outputs with elastic (amplitude/phase) alignment."""
from .grid import Grid, GridFunction, Srvf, unit_grid, to_srvf, from_srvf, resample
from .phase import (
    InjectivityError,
    ShootingVector,
    WarpingFunction,
    gamma_to_shooting,
    phase_distance,
    shooting_to_gamma,
)
from .align import align_curves, decompose_ensemble, dp_align, unwarp
from .emulator import Emulator, train, predict, cross_validate
from .calibrate import (
    CalibrationProblem,
    Experiment,
    MCMCConfig,
    mcmc_sample,
    posterior_predict,
    prior_spec,
)

__version__ = "0.1.0"
