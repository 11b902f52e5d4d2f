"""Elastic Bayesian calibration.

The likelihood has two independent Gaussian blocks per experiment: aligned
observation vs. aligned model output, and observed shooting vector vs.
model shooting vector, each with optional basis-expanded discrepancy.
Sampling is Metropolis-within-Gibbs: adaptive random-walk Metropolis on the
calibration parameters, Gibbs (or log-scale Metropolis) on the variances,
and exact Gaussian Gibbs draws for discrepancy coefficients.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .align import compose, dp_align, unwarp
from .emulator import Emulator
from .grid import Grid, GridFunction, resample, to_srvf
from .phase import (
    InjectivityError,
    ShootingVector,
    gamma_to_shooting,
    project_tangent,
    shooting_to_gamma,
)

log = logging.getLogger(__name__)

__all__ = [
    "Prior",
    "prior_spec",
    "DiscrepancyBasis",
    "build_shift_discrepancy_basis",
    "Experiment",
    "EmulatorForward",
    "SimulatorForward",
    "CalibrationProblem",
    "ForwardEval",
    "forward_eval",
    "log_likelihood",
    "log_posterior",
    "MCMCConfig",
    "MCMCError",
    "PosteriorSamples",
    "mcmc_sample",
    "PredictiveDraws",
    "posterior_predict",
    "effective_sample_size",
    "default_sigma2_prior",
]

_LOG2PI = math.log(2.0 * math.pi)

# How emulator uncertainty enters the likelihood variance:
#   loo         input-independent leave-one-out error variance (default)
#   predictive  pointwise predictive variance at the proposed inputs
#   none        emulator treated as exact
EMULATOR_VARIANCE_MODES = ("loo", "predictive", "none")


# ---------------------------------------------------------------- priors


@dataclass(frozen=True)
class Prior:
    kind: str
    params: tuple

    def __post_init__(self):
        p = self.params
        if self.kind == "uniform":
            if not (len(p) == 2 and p[0] < p[1]):
                raise ValueError("uniform prior needs lo < hi")
        elif self.kind == "normal":
            if not (len(p) == 2 and p[1] > 0):
                raise ValueError("normal prior needs (mean, sd > 0)")
        elif self.kind == "inverse_gamma":
            if not (len(p) == 2 and p[0] > 0 and p[1] > 0):
                raise ValueError("inverse-gamma prior needs (shape > 0, scale > 0)")
        elif self.kind == "fixed":
            if len(p) != 1:
                raise ValueError("fixed prior needs one value")
        else:
            raise ValueError(f"unknown prior kind {self.kind!r}")

    @property
    def support(self) -> tuple:
        if self.kind == "uniform":
            return float(self.params[0]), float(self.params[1])
        if self.kind == "inverse_gamma":
            return 0.0, math.inf
        if self.kind == "fixed":
            return float(self.params[0]), float(self.params[0])
        return -math.inf, math.inf

    @property
    def mean(self) -> float:
        if self.kind == "uniform":
            return 0.5 * (self.params[0] + self.params[1])
        if self.kind == "normal":
            return float(self.params[0])
        if self.kind == "fixed":
            return float(self.params[0])
        a, b = self.params
        return b / (a - 1.0) if a > 1 else math.inf

    def logpdf(self, x: float) -> float:
        if self.kind == "uniform":
            lo, hi = self.params
            return -math.log(hi - lo) if lo <= x <= hi else -math.inf
        if self.kind == "normal":
            mu, sd = self.params
            z = (x - mu) / sd
            return -0.5 * (z * z + _LOG2PI) - math.log(sd)
        if self.kind == "fixed":
            return 0.0 if x == self.params[0] else -math.inf
        a, b = self.params
        if x <= 0:
            return -math.inf
        return a * math.log(b) - math.lgamma(a) - (a + 1.0) * math.log(x) - b / x

    def sample(self, rng: np.random.Generator, size=None):
        if self.kind == "uniform":
            return rng.uniform(self.params[0], self.params[1], size)
        if self.kind == "normal":
            return rng.normal(self.params[0], self.params[1], size)
        if self.kind == "fixed":
            return np.full(size, self.params[0]) if size is not None else self.params[0]
        a, b = self.params
        return b / rng.gamma(a, 1.0, size)

    def to_dict(self):
        return {"kind": self.kind, "params": list(self.params)}


def prior_spec(kind: str, *params) -> Prior:
    """Build a prior: ``uniform(lo, hi)``, ``normal(mean, sd)``,
    ``inverse_gamma(shape, scale)`` or ``fixed(value)``."""
    return Prior(kind, tuple(float(p) for p in params))


def default_sigma2_prior(signal, fraction: float = 0.01, shape: float = 2.0) -> Prior:
    """Inverse-gamma whose mean is ``fraction`` of the signal variance."""
    var = float(np.var(np.asarray(signal, float)))
    var = max(var, 1e-12)
    return prior_spec("inverse_gamma", shape, fraction * var * (shape - 1.0))


# ---------------------------------------------------------------- discrepancy


@dataclass(frozen=True, eq=False)
class DiscrepancyBasis:
    basis_matrix: np.ndarray
    coeff_prior_sd: np.ndarray
    per_experiment: bool = True

    def __post_init__(self):
        D = np.asarray(self.basis_matrix, float)
        if D.ndim == 1:
            D = D[:, None]
        if D.shape[1] < 1 or not np.all(np.isfinite(D)):
            raise ValueError("discrepancy basis needs at least one finite column")
        sd = np.broadcast_to(np.asarray(self.coeff_prior_sd, float), (D.shape[1],)).copy()
        if np.any(sd <= 0):
            raise ValueError("coefficient prior sds must be positive")
        object.__setattr__(self, "basis_matrix", D)
        object.__setattr__(self, "coeff_prior_sd", sd)

    @property
    def K(self) -> int:
        return self.basis_matrix.shape[1]

    def n_groups(self, n_exp: int) -> int:
        return n_exp if self.per_experiment else 1

    def evaluate(self, coeffs) -> np.ndarray:
        return self.basis_matrix @ np.asarray(coeffs, float)


def build_shift_discrepancy_basis(
    grid: Grid, breakpoints, active_segment: int = 1, prior_sd: float = 1.0,
    per_experiment: bool = True,
) -> DiscrepancyBasis:
    """Three piecewise-constant columns plus one linear ramp.

    The breakpoints b1 < b2 < b3 split [0, 1] into four segments.  The
    ``active_segment`` (0-3) gets a ramp rising from 0 to 1 across it; each
    other segment gets an indicator column.  Columns have unit sup-norm.
    """
    b = np.asarray(breakpoints, float)
    if b.shape != (3,):
        raise ValueError("exactly three breakpoints are required")
    if not (0.0 < b[0] < b[1] < b[2] < 1.0):
        raise ValueError("breakpoints must be strictly increasing inside (0, 1)")
    if active_segment not in (0, 1, 2, 3):
        raise ValueError("active_segment must be 0, 1, 2 or 3")
    s = grid.normalized().points if (grid.lo != 0.0 or grid.hi != 1.0) else grid.points
    edges = np.concatenate([[0.0], b, [1.0]])
    seg = np.clip(np.searchsorted(edges, s, side="right") - 1, 0, 3)
    cols = []
    for k in range(4):
        inside = seg == k
        if k == active_segment:
            ramp = np.where(inside, (s - edges[k]) / (edges[k + 1] - edges[k]), 0.0)
            cols.append(ramp / max(ramp.max(), 1e-300))
        else:
            cols.append(inside.astype(float))
    # constant columns first, ramp last
    order = [k for k in range(4) if k != active_segment] + [active_segment]
    return DiscrepancyBasis(np.column_stack([cols[k] for k in order]), prior_sd, per_experiment)


# ---------------------------------------------------------------- problem


@dataclass(frozen=True, eq=False)
class Experiment:
    """One experiment after the warping decomposition.

    ``reference`` is the curve simulator outputs get aligned against in
    direct mode; ``observed`` is the raw curve (for predictive checks).
    """

    aligned_obs: GridFunction
    shooting_obs: ShootingVector
    x: np.ndarray = field(default_factory=lambda: np.zeros(0))
    reference: GridFunction | None = None
    observed: GridFunction | None = None

    def __post_init__(self):
        object.__setattr__(self, "x", np.atleast_1d(np.asarray(self.x, float)))
        if len(self.shooting_obs.grid) != len(self.aligned_obs.grid):
            raise ValueError("aligned and shooting observations differ in length")

    @classmethod
    def aligned_to_self(cls, observed: GridFunction, x=()):
        """Data aligned to itself: identity warp, zero shooting vector."""
        unit = observed.grid.normalized()
        return cls(observed, ShootingVector(unit, np.zeros(len(unit))), np.asarray(x, float),
                   observed, observed)


@dataclass(frozen=True, eq=False)
class EmulatorForward:
    emulator_aligned: Emulator
    emulator_shooting: Emulator | None = None


@dataclass(frozen=True, eq=False)
class SimulatorForward:
    """Raw simulator; every evaluation is re-aligned to the experiment reference.

    ``simulator(grid, inputs)`` returns a GridFunction, where inputs is the
    concatenation of experiment conditions and calibration parameters.
    """

    simulator: Callable
    lam: float = 0.0
    resolution: int = 1
    nbhd: int = 4
    polish: bool = False


@dataclass(eq=False)
class CalibrationProblem:
    experiments: list
    forward: EmulatorForward | SimulatorForward
    priors: list
    discrepancy_aligned: DiscrepancyBasis | None = None
    discrepancy_shooting: DiscrepancyBasis | None = None
    sigma2_aligned_prior: Prior | None = None
    sigma2_shooting_prior: Prior | None = None
    use_aligned: bool = True
    use_shooting: bool = True
    emulator_variance: str = "loo"
    param_names: list | None = None

    def __post_init__(self):
        if not self.experiments:
            raise ValueError("at least one experiment is required")
        if isinstance(self.forward, EmulatorForward) == isinstance(self.forward, SimulatorForward):
            raise ValueError("exactly one forward mode must be set")
        self.priors = [p if isinstance(p, Prior) else prior_spec(*p) for p in self.priors]
        if self.param_names is None:
            self.param_names = [f"theta{i}" for i in range(len(self.priors))]
        if len(self.param_names) != len(self.priors):
            raise ValueError("one name per calibration parameter")
        if not (self.use_aligned or self.use_shooting):
            raise ValueError("at least one likelihood block must be active")
        if self.emulator_variance not in EMULATOR_VARIANCE_MODES:
            raise ValueError(f"emulator_variance must be one of {EMULATOR_VARIANCE_MODES}")
        if self.sigma2_aligned_prior is None:
            self.sigma2_aligned_prior = default_sigma2_prior(
                np.concatenate([e.aligned_obs.values for e in self.experiments]))
        if self.sigma2_shooting_prior is None:
            self.sigma2_shooting_prior = self._default_shooting_prior()
        self._check_grids()

    def _default_shooting_prior(self) -> Prior:
        fw = self.forward
        if isinstance(fw, EmulatorForward) and fw.emulator_shooting is not None:
            b = fw.emulator_shooting.basis
            # typical pointwise variance of the training shooting vectors
            spread = b.total_variance + float(np.mean(b.mean_curve.values ** 2))
            return prior_spec("inverse_gamma", 2.0, max(0.01 * spread, 1e-10))
        return prior_spec("inverse_gamma", 2.0, 1e-4)

    @property
    def theta_dim(self) -> int:
        return len(self.priors)

    @property
    def n_exp(self) -> int:
        return len(self.experiments)

    def _check_grids(self):
        fw = self.forward
        for e in self.experiments:
            n_t = len(e.aligned_obs.grid)
            for D in (self.discrepancy_aligned, self.discrepancy_shooting):
                if D is not None and D.basis_matrix.shape[0] != n_t:
                    raise ValueError("discrepancy basis rows do not match the grid")
            if isinstance(fw, EmulatorForward):
                em = fw.emulator_aligned
                if not em.grid.same_as(e.aligned_obs.grid, rtol=1e-9):
                    raise ValueError("aligned emulator grid does not match the experiment grid")
                if em.n_inputs != e.x.size + self.theta_dim:
                    raise ValueError("aligned emulator input dimension mismatch")
                if self.use_shooting:
                    es = fw.emulator_shooting
                    if es is None:
                        raise ValueError("shooting block active but no shooting emulator")
                    if not es.grid.same_as(e.shooting_obs.grid, rtol=1e-9):
                        raise ValueError("shooting emulator grid does not match the experiment grid")
                    if es.n_inputs != e.x.size + self.theta_dim:
                        raise ValueError("shooting emulator input dimension mismatch")
            elif e.reference is None:
                raise ValueError("direct mode needs a reference curve per experiment")

    def log_prior_theta(self, theta) -> float:
        total = 0.0
        for p, v in zip(self.priors, theta):
            lp = p.logpdf(float(v))
            if lp == -math.inf:
                return -math.inf
            total += lp
        return total

    def permuted(self, order) -> "CalibrationProblem":
        """Same problem with experiments reordered."""
        return CalibrationProblem(
            [self.experiments[i] for i in order], self.forward, self.priors,
            self.discrepancy_aligned, self.discrepancy_shooting,
            self.sigma2_aligned_prior, self.sigma2_shooting_prior,
            self.use_aligned, self.use_shooting, self.emulator_variance,
            list(self.param_names),
        )


# ---------------------------------------------------------------- likelihood


@dataclass
class ForwardEval:
    aligned_mean: np.ndarray
    aligned_var: np.ndarray
    shooting_mean: np.ndarray | None
    shooting_var: np.ndarray | None


def forward_eval(problem: CalibrationProblem, theta):
    """Model predictions for every experiment, or None if the model fails."""
    theta = np.asarray(theta, float)
    fw = problem.forward
    out = []
    for e in problem.experiments:
        u = np.concatenate([e.x, theta])
        if isinstance(fw, EmulatorForward):
            am, av = fw.emulator_aligned.predict_arrays(u)
            if problem.use_shooting:
                sm, sv = fw.emulator_shooting.predict_arrays(u)
            else:
                sm = sv = None
            mode = problem.emulator_variance
            if mode == "loo":
                av = fw.emulator_aligned.error_variance()
                sv = None if sm is None else fw.emulator_shooting.error_variance()
            elif mode == "none":
                av = np.zeros_like(am)
                sv = None if sm is None else np.zeros_like(sm)
            out.append(ForwardEval(am, av, sm, sv))
            continue
        try:
            raw = fw.simulator(e.reference.grid, u)
            vals = np.asarray(raw.values if hasattr(raw, "values") else raw, float)
            if not np.all(np.isfinite(vals)):
                raise FloatingPointError("non-finite simulator output")
            raw = raw if hasattr(raw, "grid") else GridFunction(e.reference.grid, vals)
            if not raw.grid.same_as(e.reference.grid):
                raw = resample(raw, e.reference.grid)
            gamma = dp_align(to_srvf(e.reference), to_srvf(raw), fw.lam,
                             nbhd=fw.nbhd, resolution=fw.resolution, polish=fw.polish)
            aligned = compose(raw, gamma).values
            v = gamma_to_shooting(gamma).values if problem.use_shooting else None
        except (FloatingPointError, InjectivityError, ValueError) as exc:
            log.warning("simulator evaluation failed at %s: %s", theta, exc)
            return None
        z = np.zeros_like(aligned)
        out.append(ForwardEval(aligned, z, v, None if v is None else np.zeros_like(v)))
    return out


def _gauss(resid, var) -> float:
    return float(-0.5 * np.sum(_LOG2PI + np.log(var) + resid * resid / var))


def _coeff_rows(beta, basis: DiscrepancyBasis | None, n_exp: int):
    if basis is None:
        return None
    if beta is None:
        return np.zeros((basis.n_groups(n_exp), basis.K))
    beta = np.asarray(beta, float).reshape(basis.n_groups(n_exp), basis.K)
    return beta


def _block_terms(problem, evals, beta_aligned, beta_shooting):
    """Per-experiment residuals and variances-without-sigma2 for each block."""
    ba = _coeff_rows(beta_aligned, problem.discrepancy_aligned, problem.n_exp)
    bv = _coeff_rows(beta_shooting, problem.discrepancy_shooting, problem.n_exp)
    ra, va, rv, vv = [], [], [], []
    for i, (e, ev) in enumerate(zip(problem.experiments, evals)):
        if problem.use_aligned:
            r = e.aligned_obs.values - ev.aligned_mean
            if ba is not None:
                D = problem.discrepancy_aligned
                r = r - D.evaluate(ba[i if D.per_experiment else 0])
            ra.append(r)
            va.append(ev.aligned_var)
        if problem.use_shooting:
            r = e.shooting_obs.values - ev.shooting_mean
            if bv is not None:
                D = problem.discrepancy_shooting
                r = r - D.evaluate(bv[i if D.per_experiment else 0])
            rv.append(r)
            vv.append(ev.shooting_var)
    return ra, va, rv, vv


def _loglik(problem, evals, s2a, s2v, beta_aligned, beta_shooting) -> float:
    ra, va, rv, vv = _block_terms(problem, evals, beta_aligned, beta_shooting)
    total = 0.0
    for r, v in zip(ra, va):
        total += _gauss(r, s2a + v)
    for r, v in zip(rv, vv):
        total += _gauss(r, s2v + v)
    return total


def log_likelihood(
    problem: CalibrationProblem,
    theta,
    sigma2_aligned: float,
    sigma2_shooting: float,
    beta_aligned=None,
    beta_shooting=None,
) -> float:
    """Sum over experiments of the two Gaussian block log-densities."""
    if sigma2_aligned <= 0 or sigma2_shooting <= 0:
        raise ValueError("variances must be positive")
    evals = forward_eval(problem, theta)
    if evals is None:
        return -math.inf
    return _loglik(problem, evals, sigma2_aligned, sigma2_shooting, beta_aligned, beta_shooting)


def _log_prior_beta(beta, basis) -> float:
    if basis is None or beta is None:
        return 0.0
    z = np.asarray(beta, float).reshape(-1, basis.K) / basis.coeff_prior_sd
    return float(-0.5 * np.sum(z * z + _LOG2PI) - z.shape[0] * np.sum(np.log(basis.coeff_prior_sd)))


def log_posterior(problem, theta, s2a, s2v, beta_aligned=None, beta_shooting=None) -> float:
    lp = problem.log_prior_theta(theta)
    if lp == -math.inf:
        return lp
    ll = log_likelihood(problem, theta, s2a, s2v, beta_aligned, beta_shooting)
    return (ll + lp + _sigma_prior(problem, s2a, s2v)
            + _log_prior_beta(beta_aligned, problem.discrepancy_aligned)
            + _log_prior_beta(beta_shooting, problem.discrepancy_shooting))


def _sigma_prior(problem, s2a, s2v) -> float:
    total = 0.0
    if problem.use_aligned:
        total += problem.sigma2_aligned_prior.logpdf(s2a)
    if problem.use_shooting:
        total += problem.sigma2_shooting_prior.logpdf(s2v)
    return total


# ---------------------------------------------------------------- MCMC


class MCMCError(RuntimeError):
    pass


@dataclass
class MCMCConfig:
    n_iter: int = 20000
    n_burn: int = 5000
    seed: int = 0
    proposal_scale_init: float = 0.05
    thin: int = 1
    n_init: int = 200
    adapt_start: int = 200
    adapt_interval: int = 50
    max_consecutive_rejects: int = 1000

    def __post_init__(self):
        if not (self.n_iter > self.n_burn >= 0):
            raise ValueError("need n_iter > n_burn >= 0")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")


@dataclass
class PosteriorSamples:
    theta: np.ndarray
    sigma2_aligned: np.ndarray
    sigma2_shooting: np.ndarray
    discrepancy_coeffs: np.ndarray
    log_posterior: np.ndarray
    acceptance_rates: dict
    param_names: list
    discrepancy_names: list = field(default_factory=list)
    seed: int | None = None

    def __post_init__(self):
        if np.any(self.sigma2_aligned <= 0) or np.any(self.sigma2_shooting <= 0):
            raise ValueError("variance draws must be positive")

    @property
    def n_draws(self) -> int:
        return self.theta.shape[0]

    def columns(self):
        names = list(self.param_names) + ["sigma2_aligned", "sigma2_shooting"]
        names += list(self.discrepancy_names) + ["log_posterior"]
        data = np.column_stack([
            self.theta, self.sigma2_aligned, self.sigma2_shooting,
            self.discrepancy_coeffs.reshape(self.n_draws, -1), self.log_posterior,
        ])
        return names, data

    def to_csv(self, path):
        names, data = self.columns()
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(names)
            for row in data:
                w.writerow([repr(float(x)) for x in row])

    @classmethod
    def from_csv(cls, path, n_theta: int | None = None):
        with open(path, encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        names = rows[0]
        data = np.array(rows[1:], dtype=float).reshape(-1, len(names))
        if n_theta is None:
            n_theta = names.index("sigma2_aligned")
        disc = names[n_theta + 2:-1]
        return cls(
            theta=data[:, :n_theta],
            sigma2_aligned=data[:, n_theta],
            sigma2_shooting=data[:, n_theta + 1],
            discrepancy_coeffs=data[:, n_theta + 2:-1],
            log_posterior=data[:, -1],
            acceptance_rates={},
            param_names=names[:n_theta],
            discrepancy_names=disc,
        )

    def split_discrepancy(self, problem: CalibrationProblem):
        """(aligned, shooting) coefficient draws as (draws, groups, K) arrays."""
        n = self.n_draws
        pos = 0
        out = []
        for D in (problem.discrepancy_aligned, problem.discrepancy_shooting):
            if D is None:
                out.append(None)
                continue
            size = D.n_groups(problem.n_exp) * D.K
            out.append(self.discrepancy_coeffs[:, pos:pos + size].reshape(n, -1, D.K))
            pos += size
        return tuple(out)


def _discrepancy_names(problem):
    names = []
    for tag, D in (("da", problem.discrepancy_aligned), ("dv", problem.discrepancy_shooting)):
        if D is None:
            continue
        for g in range(D.n_groups(problem.n_exp)):
            names += [f"{tag}_e{g}_k{k}" for k in range(D.K)]
    return names


def mh_accept(rng: np.random.Generator, log_ratio: float) -> bool:
    """Metropolis rule for a symmetric proposal: accept with prob min(1, exp(log_ratio))."""
    return math.log(rng.random()) < log_ratio


def _ig_draw(rng, prior: Prior, ss: float, n: int) -> float:
    a, b = prior.params
    return (b + 0.5 * ss) / rng.gamma(a + 0.5 * n, 1.0)


def _beta_draw(rng, basis: DiscrepancyBasis, resid_list, var_list, groups):
    """Exact Gaussian full conditional for each coefficient group."""
    D = basis.basis_matrix
    prior_prec = 1.0 / basis.coeff_prior_sd ** 2
    out = np.zeros((basis.n_groups(len(resid_list)), basis.K))
    for g in range(out.shape[0]):
        prec = np.diag(prior_prec)
        rhs = np.zeros(basis.K)
        for i in groups[g]:
            w = 1.0 / var_list[i]
            prec = prec + (D * w[:, None]).T @ D
            rhs = rhs + D.T @ (w * resid_list[i])
        L = np.linalg.cholesky(prec)
        mean = np.linalg.solve(prec, rhs)
        z = rng.standard_normal(basis.K)
        out[g] = mean + np.linalg.solve(L.T, z)
    return out


class _Sampler:
    def __init__(self, problem: CalibrationProblem, cfg: MCMCConfig):
        self.p = problem
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed)
        self.d = problem.theta_dim
        self.fixed_a = problem.sigma2_aligned_prior.kind == "fixed"
        self.fixed_v = problem.sigma2_shooting_prior.kind == "fixed"
        self.groups = {}
        for key, D in (("a", problem.discrepancy_aligned), ("v", problem.discrepancy_shooting)):
            if D is not None:
                if D.per_experiment:
                    self.groups[key] = [[i] for i in range(problem.n_exp)]
                else:
                    self.groups[key] = [list(range(problem.n_exp))]

    # variances ------------------------------------------------------------
    def _conjugate(self, var_list) -> bool:
        return all(np.all(v == 0) for v in var_list)

    def _update_sigma(self, which, resid, extra, s2, step):
        p = self.p
        prior = p.sigma2_aligned_prior if which == "a" else p.sigma2_shooting_prior
        if prior.kind == "fixed" or not resid:
            return s2, None
        if self._conjugate(extra) and prior.kind == "inverse_gamma":
            ss = sum(float(r @ r) for r in resid)
            n = sum(r.size for r in resid)
            return _ig_draw(self.rng, prior, ss, n), None
        # log-scale random walk when emulator variance breaks conjugacy
        def lp(s):
            return sum(_gauss(r, s + v) for r, v in zip(resid, extra)) + prior.logpdf(s) + math.log(s)
        prop = s2 * math.exp(step * self.rng.standard_normal())
        accept = mh_accept(self.rng, lp(prop) - lp(s2))
        return (prop if accept else s2), accept

    def run(self) -> PosteriorSamples:
        p, cfg, rng, d = self.p, self.cfg, self.rng, self.d
        s2a = p.sigma2_aligned_prior.mean if p.use_aligned else 1.0
        s2v = p.sigma2_shooting_prior.mean if p.use_shooting else 1.0
        ba = None if p.discrepancy_aligned is None else np.zeros(
            (p.discrepancy_aligned.n_groups(p.n_exp), p.discrepancy_aligned.K))
        bv = None if p.discrepancy_shooting is None else np.zeros(
            (p.discrepancy_shooting.n_groups(p.n_exp), p.discrepancy_shooting.K))

        # start from the best of a batch of prior draws
        theta, evals, ll = None, None, -math.inf
        for _ in range(cfg.n_init):
            cand = np.array([pr.sample(rng) for pr in p.priors], float)
            ev = forward_eval(p, cand)
            if ev is None:
                continue
            val = _loglik(p, ev, s2a, s2v, ba, bv)
            if val > ll or theta is None:
                theta, evals, ll = cand, ev, val
        if theta is None:
            raise MCMCError("no prior draw gave a finite likelihood")
        lp_theta = p.log_prior_theta(theta)

        widths = np.array([
            (pr.support[1] - pr.support[0]) if np.isfinite(pr.support[1] - pr.support[0])
            else (pr.params[1] if pr.kind == "normal" else 1.0)
            for pr in p.priors
        ])
        base_cov = np.diag((cfg.proposal_scale_init * np.maximum(widths, 1e-12)) ** 2)
        chol = np.linalg.cholesky(base_cov)
        log_scale = 0.0
        step_a = step_v = 0.5
        hist = np.empty((cfg.n_burn, d))

        n_keep = (cfg.n_iter - cfg.n_burn + cfg.thin - 1) // cfg.thin
        names = _discrepancy_names(p)
        out_theta = np.empty((n_keep, d))
        out_s2a = np.empty(n_keep)
        out_s2v = np.empty(n_keep)
        out_disc = np.empty((n_keep, len(names)))
        out_lp = np.empty(n_keep)
        acc = {"theta": 0, "sigma2_aligned": 0, "sigma2_shooting": 0}
        tried = {"theta": 0, "sigma2_aligned": 0, "sigma2_shooting": 0}
        streak = 0
        keep = 0

        for it in range(cfg.n_iter):
            burning = it < cfg.n_burn
            # calibration parameters
            prop = theta + math.exp(log_scale) * (chol @ rng.standard_normal(d))
            lp_prop = p.log_prior_theta(prop)
            accepted = False
            if lp_prop > -math.inf:
                ev = forward_eval(p, prop)
                if ev is not None:
                    ll_prop = _loglik(p, ev, s2a, s2v, ba, bv)
                    if mh_accept(rng, ll_prop + lp_prop - ll - lp_theta):
                        theta, evals, ll, lp_theta = prop, ev, ll_prop, lp_prop
                        accepted = True
            tried["theta"] += 1
            acc["theta"] += accepted
            streak = 0 if accepted else streak + 1
            if streak >= cfg.max_consecutive_rejects:
                raise MCMCError(
                    f"{streak} consecutive rejections at iteration {it}: theta={theta.tolist()}, "
                    f"loglik={ll:.6g}, proposal scale={math.exp(log_scale):.3g}"
                )
            if burning:
                hist[it] = theta
                gain = 1.0 / math.sqrt(it + 1.0)
                log_scale += gain * ((1.0 if accepted else 0.0) - 0.234)
                if it >= cfg.adapt_start and (it + 1) % cfg.adapt_interval == 0:
                    h = hist[it // 2: it + 1]
                    cov = np.atleast_2d(np.cov(h, rowvar=False))
                    cov = (2.38 ** 2 / d) * cov + 1e-12 * np.diag(widths ** 2)
                    try:
                        chol = np.linalg.cholesky(cov)
                        log_scale = 0.0 if it + 1 == cfg.adapt_start + cfg.adapt_interval else log_scale
                    except np.linalg.LinAlgError:
                        pass

            # variances
            ra, va, rv, vv = _block_terms(p, evals, ba, bv)
            s2a_new, a_ok = self._update_sigma("a", ra, va, s2a, step_a)
            s2v_new, v_ok = self._update_sigma("v", rv, vv, s2v, step_v)
            s2a, s2v = s2a_new, s2v_new
            if a_ok is not None:
                tried["sigma2_aligned"] += 1
                acc["sigma2_aligned"] += a_ok
                if burning:
                    step_a *= math.exp((1.0 / math.sqrt(it + 1.0)) * (a_ok - 0.44))
            if v_ok is not None:
                tried["sigma2_shooting"] += 1
                acc["sigma2_shooting"] += v_ok
                if burning:
                    step_v *= math.exp((1.0 / math.sqrt(it + 1.0)) * (v_ok - 0.44))

            # discrepancy coefficients, exact conditionals
            if ba is not None or bv is not None:
                ra0, va0, rv0, vv0 = _block_terms(p, evals, None, None)
                if ba is not None and p.use_aligned:
                    ba = _beta_draw(rng, p.discrepancy_aligned, ra0,
                                    [s2a + v for v in va0], self.groups["a"])
                if bv is not None and p.use_shooting:
                    bv = _beta_draw(rng, p.discrepancy_shooting, rv0,
                                    [s2v + v for v in vv0], self.groups["v"])
            ll = _loglik(p, evals, s2a, s2v, ba, bv)

            if not burning and (it - cfg.n_burn) % cfg.thin == 0:
                out_theta[keep] = theta
                out_s2a[keep] = s2a
                out_s2v[keep] = s2v
                parts = [b.ravel() for b in (ba, bv) if b is not None]
                out_disc[keep] = np.concatenate(parts) if parts else np.zeros(0)
                out_lp[keep] = (ll + lp_theta + _sigma_prior(p, s2a, s2v)
                                + _log_prior_beta(ba, p.discrepancy_aligned)
                                + _log_prior_beta(bv, p.discrepancy_shooting))
                keep += 1

        rates = {k: (acc[k] / tried[k] if tried[k] else float("nan")) for k in acc}
        return PosteriorSamples(out_theta, out_s2a, out_s2v, out_disc, out_lp, rates,
                                list(p.param_names), names, cfg.seed)


def mcmc_sample(problem: CalibrationProblem, config: MCMCConfig | None = None, **kw) -> PosteriorSamples:
    """Adaptive Metropolis-within-Gibbs; adaptation stops after burn-in."""
    cfg = config or MCMCConfig(**kw)
    return _Sampler(problem, cfg).run()


def effective_sample_size(x) -> float:
    """Geyer initial-monotone-sequence ESS for one chain."""
    x = np.asarray(x, float)
    n = x.size
    if n < 4 or np.var(x) == 0:
        return float(n)
    xc = x - x.mean()
    f = np.fft.rfft(xc, 2 * n)
    acf = np.fft.irfft(f * np.conj(f))[:n] / (n * np.var(x))
    pair = acf[:-1:2] + acf[1::2]
    k = np.argmax(pair <= 0) if np.any(pair <= 0) else pair.size
    pair = np.minimum.accumulate(pair[:k]) if k else pair[:1]
    tau = -1.0 + 2.0 * np.sum(pair)
    return float(n / max(tau, 1e-12))


# ---------------------------------------------------------------- prediction


@dataclass
class PredictiveDraws:
    curves: list
    aligned: np.ndarray
    warps: np.ndarray
    shooting: np.ndarray
    draw_index: np.ndarray
    n_resampled: int

    def matrix(self) -> np.ndarray:
        return np.array([c.values for c in self.curves])


def posterior_predict(
    samples: PosteriorSamples,
    problem: CalibrationProblem,
    n_draws: int = 200,
    seed: int = 0,
    experiment: int = 0,
    include_discrepancy: bool = True,
    include_noise: bool = True,
    max_resample: int | None = None,
) -> PredictiveDraws:
    """Predictive curves in the original data space for one experiment.

    Shooting predictions that land outside the invertible domain are
    redrawn; the number of redraws is reported.
    """
    if samples.n_draws == 0:
        raise ValueError("no posterior draws")
    rng = np.random.default_rng(seed)
    e = problem.experiments[experiment]
    grid_a = e.aligned_obs.grid
    unit = e.shooting_obs.grid
    da, dv = samples.split_discrepancy(problem)
    max_resample = max_resample if max_resample is not None else 50 * n_draws
    curves, aligned, warps, shoots, idx = [], [], [], [], []
    resampled = 0
    while len(curves) < n_draws:
        j = int(rng.integers(samples.n_draws))
        theta = samples.theta[j]
        ev = forward_eval(problem, theta)
        if ev is None:
            resampled += 1
            continue
        ev = ev[experiment]
        y = ev.aligned_mean.copy()
        if include_discrepancy and da is not None:
            D = problem.discrepancy_aligned
            y += D.evaluate(da[j, experiment if D.per_experiment else 0])
        if include_noise:
            y += rng.standard_normal(y.size) * np.sqrt(samples.sigma2_aligned[j] + ev.aligned_var)
        if problem.use_shooting and ev.shooting_mean is not None:
            v = ev.shooting_mean.copy()
            if include_discrepancy and dv is not None:
                D = problem.discrepancy_shooting
                v += D.evaluate(dv[j, experiment if D.per_experiment else 0])
            if include_noise:
                v += rng.standard_normal(v.size) * np.sqrt(samples.sigma2_shooting[j] + ev.shooting_var)
            v = project_tangent(v, unit)
            try:
                gamma = shooting_to_gamma(ShootingVector(unit, v))
            except (InjectivityError, ValueError):
                resampled += 1
                if resampled > max_resample:
                    raise RuntimeError("too many shooting predictions outside the injectivity radius")
                continue
            f = unwarp(GridFunction(grid_a, y), gamma)
            g_vals = gamma.values
        else:
            v = np.zeros(len(unit))
            f = GridFunction(grid_a, y)
            g_vals = unit.points.copy()
        curves.append(f)
        aligned.append(y)
        warps.append(g_vals)
        shoots.append(v)
        idx.append(j)
    if resampled:
        log.info("posterior_predict redrew %d draws", resampled)
    return PredictiveDraws(curves, np.array(aligned), np.array(warps), np.array(shoots),
                           np.array(idx), resampled)
