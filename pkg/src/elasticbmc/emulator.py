"""Functional emulators: FPCA basis plus one scalar surrogate per coefficient.

Aligned curves and shooting vectors get two independent ``Emulator``
instances; nothing is shared between them.
"""
from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .grid import Grid, GridFunction, trapezoid_weights

log = logging.getLogger(__name__)

__all__ = [
    "FpcaBasis",
    "GPSurrogate",
    "LinearSurrogate",
    "Emulator",
    "EmulatorPrediction",
    "CVReport",
    "fpca_fit",
    "train",
    "predict",
    "cross_validate",
    "EMULATOR_FORMAT_VERSION",
]

EMULATOR_FORMAT_VERSION = 1


def _as_matrix(outputs):
    """Stack GridFunctions / arrays into (n, N_T); return the grid if known."""
    outputs = list(outputs)
    grid = None
    rows = []
    for f in outputs:
        if hasattr(f, "grid"):
            if grid is None:
                grid = f.grid
            elif not f.grid.same_as(grid):
                raise ValueError("outputs are not on a shared grid")
            rows.append(np.asarray(f.values, dtype=float))
        else:
            rows.append(np.asarray(f, dtype=float))
    Y = np.array(rows, dtype=float)
    if Y.ndim != 2:
        raise ValueError("outputs must all have the same length")
    return Y, grid


@dataclass(frozen=True, eq=False)
class FpcaBasis:
    mean_curve: GridFunction
    components: list
    explained_variance: np.ndarray
    total_variance: float = 0.0

    @property
    def n_comp(self) -> int:
        return len(self.components)

    @property
    def grid(self) -> Grid:
        return self.mean_curve.grid

    def component_matrix(self) -> np.ndarray:
        n_t = len(self.grid)
        if not self.components:
            return np.zeros((0, n_t))
        return np.array([c.values for c in self.components])

    def project(self, Y: np.ndarray) -> np.ndarray:
        w = trapezoid_weights(self.grid.points)
        return (np.atleast_2d(Y) - self.mean_curve.values) @ (self.component_matrix() * w).T

    def reconstruct(self, coeffs: np.ndarray) -> np.ndarray:
        return self.mean_curve.values + np.atleast_2d(coeffs) @ self.component_matrix()


def fpca_fit(curves, variance_target: float = 0.995, grid: Grid | None = None) -> FpcaBasis:
    """Weighted PCA; components are orthonormal under the trapezoidal inner product."""
    if not 0.0 < variance_target <= 1.0:
        raise ValueError("variance_target must lie in (0, 1]")
    Y, g = _as_matrix(curves)
    grid = grid or g
    if grid is None:
        raise ValueError("a grid is required when curves are plain arrays")
    if Y.shape[0] < 2:
        raise ValueError("FPCA needs at least 2 curves")
    # identical rows: keep the curve exactly rather than a rounded average
    mean = Y[0].copy() if np.all(Y == Y[0]) else Y.mean(axis=0)
    w = trapezoid_weights(grid.points)
    sw = np.sqrt(w)
    Yc = (Y - mean) * sw
    _, s, vt = np.linalg.svd(Yc, full_matrices=False)
    var = s ** 2 / (Y.shape[0] - 1)
    total = float(var.sum())
    scale = max(1.0, float(np.max(np.abs(Yc)))) if Yc.size else 1.0
    if total <= (1e-12 * scale) ** 2:
        k = 0
    else:
        frac = np.cumsum(var) / total
        k = int(np.searchsorted(frac, variance_target - 1e-12) + 1)
        k = min(k, int(np.sum(var > 1e-14 * var[0])))
    comps = [GridFunction(grid, vt[i] / sw) for i in range(k)]
    return FpcaBasis(GridFunction(grid, mean), comps, var[:k].copy(), total)


class GPSurrogate:
    """Zero-mean GP on standardized outputs, anisotropic squared-exponential kernel.

    Hyperparameters are maximum-likelihood estimates from scikit-learn; the
    fitted model is kept as plain arrays so prediction is cheap and the
    whole thing serializes to JSON.
    """

    kind = "gp"

    def __init__(self, lengthscales=None, signal_var=1.0, noise_var=1e-6, nugget=1e-8):
        self.lengthscales = None if lengthscales is None else np.asarray(lengthscales, float)
        self.signal_var = float(signal_var)
        self.noise_var = float(noise_var)
        self.nugget = float(nugget)

    def _k(self, A, B):
        d = (A[:, None, :] - B[None, :, :]) / self.lengthscales
        return self.signal_var * np.exp(-0.5 * np.sum(d * d, axis=-1))

    def fit(self, X, y, optimize: bool = True, seed: int = 0, n_restarts: int = 2):
        from sklearn.exceptions import ConvergenceWarning
        from sklearn.gaussian_process import GaussianProcessRegressor
        from sklearn.gaussian_process.kernels import RBF, ConstantKernel, WhiteKernel

        X = np.asarray(X, float)
        y = np.asarray(y, float)
        self.y_mean = float(y.mean())
        self.y_std = float(y.std()) or 1.0
        ys = (y - self.y_mean) / self.y_std
        if optimize:
            kernel = ConstantKernel(1.0, (1e-3, 1e3)) * RBF(
                np.full(X.shape[1], 0.5), (1e-2, 1e3)
            ) + WhiteKernel(1e-4, (self.nugget, 1.0))
            gpr = GaussianProcessRegressor(
                kernel, normalize_y=False, n_restarts_optimizer=n_restarts,
                random_state=np.random.RandomState(seed),
            )
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ConvergenceWarning)
                gpr.fit(X, ys)
            k = gpr.kernel_
            self.signal_var = float(k.k1.k1.constant_value)
            self.lengthscales = np.atleast_1d(np.asarray(k.k1.k2.length_scale, float))
            self.noise_var = max(float(k.k2.noise_level), self.nugget)
        self._condition(X, ys)
        return self

    def _condition(self, X, ys):
        self.X = X
        self.ys = ys
        K = self._k(X, X) + (self.noise_var + self.nugget) * np.eye(X.shape[0])
        self._L = np.linalg.cholesky(K)
        self._alpha = cho_solve((self._L, True), ys)

    def predict(self, X):
        """Predictive mean and variance (latent + noise) in output units."""
        X = np.atleast_2d(X)
        ks = self._k(X, self.X)
        mean = ks @ self._alpha
        v = solve_triangular(self._L, ks.T, lower=True)
        var = self.signal_var + self.noise_var - np.sum(v * v, axis=0)
        var = np.maximum(var, 0.0)
        return self.y_mean + self.y_std * mean, self.y_std ** 2 * var

    def loo_residual_variance(self) -> float:
        """Mean squared leave-one-out residual, closed form."""
        Kinv = cho_solve((self._L, True), np.eye(self.X.shape[0]))
        r = self._alpha / np.diag(Kinv)
        return float(np.mean(r ** 2) * self.y_std ** 2)

    def to_dict(self):
        return {
            "kind": self.kind,
            "lengthscales": self.lengthscales.tolist(),
            "signal_var": self.signal_var,
            "noise_var": self.noise_var,
            "nugget": self.nugget,
            "y_mean": self.y_mean,
            "y_std": self.y_std,
            "X": self.X.tolist(),
            "y": (self.y_mean + self.y_std * self.ys).tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        obj = cls(d["lengthscales"], d["signal_var"], d["noise_var"], d["nugget"])
        X = np.asarray(d["X"], float)
        y = np.asarray(d["y"], float)
        obj.y_mean, obj.y_std = d["y_mean"], d["y_std"]
        obj._condition(X, (y - obj.y_mean) / obj.y_std)
        return obj


class LinearSurrogate:
    """Ordinary least squares with intercept; constant residual variance."""

    kind = "linear"

    def fit(self, X, y, **_):
        X = np.asarray(X, float)
        A = np.column_stack([np.ones(len(X)), X])
        self.coef, *_ = np.linalg.lstsq(A, np.asarray(y, float), rcond=None)
        resid = np.asarray(y, float) - A @ self.coef
        dof = max(len(X) - A.shape[1], 1)
        self.resid_var = float(resid @ resid / dof)
        self._loo = self._loo_var(A, resid)
        return self

    @staticmethod
    def _loo_var(A, resid):
        H = A @ np.linalg.pinv(A)
        h = np.clip(np.diag(H), 0.0, 1.0 - 1e-12)
        return float(np.mean((resid / (1.0 - h)) ** 2))

    def predict(self, X):
        X = np.atleast_2d(X)
        mean = self.coef[0] + X @ self.coef[1:]
        return mean, np.full(X.shape[0], self.resid_var)

    def loo_residual_variance(self) -> float:
        return self._loo

    def to_dict(self):
        return {"kind": self.kind, "coef": self.coef.tolist(),
                "resid_var": self.resid_var, "loo": self._loo}

    @classmethod
    def from_dict(cls, d):
        obj = cls()
        obj.coef = np.asarray(d["coef"], float)
        obj.resid_var = d["resid_var"]
        obj._loo = d["loo"]
        return obj


def _unit_scale(U, ranges) -> np.ndarray:
    lo, hi = ranges[:, 0], ranges[:, 1]
    span = np.where(hi > lo, hi - lo, 1.0)
    return (np.atleast_2d(U) - lo) / span


SURROGATES = {"gp": GPSurrogate, "linear": LinearSurrogate}


@dataclass(frozen=True, eq=False)
class EmulatorPrediction:
    mean: GridFunction
    pointwise_sd: GridFunction

    def __post_init__(self):
        if np.any(self.pointwise_sd.values < 0):
            raise ValueError("pointwise sd must be nonnegative")


@dataclass(eq=False)
class Emulator:
    basis: FpcaBasis
    coefficient_models: list
    input_ranges: np.ndarray
    residual_variance: np.ndarray
    meta: dict = field(default_factory=dict)
    truncation_variance: np.ndarray | None = None

    def __post_init__(self):
        self.input_ranges = np.asarray(self.input_ranges, float).reshape(-1, 2)
        self.residual_variance = np.asarray(self.residual_variance, float)
        n_t = len(self.basis.grid)
        tv = np.zeros(n_t) if self.truncation_variance is None else self.truncation_variance
        self.truncation_variance = np.asarray(tv, float).reshape(n_t)
        if np.any(self.truncation_variance < 0):
            raise ValueError("truncation variances must be nonnegative")
        if len(self.coefficient_models) != self.basis.n_comp:
            raise ValueError("one coefficient model per retained component is required")
        if np.any(self.residual_variance < 0):
            raise ValueError("residual variances must be nonnegative")
        self._phi = self.basis.component_matrix()
        self._phi2 = self._phi ** 2

    @property
    def grid(self) -> Grid:
        return self.basis.grid

    @property
    def n_inputs(self) -> int:
        return self.input_ranges.shape[0]

    def scale_inputs(self, U) -> np.ndarray:
        return _unit_scale(U, self.input_ranges)

    def predict_arrays(self, u):
        """Mean curve and pointwise variance as raw arrays (hot path)."""
        u = np.asarray(u, float).ravel()
        if u.size != self.n_inputs:
            raise ValueError(f"expected {self.n_inputs} inputs, got {u.size}")
        if self.basis.n_comp == 0:
            mean = self.basis.mean_curve.values
            return mean.copy(), self.truncation_variance.copy()
        x = self.scale_inputs(u)
        c = np.empty(self.basis.n_comp)
        cv = np.empty(self.basis.n_comp)
        for k, m in enumerate(self.coefficient_models):
            mu, var = m.predict(x)
            c[k], cv[k] = mu[0], var[0]
        return self.basis.mean_curve.values + c @ self._phi, cv @ self._phi2 + self.truncation_variance

    def error_variance(self) -> np.ndarray:
        """Input-independent pointwise error variance: leave-one-out
        coefficient residuals mapped through the basis, plus truncation."""
        if self.basis.n_comp == 0:
            return self.truncation_variance.copy()
        return self.residual_variance @ self._phi2 + self.truncation_variance

    def predict_coefficients(self, u):
        x = self.scale_inputs(np.asarray(u, float).ravel())
        return np.array([m.predict(x)[0][0] for m in self.coefficient_models])

    def to_dict(self):
        b = self.basis
        return {
            "format": "elasticbmc-emulator",
            "version": EMULATOR_FORMAT_VERSION,
            "grid": b.grid.points.tolist(),
            "mean_curve": b.mean_curve.values.tolist(),
            "components": [c.values.tolist() for c in b.components],
            "explained_variance": b.explained_variance.tolist(),
            "total_variance": b.total_variance,
            "input_ranges": self.input_ranges.tolist(),
            "residual_variance": self.residual_variance.tolist(),
            "truncation_variance": self.truncation_variance.tolist(),
            "surrogates": [m.to_dict() for m in self.coefficient_models],
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != "elasticbmc-emulator":
            raise ValueError("not an emulator file")
        if d.get("version") != EMULATOR_FORMAT_VERSION:
            raise ValueError(f"unsupported emulator format version {d.get('version')}")
        grid = Grid(d["grid"])
        basis = FpcaBasis(
            GridFunction(grid, d["mean_curve"]),
            [GridFunction(grid, c) for c in d["components"]],
            np.asarray(d["explained_variance"], float),
            d.get("total_variance", 0.0),
        )
        models = [SURROGATES[s["kind"]].from_dict(s) for s in d["surrogates"]]
        return cls(basis, models, d["input_ranges"], d["residual_variance"], d.get("meta", {}),
                   d.get("truncation_variance"))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def train(
    inputs,
    outputs,
    variance_target: float = 0.995,
    surrogate: str = "gp",
    input_ranges=None,
    grid: Grid | None = None,
    seed: int = 0,
) -> Emulator:
    X = np.atleast_2d(np.asarray(inputs, float))
    Y, g = _as_matrix(outputs)
    grid = grid or g
    if X.shape[0] != Y.shape[0]:
        raise ValueError("input rows do not match the number of outputs")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
        raise ValueError("non-finite training data")
    if input_ranges is None:
        input_ranges = np.column_stack([X.min(axis=0), X.max(axis=0)])
    basis = fpca_fit(Y, variance_target, grid)
    if basis.n_comp and X.shape[0] < 10 * basis.n_comp:
        warnings.warn(
            f"{X.shape[0]} runs for {basis.n_comp} components; at least "
            f"{10 * basis.n_comp} recommended",
            stacklevel=2,
        )
    input_ranges = np.asarray(input_ranges, float).reshape(-1, 2)
    coeffs = basis.project(Y)
    # pointwise variance the discarded components leave behind
    trunc = np.mean((Y - basis.reconstruct(coeffs)) ** 2, axis=0)
    Xs = _unit_scale(X, input_ranges)
    models, resid = [], []
    for k in range(basis.n_comp):
        m = SURROGATES[surrogate]().fit(Xs, coeffs[:, k], seed=seed + k)
        models.append(m)
        resid.append(m.loo_residual_variance())
    return Emulator(basis, models, input_ranges, np.array(resid), {"surrogate": surrogate}, trunc)


def predict(em: Emulator, u) -> EmulatorPrediction:
    u = np.asarray(u, float).ravel()
    if u.size != em.n_inputs:
        raise ValueError(f"expected {em.n_inputs} inputs, got {u.size}")
    lo, hi = em.input_ranges[:, 0], em.input_ranges[:, 1]
    if np.any(u < lo) or np.any(u > hi):
        warnings.warn("prediction input outside the training ranges (extrapolation)", stacklevel=2)
    mean, var = em.predict_arrays(u)
    return EmulatorPrediction(GridFunction(em.grid, mean), GridFunction(em.grid, np.sqrt(var)))


@dataclass
class CVReport:
    fold: np.ndarray
    index: np.ndarray
    rel_error: np.ndarray
    seed: int

    @property
    def fold_means(self) -> np.ndarray:
        return np.array([self.rel_error[self.fold == f].mean() for f in np.unique(self.fold)])

    @property
    def median(self) -> float:
        return float(np.median(self.rel_error))

    def to_csv(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("fold,index,rel_error\n")
            for f, i, e in zip(self.fold, self.index, self.rel_error):
                fh.write(f"{int(f)},{int(i)},{e:.10g}\n")


def _rel_l2(pred, true, w):
    num = np.sqrt(np.sum(w * (pred - true) ** 2))
    den = np.sqrt(np.sum(w * true ** 2))
    if den == 0.0:
        return 0.0 if num == 0.0 else float("inf")
    return float(num / den)


def cross_validate(inputs, outputs, folds: int = 5, seed: int = 0, **train_kw) -> CVReport:
    """K-fold relative L2 errors with a seeded shuffle."""
    X = np.atleast_2d(np.asarray(inputs, float))
    Y, g = _as_matrix(outputs)
    grid = train_kw.pop("grid", None) or g
    n = X.shape[0]
    if folds < 2:
        raise ValueError("need at least 2 folds")
    if folds > n:
        raise ValueError("more folds than runs")
    perm = np.random.default_rng(seed).permutation(n)
    assign = np.empty(n, dtype=int)
    assign[perm] = np.arange(n) % folds
    ranges = train_kw.pop("input_ranges", None)
    if ranges is None:
        ranges = np.column_stack([X.min(axis=0), X.max(axis=0)])
    w = trapezoid_weights(grid.points)
    fold_ids, idx, errs = [], [], []
    for f in range(folds):
        test = np.flatnonzero(assign == f)
        trn = np.flatnonzero(assign != f)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            em = train(X[trn], Y[trn], grid=grid, input_ranges=ranges, **train_kw)
        for i in test:
            mean, _ = em.predict_arrays(X[i])
            fold_ids.append(f)
            idx.append(i)
            errs.append(_rel_l2(mean, Y[i], w))
    return CVReport(np.array(fold_ids), np.array(idx), np.array(errs), seed)
