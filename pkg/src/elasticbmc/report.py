"""Posterior summaries: HPD regions, pairwise contours, predictive bands, coverage."""
from __future__ import annotations

from dataclasses import dataclass

import contourpy
import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.ndimage import gaussian_filter

__all__ = [
    "HpdInterval",
    "hpd_1d",
    "HpdRegion2d",
    "hpd_2d",
    "marginal_histogram",
    "predictive_bands",
    "band_coverage",
    "peak_location",
]


def _box(x, lo, hi, pad_sd: float = 4.0):
    """Evaluation interval and whether each end sits on a hard bound."""
    sd = float(np.std(x)) or 1e-12
    a, b = x.min() - pad_sd * sd, x.max() + pad_sd * sd
    at_lo, at_hi = a <= lo, b >= hi
    return max(a, lo), min(b, hi), at_lo, at_hi


def _binned_kde(data, edges, reflect, bandwidth):
    """Gaussian KDE on a regular grid via binning and filtering.

    ``reflect[axis] = (lo_edge, hi_edge)`` mirrors mass back across hard
    bounds; other edges are padded with zeros.
    """
    hist, _ = np.histogramdd(data, bins=edges)
    sig = [bw / (e[1] - e[0]) for bw, e in zip(bandwidth, edges)]
    pads = [int(np.ceil(4.0 * sg)) + 1 for sg in sig]
    arr = hist
    for ax, (p, (rl, rh)) in enumerate(zip(pads, reflect)):
        n = arr.shape[ax]
        p = min(p, n)
        lo_part = np.flip(np.take(arr, range(p), axis=ax), axis=ax) if rl else np.zeros_like(np.take(arr, range(p), axis=ax))
        hi_part = np.flip(np.take(arr, range(n - p, n), axis=ax), axis=ax) if rh else np.zeros_like(np.take(arr, range(p), axis=ax))
        arr = np.concatenate([lo_part, arr, hi_part], axis=ax)
        pads[ax] = p
    sm = gaussian_filter(arr, sig, mode="constant", truncate=4.0)
    sl = tuple(slice(p, p + n) for p, n in zip(pads, hist.shape))
    dens = sm[sl]
    cell = np.prod([e[1] - e[0] for e in edges])
    return dens / (dens.sum() * cell)


def _hpd_threshold(dens: np.ndarray, cell: float, mass: float) -> float:
    flat = np.sort(dens.ravel())[::-1]
    cum = np.cumsum(flat) * cell
    cum /= cum[-1]
    k = int(np.searchsorted(cum, mass))
    return float(flat[min(k, flat.size - 1)])


@dataclass
class HpdInterval:
    grid: np.ndarray
    density: np.ndarray
    threshold: float
    mass: float

    def contains(self, value: float) -> bool:
        # a hair over half a bin so a value sitting on a support edge is not lost to rounding
        half = 0.5 * (self.grid[1] - self.grid[0]) * (1 + 1e-9)
        if value < self.grid[0] - half or value > self.grid[-1] + half:
            return False
        return bool(np.interp(value, self.grid, self.density) >= self.threshold)

    @property
    def length(self) -> float:
        dx = self.grid[1] - self.grid[0]
        return float(np.sum(self.density >= self.threshold) * dx)

    def bounds(self) -> tuple:
        inside = self.grid[self.density >= self.threshold]
        return float(inside.min()), float(inside.max())


def hpd_1d(samples, support=(-np.inf, np.inf), mass: float = 0.95, n_grid: int = 512) -> HpdInterval:
    """Highest-density region from a boundary-reflected KDE.

    Reflection stops the estimate leaking mass across hard prior bounds, so
    a posterior piled against a bound still covers the bound.
    """
    x = np.asarray(samples, float)
    if x.size < 2:
        raise ValueError("need at least two draws")
    lo, hi = support
    a, b, rl, rh = _box(x, lo, hi)
    if b <= a:
        b = a + 1e-9
    edges = np.linspace(a, b, n_grid + 1)
    bw = max(float(np.std(x, ddof=1)), 1e-12) * x.size ** (-0.2)
    dens = _binned_kde(x[:, None], [edges], [(rl, rh)], [bw])
    grid = 0.5 * (edges[1:] + edges[:-1])
    return HpdInterval(grid, dens, _hpd_threshold(dens, edges[1] - edges[0], mass), mass)


@dataclass
class HpdRegion2d:
    xgrid: np.ndarray
    ygrid: np.ndarray
    density: np.ndarray
    threshold: float
    mass: float

    @property
    def area(self) -> float:
        cell = (self.xgrid[1] - self.xgrid[0]) * (self.ygrid[1] - self.ygrid[0])
        return float(np.sum(self.density >= self.threshold) * cell)

    def contains(self, x: float, y: float) -> bool:
        hx = 0.5 * (self.xgrid[1] - self.xgrid[0]) * (1 + 1e-9)
        hy = 0.5 * (self.ygrid[1] - self.ygrid[0]) * (1 + 1e-9)
        if not (self.xgrid[0] - hx <= x <= self.xgrid[-1] + hx
                and self.ygrid[0] - hy <= y <= self.ygrid[-1] + hy):
            return False
        x = min(max(x, self.xgrid[0]), self.xgrid[-1])
        y = min(max(y, self.ygrid[0]), self.ygrid[-1])
        f = RegularGridInterpolator((self.xgrid, self.ygrid), self.density.T)
        return bool(f([[x, y]])[0] >= self.threshold)

    def contours(self) -> list:
        """Closed polylines (first point repeated at the end) bounding the region."""
        # pad with zeros so every contour closes, even against the box edge
        xs = np.concatenate([[self.xgrid[0] - 1e-9], self.xgrid, [self.xgrid[-1] + 1e-9]])
        ys = np.concatenate([[self.ygrid[0] - 1e-9], self.ygrid, [self.ygrid[-1] + 1e-9]])
        z = np.pad(self.density, 1)
        gen = contourpy.contour_generator(xs, ys, z, line_type=contourpy.LineType.Separate)
        lines = []
        for ln in gen.lines(self.threshold):
            ln = np.asarray(ln, float)
            ln[:, 0] = np.clip(ln[:, 0], self.xgrid[0], self.xgrid[-1])
            ln[:, 1] = np.clip(ln[:, 1], self.ygrid[0], self.ygrid[-1])
            if not np.array_equal(ln[0], ln[-1]):
                ln = np.vstack([ln, ln[:1]])
            lines.append(ln)
        return lines


def hpd_2d(x, y, support_x=(-np.inf, np.inf), support_y=(-np.inf, np.inf),
           mass: float = 0.95, n_grid: int = 256) -> HpdRegion2d:
    """Bivariate HPD region from a KDE reflected at hard bounds."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    ax, bx, rxl, rxh = _box(x, *support_x)
    ay, by, ryl, ryh = _box(y, *support_y)
    ex = np.linspace(ax, bx, n_grid + 1)
    ey = np.linspace(ay, by, n_grid + 1)
    f = x.size ** (-1.0 / 6.0)
    bw = [max(float(np.std(x, ddof=1)), 1e-12) * f, max(float(np.std(y, ddof=1)), 1e-12) * f]
    dens = _binned_kde(np.column_stack([x, y]), [ex, ey], [(rxl, rxh), (ryl, ryh)], bw).T
    xg = 0.5 * (ex[1:] + ex[:-1])
    yg = 0.5 * (ey[1:] + ey[:-1])
    cell = (ex[1] - ex[0]) * (ey[1] - ey[0])
    return HpdRegion2d(xg, yg, dens, _hpd_threshold(dens, cell, mass), mass)


def marginal_histogram(samples, bins: int = 40, support=None):
    x = np.asarray(samples, float)
    rng = None if support is None or not np.all(np.isfinite(support)) else support
    counts, edges = np.histogram(x, bins=bins, range=rng, density=True)
    return edges, counts


def predictive_bands(curves, level: float = 0.95):
    """Pointwise (lower, median, upper) of a draws x grid matrix."""
    Y = np.asarray(curves, float)
    a = 0.5 * (1.0 - level)
    lo, med, hi = np.quantile(Y, [a, 0.5, 1.0 - a], axis=0)
    return lo, med, hi


def band_coverage(observed, lower, upper) -> float:
    """Fraction of grid points where the observation lies inside the band."""
    z = np.asarray(observed, float)
    return float(np.mean((z >= lower) & (z <= upper)))


def peak_location(t, values) -> float:
    """Argmax refined by a parabola through the three highest neighbours."""
    t = np.asarray(t, float)
    y = np.asarray(values, float)
    i = int(np.argmax(y))
    if 0 < i < y.size - 1:
        y0, y1, y2 = y[i - 1], y[i], y[i + 1]
        den = y0 - 2.0 * y1 + y2
        if den < 0:
            off = 0.5 * (y0 - y2) / den
            return float(t[i] + off * (t[i + 1] - t[i - 1]) / 2.0)
    return float(t[i])
