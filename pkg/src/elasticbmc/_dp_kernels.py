"""Dynamic-programming kernels for SRVF alignment.

Lattice node (i, j) means gamma(t[i]) = t[j].  An edge (k, l) -> (i, j) is a
straight segment of gamma; its cost is the trapezoidal integral over
[t[k], t[i]] of (q1 - sqrt(m) * q2(gamma))^2 plus lam * (sqrt(m) - 1)^2,
where m is the segment slope.  Both back ends evaluate the exact same
arithmetic in the same order, so they agree to the last bit on ties.
"""
from __future__ import annotations

from math import gcd

import numpy as np

from ._accel import HAVE_NUMBA, njit

__all__ = ["slope_steps", "edge_cost", "dp_table", "backtrack", "dp_path"]


def slope_steps(nbhd: int = 4) -> np.ndarray:
    """Coprime (di, dj) steps with 1 <= di, dj <= nbhd, diagonal first."""
    steps = [(1, 1)]
    for total in range(3, 2 * nbhd + 1):
        for di in range(1, nbhd + 1):
            dj = total - di
            if 1 <= dj <= nbhd and gcd(di, dj) == 1:
                steps.append((di, dj))
    return np.array(steps, dtype=np.int64)


@njit
def _interp_from(x, t, q, start):
    # Mirrors np.interp: last p with t[p] <= x, starting the scan at `start`.
    n = t.shape[0]
    p = start
    while p + 1 < n and t[p + 1] <= x:
        p += 1
    if p >= n - 1:
        return q[n - 1]
    slope = (q[p + 1] - q[p]) / (t[p + 1] - t[p])
    return slope * (x - t[p]) + q[p]


@njit
def _edge_cost(q1, q2, t, k, l, i, j, lam):
    m = (t[j] - t[l]) / (t[i] - t[k])
    sm = np.sqrt(m)
    e_prev = (q1[k] - sm * q2[l]) ** 2
    cost = 0.0
    for a in range(k + 1, i + 1):
        if a == i:
            q2x = q2[j]
        else:
            x = t[l] + m * (t[a] - t[k])
            q2x = _interp_from(x, t, q2, l)
        e = (q1[a] - sm * q2x) ** 2
        cost += 0.5 * (t[a] - t[a - 1]) * (e_prev + e)
        e_prev = e
    return cost + lam * (t[i] - t[k]) * (sm - 1.0) ** 2


def edge_cost(q1, q2, t, k, l, i, j, lam=0.0) -> float:
    """Cost of the lattice edge (k, l) -> (i, j)."""
    return float(_edge_cost(np.asarray(q1, float), np.asarray(q2, float),
                            np.asarray(t, float), k, l, i, j, float(lam)))


@njit(nogil=True)
def _dp_table_numba(q1, q2, t, steps, lam):
    n = t.shape[0]
    E = np.full((n, n), np.inf)
    pk = np.full((n, n), -1, dtype=np.int64)
    pl = np.full((n, n), -1, dtype=np.int64)
    E[0, 0] = 0.0
    ns = steps.shape[0]
    for i in range(1, n):
        for j in range(1, n):
            best = np.inf
            bk = -1
            bl = -1
            for s in range(ns):
                k = i - steps[s, 0]
                l = j - steps[s, 1]
                if k < 0 or l < 0:
                    continue
                if E[k, l] == np.inf:
                    continue
                c = E[k, l] + _edge_cost(q1, q2, t, k, l, i, j, lam)
                if c < best:
                    best = c
                    bk = k
                    bl = l
            E[i, j] = best
            pk[i, j] = bk
            pl[i, j] = bl
    return E, pk, pl


def _edge_costs_numpy(q1, q2, t, di, dj, lam):
    """Costs of every edge with step (di, dj), indexed by its end node."""
    n = t.size
    I, J = np.meshgrid(np.arange(di, n), np.arange(dj, n), indexing="ij")
    K, L = I - di, J - dj
    m = (t[J] - t[L]) / (t[I] - t[K])
    sm = np.sqrt(m)
    e_prev = (q1[K] - sm * q2[L]) ** 2
    cost = np.zeros(I.shape)
    for r in range(1, di + 1):
        a = K + r
        if r == di:
            q2x = q2[J]
        else:
            x = t[L] + m * (t[a] - t[K])
            q2x = np.interp(x, t, q2)
        e = (q1[a] - sm * q2x) ** 2
        cost += 0.5 * (t[a] - t[a - 1]) * (e_prev + e)
        e_prev = e
    return cost + lam * (t[I] - t[K]) * (sm - 1.0) ** 2


def _dp_table_numpy(q1, q2, t, steps, lam):
    n = t.size
    costs = [_edge_costs_numpy(q1, q2, t, int(di), int(dj), lam) for di, dj in steps]
    E = np.full((n, n), np.inf)
    pk = np.full((n, n), -1, dtype=np.int64)
    pl = np.full((n, n), -1, dtype=np.int64)
    E[0, 0] = 0.0
    for i in range(1, n):
        best = np.full(n, np.inf)
        bk = np.full(n, -1, dtype=np.int64)
        bl = np.full(n, -1, dtype=np.int64)
        for s, (di, dj) in enumerate(steps):
            k = i - di
            if k < 0:
                continue
            prev = E[k, : n - dj]
            cand = np.full(n, np.inf)
            with np.errstate(invalid="ignore"):
                cand[dj:] = prev + costs[s][k, :]
            cand[dj:][np.isinf(prev)] = np.inf
            better = cand < best
            best[better] = cand[better]
            bk[better] = k
            bl[better] = np.arange(n)[better] - dj
        best[0] = np.inf
        bk[0] = bl[0] = -1
        E[i], pk[i], pl[i] = best, bk, bl
    return E, pk, pl


def dp_table(q1, q2, t, steps, lam=0.0, use_numba: bool | None = None):
    """Cumulative cost table and predecessor arrays."""
    q1 = np.ascontiguousarray(q1, dtype=float)
    q2 = np.ascontiguousarray(q2, dtype=float)
    t = np.ascontiguousarray(t, dtype=float)
    steps = np.ascontiguousarray(steps, dtype=np.int64)
    if use_numba is None:
        use_numba = HAVE_NUMBA
    if use_numba and HAVE_NUMBA:
        return _dp_table_numba(q1, q2, t, steps, float(lam))
    return _dp_table_numpy(q1, q2, t, steps, float(lam))


def backtrack(pk, pl):
    n = pk.shape[0]
    i, j = n - 1, n - 1
    path = [(i, j)]
    while i > 0 or j > 0:
        i, j = int(pk[i, j]), int(pl[i, j])
        if i < 0:
            raise RuntimeError("DP lattice has no path to the origin")
        path.append((i, j))
    return np.array(path[::-1], dtype=np.int64)


def dp_path(q1, q2, t, lam=0.0, nbhd=4, use_numba=None):
    """Optimal lattice path and its total cost."""
    E, pk, pl = dp_table(q1, q2, t, slope_steps(nbhd), lam, use_numba)
    return backtrack(pk, pl), float(E[-1, -1])
