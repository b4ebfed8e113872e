"""Hot numeric kernels.

Each kernel has a numba implementation and a numpy implementation with the
same signature. The module-level names point at the numba versions unless
numba is missing or ``EIGENBEHAVIOUR_NO_NUMBA`` is set.
"""

import math

import numpy as np

from ._accel import NUMBA_ENABLED, njit, python_version


# --------------------------------------------------------------------------
# window occupancy: day segments -> presence fractions per (location, window)


@njit
def _occupancy_numba(day_idx, starts, ends, loc_idx, n_days, n_windows, n_locations, delta_t):
    X = np.zeros((n_days, n_locations * n_windows))
    for i in range(starts.shape[0]):
        s = starts[i]
        e = ends[i]
        if e <= s:
            continue
        w0 = int(s // delta_t)
        w1 = min(int(math.ceil(e / delta_t)), n_windows)
        base = loc_idx[i] * n_windows
        row = day_idx[i]
        for w in range(w0, w1):
            lo = max(s, w * delta_t)
            hi = min(e, (w + 1) * delta_t)
            if hi > lo:
                X[row, base + w] += (hi - lo) / delta_t
    return X


def _occupancy_numpy(day_idx, starts, ends, loc_idx, n_days, n_windows, n_locations, delta_t):
    X = np.zeros((n_days, n_locations * n_windows))
    if starts.shape[0] == 0:
        return X
    lo_edges = np.arange(n_windows) * delta_t
    hi_edges = lo_edges + delta_t
    overlap = np.minimum(ends[:, None], hi_edges[None, :]) - np.maximum(starts[:, None], lo_edges[None, :])
    np.maximum(overlap, 0.0, out=overlap)
    cols = loc_idx[:, None] * n_windows + np.arange(n_windows)[None, :]
    rows = np.broadcast_to(day_idx[:, None], cols.shape)
    np.add.at(X, (rows, cols), overlap / delta_t)
    return X


# --------------------------------------------------------------------------
# L1 residual of successive rank-n reconstructions


@njit
def _l1_series_numba(X_hat, P, V, n_max):
    D, F = X_hat.shape
    out = np.empty(n_max + 1)
    R = X_hat.copy()
    out[0] = np.abs(R).sum()
    for n in range(n_max):
        for d in range(D):
            p = P[d, n]
            if p == 0.0:
                continue
            for f in range(F):
                R[d, f] -= p * V[f, n]
        out[n + 1] = np.abs(R).sum()
    return out / (D * F)


def _l1_series_numpy(X_hat, P, V, n_max):
    D, F = X_hat.shape
    out = np.empty(n_max + 1)
    R = X_hat.copy()
    out[0] = np.abs(R).sum()
    for n in range(n_max):
        R -= np.outer(P[:, n], V[:, n])
        out[n + 1] = np.abs(R).sum()
    return out / (D * F)


# --------------------------------------------------------------------------
# linear SVM, L1-loss dual coordinate descent (bias folded into the features)


@njit
def _svm_dual_cd_numba(Xa, y, C, tol, max_iter):
    m, p = Xa.shape
    alpha = np.zeros(m)
    w = np.zeros(p)
    qdiag = np.empty(m)
    for i in range(m):
        qdiag[i] = np.dot(Xa[i], Xa[i])
    n_iter = 0
    converged = False
    for it in range(max_iter):
        n_iter = it + 1
        pg_max = -np.inf
        pg_min = np.inf
        for i in range(m):
            g = y[i] * np.dot(w, Xa[i]) - 1.0
            if alpha[i] <= 0.0:
                pg = min(g, 0.0)
            elif alpha[i] >= C:
                pg = max(g, 0.0)
            else:
                pg = g
            pg_max = max(pg_max, pg)
            pg_min = min(pg_min, pg)
            if pg != 0.0 and qdiag[i] > 0.0:
                old = alpha[i]
                alpha[i] = min(max(old - g / qdiag[i], 0.0), C)
                step = (alpha[i] - old) * y[i]
                for j in range(p):
                    w[j] += step * Xa[i, j]
        if pg_max - pg_min <= tol:
            converged = True
            break
    return alpha, w, n_iter, converged


# Coordinate descent is sequential by nature; the fallback is the same loop
# run by the interpreter.
_svm_dual_cd_numpy = python_version(_svm_dual_cd_numba)


if NUMBA_ENABLED:
    window_occupancy = _occupancy_numba
    l1_residual_series = _l1_series_numba
    svm_dual_cd = _svm_dual_cd_numba
else:
    window_occupancy = _occupancy_numpy
    l1_residual_series = _l1_series_numpy
    svm_dual_cd = _svm_dual_cd_numpy

BACKEND = "numba" if NUMBA_ENABLED else "numpy"
