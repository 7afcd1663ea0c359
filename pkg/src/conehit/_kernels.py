"""Compiled kernels: hypervolume of origin-anchored boxes and per-path reductions."""
import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def pareto_maximal(pts):
    """Rows of ``pts`` not weakly dominated by another row (maximisation)."""
    n, m = pts.shape
    order = np.argsort(-pts.sum(axis=1))
    keep = np.empty(n, dtype=np.int64)
    nk = 0
    for oi in range(n):
        i = order[oi]
        dominated = False
        for kj in range(nk):
            j = keep[kj]
            dom = True
            for c in range(m):
                if pts[j, c] < pts[i, c]:
                    dom = False
                    break
            if dom:
                dominated = True
                break
        if not dominated:
            keep[nk] = i
            nk += 1
    out = np.empty((nk, m))
    for k in range(nk):
        out[k] = pts[keep[k]]
    return out


@njit(cache=True, nogil=True)
def _hv2(pts, n):
    xs = np.empty(n)
    for i in range(n):
        xs[i] = pts[i, 0]
    order = np.argsort(-xs)
    vol = 0.0
    ymax = 0.0
    for k in range(n):
        i = order[k]
        if pts[i, 1] > ymax:
            ymax = pts[i, 1]
        nxt = pts[order[k + 1], 0] if k + 1 < n else 0.0
        vol += (pts[i, 0] - nxt) * ymax
    return vol


@njit(cache=True, nogil=True)
def _hv_slices(pts, m):
    """Volume of the union of boxes ``[0, p]`` using the first ``m`` coordinates."""
    n = pts.shape[0]
    if n == 0:
        return 0.0
    if m == 1:
        best = 0.0
        for i in range(n):
            if pts[i, 0] > best:
                best = pts[i, 0]
        return best
    if m == 2:
        return _hv2(pts, n)
    last = np.empty(n)
    for i in range(n):
        last[i] = pts[i, m - 1]
    order = np.argsort(-last)
    sub = np.empty((n, m - 1))
    vol = 0.0
    for k in range(n):
        i = order[k]
        for c in range(m - 1):
            sub[k, c] = pts[i, c]
        nxt = last[order[k + 1]] if k + 1 < n else 0.0
        height = last[i] - nxt
        if height > 0.0:
            vol += height * _hv_slices(sub[: k + 1], m - 1)
    return vol


@njit(cache=True, nogil=True)
def hypervolume(pts):
    """Exact Lebesgue measure of the union of ``[0, p_k]`` over rows ``p_k >= 0``."""
    m = pts.shape[1]
    if pts.shape[0] == 0:
        return 0.0
    if m >= 3:
        pts = pareto_maximal(pts)
    return _hv_slices(pts, m)


@njit(cache=True, nogil=True)
def log_weighted_union(w, a):
    """``log int exp(a.x) 1{exists k: x < w_k} dx`` for the rows of ``w``.

    Coordinates are shifted by their maxima before exponentiating so that
    the transformed points lie in ``(0, 1]``.
    """
    n, m = w.shape
    shift = np.empty(m)
    for c in range(m):
        best = -np.inf
        for k in range(n):
            if w[k, c] > best:
                best = w[k, c]
        shift[c] = best
    y = np.empty((n, m))
    for k in range(n):
        for c in range(m):
            y[k, c] = np.exp(a[c] * (w[k, c] - shift[c]))
    hv = hypervolume(y)
    out = np.log(hv)
    for c in range(m):
        out += a[c] * shift[c] - np.log(a[c])
    return out


@njit(cache=True, nogil=True)
def path_values(paths, a, strides, tilted, log_scale):
    """Per-path estimator values for each grid stride.

    ``paths`` has shape ``(n_paths, n_steps + 1, m)`` and includes ``W(0)``.
    Crude mode returns ``F_s`` (the weighted lower-set integral of the points
    on the stride-``s`` sub-grid).  Tilted mode returns
    ``exp(log_scale) * HV_s / sum_k exp(a.w_k)`` with the sum over the full
    grid, i.e. the mixture importance-sampling estimator.
    """
    n_paths, n_pts, m = paths.shape
    n_lev = strides.shape[0]
    out = np.empty((n_paths, n_lev))
    log_prod_a = 0.0
    for c in range(m):
        log_prod_a += np.log(a[c])
    for p in range(n_paths):
        w = paths[p]
        if tilted:
            # log-sum-exp of a.w over the finest grid
            mx = -np.inf
            s = np.empty(n_pts)
            for k in range(n_pts):
                v = 0.0
                for c in range(m):
                    v += a[c] * w[k, c]
                s[k] = v
                if v > mx:
                    mx = v
            tot = 0.0
            for k in range(n_pts):
                tot += np.exp(s[k] - mx)
            log_den = mx + np.log(tot)
        for li in range(n_lev):
            sub = w[:: strides[li]]
            lf = log_weighted_union(sub, a)
            if tilted:
                out[p, li] = np.exp(log_scale + lf + log_prod_a - log_den)
            else:
                if lf > 700.0:
                    out[p, li] = np.inf
                else:
                    out[p, li] = np.exp(lf)
    return out


@njit(cache=True, nogil=True)
def first_hits(X, mu_t, target, start):
    """Index of the first row where ``X - mu_t > target`` holds componentwise.

    ``X`` is ``(n_paths, n_steps, d)``; returns ``-1`` for paths without a hit.
    ``start`` offsets the returned indices.
    """
    n_paths, n_steps, d = X.shape
    out = np.full(n_paths, -1, dtype=np.int64)
    for p in range(n_paths):
        for k in range(n_steps):
            ok = True
            for c in range(d):
                if not (X[p, k, c] - mu_t[k, c] > target[c]):
                    ok = False
                    break
            if ok:
                out[p] = start + k
                break
    return out
