"""Pure-numpy implementations of the performance-critical kernels.

This module is the reference backend.  The compiled twin in ``_kernels.pyx``
follows the same update order and the same arithmetic expression shapes, so
the two backends agree: bit-for-bit for tree structure and predictions
(integer RNG streams, sequential prefix sums, first-maximum tie-breaking),
and to floating tolerance for the coordinate-descent solver (dot products
are accumulated in a different order by BLAS).  Backend selection happens
in ``_backend`` at import time.
"""

from __future__ import annotations

import numpy as np

from ._rng import splitmix64

BACKEND_NAME = "pure"

_MASK64 = (1 << 64) - 1


def sm64_sequence(seed: int, count: int) -> np.ndarray:
    """First ``count`` outputs of the splitmix64 stream seeded at ``seed``.

    Exists so tests can compare the in-kernel integer stream across
    backends directly.
    """
    out = np.empty(count, dtype=np.uint64)
    state = int(seed) & _MASK64
    for i in range(count):
        state, val = splitmix64(state)
        out[i] = val
    return out


def kkt_violation(g, beta, pen, col_ss) -> float:
    """Sup-norm violation of the lasso stationarity conditions.

    ``g`` is the negative smooth gradient ``X^T r / n``.  Coordinates with
    zero column mass carry no information (their gradient is identically
    zero) and are excluded.
    """
    g = np.asarray(g)
    beta = np.asarray(beta)
    pen = np.asarray(pen)
    viol_zero = np.maximum(np.abs(g) - pen, 0.0)
    viol_active = np.abs(g - np.where(beta > 0.0, pen, -pen))
    v = np.where(beta != 0.0, viol_active, viol_zero)
    v = np.where(np.asarray(col_ss) > 0.0, v, 0.0)
    return float(v.max()) if v.size else 0.0


def cd_solve(Xw, r, beta, col_ss, pen, kkt_tol, max_sweeps):
    """Cyclic coordinate descent for a weighted lasso subproblem.

    Minimizes ``(1/2n) ||r||^2 + sum_j pen_j |beta_j]`` where ``r`` is
    maintained as ``z - Xw beta`` for the pre-weighted design ``Xw``.

    Parameters
    ----------
    Xw : (n, p) ndarray, Fortran order preferred
        Weighted design matrix.
    r : (n,) ndarray
        Current residual; updated in place.
    beta : (p,) ndarray
        Current coefficients; updated in place.
    col_ss : (p,) ndarray
        Per-column ``||Xw_j||^2 / n``.
    pen : (p,) ndarray
        Per-coordinate penalty levels (zero for exempt coordinates).
    kkt_tol : float
        Stop once the post-sweep stationarity violation falls below this.
    max_sweeps : int
        Hard sweep budget.

    Returns
    -------
    (sweeps_done, kkt) : tuple of int and float
        The violation is computed from the maintained residual; callers
        refresh the residual and re-check before trusting it.
    """
    n, p = Xw.shape
    sweeps = 0
    kkt = np.inf
    for _ in range(max_sweeps):
        sweeps += 1
        for j in range(p):
            dj = col_ss[j]
            if dj <= 0.0:
                continue
            xj = Xw[:, j]
            rho = (xj @ r) / n + dj * beta[j]
            pj = pen[j]
            if rho > pj:
                bnew = (rho - pj) / dj
            elif rho < -pj:
                bnew = (rho + pj) / dj
            else:
                bnew = 0.0
            delta = bnew - beta[j]
            if delta != 0.0:
                r -= delta * xj
                beta[j] = bnew
        g = (r @ Xw) / n
        kkt = kkt_violation(g, beta, pen, col_ss)
        if kkt <= kkt_tol:
            break
    return sweeps, kkt


def tree_fit(Xf, y, seed, mtry, min_leaf, max_depth, n_bootstrap):
    """Grow one CART regression tree on a bootstrap resample.

    All randomness comes from a splitmix64 stream seeded at ``seed``:
    first ``n_bootstrap`` draws pick the resample rows (modulo n), then
    each internal node consumes exactly ``mtry`` draws for its feature
    subset (partial Fisher-Yates over 0..p-1).  Split search sorts node
    values stably, allows thresholds only between consecutive distinct
    values, scans candidate features in ascending index order and keeps
    the first strict improvement, so ties resolve to the lowest feature
    index and the smallest threshold.

    Returns ``(feature, threshold, left, right, value, n_nodes)`` as flat
    arrays; ``feature[k] == -1`` marks a leaf.
    """
    n, p = Xf.shape
    m = int(n_bootstrap)
    state = int(seed) & _MASK64

    samp = np.empty(m, dtype=np.int64)
    for i in range(m):
        state, val = splitmix64(state)
        samp[i] = val % n

    max_nodes = 2 * m + 1
    feature = np.full(max_nodes, -1, dtype=np.int32)
    threshold = np.zeros(max_nodes, dtype=np.float64)
    left = np.full(max_nodes, -1, dtype=np.int32)
    right = np.full(max_nodes, -1, dtype=np.int32)
    value = np.zeros(max_nodes, dtype=np.float64)

    identity = np.arange(p, dtype=np.int64)
    mtry = min(int(mtry), p)
    nodes_used = 1
    stack = [(0, 0, m, 0)]

    while stack:
        node, start, end, depth = stack.pop()
        mnode = end - start
        seg = samp[start:end]
        yseg = y[seg]
        csum = np.cumsum(yseg)
        tot = csum[-1]

        if (mnode < 2 * min_leaf or depth >= max_depth
                or yseg.min() == yseg.max()):
            value[node] = tot / mnode
            continue

        fb = identity.copy()
        for k in range(mtry):
            state, val = splitmix64(state)
            rpos = k + int(val % (p - k))
            fb[k], fb[rpos] = fb[rpos], fb[k]
        chosen = np.sort(fb[:mtry])

        best_gain = -np.inf
        best_f = -1
        best_thr = 0.0
        lo = min_leaf - 1
        hi = mnode - min_leaf  # candidate split positions are lo .. hi-1
        for f in chosen:
            vals = Xf[seg, f]
            order = np.argsort(vals, kind="stable")
            sv = vals[order]
            sy = yseg[order]
            pref = np.cumsum(sy)
            valid = sv[lo:hi] < sv[lo + 1:hi + 1]
            if not valid.any():
                continue
            nl = np.arange(lo + 1, hi + 1, dtype=np.float64)
            sl = pref[lo:hi]
            sr = tot - sl
            gains = np.where(valid, sl * sl / nl + sr * sr / (mnode - nl),
                             -np.inf)
            k = int(np.argmax(gains))
            if gains[k] > best_gain:
                best_gain = gains[k]
                best_f = int(f)
                i = lo + k
                thr = (sv[i] + sv[i + 1]) / 2.0
                if thr >= sv[i + 1]:
                    thr = sv[i]  # midpoint rounded up to the right value
                best_thr = thr

        if best_f < 0:
            value[node] = tot / mnode
            continue

        vals = Xf[seg, best_f]
        mask = vals <= best_thr
        nleft = int(np.count_nonzero(mask))
        samp[start:end] = np.concatenate([seg[mask], seg[~mask]])

        lid = nodes_used
        rid = nodes_used + 1
        nodes_used += 2
        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = lid
        right[node] = rid
        stack.append((rid, start + nleft, end, depth + 1))
        stack.append((lid, start, start + nleft, depth + 1))

    k = nodes_used
    return (feature[:k].copy(), threshold[:k].copy(), left[:k].copy(),
            right[:k].copy(), value[:k].copy(), k)


def tree_predict(Xc, feature, threshold, left, right, value):
    """Route rows of ``Xc`` through one tree; rule is ``x[f] <= thr`` goes
    left.  Level-synchronous so the work is vectorized across rows."""
    nrows = Xc.shape[0]
    node = np.zeros(nrows, dtype=np.int64)
    rows = np.flatnonzero(feature[node] >= 0)
    while rows.size:
        nd = node[rows]
        f = feature[nd]
        go_left = Xc[rows, f] <= threshold[nd]
        nxt = np.where(go_left, left[nd], right[nd]).astype(np.int64)
        node[rows] = nxt
        rows = rows[feature[nxt] >= 0]
    return value[node]
