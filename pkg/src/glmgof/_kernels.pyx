# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twins of the kernels in ``_purekernels``.

The update order, tie-breaking and expression shapes mirror the pure
backend: tree structure and predictions are bit-identical (the RNG is the
same integer splitmix64 stream, prefix sums accumulate sequentially, and
candidate scans keep the first strict maximum); the coordinate-descent
solver agrees to floating tolerance because BLAS accumulates dot products
in a different order than the plain loops here.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, fabs

cnp.import_array()

BACKEND_NAME = "compiled"

ctypedef cnp.int64_t i64
ctypedef cnp.int32_t i32

cdef unsigned long long _SM64_GAMMA = 0x9E3779B97F4A7C15ULL


cdef inline unsigned long long _sm64_next(unsigned long long* state) noexcept nogil:
    cdef unsigned long long z
    state[0] = state[0] + _SM64_GAMMA
    z = state[0]
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


def sm64_sequence(seed, count):
    """First ``count`` outputs of the splitmix64 stream seeded at ``seed``."""
    cdef Py_ssize_t k = count
    out = np.empty(k, dtype=np.uint64)
    cdef unsigned long long[::1] o = out
    cdef unsigned long long state = <unsigned long long>(int(seed) & 0xFFFFFFFFFFFFFFFF)
    cdef Py_ssize_t i
    with nogil:
        for i in range(k):
            o[i] = _sm64_next(&state)
    return out


def cd_solve(double[::1, :] Xw, double[::1] r, double[::1] beta,
             double[::1] col_ss, double[::1] pen, double kkt_tol,
             int max_sweeps):
    """Cyclic coordinate descent; see the pure backend for the contract.

    ``Xw`` must be Fortran-ordered so each column scan is contiguous.
    """
    cdef Py_ssize_t n = Xw.shape[0]
    cdef Py_ssize_t p = Xw.shape[1]
    cdef Py_ssize_t i, j
    cdef int sweeps = 0
    cdef double kkt = INFINITY
    cdef double dn = <double>n
    cdef double dj, s, rho, pj, bnew, delta, gj, v
    with nogil:
        while sweeps < max_sweeps:
            sweeps += 1
            for j in range(p):
                dj = col_ss[j]
                if dj <= 0.0:
                    continue
                s = 0.0
                for i in range(n):
                    s += Xw[i, j] * r[i]
                rho = s / dn + dj * beta[j]
                pj = pen[j]
                if rho > pj:
                    bnew = (rho - pj) / dj
                elif rho < -pj:
                    bnew = (rho + pj) / dj
                else:
                    bnew = 0.0
                delta = bnew - beta[j]
                if delta != 0.0:
                    for i in range(n):
                        r[i] = r[i] - delta * Xw[i, j]
                    beta[j] = bnew
            kkt = 0.0
            for j in range(p):
                if col_ss[j] <= 0.0:
                    continue
                s = 0.0
                for i in range(n):
                    s += Xw[i, j] * r[i]
                gj = s / dn
                if beta[j] == 0.0:
                    v = fabs(gj) - pen[j]
                    if v < 0.0:
                        v = 0.0
                elif beta[j] > 0.0:
                    v = fabs(gj - pen[j])
                else:
                    v = fabs(gj + pen[j])
                if v > kkt:
                    kkt = v
            if kkt <= kkt_tol:
                break
    return sweeps, kkt


cdef void _msort(double* key, i64* idx, double* kbuf, i64* ibuf,
                 Py_ssize_t lo, Py_ssize_t hi) noexcept nogil:
    # stable top-down merge sort of key[lo:hi], permuting idx alongside;
    # stability makes the order identical to numpy's stable argsort
    cdef Py_ssize_t mid, i, j, k
    if hi - lo <= 1:
        return
    mid = (lo + hi) // 2
    _msort(key, idx, kbuf, ibuf, lo, mid)
    _msort(key, idx, kbuf, ibuf, mid, hi)
    i = lo
    j = mid
    k = lo
    while i < mid and j < hi:
        if key[j] < key[i]:
            kbuf[k] = key[j]
            ibuf[k] = idx[j]
            j += 1
        else:
            kbuf[k] = key[i]
            ibuf[k] = idx[i]
            i += 1
        k += 1
    while i < mid:
        kbuf[k] = key[i]
        ibuf[k] = idx[i]
        i += 1
        k += 1
    while j < hi:
        kbuf[k] = key[j]
        ibuf[k] = idx[j]
        j += 1
        k += 1
    for k in range(lo, hi):
        key[k] = kbuf[k]
        idx[k] = ibuf[k]


def tree_fit(double[::1, :] Xf, double[::1] y, seed, int mtry, int min_leaf,
             long max_depth, int n_bootstrap):
    """Grow one CART regression tree; see the pure backend for the contract."""
    cdef Py_ssize_t n = Xf.shape[0]
    cdef Py_ssize_t p = Xf.shape[1]
    cdef Py_ssize_t m = n_bootstrap
    cdef unsigned long long state = <unsigned long long>(int(seed) & 0xFFFFFFFFFFFFFFFF)
    cdef Py_ssize_t max_nodes = 2 * m + 1

    samp_arr = np.empty(m, dtype=np.int64)
    feature_arr = np.full(max_nodes, -1, dtype=np.int32)
    threshold_arr = np.zeros(max_nodes, dtype=np.float64)
    left_arr = np.full(max_nodes, -1, dtype=np.int32)
    right_arr = np.full(max_nodes, -1, dtype=np.int32)
    value_arr = np.zeros(max_nodes, dtype=np.float64)

    cdef i64[::1] samp = samp_arr
    cdef i32[::1] feature = feature_arr
    cdef double[::1] threshold = threshold_arr
    cdef i32[::1] left = left_arr
    cdef i32[::1] right = right_arr
    cdef double[::1] value = value_arr

    # per-node scratch
    ybuf_arr = np.empty(m, dtype=np.float64)
    va_arr = np.empty(m, dtype=np.float64)
    sy_arr = np.empty(m, dtype=np.float64)
    pref_arr = np.empty(m, dtype=np.float64)
    kbuf_arr = np.empty(m, dtype=np.float64)
    idx_arr = np.empty(m, dtype=np.int64)
    ibuf_arr = np.empty(m, dtype=np.int64)
    tmp_arr = np.empty(m, dtype=np.int64)
    fb_arr = np.empty(p, dtype=np.int64)
    stack_arr = np.empty((max_nodes, 4), dtype=np.int64)

    cdef double[::1] ybuf = ybuf_arr
    cdef double[::1] va = va_arr
    cdef double[::1] sy = sy_arr
    cdef double[::1] pref = pref_arr
    cdef double[::1] kbuf = kbuf_arr
    cdef i64[::1] idx = idx_arr
    cdef i64[::1] ibuf = ibuf_arr
    cdef i64[::1] tmp = tmp_arr
    cdef i64[::1] fb = fb_arr
    cdef i64[:, ::1] stack = stack_arr

    cdef Py_ssize_t nodes_used = 1
    cdef Py_ssize_t top = 0
    cdef Py_ssize_t node, start, end, mnode, depth, i, k, kk, f, lo, hi
    cdef Py_ssize_t best_f, best_i, lid, rid, nleft, rpos
    cdef double tot, acc, ymin, ymax, sl, sr, gain, best_gain, best_thr, thr, v
    cdef int eff_mtry = mtry if mtry < <int>p else <int>p
    cdef unsigned long long draw
    cdef i64 swp

    with nogil:
        for i in range(m):
            samp[i] = <i64>(_sm64_next(&state) % <unsigned long long>n)

        stack[0, 0] = 0
        stack[0, 1] = 0
        stack[0, 2] = m
        stack[0, 3] = 0
        top = 1

        while top > 0:
            top -= 1
            node = stack[top, 0]
            start = stack[top, 1]
            end = stack[top, 2]
            depth = stack[top, 3]
            mnode = end - start

            acc = 0.0
            ymin = y[samp[start]]
            ymax = ymin
            for i in range(mnode):
                v = y[samp[start + i]]
                ybuf[i] = v
                acc = acc + v
                if v < ymin:
                    ymin = v
                if v > ymax:
                    ymax = v
            tot = acc

            if mnode < 2 * min_leaf or depth >= max_depth or ymin == ymax:
                value[node] = tot / mnode
                continue

            for i in range(p):
                fb[i] = i
            for k in range(eff_mtry):
                draw = _sm64_next(&state)
                rpos = k + <Py_ssize_t>(draw % <unsigned long long>(p - k))
                swp = fb[k]
                fb[k] = fb[rpos]
                fb[rpos] = swp
            # ascending scan order makes gain ties resolve to the lowest index
            for i in range(1, eff_mtry):
                swp = fb[i]
                k = i - 1
                while k >= 0 and fb[k] > swp:
                    fb[k + 1] = fb[k]
                    k -= 1
                fb[k + 1] = swp

            best_gain = -INFINITY
            best_f = -1
            best_thr = 0.0
            lo = min_leaf - 1
            hi = mnode - min_leaf
            for kk in range(eff_mtry):
                f = fb[kk]
                for i in range(mnode):
                    va[i] = Xf[samp[start + i], f]
                    idx[i] = i
                _msort(&va[0], &idx[0], &kbuf[0], &ibuf[0], 0, mnode)
                for i in range(mnode):
                    sy[i] = ybuf[idx[i]]
                acc = 0.0
                for i in range(mnode):
                    acc = acc + sy[i]
                    pref[i] = acc
                for i in range(lo, hi):
                    if va[i] < va[i + 1]:
                        sl = pref[i]
                        sr = tot - sl
                        gain = sl * sl / (<double>(i + 1)) + sr * sr / (<double>(mnode - i - 1))
                        if gain > best_gain:
                            best_gain = gain
                            best_f = f
                            thr = (va[i] + va[i + 1]) / 2.0
                            if thr >= va[i + 1]:
                                thr = va[i]
                            best_thr = thr

            if best_f < 0:
                value[node] = tot / mnode
                continue

            nleft = 0
            for i in range(mnode):
                if Xf[samp[start + i], best_f] <= best_thr:
                    tmp[nleft] = samp[start + i]
                    nleft += 1
            k = nleft
            for i in range(mnode):
                if Xf[samp[start + i], best_f] > best_thr:
                    tmp[k] = samp[start + i]
                    k += 1
            for i in range(mnode):
                samp[start + i] = tmp[i]

            lid = nodes_used
            rid = nodes_used + 1
            nodes_used += 2
            feature[node] = <i32>best_f
            threshold[node] = best_thr
            left[node] = <i32>lid
            right[node] = <i32>rid
            stack[top, 0] = rid
            stack[top, 1] = start + nleft
            stack[top, 2] = end
            stack[top, 3] = depth + 1
            top += 1
            stack[top, 0] = lid
            stack[top, 1] = start
            stack[top, 2] = start + nleft
            stack[top, 3] = depth + 1
            top += 1

    k = nodes_used
    return (feature_arr[:k].copy(), threshold_arr[:k].copy(),
            left_arr[:k].copy(), right_arr[:k].copy(),
            value_arr[:k].copy(), int(nodes_used))


def tree_predict(double[:, ::1] Xc, i32[::1] feature, double[::1] threshold,
                 i32[::1] left, i32[::1] right, double[::1] value):
    """Route rows of ``Xc`` through one tree (``x[f] <= thr`` goes left)."""
    cdef Py_ssize_t nrows = Xc.shape[0]
    cdef Py_ssize_t i
    cdef i32 nd
    out = np.empty(nrows, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for i in range(nrows):
            nd = 0
            while feature[nd] >= 0:
                if Xc[i, feature[nd]] <= threshold[nd]:
                    nd = left[nd]
                else:
                    nd = right[nd]
            o[i] = value[nd]
    return out
