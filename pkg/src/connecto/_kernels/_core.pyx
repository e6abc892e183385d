# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels. Semantics (including accumulation order and
tie-breaking) deliberately mirror _pykernels so both backends pick the
same splits and coordinate updates."""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, fabs

cnp.import_array()

ctypedef cnp.intp_t ITYPE


cdef inline bint _lt(double* k, ITYPE a, ITYPE b) noexcept nogil:
    # strict total order: by key, then by original position
    if k[a] < k[b]:
        return 1
    if k[a] > k[b]:
        return 0
    return a < b


cdef void _sort_range(double* k, ITYPE* o, Py_ssize_t lo, Py_ssize_t hi) noexcept nogil:
    # quicksort of o[lo:hi] under _lt, insertion sort below 24 elements
    cdef Py_ssize_t i, j, mid, l, r
    cdef ITYPE tmp, pivot
    while hi - lo > 24:
        mid = lo + (hi - lo) // 2
        if _lt(k, o[mid], o[lo]):
            tmp = o[mid]; o[mid] = o[lo]; o[lo] = tmp
        if _lt(k, o[hi - 1], o[lo]):
            tmp = o[hi - 1]; o[hi - 1] = o[lo]; o[lo] = tmp
        if _lt(k, o[hi - 1], o[mid]):
            tmp = o[hi - 1]; o[hi - 1] = o[mid]; o[mid] = tmp
        pivot = o[mid]
        l = lo
        r = hi - 1
        while True:
            while _lt(k, o[l], pivot):
                l += 1
            while _lt(k, pivot, o[r]):
                r -= 1
            if l >= r:
                break
            tmp = o[l]; o[l] = o[r]; o[r] = tmp
            l += 1
            r -= 1
        if r + 1 - lo < hi - (r + 1):
            _sort_range(k, o, lo, r + 1)
            lo = r + 1
        else:
            _sort_range(k, o, r + 1, hi)
            hi = r + 1
    for i in range(lo + 1, hi):
        tmp = o[i]
        j = i - 1
        while j >= lo and _lt(k, tmp, o[j]):
            o[j + 1] = o[j]
            j -= 1
        o[j + 1] = tmp


cdef inline double _soft(double v, double t) noexcept nogil:
    if v > t:
        return v - t
    if v < -t:
        return v + t
    return 0.0


def enet_cd(double[::1, :] X, double[::1] y, double[::1] w,
            double l1, double l2, long max_iter, double tol):
    """Cyclic coordinate descent; see _pykernels.enet_cd."""
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1]
    cdef double[::1] r = np.empty(n)
    cdef double[::1] colsq = np.empty(d)
    cdef Py_ssize_t i, j
    cdef long it = 0
    cdef double s, g, wj, wn, denom, dmax = 0.0, delta
    cdef bint converged = False

    for i in range(n):
        r[i] = y[i]
    for j in range(d):
        wj = w[j]
        if wj != 0.0:
            for i in range(n):
                r[i] -= wj * X[i, j]
    for j in range(d):
        s = 0.0
        for i in range(n):
            s += X[i, j] * X[i, j]
        colsq[j] = s / n

    for it in range(1, max_iter + 1):
        dmax = 0.0
        for j in range(d):
            wj = w[j]
            s = 0.0
            for i in range(n):
                s += X[i, j] * r[i]
            g = s / n + colsq[j] * wj
            denom = colsq[j] + l2
            wn = _soft(g, l1) / denom if denom > 0.0 else 0.0
            if wn != wj:
                for i in range(n):
                    r[i] += (wj - wn) * X[i, j]
                w[j] = wn
                delta = fabs(wn - wj)
                if delta > dmax:
                    dmax = delta
        if dmax < tol:
            converged = True
            break
    return it, dmax, converged


def best_split_dense(double[::1, :] X, ITYPE[::1] idx, double[::1] y,
                     ITYPE[::1] feats, long min_leaf):
    """Single-output best split; see _pykernels.best_split_dense."""
    cdef Py_ssize_t m = idx.shape[0], F = feats.shape[0]
    cdef ITYPE best_f = -1
    cdef double best_thr = 0.0, best_proxy = -INFINITY
    if m < 2 * min_leaf:
        return -1, 0.0, best_proxy

    cdef double[::1] vals = np.empty(m)
    cdef double[::1] ys = np.empty(m)
    cdef ITYPE[::1] order = np.empty(m, dtype=np.intp)
    cdef Py_ssize_t fi, p
    cdef ITYPE f
    cdef double total, sl, proxy, svp, svq, thr

    for fi in range(F):
        f = feats[fi]
        for p in range(m):
            vals[p] = X[idx[p], f]
            order[p] = p
        _sort_range(&vals[0], &order[0], 0, m)
        if vals[order[0]] == vals[order[m - 1]]:
            continue
        total = 0.0
        for p in range(m):
            ys[p] = y[idx[order[p]]]
            total += ys[p]
        sl = 0.0
        for p in range(1, m):
            sl += ys[p - 1]
            svq = vals[order[p - 1]]
            svp = vals[order[p]]
            if svq < svp and p >= min_leaf and m - p >= min_leaf:
                proxy = sl * sl / p + (total - sl) * (total - sl) / (m - p)
                if proxy > best_proxy:
                    thr = (svq + svp) / 2.0
                    if thr >= svp:
                        thr = svq
                    best_f = f
                    best_thr = thr
                    best_proxy = proxy
    return best_f, best_thr, best_proxy


def best_split_gram(double[::1, :] X, ITYPE[::1] idx, double[:, ::1] G,
                    double[::1] rowsum, double total, ITYPE[::1] feats,
                    long min_leaf):
    """Multi-output best split via target Gram matrix; see _pykernels."""
    cdef Py_ssize_t m = idx.shape[0], F = feats.shape[0]
    cdef ITYPE best_f = -1
    cdef double best_thr = 0.0, best_proxy = -INFINITY
    if m < 2 * min_leaf:
        return -1, 0.0, best_proxy

    cdef double[::1] vals = np.empty(m)
    cdef double[::1] rs = np.empty(m)
    cdef ITYPE[::1] order = np.empty(m, dtype=np.intp)
    cdef ITYPE[::1] sg = np.empty(m, dtype=np.intp)
    cdef Py_ssize_t fi, p, q
    cdef ITYPE f, s
    cdef double a, c, inner, proxy, svp, svq, thr

    for fi in range(F):
        f = feats[fi]
        for p in range(m):
            vals[p] = X[idx[p], f]
            order[p] = p
        _sort_range(&vals[0], &order[0], 0, m)
        if vals[order[0]] == vals[order[m - 1]]:
            continue
        for p in range(m):
            sg[p] = idx[order[p]]
            rs[p] = rowsum[order[p]]
        a = 0.0
        c = 0.0
        for p in range(1, m):
            s = sg[p - 1]
            inner = 0.0
            for q in range(p - 1):
                inner += G[s, sg[q]]
            a += G[s, s] + 2.0 * inner
            c += rs[p - 1]
            svq = vals[order[p - 1]]
            svp = vals[order[p]]
            if svq < svp and p >= min_leaf and m - p >= min_leaf:
                proxy = a / p + ((total - 2.0 * c) + a) / (m - p)
                if proxy > best_proxy:
                    thr = (svq + svp) / 2.0
                    if thr >= svp:
                        thr = svq
                    best_f = f
                    best_thr = thr
                    best_proxy = proxy
    return best_f, best_thr, best_proxy


def random_split_multi(double[::1, :] X, ITYPE[::1] idx, double[:, ::1] Y,
                       ITYPE[::1] feats, double[::1] u, long min_leaf):
    """Random-threshold splits (thr = lo + u*(hi-lo)); see _pykernels."""
    cdef Py_ssize_t m = idx.shape[0], F = feats.shape[0], K = Y.shape[1]
    cdef ITYPE best_f = -1
    cdef double best_thr = 0.0, best_proxy = -INFINITY
    if m < 2 * min_leaf:
        return -1, 0.0, best_proxy

    cdef double[::1] Stot = np.zeros(K)
    cdef double[::1] SL = np.empty(K)
    cdef Py_ssize_t fi, p, k, nL, nR
    cdef ITYPE f, gi
    cdef double thr, lo, hi, v, ssl, ssr, sr, proxy

    for p in range(m):
        gi = idx[p]
        for k in range(K):
            Stot[k] += Y[gi, k]

    for fi in range(F):
        f = feats[fi]
        lo = X[idx[0], f]
        hi = lo
        for p in range(1, m):
            v = X[idx[p], f]
            if v < lo:
                lo = v
            elif v > hi:
                hi = v
        if not hi > lo:
            continue
        thr = lo + u[fi] * (hi - lo)
        nL = 0
        for k in range(K):
            SL[k] = 0.0
        for p in range(m):
            gi = idx[p]
            if X[gi, f] <= thr:
                nL += 1
                for k in range(K):
                    SL[k] += Y[gi, k]
        nR = m - nL
        if nL < min_leaf or nR < min_leaf or nL == 0 or nR == 0:
            continue
        ssl = 0.0
        ssr = 0.0
        for k in range(K):
            ssl += SL[k] * SL[k]
        for k in range(K):
            sr = Stot[k] - SL[k]
            ssr += sr * sr
        proxy = ssl / nL + ssr / nR
        if proxy > best_proxy:
            best_f = f
            best_thr = thr
            best_proxy = proxy
    return best_f, best_thr, best_proxy


def svr_smo(double[:, ::1] K, double[::1] y, double C, double eps,
            double tol, long max_iter):
    """SMO-style epsilon-SVR dual solver; see _pykernels.svr_smo."""
    cdef Py_ssize_t n = y.shape[0]
    beta_arr = np.zeros(n)
    cdef double[::1] beta = beta_arr
    cdef double[::1] g = np.empty(n)
    cdef Py_ssize_t p, i, j
    cdef long it = 0
    cdef double su, sd, su_best, sd_best, viol = -INFINITY
    cdef double eta, t, tmax, b, e, lo, hi, acc
    cdef Py_ssize_t nfree
    cdef bint converged = False

    for p in range(n):
        g[p] = -y[p]

    for it in range(1, max_iter + 1):
        su_best = INFINITY
        sd_best = INFINITY
        i = -1
        j = -1
        for p in range(n):
            if beta[p] < C:
                su = g[p] + (eps if beta[p] >= 0.0 else -eps)
                if su < su_best:
                    su_best = su
                    i = p
            if beta[p] > -C:
                sd = -g[p] + (eps if beta[p] <= 0.0 else -eps)
                if sd < sd_best:
                    sd_best = sd
                    j = p
        viol = su_best + sd_best
        if viol > -tol:
            converged = True
            break
        eta = K[i, i] + K[j, j] - 2.0 * K[i, j]
        if eta < 1e-12:
            eta = 1e-12
        t = -viol / eta
        tmax = C - beta[i]
        if beta[j] + C < tmax:
            tmax = beta[j] + C
        if beta[i] < 0.0 and -beta[i] < tmax:
            tmax = -beta[i]
        if beta[j] > 0.0 and beta[j] < tmax:
            tmax = beta[j]
        if t > tmax:
            t = tmax
        if t <= 0.0:
            break
        beta[i] += t
        beta[j] -= t
        for p in range(n):
            g[p] += t * (K[p, i] - K[p, j])

    acc = 0.0
    nfree = 0
    for p in range(n):
        if fabs(beta[p]) > 0.0 and fabs(beta[p]) < C:
            e = -g[p]
            acc += e - (eps if beta[p] > 0.0 else -eps)
            nfree += 1
    if nfree > 0:
        b = acc / nfree
    else:
        lo = -INFINITY
        hi = INFINITY
        for p in range(n):
            e = -g[p]
            if beta[p] == 0.0:
                if e - eps > lo:
                    lo = e - eps
                if e + eps < hi:
                    hi = e + eps
            elif beta[p] >= C:
                if e - eps < hi:
                    hi = e - eps
            else:
                if e + eps > lo:
                    lo = e + eps
        if lo == -INFINITY and hi == INFINITY:
            b = 0.0
        elif lo == -INFINITY:
            b = hi
        elif hi == INFINITY:
            b = lo
        else:
            b = (lo + hi) / 2.0
    return beta_arr, float(b), it, float(viol), converged
