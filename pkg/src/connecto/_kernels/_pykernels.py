"""Pure-numpy implementations of the hot kernels.

These mirror the compiled extension step for step: reductions that feed
branch decisions use sequential accumulation (np.cumsum) and first-hit
argmin/argmax so that both backends choose identical split points and
coordinate updates wherever floating-point ties could otherwise flip.
"""

from __future__ import annotations

import numpy as np

NEG_INF = float("-inf")


def _soft(v: float, t: float) -> float:
    if v > t:
        return v - t
    if v < -t:
        return v + t
    return 0.0


def enet_cd(X, y, w, l1, l2, max_iter, tol):
    """Cyclic coordinate descent for 1/(2n)||y-Xw||^2 + l1|w|_1 + l2/2 |w|_2^2.

    Mutates ``w`` in place; returns (iterations_run, last_max_delta, converged).
    """
    n, d = X.shape
    r = y - X @ w
    colsq = np.empty(d)
    for j in range(d):
        colsq[j] = float(np.cumsum(X[:, j] * X[:, j])[-1]) / n
    it = 0
    dmax = 0.0
    converged = False
    for it in range(1, max_iter + 1):
        dmax = 0.0
        for j in range(d):
            cj = colsq[j]
            wj = w[j]
            xj = X[:, j]
            g = float(np.cumsum(xj * r)[-1]) / n + cj * wj
            denom = cj + l2
            wn = _soft(g, l1) / denom if denom > 0.0 else 0.0
            if wn != wj:
                r += (wj - wn) * xj
                w[j] = wn
                delta = abs(wn - wj)
                if delta > dmax:
                    dmax = delta
        if dmax < tol:
            converged = True
            break
    return it, dmax, converged


def best_split_dense(X, idx, y, feats, min_leaf):
    """Best variance-reducing split for a single-output node.

    Returns (feature, threshold, proxy) maximizing
    sum_left^2/n_left + sum_right^2/n_right, or feature -1 when no valid
    split exists. Ties keep the lowest feature index, then the lowest
    threshold.
    """
    m = idx.shape[0]
    best_f, best_thr, best_proxy = -1, 0.0, NEG_INF
    if m < 2 * min_leaf:
        return best_f, best_thr, best_proxy
    ps = np.arange(1, m, dtype=np.float64)
    for f in feats:
        vals = X[idx, f]
        order = np.argsort(vals, kind="stable")
        sv = vals[order]
        if sv[0] == sv[-1]:
            continue
        sy = y[idx[order]]
        csum = np.cumsum(sy)
        total = csum[-1]
        valid = sv[1:] > sv[:-1]
        if min_leaf > 1:
            valid &= (ps >= min_leaf) & ((m - ps) >= min_leaf)
        if not valid.any():
            continue
        sl = csum[:-1]
        with np.errstate(invalid="ignore"):
            proxy = np.where(
                valid, sl * sl / ps + (total - sl) * (total - sl) / (m - ps), NEG_INF
            )
        p = int(np.argmax(proxy))
        if proxy[p] > best_proxy:
            thr = (sv[p] + sv[p + 1]) / 2.0
            if thr >= sv[p + 1]:
                thr = sv[p]
            best_f, best_thr, best_proxy = int(f), float(thr), float(proxy[p])
    return best_f, best_thr, best_proxy


def best_split_gram(X, idx, G, rowsum, total, feats, min_leaf):
    """Best split for a multi-output node via a precomputed target Gram matrix.

    ``G[i, j]`` is the dot product of target rows i and j (global indices),
    ``rowsum[p] = sum_q G[idx[p], idx[q]]`` over the node, ``total`` its sum.
    The proxy maximized is |sum_left Y|^2/n_left + |sum_right Y|^2/n_right.
    """
    m = idx.shape[0]
    best_f, best_thr, best_proxy = -1, 0.0, NEG_INF
    if m < 2 * min_leaf:
        return best_f, best_thr, best_proxy
    ps = np.arange(1, m, dtype=np.float64)
    for f in feats:
        vals = X[idx, f]
        order = np.argsort(vals, kind="stable")
        sv = vals[order]
        if sv[0] == sv[-1]:
            continue
        gids = idx[order]
        Gsub = G[np.ix_(gids, gids)]
        diag = np.diagonal(Gsub).copy()
        inner = np.concatenate(([0.0], np.diagonal(np.cumsum(Gsub, axis=1), offset=-1)))
        a = np.cumsum(diag + 2.0 * inner)
        c = np.cumsum(rowsum[order])
        aL = a[:-1]
        cL = c[:-1]
        valid = sv[1:] > sv[:-1]
        if min_leaf > 1:
            valid &= (ps >= min_leaf) & ((m - ps) >= min_leaf)
        if not valid.any():
            continue
        with np.errstate(invalid="ignore"):
            proxy = np.where(
                valid, aL / ps + ((total - 2.0 * cL) + aL) / (m - ps), NEG_INF
            )
        p = int(np.argmax(proxy))
        if proxy[p] > best_proxy:
            thr = (sv[p] + sv[p + 1]) / 2.0
            if thr >= sv[p + 1]:
                thr = sv[p]
            best_f, best_thr, best_proxy = int(f), float(thr), float(proxy[p])
    return best_f, best_thr, best_proxy


def random_split_multi(X, idx, Y, feats, u, min_leaf):
    """Draw one uniform threshold per feature (thr = lo + u*(hi-lo) over
    the node's value range) and keep the best split. Degenerate features
    (lo == hi) are skipped. Works for any number of target columns.
    """
    m = idx.shape[0]
    best_f, best_thr, best_proxy = -1, 0.0, NEG_INF
    if m < 2 * min_leaf:
        return best_f, best_thr, best_proxy
    Ysub = Y[idx]
    Stot = np.cumsum(Ysub, axis=0)[-1]
    for fi in range(feats.shape[0]):
        f = feats[fi]
        vals = X[idx, f]
        lo = vals.min()
        hi = vals.max()
        if not hi > lo:
            continue
        thr = lo + u[fi] * (hi - lo)
        mask = vals <= thr
        nL = int(np.count_nonzero(mask))
        nR = m - nL
        if nL < min_leaf or nR < min_leaf or nL == 0 or nR == 0:
            continue
        left = Ysub[mask]
        SL = np.cumsum(left, axis=0)[-1]
        SR = Stot - SL
        ssl = float(np.cumsum(SL * SL)[-1])
        ssr = float(np.cumsum(SR * SR)[-1])
        proxy = ssl / nL + ssr / nR
        if proxy > best_proxy:
            best_f, best_thr, best_proxy = int(f), float(thr), float(proxy)
    return best_f, best_thr, best_proxy


def svr_smo(K, y, C, eps, tol, max_iter):
    """SMO-style solver for the epsilon-insensitive SVR dual.

    Variables beta_i = alpha_i - alpha_i^* in [-C, C] under sum(beta) = 0.
    Picks the most-violating up/down pair each iteration and moves along
    e_i - e_j, clipping at box bounds and sign crossings. Returns
    (beta, bias, iterations, kkt_gap, converged) where kkt_gap is the last
    up+down slope sum (non-negative means KKT-satisfied within tol).
    """
    n = y.shape[0]
    beta = np.zeros(n)
    g = -y.copy()  # gradient of the smooth part: K beta - y
    it = 0
    viol = NEG_INF
    converged = False
    for it in range(1, max_iter + 1):
        su = g + np.where(beta >= 0.0, eps, -eps)
        sd = -g + np.where(beta <= 0.0, eps, -eps)
        su_m = np.where(beta < C, su, np.inf)
        sd_m = np.where(beta > -C, sd, np.inf)
        i = int(np.argmin(su_m))
        j = int(np.argmin(sd_m))
        viol = su_m[i] + sd_m[j]
        if viol > -tol:
            converged = True
            break
        eta = K[i, i] + K[j, j] - 2.0 * K[i, j]
        if eta < 1e-12:
            eta = 1e-12
        t = -viol / eta
        tmax = min(C - beta[i], beta[j] + C)
        if beta[i] < 0.0:
            tmax = min(tmax, -beta[i])
        if beta[j] > 0.0:
            tmax = min(tmax, beta[j])
        if t > tmax:
            t = tmax
        if t <= 0.0:
            break
        beta[i] += t
        beta[j] -= t
        g += t * (K[:, i] - K[:, j])
    e = -g  # y - K beta, maintained incrementally
    free = (np.abs(beta) > 0.0) & (np.abs(beta) < C)
    if free.any():
        vals = e[free] - eps * np.sign(beta[free])
        b = float(np.cumsum(vals)[-1]) / vals.shape[0]
    else:
        lo, hi = NEG_INF, np.inf
        for i in range(n):
            if beta[i] == 0.0:
                lo = max(lo, e[i] - eps)
                hi = min(hi, e[i] + eps)
            elif beta[i] >= C:
                hi = min(hi, e[i] - eps)
            else:  # beta[i] <= -C
                lo = max(lo, e[i] + eps)
        if lo == NEG_INF and hi == np.inf:
            b = 0.0
        elif lo == NEG_INF:
            b = hi
        elif hi == np.inf:
            b = lo
        else:
            b = (lo + hi) / 2.0
    return beta, float(b), it, float(viol), converged
