"""Kernel-level checks: each backend against brute-force oracles, and the
two backends against each other (they are written to match bitwise)."""

import numpy as np
import pytest

from connecto._kernels import get_backends

BACKENDS = get_backends()


def _problem(seed, n=50, d=9, k=4):
    rng = np.random.default_rng(seed)
    x = np.asfortranarray(rng.normal(size=(n, d)))
    y = rng.normal(size=n)
    Y = np.ascontiguousarray(rng.normal(size=(n, k)))
    return x, y, Y


def _variance_proxy_oracle(x, idx, Y, min_leaf):
    """Exhaustive best split by total variance reduction (any K)."""
    m = idx.shape[0]
    best = (-1, 0.0, -np.inf)
    ysub = Y[idx]
    for f in range(x.shape[1]):
        vals = x[idx, f]
        for thr in np.unique(vals)[:-1]:
            left = vals <= thr
            nl = int(left.sum())
            nr = m - nl
            if nl < min_leaf or nr < min_leaf:
                continue
            sl = ysub[left].sum(axis=0)
            sr = ysub[~left].sum(axis=0)
            proxy = float(sl @ sl) / nl + float(sr @ sr) / nr
            if proxy > best[2] + 1e-12:
                best = (f, float(thr), proxy)
    return best


@pytest.mark.parametrize("name", list(BACKENDS))
class TestAgainstOracles:
    def test_enet_cd_decreases_objective_and_satisfies_kkt(self, name):
        impl = BACKENDS[name]
        rng = np.random.default_rng(0)
        for trial in range(10):
            n, d = 40, 7
            x = np.asfortranarray(rng.normal(size=(n, d)))
            y = rng.normal(size=n)
            w = np.zeros(d)
            l1, l2 = 0.05, 0.02
            impl.enet_cd(x, y, w, l1, l2, 5000, 1e-12)
            r = y - x @ w
            g = x.T @ r / n
            for j in range(d):
                if w[j] != 0:
                    viol = abs(-g[j] + l2 * w[j] + l1 * np.sign(w[j]))
                else:
                    viol = max(0.0, abs(g[j]) - l1)
                assert viol <= 1e-10

    def test_best_split_dense_matches_bruteforce(self, name):
        impl = BACKENDS[name]
        for seed in range(15):
            x, y, _ = _problem(seed, n=30, d=6)
            idx = np.arange(30, dtype=np.intp)
            feats = np.arange(6, dtype=np.intp)
            got = impl.best_split_dense(x, idx, y, feats, 2)
            exp = _variance_proxy_oracle(x, idx, y[:, None], 2)
            assert got[0] == exp[0]
            assert abs(got[2] - exp[2]) < 1e-9
            # thresholds differ in convention (midpoint vs left value)
            # but must induce the same partition
            assert np.array_equal(x[idx, got[0]] <= got[1], x[idx, exp[0]] <= exp[1])

    def test_best_split_gram_matches_bruteforce(self, name):
        impl = BACKENDS[name]
        for seed in range(10):
            x, _, Y = _problem(seed, n=26, d=5, k=3)
            idx = np.arange(26, dtype=np.intp)
            feats = np.arange(5, dtype=np.intp)
            G = Y @ Y.T
            rowsum = G[np.ix_(idx, idx)].sum(axis=1)
            got = impl.best_split_gram(x, idx, G, rowsum, float(rowsum.sum()), feats, 1)
            exp = _variance_proxy_oracle(x, idx, Y, 1)
            assert got[0] == exp[0]
            assert abs(got[2] - exp[2]) < 1e-9

    def test_best_split_handles_bootstrap_duplicates(self, name):
        impl = BACKENDS[name]
        x, y, _ = _problem(3, n=30, d=6)
        rng = np.random.default_rng(5)
        idx = np.sort(rng.integers(0, 30, size=30)).astype(np.intp)
        feats = np.arange(6, dtype=np.intp)
        got = impl.best_split_dense(x, idx, y, feats, 1)
        exp = _variance_proxy_oracle(x, idx, y[:, None], 1)
        assert got[0] == exp[0]
        assert abs(got[2] - exp[2]) < 1e-9

    def test_random_split_proxy_matches_direct_computation(self, name):
        impl = BACKENDS[name]
        x, _, Y = _problem(7, n=24, d=5, k=2)
        idx = np.arange(24, dtype=np.intp)
        feats = np.arange(5, dtype=np.intp)
        u = np.random.default_rng(1).random(5)
        f, thr, proxy = impl.random_split_multi(x, idx, Y, feats, u, 1)
        vals = x[idx, f]
        lo, hi = vals.min(), vals.max()
        assert lo <= thr <= hi
        left = vals <= thr
        sl = Y[idx][left].sum(axis=0)
        sr = Y[idx][~left].sum(axis=0)
        direct = float(sl @ sl) / left.sum() + float(sr @ sr) / (~left).sum()
        assert abs(proxy - direct) < 1e-9

    def test_svr_smo_dual_feasible_and_kkt(self, name):
        impl = BACKENDS[name]
        rng = np.random.default_rng(2)
        x = rng.normal(size=(40, 3))
        y = x @ np.array([1.0, -2.0, 0.5]) + rng.normal(0, 0.1, 40)
        K = np.ascontiguousarray(x @ x.T)
        C, eps = 1.0, 0.1
        beta, b, iters, gap, converged = impl.svr_smo(K, y, C, eps, 1e-3, 100000)
        assert converged
        assert np.all(np.abs(beta) <= C + 1e-12)
        assert abs(beta.sum()) < 1e-9
        assert gap > -1e-3

    def test_svr_wide_tube_keeps_all_duals_zero(self, name):
        impl = BACKENDS[name]
        rng = np.random.default_rng(4)
        x = rng.normal(size=(20, 2))
        y = rng.random(20)
        K = np.ascontiguousarray(x @ x.T)
        eps = float(y.max() - y.min()) + 1.0
        beta, b, *_ = impl.svr_smo(K, y, 1.0, eps, 1e-3, 1000)
        assert not beta.any()
        assert np.all(np.abs(y - b) <= eps)


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled backend unavailable")
class TestBackendParity:
    def test_enet_bitwise(self):
        pk, ck = BACKENDS["python"], BACKENDS["compiled"]
        for seed in range(5):
            x, y, _ = _problem(seed)
            w1 = np.zeros(x.shape[1])
            w2 = np.zeros(x.shape[1])
            r1 = pk.enet_cd(x, y, w1, 0.03, 0.01, 300, 1e-9)
            r2 = ck.enet_cd(x, y, w2, 0.03, 0.01, 300, 1e-9)
            assert r1 == r2
            assert np.array_equal(w1, w2)

    def test_splits_bitwise(self):
        pk, ck = BACKENDS["python"], BACKENDS["compiled"]
        for seed in range(8):
            x, y, Y = _problem(seed, n=37, d=8, k=5)
            idx = np.arange(37, dtype=np.intp)
            feats = np.arange(8, dtype=np.intp)
            assert pk.best_split_dense(x, idx, y, feats, 1) == ck.best_split_dense(
                x, idx, y, feats, 1
            )
            G = Y @ Y.T
            rowsum = G[np.ix_(idx, idx)].sum(axis=1)
            t = float(rowsum.sum())
            assert pk.best_split_gram(x, idx, G, rowsum, t, feats, 2) == (
                ck.best_split_gram(x, idx, G, rowsum, t, feats, 2)
            )
            u = np.random.default_rng(seed).random(8)
            assert pk.random_split_multi(x, idx, Y, feats, u, 1) == (
                ck.random_split_multi(x, idx, Y, feats, u, 1)
            )

    def test_svr_bitwise(self):
        pk, ck = BACKENDS["python"], BACKENDS["compiled"]
        rng = np.random.default_rng(11)
        x = rng.normal(size=(30, 4))
        y = rng.normal(size=30)
        K = np.ascontiguousarray(x @ x.T)
        b1, bias1, it1, gap1, c1 = pk.svr_smo(K, y, 0.7, 0.05, 1e-4, 50000)
        b2, bias2, it2, gap2, c2 = ck.svr_smo(K, y, 0.7, 0.05, 1e-4, 50000)
        assert (it1, gap1, bias1, c1) == (it2, gap2, bias2, c2)
        assert np.array_equal(b1, b2)
