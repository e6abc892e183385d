#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-numpy fallback.

Times each hot kernel on connectome-scale shapes, checks that both
backends return identical results, then times one full pipeline fit per
backend (the fallback run happens in a subprocess with
CONNECTO_PURE_PYTHON=1 since the backend is chosen at import time).

Run:  python benchmarks/kernel_bench.py
"""

import os
import subprocess
import sys
import time

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from connecto._kernels import get_backends  # noqa: E402


def _time(fn, repeat=5):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_kernels():
    backends = get_backends()
    if "compiled" not in backends:
        print("compiled backend unavailable; showing python numbers only")
    rng = np.random.default_rng(0)
    n, d, k = 150, 595, 595
    X = np.asfortranarray(rng.random((n, d)))
    y = np.ascontiguousarray(rng.random(n))
    Y = np.ascontiguousarray(rng.random((n, k)))
    idx = np.arange(n, dtype=np.intp)
    feats = np.arange(d, dtype=np.intp)
    G = Y @ Y.T
    rowsum = G.sum(axis=1)
    total = float(rowsum.sum())
    u = rng.random(d)
    Km = np.ascontiguousarray(X[:, :40] @ X[:, :40].T)

    cases = {
        "enet_cd (150x595, 200 sweeps)": lambda impl: (
            impl.enet_cd(X, y, np.zeros(d), 1e-3, 1e-4, 200, 0.0)
        ),
        "best_split_dense (150 rows, 595 feats)": lambda impl: (
            impl.best_split_dense(X, idx, y, feats, 1)
        ),
        "best_split_gram (150 rows, 595 targets)": lambda impl: (
            impl.best_split_gram(X, idx, G, rowsum, total, feats, 1)
        ),
        "random_split_multi (595 feats, 595 targets)": lambda impl: (
            impl.random_split_multi(X, idx, Y, feats, u, 1)
        ),
        "svr_smo (150x150 kernel)": lambda impl: (
            impl.svr_smo(Km, y, 1.0, 0.01, 1e-4, 100000)
        ),
    }

    print(f"{'kernel':<46}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}")
    for label, runner in cases.items():
        times = {}
        results = {}
        for name, impl in backends.items():
            times[name], results[name] = _time(lambda impl=impl: runner(impl))
        row = f"{label:<46}"
        for name in backends:
            row += f"{times[name] * 1e3:>10.2f}ms"
        if "compiled" in times:
            row += f"{times['python'] / times['compiled']:>9.1f}x"
        print(row)
        if len(results) == 2:
            a, b = results["python"], results["compiled"]
            agree = all(
                np.array_equal(x, z) if isinstance(x, np.ndarray) else x == z
                for x, z in zip(a if isinstance(a, tuple) else (a,),
                                b if isinstance(b, tuple) else (b,))
            )
            if not agree:
                print(f"  WARNING: backends disagree on {label}")


PIPELINE_SNIPPET = r"""
import time, warnings
warnings.filterwarnings("ignore")
from connecto import generate_synthetic, load_team_config, fit_pipeline, kernel_backend
ds = generate_synthetic(70, 35, 0.1, 0.02, seed=7)
t0 = time.perf_counter()
fit_pipeline(load_team_config(5), ds)   # multi-output forest, split kernels
fit_pipeline(load_team_config(2), ds)   # FFL huber (scipy path, kernel-free)
fit_pipeline(load_team_config(7), ds)   # SVR over 595 targets, SMO kernel
print(f"{kernel_backend}: {time.perf_counter() - t0:.2f}s")
"""


def bench_pipelines():
    print("\nfull pipeline fits (teams 5, 2, 7 on 70x595 synthetic):")
    env = dict(os.environ)
    src = os.path.abspath(os.path.join(os.path.dirname(__file__), "..", "src"))
    env["PYTHONPATH"] = src + os.pathsep + env.get("PYTHONPATH", "")
    for pure in ("0", "1"):
        env["CONNECTO_PURE_PYTHON"] = pure
        subprocess.run([sys.executable, "-c", PIPELINE_SNIPPET], env=env, check=True)


if __name__ == "__main__":
    bench_kernels()
    bench_pipelines()
