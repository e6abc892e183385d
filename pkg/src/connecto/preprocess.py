"""Sample-level outlier elimination and feature/sample transforms.

All masks and parameters are fitted on training rows only and reapplied
verbatim at predict time; bound values exactly equal to an outlier
threshold are kept (closed intervals).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .connectome import FeatureTable, LongitudinalDataset
from .errors import DataError, InsufficientDataError, ParameterError

LOF_LRD_EPS = 1e-10


def _rows(table) -> np.ndarray:
    if isinstance(table, FeatureTable):
        return table.rows
    x = np.asarray(table, dtype=float)
    if x.ndim != 2:
        raise DataError(f"expected a 2-D table, got shape {x.shape}")
    return x


@dataclass(frozen=True)
class SampleMask:
    """Boolean keep-flag per subject; never all-false."""

    keep: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.keep, dtype=bool)
        if not k.any():
            raise InsufficientDataError("elimination would drop every sample")
        k = k.copy()
        k.setflags(write=False)
        object.__setattr__(self, "keep", k)

    @property
    def n_kept(self) -> int:
        return int(np.count_nonzero(self.keep))


@dataclass(frozen=True)
class FeatureMask:
    """Boolean keep-flag per feature, fitted once and reapplied."""

    keep: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.keep, dtype=bool).copy()
        k.setflags(write=False)
        object.__setattr__(self, "keep", k)

    def apply(self, x) -> np.ndarray:
        rows = _rows(x)
        if rows.shape[1] != self.keep.shape[0]:
            raise DataError(
                f"mask fitted on {self.keep.shape[0]} features, table has {rows.shape[1]}"
            )
        return rows[:, self.keep]


def column_quantiles(x: np.ndarray, q: float) -> np.ndarray:
    """Per-column quantile by linear interpolation between order statistics."""
    n = x.shape[0]
    s = np.sort(x, axis=0)
    pos = (n - 1) * q
    lo = int(np.floor(pos))
    if lo >= n - 1:
        return s[n - 1].copy()
    frac = pos - lo
    return s[lo] + (s[lo + 1] - s[lo]) * frac


def iqr_mask(table, multiplier: float = 1.5, violation_fraction: float = 0.0) -> SampleMask:
    """Keep samples inside [Q1 - m*IQR, Q3 + m*IQR] on (almost) every feature.

    Bounds are computed per feature with interpolated quartiles,
    IQR = Q3 - Q1. A sample is dropped when the fraction of its features
    falling outside the closed interval exceeds ``violation_fraction``
    (default: any single violation drops it).
    """
    x = _rows(table)
    if x.shape[0] < 4:
        raise InsufficientDataError("IQR elimination needs at least 4 rows")
    if multiplier < 0:
        raise ParameterError("multiplier must be >= 0")
    q1 = column_quantiles(x, 0.25)
    q3 = column_quantiles(x, 0.75)
    iqr = q3 - q1
    lower = q1 - multiplier * iqr
    upper = q3 + multiplier * iqr
    violations = (x < lower) | (x > upper)
    frac = violations.mean(axis=1)
    return SampleMask(frac <= violation_fraction)


def zscore_mask(table, k: float = 3.0, violation_fraction: float = 0.0) -> SampleMask:
    """Keep samples within mean +- k*std (population std) on every feature.

    Zero-variance features never trigger elimination; boundary values are
    kept.
    """
    x = _rows(table)
    if x.shape[0] < 2:
        raise InsufficientDataError("z-score elimination needs at least 2 rows")
    if k < 0:
        raise ParameterError("k must be >= 0")
    mu = x.mean(axis=0)
    sigma = x.std(axis=0)
    violations = np.abs(x - mu) > k * sigma
    frac = violations.mean(axis=1)
    return SampleMask(frac <= violation_fraction)


def lof_scores(table, k_neighbors: int = 20) -> np.ndarray:
    """Local outlier factor of every sample (Breunig-style, ties included).

    Scores sit near 1 for uniform data and grow for isolated points.
    Local reachability densities are capped at 1/1e-10 so exact duplicates
    stay finite.
    """
    x = _rows(table)
    n = x.shape[0]
    if n <= k_neighbors:
        raise InsufficientDataError(
            f"LOF needs more rows ({n}) than k_neighbors ({k_neighbors})"
        )
    sq = np.sum(x * x, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.maximum(d2, 0.0, out=d2)
    dist = np.sqrt(d2)
    np.fill_diagonal(dist, np.inf)
    kdist = np.partition(dist, k_neighbors - 1, axis=1)[:, k_neighbors - 1]
    neighbor = dist <= kdist[:, None]  # k nearest plus distance ties
    counts = neighbor.sum(axis=1)
    reach = np.maximum(kdist[None, :], dist)
    mean_reach = np.where(neighbor, reach, 0.0).sum(axis=1) / counts
    lrd = 1.0 / np.maximum(mean_reach, LOF_LRD_EPS)
    return (neighbor @ lrd) / counts / lrd


def lof_mask(table, k_neighbors: int = 20, threshold: float = 1.5) -> SampleMask:
    """Drop samples whose LOF score exceeds the threshold."""
    return SampleMask(lof_scores(table, k_neighbors) <= threshold)


def _harmonic(m: float) -> float:
    return float(np.log(m) + 0.5772156649015329)


def _avg_path_length(m: int) -> float:
    # expected path length of an unsuccessful BST search over m points
    if m <= 1:
        return 0.0
    if m == 2:
        return 1.0
    return 2.0 * _harmonic(m - 1) - 2.0 * (m - 1) / m


def _grow_isolation_tree(x, indices, depth, cap, rng, nodes):
    m = indices.shape[0]
    if depth >= cap or m <= 1:
        nodes.append((-1, 0.0, -1, -1, m))
        return len(nodes) - 1
    sub = x[indices]
    lo = sub.min(axis=0)
    hi = sub.max(axis=0)
    usable = np.flatnonzero(hi > lo)
    if usable.size == 0:
        nodes.append((-1, 0.0, -1, -1, m))
        return len(nodes) - 1
    f = int(usable[rng.integers(usable.size)])
    thr = float(rng.uniform(lo[f], hi[f]))
    if thr <= lo[f] or thr >= hi[f]:
        thr = (lo[f] + hi[f]) / 2.0
    mask = sub[:, f] < thr
    nodes.append(None)  # placeholder, patched below
    pos = len(nodes) - 1
    left = _grow_isolation_tree(x, indices[mask], depth + 1, cap, rng, nodes)
    right = _grow_isolation_tree(x, indices[~mask], depth + 1, cap, rng, nodes)
    nodes[pos] = (f, thr, left, right, m)
    return pos


def _tree_path_lengths(nodes, x) -> np.ndarray:
    out = np.zeros(x.shape[0])
    stack = [(0, np.arange(x.shape[0]), 0)]
    while stack:
        node, idx, depth = stack.pop()
        if idx.size == 0:
            continue
        f, thr, left, right, size = nodes[node]
        if f < 0:
            out[idx] = depth + _avg_path_length(size)
            continue
        mask = x[idx, f] < thr
        stack.append((left, idx[mask], depth + 1))
        stack.append((right, idx[~mask], depth + 1))
    return out


def iforest_scores(table, n_trees: int = 100, subsample: int = 256, seed: int = 0) -> np.ndarray:
    """Isolation-forest anomaly scores in (0, 1), deterministic per seed.

    Uses the standard normalization s(x) = 2**(-E[h(x)] / c(psi)); a
    one-point subsample makes every score 0.5.
    """
    x = _rows(table)
    n = x.shape[0]
    if n < 2:
        raise InsufficientDataError("isolation forest needs at least 2 rows")
    if n_trees < 1:
        raise ParameterError("n_trees must be >= 1")
    psi = min(subsample, n)
    cap = int(np.ceil(np.log2(max(psi, 2))))
    rng = np.random.default_rng(seed)
    paths = np.zeros(n)
    for _ in range(n_trees):
        indices = rng.choice(n, size=psi, replace=False)
        nodes = []
        _grow_isolation_tree(x, indices, 0, cap, rng, nodes)
        paths += _tree_path_lengths(nodes, x)
    c = _avg_path_length(psi)
    if c <= 0.0:
        return np.full(n, 0.5)
    return np.power(2.0, -(paths / n_trees) / c)


def iforest_mask(table, n_trees: int = 100, subsample: int = 256, seed: int = 0,
                 threshold: float = 0.6) -> SampleMask:
    """Drop samples whose isolation-forest score exceeds the threshold."""
    return SampleMask(iforest_scores(table, n_trees, subsample, seed) <= threshold)


def drop_constant_features(table) -> FeatureMask:
    """Drop features whose variance is exactly zero (all entries equal)."""
    x = _rows(table)
    if x.shape[0] < 1:
        raise InsufficientDataError("need at least one row")
    constant = np.all(x == x[0], axis=0)
    return FeatureMask(~constant)


def drop_redundant_features(table) -> FeatureMask:
    """Drop all-zero columns and exact duplicates (lowest index survives)."""
    x = _rows(table)
    if x.shape[0] < 1:
        raise InsufficientDataError("need at least one row")
    keep = np.ones(x.shape[1], dtype=bool)
    seen = {}
    for j in range(x.shape[1]):
        col = x[:, j]
        if not col.any():
            keep[j] = False
            continue
        key = col.tobytes()
        if key in seen:
            keep[j] = False
        else:
            seen[key] = j
    return FeatureMask(keep)


def drop_correlated_features(table, threshold: float = 0.95) -> FeatureMask:
    """Greedy scan in column order dropping features whose absolute Pearson
    correlation with any earlier kept feature exceeds the threshold.

    Zero-variance columns count as correlation 0 with everything.
    """
    x = _rows(table)
    if x.shape[0] < 3:
        raise InsufficientDataError("correlation elimination needs at least 3 rows")
    if not 0.0 < threshold <= 1.0:
        raise ParameterError(f"threshold must lie in (0, 1], got {threshold}")
    n, d = x.shape
    mu = x.mean(axis=0)
    std = x.std(axis=0)
    safe = np.where(std > 0, std, 1.0)
    z = (x - mu) / safe
    z[:, std == 0] = 0.0
    corr = np.abs(z.T @ z) / n
    keep = np.ones(d, dtype=bool)
    kept = []
    for j in range(d):
        if kept and np.any(corr[j, kept] > threshold):
            keep[j] = False
        else:
            kept.append(j)
    return FeatureMask(keep)


@dataclass(frozen=True)
class ScalerParams:
    """Per-feature affine scaling learned on the training rows."""

    mode: str  # "standard" | "maxabs"
    mean: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        for name in ("mean", "scale"):
            a = np.asarray(getattr(self, name), dtype=float).copy()
            a.setflags(write=False)
            object.__setattr__(self, name, a)


def fit_scaler(table, mode: str = "standard") -> ScalerParams:
    """Learn standard ((x-mean)/std) or maxabs (x/max|x|) parameters.

    Degenerate features (zero std / zero max) pass through unchanged.
    """
    x = _rows(table)
    if mode == "standard":
        if x.shape[0] < 2:
            raise InsufficientDataError("standard scaling needs at least 2 rows")
        std = x.std(axis=0)
        degenerate = std == 0
        mean = np.where(degenerate, 0.0, x.mean(axis=0))
        scale = np.where(degenerate, 1.0, std)
    elif mode == "maxabs":
        amax = np.abs(x).max(axis=0) if x.shape[0] else np.array([])
        scale = np.where(amax == 0, 1.0, amax)
        mean = np.zeros(x.shape[1])
    else:
        raise ParameterError(f"unknown scaler mode {mode!r}")
    return ScalerParams(mode=mode, mean=mean, scale=scale)


def apply_scaler(params: ScalerParams, table) -> np.ndarray:
    x = _rows(table)
    if x.shape[1] != params.scale.shape[0]:
        raise DataError("scaler fitted on a different feature count")
    return (x - params.mean) / params.scale


def _values(table) -> np.ndarray:
    if isinstance(table, FeatureTable):
        return table.rows
    return np.asarray(table, dtype=float)


def logit_transform(table, eps: float = 1e-6) -> np.ndarray:
    """Map [0, 1] data onto the real line via log(x / (1-x)) after clipping
    to [eps, 1-eps]. Values outside [0, 1] are a domain error."""
    x = _values(table)
    if not 0.0 < eps < 0.5:
        raise ParameterError("eps must lie in (0, 0.5)")
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise DataError("logit input must lie in [0, 1]")
    c = np.clip(x, eps, 1.0 - eps)
    return np.log(c / (1.0 - c))


def sigmoid_transform(table) -> np.ndarray:
    """Inverse of logit_transform back onto (0, 1), overflow-safe."""
    x = _values(table)
    out = np.empty_like(x, dtype=float)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def augment_rows(x: np.ndarray, y: np.ndarray, sigma: float, copies: int,
                 seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Array-level noise augmentation: originals first, then copy blocks
    with i.i.d. Normal(0, sigma) added to the inputs only."""
    if sigma < 0:
        raise ParameterError("sigma must be >= 0")
    if copies < 1:
        raise ParameterError("copies must be >= 1")
    rng = np.random.default_rng(seed)
    xs = [x]
    ys = [y]
    for _ in range(copies):
        xs.append(x + rng.normal(0.0, sigma, size=x.shape))
        ys.append(y)
    return np.vstack(xs), np.vstack(ys)


def augment_noise(dataset: LongitudinalDataset, sigma: float, copies: int = 1,
                  seed: int = 0) -> LongitudinalDataset:
    """Append noisy copies of the baseline rows, reusing targets verbatim.

    The output holds (1+copies)*n rows: originals first, then copy blocks
    with i.i.d. Normal(0, sigma) added to the t0 features only.
    """
    if not dataset.labeled:
        raise DataError("noise augmentation needs a labeled dataset")
    x2, y2 = augment_rows(dataset.t0.rows, dataset.t1.rows, sigma, copies, seed)
    ids = list(dataset.t0.subject_ids)
    for c in range(1, copies + 1):
        ids.extend(f"{sid}~n{c}" for sid in dataset.t0.subject_ids)
    return LongitudinalDataset(
        t0=FeatureTable(tuple(ids), x2),
        t1=FeatureTable(tuple(ids), y2),
    )


def warn_once(message: str) -> None:
    warnings.warn(message, stacklevel=2)
