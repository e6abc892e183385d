"""Feature selection and extraction stages.

Everything here is fit-once/apply-many: a selector or projection fitted
on training rows transforms train and test with the same mask or basis.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ._stats import kfold_indices, t_two_tailed_pvalue
from .errors import DataError, InsufficientDataError, ParameterError
from .preprocess import FeatureMask, _rows


@dataclass(frozen=True)
class Projection:
    """Orthonormal linear projection (PCA-style, optionally centered)."""

    kind: str  # "pca" | "tsvd"
    components: np.ndarray  # (k, d), orthonormal rows
    center: np.ndarray | None  # (d,) for pca, None for tsvd
    explained_variance: np.ndarray  # (k,), nonincreasing
    explained_variance_ratio: np.ndarray  # (k,), sums to <= 1

    def __post_init__(self):
        comp = np.asarray(self.components, dtype=float)
        gram = comp @ comp.T
        if np.max(np.abs(gram - np.eye(comp.shape[0]))) > 1e-8:
            raise DataError("projection rows must be orthonormal")
        for name in ("components", "explained_variance", "explained_variance_ratio"):
            a = np.asarray(getattr(self, name), dtype=float).copy()
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        if self.center is not None:
            c = np.asarray(self.center, dtype=float).copy()
            c.setflags(write=False)
            object.__setattr__(self, "center", c)

    @property
    def k(self) -> int:
        return self.components.shape[0]


@dataclass(frozen=True)
class SelectionReport:
    """Per-feature relevance scores plus the fitted keep-mask."""

    scores: np.ndarray
    selected: FeatureMask
    method: str

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=float).copy()
        s.setflags(write=False)
        object.__setattr__(self, "scores", s)


def _fit_svd_projection(x: np.ndarray, k: int, kind: str) -> Projection:
    n, d = x.shape
    if not 1 <= k <= min(n, d):
        raise ParameterError(f"k must lie in [1, {min(n, d)}], got {k}")
    if kind == "pca":
        center = x.mean(axis=0)
        xc = x - center
    else:
        center = None
        xc = x
    _, s, vt = np.linalg.svd(xc, full_matrices=False)
    comps = vt[:k].copy()
    # sign convention: the largest-|value| entry of each component is positive
    for i in range(k):
        j = int(np.argmax(np.abs(comps[i])))
        if comps[i, j] < 0:
            comps[i] = -comps[i]
    denom = max(n - 1, 1)
    ev_all = (s * s) / denom
    total = float(ev_all.sum())
    ev = ev_all[:k]
    ratio = ev / total if total > 0 else np.zeros(k)
    return Projection(
        kind=kind,
        components=comps,
        center=center,
        explained_variance=ev,
        explained_variance_ratio=ratio,
    )


def fit_pca(table, k: int) -> Projection:
    """Top-k right singular vectors of the column-centered data."""
    return _fit_svd_projection(_rows(table), k, "pca")


def fit_tsvd(table, k: int) -> Projection:
    """Like PCA but without the centering step."""
    return _fit_svd_projection(_rows(table), k, "tsvd")


def project(p: Projection, table) -> np.ndarray:
    x = _rows(table)
    if x.shape[1] != p.components.shape[1]:
        raise DataError("projection fitted on a different feature count")
    if p.center is not None:
        x = x - p.center
    return x @ p.components.T


def reconstruct(p: Projection, table_k) -> np.ndarray:
    xk = np.asarray(table_k, dtype=float)
    if xk.ndim != 2 or xk.shape[1] != p.k:
        raise DataError(f"expected (n, {p.k}) component scores")
    x = xk @ p.components
    if p.center is not None:
        x = x + p.center
    return x


def variance_threshold(table, threshold: float | None = None,
                       drop_lowest: int | None = None) -> SelectionReport:
    """Keep features with variance strictly above a threshold, or drop the
    ``drop_lowest`` lowest-variance features (ties: lower index drops first)."""
    x = _rows(table)
    if x.shape[0] < 2:
        raise InsufficientDataError("variance threshold needs at least 2 rows")
    if (threshold is None) == (drop_lowest is None):
        raise ParameterError("give exactly one of threshold / drop_lowest")
    var = x.var(axis=0)
    d = var.shape[0]
    if drop_lowest is not None:
        if not 0 <= drop_lowest <= d:
            raise ParameterError(f"drop_lowest must lie in [0, {d}]")
        order = np.lexsort((np.arange(d), var))
        keep = np.ones(d, dtype=bool)
        keep[order[:drop_lowest]] = False
    else:
        keep = var > threshold
    return SelectionReport(var, FeatureMask(keep), "variance_threshold")


def _equal_frequency_codes(v: np.ndarray, bins: int) -> np.ndarray:
    edges = np.quantile(v, np.arange(1, bins) / bins, method="linear")
    return np.searchsorted(edges, v, side="right")


def mi_scores(x, y, bins: int = 10) -> np.ndarray:
    """Plug-in mutual information (nats) of each feature with the target(s),
    both sides discretized into equal-frequency bins.

    A 2-D target scores each feature by the mean MI across target columns.
    """
    x = _rows(x)
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    n, d = x.shape
    if n < bins:
        raise InsufficientDataError(f"need at least {bins} rows for {bins} bins")
    if y.shape[0] != n:
        raise DataError("x and y row counts differ")
    t = y.shape[1]
    ycodes = np.empty((n, t), dtype=np.int64)
    for c in range(t):
        ycodes[:, c] = _equal_frequency_codes(y[:, c], bins)
    offsets = np.arange(t, dtype=np.int64) * bins * bins
    scores = np.empty(d)
    with np.errstate(divide="ignore", invalid="ignore"):
        for j in range(d):
            xc = _equal_frequency_codes(x[:, j], bins)
            flat = (xc[:, None] * bins + ycodes) + offsets
            counts = np.bincount(flat.ravel(), minlength=t * bins * bins)
            p = counts.reshape(t, bins, bins) / n
            pi = p.sum(axis=2, keepdims=True)
            pj = p.sum(axis=1, keepdims=True)
            ratio = np.where(p > 0, p / (pi * pj), 1.0)
            scores[j] = float(np.mean(np.sum(p * np.log(ratio), axis=(1, 2))))
    return scores


def _top_k_mask(scores: np.ndarray, k: int) -> np.ndarray:
    d = scores.shape[0]
    order = np.lexsort((np.arange(d), -scores))  # high score first, low index wins ties
    keep = np.zeros(d, dtype=bool)
    keep[order[:k]] = True
    return keep


def select_k_best_mi(x, y, k: int, bins: int = 10) -> SelectionReport:
    """Select the k features with the highest mutual information with y."""
    x = _rows(x)
    d = x.shape[1]
    if not 1 <= k <= d:
        raise ParameterError(f"k must lie in [1, {d}], got {k}")
    y_arr = np.asarray(y, dtype=float)
    scores = mi_scores(x, y_arr, bins=bins)
    if float(np.ptp(y_arr)) == 0.0:
        warnings.warn("constant target: all MI scores are zero, selecting the first k features")
    return SelectionReport(scores, FeatureMask(_top_k_mask(scores, k)), "select_k_best")


def _percentile_count(d: int, pct: float) -> int:
    return max(1, min(d, int(np.floor(d * pct / 100.0 + 0.5))))


def generic_univariate_select(x, y, k_grid=(), percentile_grid=(), cv_folds: int = 3,
                              estimator_factory=None, bins: int = 10,
                              seed: int = 0) -> SelectionReport:
    """Pick the best univariate selection among k-best and percentile
    candidates by cross-validated MAE of a base estimator.

    Candidates are tried in listed order (k values first); ties keep the
    earliest. Fold assignment is deterministic given the seed.
    """
    x = _rows(x)
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    n, d = x.shape
    candidates = [("k_best", int(k)) for k in k_grid]
    candidates += [("percentile", float(p)) for p in percentile_grid]
    if not candidates:
        raise ParameterError("empty candidate grid")
    scores = mi_scores(x, y, bins=bins)
    folds = kfold_indices(n, cv_folds, seed)
    if estimator_factory is None:
        from .learners_core import RidgeEstimator

        estimator_factory = lambda: RidgeEstimator(lam=1.0)  # noqa: E731
    best = None
    for cand in candidates:
        mode, value = cand
        count = value if mode == "k_best" else _percentile_count(d, value)
        if not 1 <= count <= d:
            raise ParameterError(f"candidate {cand} selects {count} of {d} features")
        mask = _top_k_mask(scores, count)
        errs = []
        for fold in folds:
            train = np.setdiff1d(np.arange(n), fold)
            est = estimator_factory()
            est.fit(x[np.ix_(train, np.flatnonzero(mask))], y[train])
            pred = est.predict(x[np.ix_(fold, np.flatnonzero(mask))])
            errs.append(float(np.mean(np.abs(pred - y[fold]))))
        cv_mae = float(np.mean(errs))
        if best is None or cv_mae < best[0]:
            best = (cv_mae, cand, mask)
    _, winner, mask = best
    return SelectionReport(
        scores, FeatureMask(mask), f"generic_univariate[{winner[0]}={winner[1]}]"
    )


def backward_elimination(x, y, p_threshold: float = 0.05,
                         max_rounds: int | None = None) -> SelectionReport:
    """Iteratively drop the least significant OLS coefficient.

    Each round fits least squares with intercept on the surviving features,
    computes two-tailed coefficient p-values (for multi-target y, a
    feature's p-value is its minimum across targets), and removes the
    single worst feature whose p-value exceeds the threshold. Stops when
    none does, when max_rounds is reached, or when the sample count no
    longer exceeds the surviving feature count.
    """
    x = _rows(x)
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    if not 0.0 < p_threshold < 1.0:
        raise ParameterError("p_threshold must lie strictly inside (0, 1)")
    n, d = x.shape
    if max_rounds is None:
        max_rounds = d
    active = list(range(d))
    pvals = np.zeros(d)  # last p-value computed for each feature
    rounds = 0
    while rounds < max_rounds and len(active) > 1:
        m = len(active)
        dof = n - m - 1
        if dof < 1:
            break
        a = np.column_stack([np.ones(n), x[:, active]])
        ata = a.T @ a
        try:
            ainv = np.linalg.inv(ata)
        except np.linalg.LinAlgError:
            warnings.warn("singular design in backward elimination; ridge fallback")
            ainv = np.linalg.inv(ata + 1e-8 * np.eye(m + 1))
        coef = ainv @ (a.T @ y)  # (m+1, T)
        resid = y - a @ coef
        sigma2 = (resid * resid).sum(axis=0) / dof  # (T,)
        se = np.sqrt(np.outer(np.diagonal(ainv), sigma2))  # (m+1, T)
        with np.errstate(divide="ignore", invalid="ignore"):
            tstat = np.where(se > 0, coef / se, np.inf)
        p = np.empty_like(tstat)
        for r in range(p.shape[0]):
            for c in range(p.shape[1]):
                p[r, c] = t_two_tailed_pvalue(float(tstat[r, c]), dof)
        feat_p = p[1:].min(axis=1)  # ignore the intercept row
        for pos, j in enumerate(active):
            pvals[j] = feat_p[pos]
        worst = int(np.argmax(feat_p))
        if feat_p[worst] <= p_threshold:
            break
        del active[worst]
        rounds += 1
    keep = np.zeros(d, dtype=bool)
    keep[active] = True
    return SelectionReport(1.0 - pvals, FeatureMask(keep), "backward_elimination")
