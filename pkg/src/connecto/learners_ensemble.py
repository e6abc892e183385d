"""Tree models and ensemble strategies: CART-style regression trees
(natively multi-output), random/extra forests, cluster-split forests,
bagging over arbitrary bases, AdaBoost.R2 with weighted-median
combination, gradient boosting (classic residual fitting and a
second-order regularized-leaf variant), and voting.

Determinism: every member draws from an independent stream derived from
(seed, member index), so serial and parallel fits produce identical
ensembles. Best-split ties resolve to the lowest feature index, then the
lowest threshold.
"""

from __future__ import annotations

import numpy as np

from . import _kernels
from ._stats import derive_seed
from .errors import DataError, ParameterError
from .preprocess import _rows

BIG_MEMBER_WEIGHT = float(np.log(1e10))


def _as_multi(y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    return y[:, None] if y.ndim == 1 else y


class RegressionTree:
    """Binary regression tree with mean-vector leaves.

    splitter "best" scans sorted feature values for the maximal variance
    reduction (summed over outputs); "random" draws one uniform threshold
    per candidate feature and keeps the best. ``leaf_shrink`` turns leaf
    means sum/m into sum/(m + shrink) for regularized boosting leaves.
    """

    native_multioutput = True

    def __init__(self, max_depth=None, min_samples_leaf=1, splitter="best",
                 feature_fraction=1.0, leaf_shrink=0.0, seed=0):
        if splitter not in ("best", "random"):
            raise ParameterError(f"unknown splitter {splitter!r}")
        if min_samples_leaf < 1:
            raise ParameterError("min_samples_leaf must be >= 1")
        if not 0.0 < feature_fraction <= 1.0:
            raise ParameterError("feature_fraction must lie in (0, 1]")
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.splitter = splitter
        self.feature_fraction = feature_fraction
        self.leaf_shrink = leaf_shrink
        self.seed = seed

    def fit(self, x, y, gram=None, root_indices=None):
        x = _rows(x)
        y2 = _as_multi(y)
        if x.shape[0] != y2.shape[0] or x.shape[0] == 0:
            raise DataError(f"bad shapes x{x.shape} y{y2.shape}")
        self._xf = np.asfortranarray(x)
        self._y = np.ascontiguousarray(y2)
        self._k = y2.shape[1]
        d = x.shape[1]
        self._n_sub = max(1, int(round(self.feature_fraction * d)))
        self._all_feats = np.arange(d, dtype=np.intp)
        self._rng = np.random.default_rng(self.seed)
        use_gram = self.splitter == "best" and self._k > 1
        if use_gram:
            self._gram = gram if gram is not None else self._y @ self._y.T
        else:
            self._gram = None
        self.features = []
        self.thresholds = []
        self.children_left = []
        self.children_right = []
        self.values = []
        idx = (
            np.arange(x.shape[0], dtype=np.intp)
            if root_indices is None
            else np.asarray(root_indices, dtype=np.intp)
        )
        self._build(idx, 0)
        self.features = np.asarray(self.features, dtype=np.intp)
        self.thresholds = np.asarray(self.thresholds)
        self.children_left = np.asarray(self.children_left, dtype=np.intp)
        self.children_right = np.asarray(self.children_right, dtype=np.intp)
        self.values = np.asarray(self.values)
        del self._xf, self._y, self._gram, self._rng
        return self

    def _leaf_value(self, idx):
        sub = self._y[idx]
        return sub.sum(axis=0) / (idx.shape[0] + self.leaf_shrink)

    def _candidate_features(self):
        if self._n_sub == self._all_feats.shape[0]:
            return self._all_feats
        chosen = self._rng.choice(self._all_feats.shape[0], self._n_sub, replace=False)
        return np.sort(chosen).astype(np.intp)

    def _find_split(self, idx):
        feats = self._candidate_features()
        if self.splitter == "random":
            u = self._rng.random(feats.shape[0])
            return _kernels.random_split_multi(
                self._xf, idx, self._y, feats, u, self.min_samples_leaf
            )
        if self._k == 1:
            return _kernels.best_split_dense(
                self._xf, idx, self._y[:, 0], feats, self.min_samples_leaf
            )
        rowsum = self._gram[np.ix_(idx, idx)].sum(axis=1)
        return _kernels.best_split_gram(
            self._xf, idx, self._gram, rowsum, float(rowsum.sum()), feats,
            self.min_samples_leaf,
        )

    def _append_leaf(self, idx):
        node = len(self.features)
        self.features.append(-1)
        self.thresholds.append(0.0)
        self.children_left.append(-1)
        self.children_right.append(-1)
        self.values.append(self._leaf_value(idx))
        return node

    def _build(self, idx, depth):
        m = idx.shape[0]
        if (
            (self.max_depth is not None and depth >= self.max_depth)
            or m < 2 * self.min_samples_leaf
            or float(np.ptp(self._y[idx])) == 0.0
        ):
            return self._append_leaf(idx)
        f, thr, _ = self._find_split(idx)
        if f < 0:
            return self._append_leaf(idx)
        node = len(self.features)
        self.features.append(f)
        self.thresholds.append(thr)
        self.children_left.append(-1)
        self.children_right.append(-1)
        self.values.append(self._leaf_value(idx))
        mask = self._xf[idx, f] <= thr
        left = self._build(idx[mask], depth + 1)
        right = self._build(idx[~mask], depth + 1)
        self.children_left[node] = left
        self.children_right[node] = right
        return node

    def predict(self, x):
        q = _rows(x)
        out = np.empty((q.shape[0], self._k))
        stack = [(0, np.arange(q.shape[0]))]
        while stack:
            node, rows = stack.pop()
            if rows.shape[0] == 0:
                continue
            f = self.features[node]
            if f < 0:
                out[rows] = self.values[node]
                continue
            mask = q[rows, f] <= self.thresholds[node]
            stack.append((self.children_left[node], rows[mask]))
            stack.append((self.children_right[node], rows[~mask]))
        return out

    @property
    def n_nodes(self):
        return len(self.features)


def fit_tree(x, y, max_depth=None, min_samples_leaf=1, splitter="best", seed=0):
    return RegressionTree(max_depth, min_samples_leaf, splitter, seed=seed).fit(x, y)


def _mean_combine(members, weights, x):
    preds = [m.predict(x) for m in members]
    if weights is None:
        acc = preds[0].copy()
        for p in preds[1:]:
            acc += p
        return acc / len(preds)
    acc = weights[0] * preds[0]
    for wgt, p in zip(weights[1:], preds[1:]):
        acc += wgt * p
    return acc / float(np.sum(weights))


class RandomForestEstimator:
    """Mean-combined trees on bootstrap resamples, or (split_source
    "kmeans") one tree per sample cluster with undersized clusters merged
    into their nearest neighbor."""

    native_multioutput = True

    def __init__(self, n_trees=100, max_depth=None, min_samples_leaf=1,
                 bootstrap=True, splitter="best", feature_fraction=1.0,
                 split_source="bootstrap", n_clusters=None, seed=0):
        if n_trees < 1:
            raise ParameterError("n_trees must be >= 1")
        if split_source not in ("bootstrap", "kmeans"):
            raise ParameterError(f"unknown split_source {split_source!r}")
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.bootstrap = bootstrap
        self.splitter = splitter
        self.feature_fraction = feature_fraction
        self.split_source = split_source
        self.n_clusters = n_clusters
        self.seed = seed

    def _make_tree(self, member_seed):
        return RegressionTree(
            self.max_depth, self.min_samples_leaf, self.splitter,
            self.feature_fraction, seed=member_seed,
        )

    def fit(self, x, y, rng=None):
        x = _rows(x)
        y2 = _as_multi(y)
        n = x.shape[0]
        gram = y2 @ y2.T if (self.splitter == "best" and y2.shape[1] > 1) else None
        self.members_ = []
        if self.split_source == "kmeans":
            from .learners_core import kmeans

            k = self.n_clusters if self.n_clusters is not None else self.n_trees
            k = min(k, n)
            labels, centers = kmeans(x, k, seed=derive_seed(self.seed, 0xC1))
            labels = self._merge_small_clusters(labels, centers)
            for c in np.unique(labels):
                idx = np.flatnonzero(labels == c).astype(np.intp)
                tree = self._make_tree(derive_seed(self.seed, int(c)))
                tree.fit(x, y2, gram=gram, root_indices=idx)
                self.members_.append(tree)
        else:
            for m in range(self.n_trees):
                mrng = np.random.default_rng([self.seed, m])
                if self.bootstrap:
                    idx = np.sort(mrng.integers(0, n, size=n)).astype(np.intp)
                else:
                    idx = np.arange(n, dtype=np.intp)
                tree = self._make_tree(derive_seed(self.seed, m, 1))
                tree.fit(x, y2, gram=gram, root_indices=idx)
                self.members_.append(tree)
        return self

    def _merge_small_clusters(self, labels, centers):
        min_size = max(self.min_samples_leaf, 2)
        sizes = np.bincount(labels, minlength=centers.shape[0])
        big = [c for c in range(centers.shape[0]) if sizes[c] >= min_size]
        if not big:
            return np.zeros_like(labels)
        for c in range(centers.shape[0]):
            if sizes[c] < min_size and sizes[c] > 0 and c not in big:
                dists = [(float(((centers[c] - centers[b]) ** 2).sum()), b) for b in big]
                _, target = min(dists)
                labels = np.where(labels == c, target, labels)
        return labels

    def predict(self, x):
        return _mean_combine(self.members_, None, _rows(x))


class ExtraTreesEstimator(RandomForestEstimator):
    """Forest of random-threshold trees on the full sample (no bootstrap)."""

    def __init__(self, n_trees=100, max_depth=None, min_samples_leaf=1,
                 feature_fraction=1.0, seed=0):
        super().__init__(
            n_trees=n_trees, max_depth=max_depth, min_samples_leaf=min_samples_leaf,
            bootstrap=False, splitter="random", feature_fraction=feature_fraction,
            seed=seed,
        )


class BaggingEstimator:
    """Bootstrap-resampled copies of an arbitrary base learner, mean-combined."""

    native_multioutput = True

    def __init__(self, base_factory, n_estimators=10, sample_fraction=1.0,
                 bootstrap=True, seed=0):
        if n_estimators < 1:
            raise ParameterError("n_estimators must be >= 1")
        if not 0.0 < sample_fraction <= 1.0:
            raise ParameterError("sample_fraction must lie in (0, 1]")
        self.base_factory = base_factory
        self.n_estimators = n_estimators
        self.sample_fraction = sample_fraction
        self.bootstrap = bootstrap
        self.seed = seed

    def fit(self, x, y, rng=None):
        x = _rows(x)
        y2 = _as_multi(y)
        n = x.shape[0]
        size = max(1, int(round(self.sample_fraction * n)))
        self.members_ = []
        for m in range(self.n_estimators):
            if not self.bootstrap and size == n:
                idx = np.arange(n)
            else:
                mrng = np.random.default_rng([self.seed, m])
                idx = np.sort(mrng.choice(n, size=size, replace=self.bootstrap))
            member = self.base_factory(derive_seed(self.seed, m, 2))
            member.fit(x[idx], y2[idx])
            self.members_.append(member)
        return self

    def predict(self, x):
        return _mean_combine(self.members_, None, _rows(x))


def weighted_median(preds: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Weighted median over axis 0: smallest value whose cumulative weight
    reaches half the total. preds is (members, n, K)."""
    order = np.argsort(preds, axis=0, kind="stable")
    wcum = np.cumsum(weights[order], axis=0)
    half = 0.5 * float(weights.sum())
    pick = np.argmax(wcum >= half, axis=0)
    sorted_preds = np.take_along_axis(preds, order, axis=0)
    return np.take_along_axis(sorted_preds, pick[None], axis=0)[0]


class AdaBoostR2Estimator:
    """Drucker-style boosting: weighted resampling, linear loss
    normalization, member weight ln(1/beta), weighted-median prediction.

    A round with average loss >= 0.5 stops boosting (keeping prior
    members; the first member is always kept); a perfect round stops with
    that member dominating.
    """

    native_multioutput = True

    def __init__(self, base_factory, n_estimators=50, seed=0):
        if n_estimators < 1:
            raise ParameterError("n_estimators must be >= 1")
        self.base_factory = base_factory
        self.n_estimators = n_estimators
        self.seed = seed

    def fit(self, x, y, rng=None):
        x = _rows(x)
        y2 = _as_multi(y)
        n = x.shape[0]
        w = np.full(n, 1.0 / n)
        self.members_ = []
        self.member_weights_ = []
        for m in range(self.n_estimators):
            mrng = np.random.default_rng([self.seed, m])
            idx = np.sort(mrng.choice(n, size=n, replace=True, p=w))
            member = self.base_factory(derive_seed(self.seed, m, 3))
            member.fit(x[idx], y2[idx])
            pred = member.predict(x)
            err = np.abs(pred - y2).mean(axis=1)
            emax = float(err.max())
            if emax <= 0.0:
                self.members_.append(member)
                self.member_weights_.append(BIG_MEMBER_WEIGHT)
                break
            loss = err / emax
            lbar = float(w @ loss)
            if lbar >= 0.5:
                if not self.members_:
                    self.members_.append(member)
                    self.member_weights_.append(1.0)
                break
            beta = lbar / (1.0 - lbar)
            self.members_.append(member)
            self.member_weights_.append(float(np.log(1.0 / beta)))
            w = w * beta ** (1.0 - loss)
            w = w / w.sum()
        self.member_weights_ = np.asarray(self.member_weights_)
        return self

    def predict(self, x):
        q = _rows(x)
        preds = np.stack([m.predict(q) for m in self.members_], axis=0)
        return weighted_median(preds, self.member_weights_)


class GradientBoostingEstimator:
    """Squared-loss boosting from the mean prediction.

    "classic" fits each tree to the current residuals with plain mean
    leaves; "second_order" shrinks leaf values to sum/(count + reg_lambda)
    (gradient over hessian-plus-regularizer for squared loss), standing in
    for the regularized histogram boosters.
    """

    native_multioutput = True

    def __init__(self, n_estimators=100, learning_rate=0.1, max_depth=3,
                 min_samples_leaf=1, variant="classic", reg_lambda=1.0,
                 subsample=1.0, feature_fraction=1.0, seed=0):
        if variant not in ("classic", "second_order"):
            raise ParameterError(f"unknown variant {variant!r}")
        if not 0.0 < subsample <= 1.0:
            raise ParameterError("subsample must lie in (0, 1]")
        if learning_rate <= 0:
            raise ParameterError("learning_rate must be > 0")
        self.n_estimators = n_estimators
        self.learning_rate = learning_rate
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.variant = variant
        self.reg_lambda = reg_lambda
        self.subsample = subsample
        self.feature_fraction = feature_fraction
        self.seed = seed

    def fit(self, x, y, rng=None):
        x = _rows(x)
        y2 = _as_multi(y)
        n = x.shape[0]
        self.f0_ = y2.mean(axis=0)
        self.trees_ = []
        current = np.tile(self.f0_, (n, 1))
        shrink = self.reg_lambda if self.variant == "second_order" else 0.0
        size = max(1, int(round(self.subsample * n)))
        for m in range(self.n_estimators):
            resid = y2 - current
            tree = RegressionTree(
                self.max_depth, self.min_samples_leaf, "best",
                self.feature_fraction, leaf_shrink=shrink,
                seed=derive_seed(self.seed, m, 4),
            )
            if size < n:
                mrng = np.random.default_rng([self.seed, m])
                idx = np.sort(mrng.choice(n, size=size, replace=False)).astype(np.intp)
                tree.fit(x, resid, root_indices=idx)
            else:
                tree.fit(x, resid)
            current = current + self.learning_rate * tree.predict(x)
            self.trees_.append(tree)
        return self

    def staged_training_loss(self, x, y):
        """Mean squared training loss after each stage (diagnostics)."""
        x = _rows(x)
        y2 = _as_multi(y)
        current = np.tile(self.f0_, (x.shape[0], 1))
        losses = [float(((y2 - current) ** 2).mean())]
        for tree in self.trees_:
            current = current + self.learning_rate * tree.predict(x)
            losses.append(float(((y2 - current) ** 2).mean()))
        return losses

    def predict(self, x):
        q = _rows(x)
        out = np.tile(self.f0_, (q.shape[0], 1))
        for tree in self.trees_:
            out += self.learning_rate * tree.predict(q)
        return out


class VotingEstimator:
    """Weighted arithmetic mean of independently fitted members."""

    native_multioutput = True

    def __init__(self, member_factories, weights=None, seed=0):
        if not member_factories:
            raise ParameterError("voting needs at least one member")
        if weights is not None:
            weights = np.asarray(weights, dtype=float)
            if weights.shape[0] != len(member_factories) or np.any(weights < 0):
                raise ParameterError("weights must be nonnegative, one per member")
            total = float(weights.sum())
            if total <= 0:
                raise ParameterError("weights must not all be zero")
            weights = weights / total
        self.member_factories = member_factories
        self.weights = weights
        self.seed = seed

    def fit(self, x, y, rng=None):
        x = _rows(x)
        y2 = _as_multi(y)
        self.members_ = []
        for i, factory in enumerate(self.member_factories):
            member = factory(derive_seed(self.seed, i, 5))
            member.fit(x, y2)
            self.members_.append(member)
        return self

    def predict(self, x):
        return _mean_combine(self.members_, self.weights, _rows(x))


def voting_predict(members, query, weights=None):
    """Weighted mean of already-fitted member predictions."""
    if not members:
        raise ParameterError("voting needs at least one member")
    if weights is not None:
        weights = np.asarray(weights, dtype=float)
    return _mean_combine(members, weights, _rows(query))


def fit_random_forest(x, y, n_trees=100, max_depth=None, bootstrap=True,
                      splitter="best", split_source="bootstrap", n_clusters=None,
                      feature_fraction=1.0, min_samples_leaf=1, seed=0):
    est = RandomForestEstimator(
        n_trees=n_trees, max_depth=max_depth, min_samples_leaf=min_samples_leaf,
        bootstrap=bootstrap, splitter=splitter, feature_fraction=feature_fraction,
        split_source=split_source, n_clusters=n_clusters, seed=seed,
    )
    return est.fit(x, y)


def fit_bagging(x, y, base_factory, n_estimators=10, sample_fraction=1.0,
                bootstrap=True, seed=0):
    est = BaggingEstimator(base_factory, n_estimators, sample_fraction, bootstrap, seed)
    return est.fit(x, y)


def fit_adaboost_r2(x, y, base_factory, n_estimators=50, seed=0):
    return AdaBoostR2Estimator(base_factory, n_estimators, seed).fit(x, y)


def fit_gradient_boosting(x, y, n_estimators=100, learning_rate=0.1, max_depth=3,
                          variant="classic", reg_lambda=1.0, subsample=1.0, seed=0):
    est = GradientBoostingEstimator(
        n_estimators=n_estimators, learning_rate=learning_rate, max_depth=max_depth,
        variant=variant, reg_lambda=reg_lambda, subsample=subsample, seed=seed,
    )
    return est.fit(x, y)
