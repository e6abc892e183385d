import numpy as np
import pytest

from connecto.errors import ParameterError
from connecto.learners_core import PLSEstimator, fit_pls1
from connecto.learners_ensemble import (
    AdaBoostR2Estimator,
    BaggingEstimator,
    ExtraTreesEstimator,
    GradientBoostingEstimator,
    RandomForestEstimator,
    RegressionTree,
    VotingEstimator,
    fit_tree,
    voting_predict,
    weighted_median,
)


def _tree_factory(**params):
    def make(seed):
        return RegressionTree(seed=seed, **params)

    return make


def _pls_factory(n_components=3):
    def make(seed):
        return PLSEstimator(n_components=n_components)

    return make


class TestRegressionTree:
    def test_distinct_inputs_interpolate(self, rng):
        x = rng.normal(size=(25, 1))
        y = rng.normal(size=25)
        t = fit_tree(x, y)
        assert np.max(np.abs(t.predict(x)[:, 0] - y)) <= 1e-12

    def test_depth_zero_single_leaf(self, rng):
        x = rng.normal(size=(20, 3))
        y = rng.normal(size=(20, 2))
        t = fit_tree(x, y, max_depth=0)
        assert t.n_nodes == 1
        assert np.allclose(t.predict(x), y.mean(axis=0), atol=1e-12)

    def test_step_function_root_split(self, rng):
        x = rng.random((40, 3))
        y = (x[:, 0] > 0.5).astype(float)
        t = fit_tree(x, y)
        assert t.features[0] == 0
        left_max = x[x[:, 0] <= 0.5, 0].max()
        right_min = x[x[:, 0] > 0.5, 0].min()
        assert left_max <= t.thresholds[0] < right_min

    def test_piecewise_constant_within_leaf(self, rng):
        x = rng.random((30, 2))
        y = rng.normal(size=30)
        t = fit_tree(x, y, max_depth=3)
        q = x[7].copy()
        base = t.predict(q[None, :])[0, 0]
        for _ in range(5):
            jitter = q + rng.normal(0, 1e-9, size=2)
            assert t.predict(jitter[None, :])[0, 0] == base

    def test_multioutput_leaf_means(self, rng):
        x = rng.random((30, 2))
        y = rng.normal(size=(30, 4))
        t = fit_tree(x, y, max_depth=1)
        mask = x[:, t.features[0]] <= t.thresholds[0]
        left = t.children_left[0]
        assert np.allclose(t.values[left], y[mask].mean(axis=0), atol=1e-12)

    def test_min_samples_leaf_respected(self, rng):
        x = rng.random((30, 2))
        y = rng.normal(size=30)
        t = fit_tree(x, y, min_samples_leaf=5)
        # count training rows routed to each leaf
        counts = {}
        assign = np.zeros(30, dtype=int)
        for i in range(30):
            node = 0
            while t.features[node] >= 0:
                if x[i, t.features[node]] <= t.thresholds[node]:
                    node = t.children_left[node]
                else:
                    node = t.children_right[node]
            counts[node] = counts.get(node, 0) + 1
        assert min(counts.values()) >= 5


class TestRandomForest:
    def test_degenerate_forest_equals_tree(self, rng):
        x = rng.random((25, 4))
        y = rng.normal(size=(25, 2))
        forest = RandomForestEstimator(
            n_trees=1, bootstrap=False, feature_fraction=1.0, seed=5
        ).fit(x, y)
        tree = fit_tree(x, y)
        q = rng.random((10, 4))
        assert np.array_equal(forest.predict(q), tree.predict(q))

    def test_prediction_is_member_mean(self, rng):
        x = rng.random((30, 3))
        y = rng.normal(size=(30, 2))
        forest = RandomForestEstimator(n_trees=7, seed=1).fit(x, y)
        q = rng.random((5, 3))
        stack = np.stack([m.predict(q) for m in forest.members_])
        assert np.allclose(forest.predict(q), stack.mean(axis=0), atol=1e-12)

    def test_variance_reduction_over_single_tree(self):
        wins = 0
        for seed in range(20):
            rng = np.random.default_rng(seed)
            x = rng.random((120, 5))
            f = np.sin(3 * x[:, 0]) + x[:, 1] ** 2
            y = f + 0.3 * rng.normal(size=120)
            xt = rng.random((80, 5))
            ft = np.sin(3 * xt[:, 0]) + xt[:, 1] ** 2
            forest = RandomForestEstimator(n_trees=30, seed=seed).fit(x, y)
            tree = fit_tree(x, y)
            e_forest = np.abs(forest.predict(xt)[:, 0] - ft).mean()
            e_tree = np.abs(tree.predict(xt)[:, 0] - ft).mean()
            if e_forest <= e_tree:
                wins += 1
        assert wins >= 16

    def test_kmeans_split_source(self, rng):
        x = np.vstack([
            rng.normal(0, 0.3, size=(20, 3)),
            rng.normal(5, 0.3, size=(20, 3)),
        ])
        y = rng.normal(size=(40, 2))
        forest = RandomForestEstimator(
            split_source="kmeans", n_clusters=2, n_trees=2, seed=3
        ).fit(x, y)
        assert len(forest.members_) == 2
        assert np.all(np.isfinite(forest.predict(x)))

    def test_seed_determinism(self, rng):
        x = rng.random((40, 4))
        y = rng.normal(size=(40, 2))
        q = rng.random((9, 4))
        a = RandomForestEstimator(n_trees=10, seed=9).fit(x, y).predict(q)
        b = RandomForestEstimator(n_trees=10, seed=9).fit(x, y).predict(q)
        c = RandomForestEstimator(n_trees=10, seed=10).fit(x, y).predict(q)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_extra_trees_are_random_split(self, rng):
        x = rng.random((40, 3))
        y = rng.normal(size=40)
        et = ExtraTreesEstimator(n_trees=5, seed=2).fit(x, y)
        assert len(et.members_) == 5
        assert np.all(np.isfinite(et.predict(x)))


class TestBagging:
    def test_identity_sample_equals_base(self, rng):
        x = rng.normal(size=(30, 5))
        y = rng.normal(size=(30, 2))
        bag = BaggingEstimator(
            _pls_factory(3), n_estimators=1, sample_fraction=1.0, bootstrap=False,
            seed=0,
        ).fit(x, y)
        base = PLSEstimator(n_components=3).fit(x, y)
        assert np.allclose(bag.predict(x), base.predict(x), atol=1e-12)

    def test_mean_combiner(self, rng):
        x = rng.normal(size=(25, 3))
        y = rng.normal(size=(25, 1))
        bag = BaggingEstimator(_tree_factory(max_depth=2), n_estimators=5, seed=1).fit(x, y)
        q = rng.normal(size=(6, 3))
        stack = np.stack([m.predict(q) for m in bag.members_])
        assert np.allclose(bag.predict(q), stack.mean(axis=0), atol=1e-12)

    def test_bagged_pls_reduces_seed_variance(self):
        # prediction spread across bootstrap seeds shrinks when averaging
        rng = np.random.default_rng(0)
        x = rng.normal(size=(60, 8))
        y = x @ rng.normal(size=8) + 0.5 * rng.normal(size=60)
        q = rng.normal(size=(1, 8))
        singles, bags = [], []
        for seed in range(12):
            srng = np.random.default_rng([seed, 77])
            idx = np.sort(srng.choice(60, 60, replace=True))
            singles.append(PLSEstimator(3).fit(x[idx], y[idx]).predict(q)[0, 0])
            bag = BaggingEstimator(_pls_factory(3), n_estimators=8, seed=seed)
            bags.append(bag.fit(x, y).predict(q)[0, 0])
        assert np.var(bags) < np.var(singles)


class TestAdaBoost:
    def test_single_round_equals_base(self, rng):
        x = rng.random((30, 3))
        y = rng.normal(size=(30, 1))
        boost = AdaBoostR2Estimator(_tree_factory(max_depth=2), n_estimators=1, seed=4)
        boost.fit(x, y)
        member = boost.members_[0]
        q = rng.random((8, 3))
        assert np.array_equal(boost.predict(q), member.predict(q))

    def test_perfect_base_stops_after_one_round(self, rng):
        # two well-separated clusters: any bootstrap learns the exact step,
        # so the first member has zero loss on the full training set
        x = np.vstack([np.full((12, 2), 0.1), np.full((13, 2), 0.9)])
        x[:, 1] = rng.random(25)
        y = (x[:, 0] > 0.5).astype(float)
        boost = AdaBoostR2Estimator(_tree_factory(), n_estimators=10, seed=0).fit(x, y)
        assert len(boost.members_) == 1

    def test_weighted_median_matches_bruteforce(self, rng):
        preds = rng.normal(size=(7, 20, 3))
        weights = rng.random(7) + 0.1
        got = weighted_median(preds, weights)
        half = 0.5 * weights.sum()
        for i in range(20):
            for k in range(3):
                order = np.argsort(preds[:, i, k], kind="stable")
                acc = 0.0
                for m in order:
                    acc += weights[m]
                    if acc >= half:
                        assert got[i, k] == preds[m, i, k]
                        break

    def test_later_rounds_reweight_hard_samples(self, rng):
        x = rng.random((50, 2))
        y = np.sin(6 * x[:, 0])
        boost = AdaBoostR2Estimator(
            _tree_factory(max_depth=2), n_estimators=8, seed=1
        ).fit(x, y)
        assert len(boost.members_) >= 2
        assert np.all(np.isfinite(boost.predict(x)))


class TestGradientBoosting:
    def test_zero_stages_predicts_mean(self, rng):
        x = rng.random((20, 3))
        y = rng.normal(size=(20, 2))
        gbm = GradientBoostingEstimator(n_estimators=0, seed=0).fit(x, y)
        assert np.allclose(gbm.predict(x), y.mean(axis=0), atol=1e-12)

    def test_interpolates_with_unit_rate_deep_trees(self, rng):
        x = rng.normal(size=(25, 2))
        y = rng.normal(size=25)
        gbm = GradientBoostingEstimator(
            n_estimators=30, learning_rate=1.0, max_depth=None, seed=0
        ).fit(x, y)
        assert np.abs(gbm.predict(x)[:, 0] - y).mean() < 1e-6

    def test_training_loss_nonincreasing(self, rng):
        x = rng.random((40, 4))
        y = rng.normal(size=(40, 2))
        gbm = GradientBoostingEstimator(n_estimators=25, seed=2).fit(x, y)
        losses = gbm.staged_training_loss(x, y)
        assert all(a >= b - 1e-12 for a, b in zip(losses, losses[1:]))

    def test_second_order_leaf_shrinkage(self, rng):
        x = rng.random((20, 2))
        y = rng.normal(size=(20, 1))
        lam = 5.0
        gbm = GradientBoostingEstimator(
            n_estimators=1, learning_rate=1.0, max_depth=0,
            variant="second_order", reg_lambda=lam, seed=0,
        ).fit(x, y)
        resid = y - y.mean(axis=0)
        expected = y.mean(axis=0) + resid.sum(axis=0) / (20 + lam)
        assert np.allclose(gbm.predict(x), expected, atol=1e-12)

    def test_subsample_determinism(self, rng):
        x = rng.random((30, 3))
        y = rng.normal(size=30)
        a = GradientBoostingEstimator(n_estimators=10, subsample=0.7, seed=3).fit(x, y)
        b = GradientBoostingEstimator(n_estimators=10, subsample=0.7, seed=3).fit(x, y)
        assert np.array_equal(a.predict(x), b.predict(x))


class TestVoting:
    def test_identical_members_equal_single(self, rng):
        x = rng.random((20, 3))
        y = rng.normal(size=(20, 1))
        vote = VotingEstimator([_tree_factory(max_depth=2)] * 1, seed=0).fit(x, y)
        assert np.array_equal(vote.predict(x), vote.members_[0].predict(x))

    def test_fixed_weights(self):
        class Const:
            def __init__(self, v):
                self.v = v

            def fit(self, x, y, rng=None):
                return self

            def predict(self, x):
                return np.full((x.shape[0], 1), self.v)

        members = [Const(0.0), Const(1.0)]
        out = voting_predict(members, np.zeros((4, 2)), weights=[0.25, 0.75])
        assert np.allclose(out, 0.75, atol=1e-15)

    def test_vote_is_direct_mean(self, rng):
        x = rng.random((25, 4))
        y = rng.normal(size=(25, 2))
        vote = VotingEstimator(
            [_tree_factory(max_depth=2), _tree_factory(max_depth=3), _pls_factory(2)],
            seed=1,
        ).fit(x, y)
        q = rng.random((6, 4))
        stack = np.stack([m.predict(q) for m in vote.members_])
        assert np.max(np.abs(vote.predict(q) - stack.mean(axis=0))) <= 1e-12

    def test_combined_prediction_within_member_range(self, rng):
        x = rng.random((30, 3))
        y = rng.normal(size=(30, 2))
        vote = VotingEstimator(
            [_tree_factory(max_depth=1), _tree_factory(max_depth=4), _pls_factory(2)],
            seed=2,
        ).fit(x, y)
        q = rng.random((10, 3))
        stack = np.stack([m.predict(q) for m in vote.members_])
        out = vote.predict(q)
        assert np.all(out >= stack.min(axis=0) - 1e-12)
        assert np.all(out <= stack.max(axis=0) + 1e-12)

    def test_mean_is_permutation_invariant(self, rng):
        x = rng.random((20, 3))
        y = rng.normal(size=(20, 1))
        q = rng.random((5, 3))
        a = VotingEstimator(
            [_tree_factory(max_depth=1), _pls_factory(2)], seed=0
        ).fit(x, y)
        stack = np.stack([m.predict(q) for m in a.members_])
        fwd = (stack[0] + stack[1]) / 2
        rev = (stack[1] + stack[0]) / 2
        assert np.array_equal(fwd, rev)

    def test_weight_validation(self):
        with pytest.raises(ParameterError):
            VotingEstimator([_tree_factory()], weights=[0.5, 0.5])
        with pytest.raises(ParameterError):
            VotingEstimator([])
