import dataclasses

import numpy as np
import pytest

from connecto.connectome import FeatureTable, LongitudinalDataset, generate_synthetic
from connecto.errors import DataError, ParameterError, ShapeError, StageError
from connecto.learners_core import fit_ols
from connecto.pipeline import (
    FittedPipeline,
    LearnerSpec,
    PipelineConfig,
    StageSpec,
    all_team_ids,
    build_learner,
    config_from_text,
    config_to_text,
    fit_pipeline,
    load_team_config,
)

# stage/learner composition of every bundled team config
EXPECTED_COMPOSITION = {
    1: (("lof",), (), "bayesian_ridge", True),
    2: ((), (), "huber", True),
    3: ((), ("generic_univariate", "pca"), "voting", True),
    4: (("iforest", "scaler"), ("variance_threshold",), "voting", False),
    5: (("zscore_outliers",), (), "random_forest", False),
    6: (("lof", "constant_features"), (), "bagging", False),
    7: (("invsf",), ("select_k_best",), "svr", False),
    8: (("constant_features",), ("select_k_best",), "voting", False),
    9: ((), ("tsvd",), "random_forest", False),
    10: (("iforest", "scaler"), ("pca",), "random_forest", False),
    11: (("iqr",), (), "ols", True),
    12: ((), (), "knn", True),
    13: (("zscore_outliers",), (), "ols", False),
    14: (("iforest", "constant_features"), (), "ridge", False),
    15: (("redundant_features",), (), "voting", False),
    16: (("constant_features", "redundant_features"), (), "adaboost", False),
    17: (
        ("loo_outliers", "scaler", "correlated_features"),
        ("backward_elimination",),
        "ridge",
        False,
    ),
    18: (("add_noise",), (), "extra_trees", True),
    19: (("invsf",), ("select_k_best",), "svr", False),
    20: (("constant_features", "redundant_features"), ("pca",), "svr", False),
}


def _small_dataset(n=40, rois=8, seed=0, drift=0.1, noise=0.02):
    return generate_synthetic(n, rois, drift, noise, seed=seed)


class TestTeamRegistry:
    def test_all_twenty_parse_and_validate(self):
        for team in all_team_ids():
            cfg = load_team_config(team)
            assert cfg.name == f"team-{team:02d}"
            build_learner(cfg.learner, seed=0)  # constructor-level validation

    @pytest.mark.parametrize("team", sorted(EXPECTED_COMPOSITION))
    def test_composition_matches_published_matrix(self, team):
        pre, dim, learner, ffl = EXPECTED_COMPOSITION[team]
        cfg = load_team_config(team)
        assert tuple(s.kind for s in cfg.preprocess) == pre
        if dim is not None:
            assert tuple(s.kind for s in cfg.dimred) == tuple(dim)
        assert cfg.learner.kind == learner
        assert cfg.ffl == ffl

    def test_team2_has_no_preprocessing_or_dimred(self):
        cfg = load_team_config(2)
        assert cfg.preprocess == () and cfg.dimred == ()

    def test_teams_7_and_19_differ_only_in_parameters(self):
        a = load_team_config(7)
        b = load_team_config(19)
        assert tuple(s.kind for s in a.preprocess) == tuple(s.kind for s in b.preprocess)
        assert tuple(s.kind for s in a.dimred) == tuple(s.kind for s in b.dimred)
        assert a.learner.kind == b.learner.kind
        assert a.learner.params != b.learner.params

    def test_team3_nine_voting_members(self):
        cfg = load_team_config(3)
        kinds = [m.kind for m in cfg.learner.members]
        assert len(kinds) == 9
        assert set(kinds) == {
            "ridge", "lgbm_like", "knn", "elastic_net", "gradient_boosting",
            "adaboost", "lasso", "omp", "xgb_like",
        }
        assert cfg.target_dimred is not None and cfg.target_dimred.params["k"] == 21

    def test_unknown_team_rejected(self):
        with pytest.raises(ParameterError):
            load_team_config(21)


class TestConfigFormat:
    def test_roundtrip_all_teams(self):
        for team in all_team_ids():
            cfg = load_team_config(team)
            assert config_from_text(config_to_text(cfg)) == cfg

    def test_roundtrip_nested_learner(self):
        cfg = PipelineConfig(
            name="nested",
            seed=5,
            ffl=True,
            preprocess=(StageSpec("scaler", {"mode": "maxabs"}),),
            dimred=(StageSpec("pca", {"k": 4}),),
            learner=LearnerSpec(
                "voting",
                {"weights": [0.5, 0.5]},
                members=(
                    LearnerSpec("ridge", {"lam": 2.0}),
                    LearnerSpec(
                        "bagging",
                        {"n_estimators": 3},
                        base=LearnerSpec("tree", {"max_depth": 2}),
                    ),
                ),
            ),
            postprocess=("clip01",),
        )
        assert config_from_text(config_to_text(cfg)) == cfg

    def test_unknown_stage_rejected(self):
        with pytest.raises(ParameterError):
            PipelineConfig(
                name="x", learner=LearnerSpec("ols"),
                preprocess=(StageSpec("nope", {}),),
            )

    def test_duplicate_voting_members_rejected(self):
        with pytest.raises(ParameterError):
            PipelineConfig(
                name="x",
                learner=LearnerSpec(
                    "voting", {},
                    members=(LearnerSpec("ridge"), LearnerSpec("ridge")),
                ),
            )

    def test_comments_and_blank_lines_ignored(self):
        text = "# heading\nname = t\nseed = 1\nffl = false\n\n[learner:ols]\n"
        cfg = config_from_text(text)
        assert cfg.name == "t" and cfg.learner.kind == "ols"


class TestFitPredict:
    def test_ffl_ols_equals_joint_multioutput(self, rng):
        x = rng.normal(size=(40, 20))
        y = rng.normal(size=(40, 20))
        joint = np.column_stack(
            [fit_ols(x, y[:, k]).predict(x) for k in range(20)]
        )
        ids = tuple(f"s{i}" for i in range(40))
        ds = LongitudinalDataset(FeatureTable(ids, x), FeatureTable(ids, y))
        cfg = PipelineConfig(name="ffl-ols", learner=LearnerSpec("ols"), ffl=True)
        fitted = fit_pipeline(cfg, ds)
        assert np.max(np.abs(fitted.predict_rows(x) - joint)) <= 1e-9

    def test_identity_map_is_learnable(self):
        ds = generate_synthetic(40, 6, drift=0.0, noise_sigma=0.0, seed=1)
        fitted = fit_pipeline(load_team_config(11), ds)
        pred = fitted.predict_rows(ds.t0.rows)
        assert np.abs(pred - ds.t1.rows).mean() < 1e-8

    def test_predict_is_stable_across_calls(self):
        ds = _small_dataset()
        fitted = fit_pipeline(load_team_config(13), ds)
        test = _small_dataset(10, seed=5)
        a = fitted.predict_rows(test.t0.rows)
        b = fitted.predict_rows(test.t0.rows)
        assert np.array_equal(a, b)

    def test_sigmoid_pipeline_outputs_in_unit_interval(self):
        ds = _small_dataset(45, rois=7)
        cfg = load_team_config(7)
        cfg = dataclasses.replace(
            cfg, dimred=(StageSpec("select_k_best", {"k": 10}),)
        )
        fitted = fit_pipeline(cfg, ds)
        pred = fitted.predict_rows(_small_dataset(12, rois=7, seed=9).t0.rows)
        assert np.all((pred > 0.0) & (pred < 1.0))

    def test_row_permutation_permutes_predictions(self, rng):
        ds = _small_dataset()
        fitted = fit_pipeline(load_team_config(13), ds)
        test = _small_dataset(12, seed=3).t0.rows
        perm = rng.permutation(12)
        assert np.array_equal(
            fitted.predict_rows(test)[perm], fitted.predict_rows(test[perm])
        )

    def test_input_reduction_keeps_output_width(self, rng):
        ds = _small_dataset(30, rois=8)
        cfg = PipelineConfig(
            name="vt",
            learner=LearnerSpec("ridge", {"lam": 1.0}),
            dimred=(StageSpec("variance_threshold", {"drop_lowest": 10}),),
        )
        fitted = fit_pipeline(cfg, ds)
        pred = fitted.predict_rows(ds.t0.rows)
        assert pred.shape[1] == ds.t1.d

    def test_target_reduction_keeps_output_width(self):
        ds = _small_dataset(30, rois=8)
        cfg = PipelineConfig(
            name="tproj",
            learner=LearnerSpec("ridge", {"lam": 1.0}),
            target_dimred=StageSpec("pca", {"k": 5}),
        )
        fitted = fit_pipeline(cfg, ds)
        assert fitted.predict_rows(ds.t0.rows).shape[1] == ds.t1.d

    def test_ffl_per_column_fits_are_independent(self, rng):
        # a column refit alone (same column stream) reproduces its slice
        from connecto.pipeline import PerColumnRegressor

        x = rng.random((25, 6))
        y = rng.random((25, 4))
        spec = LearnerSpec("extra_trees", {"n_trees": 3, "max_depth": 3})
        full = PerColumnRegressor(spec, seed=7).fit(x, y)
        q = rng.random((9, 6))
        pa = full.predict(q)
        assert pa.shape == (9, 4)
        for k in range(4):
            alone = PerColumnRegressor(spec, seed=7)
            alone.models_ = [full.models_[k]]
            assert np.array_equal(alone.predict(q)[:, 0], pa[:, k])
        # fitting any one column never touches another column's stream
        refit = PerColumnRegressor(spec, seed=7).fit(x, y[:, : 2])
        assert np.array_equal(refit.predict(q), pa[:, :2])

    def test_unlabeled_dataset_rejected(self):
        ds = LongitudinalDataset(t0=_small_dataset(10).t0)
        with pytest.raises(DataError):
            fit_pipeline(load_team_config(13), ds)

    def test_stage_error_names_stage(self):
        ds = _small_dataset(12, rois=6)  # too few rows for lof k=20
        with pytest.raises(StageError, match="preprocess:lof"):
            fit_pipeline(load_team_config(1), ds)

    def test_predict_shape_mismatch(self):
        ds = _small_dataset(30, rois=8)
        fitted = fit_pipeline(load_team_config(13), ds)
        with pytest.raises(ShapeError):
            fitted.predict_rows(np.zeros((3, 7)))

    def test_elimination_shrinks_rows_for_both_tables(self, rng):
        x = rng.random((30, 10))
        x[5] += 100.0  # gross outlier row
        y = rng.random((30, 10))
        ids = tuple(f"s{i}" for i in range(30))
        cfg = PipelineConfig(
            name="z",
            learner=LearnerSpec("ols"),
            preprocess=(StageSpec("zscore_outliers", {"k": 3.0}),),
        )
        fitted = fit_pipeline(cfg, LongitudinalDataset(FeatureTable(ids, x), FeatureTable(ids, y)))
        assert fitted.n_train_rows == 29


class TestDeterminismAndSerialization:
    def test_stochastic_pipeline_reproducible(self):
        ds = _small_dataset(35, rois=8)
        test = _small_dataset(10, rois=8, seed=4).t0.rows
        a = fit_pipeline(load_team_config(5), ds).predict_rows(test)
        b = fit_pipeline(load_team_config(5), ds).predict_rows(test)
        assert np.array_equal(a, b)

    def test_seed_change_changes_stochastic_fit(self):
        ds = _small_dataset(35, rois=8)
        test = _small_dataset(10, rois=8, seed=4).t0.rows
        cfg = load_team_config(5)
        a = fit_pipeline(cfg, ds).predict_rows(test)
        b = fit_pipeline(dataclasses.replace(cfg, seed=999), ds).predict_rows(test)
        assert not np.array_equal(a, b)

    def test_saved_pipeline_predicts_identically(self, tmp_path):
        ds = _small_dataset(30, rois=7)
        fitted = fit_pipeline(load_team_config(14), ds)
        p = tmp_path / "model.cpipe"
        fitted.save(p)
        back = FittedPipeline.load(p)
        test = _small_dataset(8, rois=7, seed=2).t0.rows
        assert np.array_equal(fitted.predict_rows(test), back.predict_rows(test))

    def test_load_rejects_foreign_files(self, tmp_path):
        p = tmp_path / "x.bin"
        p.write_bytes(b"not a pipeline")
        with pytest.raises(DataError):
            FittedPipeline.load(p)

    def test_config_refit_equivalence(self):
        # serializing the config and re-fitting gives an identical pipeline
        ds = _small_dataset(35, rois=8)
        cfg = load_team_config(5)
        text = config_to_text(cfg)
        test = _small_dataset(10, rois=8, seed=4).t0.rows
        a = fit_pipeline(cfg, ds).predict_rows(test)
        b = fit_pipeline(config_from_text(text), ds).predict_rows(test)
        assert np.array_equal(a, b)
