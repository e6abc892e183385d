"""Pipeline composition: declarative configs, the fit/predict engine, and
the registry of the 20 bundled team configurations.

A config lists preprocessing stages, dimensionality-reduction stages, an
optional target-side projection, and a learner (possibly an ensemble with
nested bases). Sample-elimination stages drop t0 rows together with their
t1 targets at fit time; column transforms are recorded and reapplied at
predict time, never refit. Input-side reduction never shrinks the output:
predictions always come back in the full original target width.

Config file format (documented in docs/config_format.md): ``key = value``
lines plus ``[section]`` headers, one section per stage in application
order. Learner parameters live under ``[learner:<kind>]``; ensemble
members under ``[learner:<path>/<member>]`` and bases under
``[learner:<path>/base]``.
"""

from __future__ import annotations

import importlib.resources
import pickle
from dataclasses import dataclass, field

import numpy as np

from . import dimred, learners_core, learners_ensemble, preprocess
from ._stats import derive_seed, kfold_indices
from .connectome import FeatureTable, LongitudinalDataset
from .errors import DataError, ParameterError, ShapeError, StageError

PREPROCESS_KINDS = (
    "iqr", "zscore_outliers", "loo_outliers", "lof", "iforest",
    "constant_features", "redundant_features", "correlated_features",
    "scaler", "invsf", "add_noise",
)
DIMRED_KINDS = (
    "pca", "tsvd", "variance_threshold", "select_k_best",
    "generic_univariate", "backward_elimination",
)
TARGET_DIMRED_KINDS = ("pca", "tsvd")
POSTPROCESS_KINDS = ("sigmoid_back", "clip01")
LEARNER_KINDS = (
    "ols", "ridge", "lasso", "elastic_net", "omp", "bayesian_ridge", "huber",
    "svr", "knn", "pls", "tree", "random_forest", "extra_trees", "bagging",
    "adaboost", "gradient_boosting", "xgb_like", "lgbm_like", "voting",
)
# ensembles whose per-target fit differs from a joint multi-output fit
STRUCTURE_COUPLED = {
    "tree", "random_forest", "extra_trees", "bagging", "adaboost",
    "gradient_boosting", "xgb_like", "lgbm_like", "voting",
}


@dataclass(frozen=True)
class StageSpec:
    kind: str
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class LearnerSpec:
    kind: str
    params: dict = field(default_factory=dict)
    members: tuple = ()
    base: "LearnerSpec | None" = None


@dataclass(frozen=True)
class PipelineConfig:
    name: str
    learner: LearnerSpec
    preprocess: tuple = ()
    dimred: tuple = ()
    target_dimred: StageSpec | None = None
    ffl: bool = False
    seed: int = 0
    postprocess: tuple = ()

    def __post_init__(self):
        for st in self.preprocess:
            if st.kind not in PREPROCESS_KINDS:
                raise ParameterError(f"unknown preprocess stage {st.kind!r}")
        for st in self.dimred:
            if st.kind not in DIMRED_KINDS:
                raise ParameterError(f"unknown dimred stage {st.kind!r}")
        if self.target_dimred is not None and self.target_dimred.kind not in TARGET_DIMRED_KINDS:
            raise ParameterError(
                f"target_dimred must be one of {TARGET_DIMRED_KINDS}"
            )
        for p in self.postprocess:
            if p not in POSTPROCESS_KINDS:
                raise ParameterError(f"unknown postprocess step {p!r}")
        _check_learner_spec(self.learner)


def _check_learner_spec(spec: LearnerSpec):
    if spec.kind not in LEARNER_KINDS:
        raise ParameterError(f"unknown learner {spec.kind!r}")
    if spec.kind == "voting":
        if not spec.members:
            raise ParameterError("voting needs a members list")
        names = [m.kind for m in spec.members]
        if len(set(names)) != len(names):
            raise ParameterError("voting member kinds must be unique")
        for m in spec.members:
            _check_learner_spec(m)
    elif spec.members:
        raise ParameterError(f"{spec.kind} does not take members")
    if spec.base is not None:
        if spec.kind not in ("bagging", "adaboost"):
            raise ParameterError(f"{spec.kind} does not take a base learner")
        _check_learner_spec(spec.base)


# ---------------------------------------------------------------------------
# config text format


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, (list, tuple)):
        if len(v) == 1:
            return _format_value(v[0]) + ","  # trailing comma keeps it a list
        return ", ".join(_format_value(e) for e in v)
    return str(v)


def _parse_scalar(s: str):
    low = s.lower()
    if low == "true":
        return True
    if low == "false":
        return False
    if low == "none":
        return None
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        pass
    return s


def _parse_value(s: str):
    s = s.strip()
    if "," in s:
        return [_parse_scalar(p.strip()) for p in s.split(",") if p.strip()]
    return _parse_scalar(s)


def _emit_learner_sections(spec: LearnerSpec, path: str, lines: list):
    lines.append(f"[learner:{path}]")
    for k, v in spec.params.items():
        lines.append(f"{k} = {_format_value(v)}")
    if spec.members:
        lines.append(f"members = {', '.join(m.kind for m in spec.members)}")
    if spec.base is not None:
        lines.append(f"base = {spec.base.kind}")
    lines.append("")
    for m in spec.members:
        _emit_learner_sections(m, f"{path}/{m.kind}", lines)
    if spec.base is not None:
        _emit_learner_sections(spec.base, f"{path}/base", lines)


def config_to_text(config: PipelineConfig) -> str:
    lines = [
        f"name = {config.name}",
        f"seed = {config.seed}",
        f"ffl = {_format_value(config.ffl)}",
    ]
    if config.postprocess:
        lines.append(f"postprocess = {', '.join(config.postprocess)}")
    lines.append("")
    for st in config.preprocess:
        lines.append(f"[preprocess:{st.kind}]")
        lines.extend(f"{k} = {_format_value(v)}" for k, v in st.params.items())
        lines.append("")
    for st in config.dimred:
        lines.append(f"[dimred:{st.kind}]")
        lines.extend(f"{k} = {_format_value(v)}" for k, v in st.params.items())
        lines.append("")
    if config.target_dimred is not None:
        st = config.target_dimred
        lines.append(f"[target_dimred:{st.kind}]")
        lines.extend(f"{k} = {_format_value(v)}" for k, v in st.params.items())
        lines.append("")
    _emit_learner_sections(config.learner, config.learner.kind, lines)
    return "\n".join(lines).rstrip("\n") + "\n"


def _build_learner_spec(path: str, sections: dict) -> LearnerSpec:
    params = dict(sections.get(path, {}))
    kind = path.rsplit("/", 1)[-1]
    if kind == "base":
        base_kind = None
        parent = path.rsplit("/", 1)[0]
        base_kind = sections.get(parent, {}).get("base")
        kind = base_kind
    member_names = params.pop("members", None)
    base_name = params.pop("base", None)
    members = ()
    if member_names is not None:
        if isinstance(member_names, str):
            member_names = [member_names]
        members = tuple(
            _build_learner_spec(f"{path}/{m}", sections) for m in member_names
        )
    base = _build_learner_spec(f"{path}/base", sections) if base_name else None
    return LearnerSpec(kind=kind, params=params, members=members, base=base)


def config_from_text(text: str) -> PipelineConfig:
    top: dict = {}
    sections: dict = {}
    current = top
    learner_root = None
    pre_order: list = []
    dim_order: list = []
    target_stage = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            header = line[1:-1].strip()
            if ":" not in header:
                raise ParameterError(f"line {lineno}: section needs a ':<kind>' part")
            group, rest = header.split(":", 1)
            group = group.strip()
            rest = rest.strip()
            if group == "preprocess":
                spec = {"kind": rest, "params": {}}
                pre_order.append(spec)
                current = spec["params"]
            elif group == "dimred":
                spec = {"kind": rest, "params": {}}
                dim_order.append(spec)
                current = spec["params"]
            elif group == "target_dimred":
                target_stage = {"kind": rest, "params": {}}
                current = target_stage["params"]
            elif group == "learner":
                if "/" not in rest and learner_root is None:
                    learner_root = rest
                sections.setdefault(rest, {})
                current = sections[rest]
            else:
                raise ParameterError(f"line {lineno}: unknown section group {group!r}")
            continue
        if "=" not in line:
            raise ParameterError(f"line {lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        current[key.strip()] = _parse_value(value)
    if learner_root is None:
        raise ParameterError("config has no [learner:...] section")
    learner = _build_learner_spec(learner_root, sections)
    post = top.get("postprocess", ())
    if isinstance(post, str):
        post = (post,)
    return PipelineConfig(
        name=str(top.get("name", "unnamed")),
        seed=int(top.get("seed", 0)),
        ffl=bool(top.get("ffl", False)),
        preprocess=tuple(StageSpec(s["kind"], s["params"]) for s in pre_order),
        dimred=tuple(StageSpec(s["kind"], s["params"]) for s in dim_order),
        target_dimred=(
            StageSpec(target_stage["kind"], target_stage["params"])
            if target_stage else None
        ),
        learner=learner,
        postprocess=tuple(post),
    )


def save_config(config: PipelineConfig, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(config_to_text(config))


def load_config(path) -> PipelineConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return config_from_text(fh.read())


# ---------------------------------------------------------------------------
# learner construction


class _LearnerFactory:
    """Picklable factory: seed -> freshly built estimator for a spec."""

    def __init__(self, spec: LearnerSpec):
        self.spec = spec

    def __call__(self, seed: int):
        return build_learner(self.spec, seed)


_DEFAULT_ADABOOST_BASE = LearnerSpec("tree", {"max_depth": 3})


def build_learner(spec: LearnerSpec, seed: int = 0):
    """Instantiate the estimator tree for a learner spec."""
    kind = spec.kind
    p = dict(spec.params)
    core = learners_core
    ens = learners_ensemble
    if kind == "ols":
        return core.OLSEstimator(**p)
    if kind == "ridge":
        return core.RidgeEstimator(**p)
    if kind == "lasso":
        return core.LassoEstimator(**p)
    if kind == "elastic_net":
        return core.ElasticNetEstimator(**p)
    if kind == "omp":
        return core.OMPEstimator(**p)
    if kind == "bayesian_ridge":
        return core.BayesianRidgeEstimator(**p)
    if kind == "huber":
        return core.HuberEstimator(**p)
    if kind == "svr":
        return core.SVREstimator(**p)
    if kind == "knn":
        return core.KNNEstimator(**p)
    if kind == "pls":
        return core.PLSEstimator(**p)
    if kind == "tree":
        return ens.RegressionTree(seed=seed, **p)
    if kind == "random_forest":
        return ens.RandomForestEstimator(seed=seed, **p)
    if kind == "extra_trees":
        return ens.ExtraTreesEstimator(seed=seed, **p)
    if kind == "bagging":
        base = spec.base if spec.base is not None else LearnerSpec("pls", {})
        return ens.BaggingEstimator(_LearnerFactory(base), seed=seed, **p)
    if kind == "adaboost":
        base = spec.base if spec.base is not None else _DEFAULT_ADABOOST_BASE
        return ens.AdaBoostR2Estimator(_LearnerFactory(base), seed=seed, **p)
    if kind in ("gradient_boosting", "xgb_like", "lgbm_like"):
        if kind != "gradient_boosting":
            p.setdefault("variant", "second_order")
            p.setdefault("reg_lambda", 1.0)
            if kind == "lgbm_like":
                p.setdefault("feature_fraction", 0.9)
        return ens.GradientBoostingEstimator(seed=seed, **p)
    if kind == "voting":
        weights = p.pop("weights", None)
        if p:
            raise ParameterError(f"voting takes no parameters beyond weights: {list(p)}")
        factories = [_LearnerFactory(m) for m in spec.members]
        return ens.VotingEstimator(factories, weights=weights, seed=seed)
    raise ParameterError(f"unknown learner {kind!r}")


def _is_structure_coupled(spec: LearnerSpec) -> bool:
    if spec.kind in STRUCTURE_COUPLED:
        return True
    if spec.base is not None and _is_structure_coupled(spec.base):
        return True
    return any(_is_structure_coupled(m) for m in spec.members)


class PerColumnRegressor:
    """Feature-focused wrapper: one independent estimator per target
    column, each on its own seed-derived stream."""

    def __init__(self, spec: LearnerSpec, seed: int):
        self.spec = spec
        self.seed = seed

    def fit(self, x, y, rng=None):
        y = np.asarray(y, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        self.models_ = []
        for k in range(y.shape[1]):
            est = build_learner(self.spec, derive_seed(self.seed, k))
            est.fit(x, y[:, [k]])
            self.models_.append(est)
        return self

    def predict(self, x):
        return np.column_stack([m.predict(x)[:, 0] for m in self.models_])


# ---------------------------------------------------------------------------
# fitted transforms


@dataclass(frozen=True)
class ColumnSelect:
    keep: np.ndarray

    def apply(self, x):
        return x[:, self.keep]


@dataclass(frozen=True)
class AffineScale:
    mean: np.ndarray
    scale: np.ndarray

    def apply(self, x):
        return (x - self.mean) / self.scale


@dataclass(frozen=True)
class LogitMap:
    eps: float

    def apply(self, x):
        return preprocess.logit_transform(x, self.eps)


@dataclass(frozen=True)
class ProjectMap:
    projection: dimred.Projection

    def apply(self, x):
        return dimred.project(self.projection, x)


# ---------------------------------------------------------------------------
# stage fitting


def _fit_preprocess_stage(stage: StageSpec, x, y, seed):
    """Returns (x, y, transform-or-None); masks shrink both x and y."""
    kind = stage.kind
    p = dict(stage.params)
    if kind == "iqr":
        mask = preprocess.iqr_mask(x, **p)
        return x[mask.keep], y[mask.keep], None
    if kind == "zscore_outliers":
        mask = preprocess.zscore_mask(x, **p)
        return x[mask.keep], y[mask.keep], None
    if kind == "loo_outliers":
        keep = _loo_outlier_keep(x, y, seed=seed, **p)
        return x[keep], y[keep], None
    if kind == "lof":
        mask = preprocess.lof_mask(x, **p)
        return x[mask.keep], y[mask.keep], None
    if kind == "iforest":
        mask = preprocess.iforest_mask(x, seed=seed, **p)
        return x[mask.keep], y[mask.keep], None
    if kind == "constant_features":
        fm = preprocess.drop_constant_features(x, **p)
        return fm.apply(x), y, ColumnSelect(fm.keep)
    if kind == "redundant_features":
        fm = preprocess.drop_redundant_features(x, **p)
        return fm.apply(x), y, ColumnSelect(fm.keep)
    if kind == "correlated_features":
        fm = preprocess.drop_correlated_features(x, **p)
        return fm.apply(x), y, ColumnSelect(fm.keep)
    if kind == "scaler":
        params = preprocess.fit_scaler(x, **p)
        tr = AffineScale(params.mean, params.scale)
        return tr.apply(x), y, tr
    if kind == "invsf":
        eps = p.pop("eps", 1e-6)
        if p:
            raise ParameterError(f"invsf takes only eps, got {list(p)}")
        tr = LogitMap(eps)
        return tr.apply(x), preprocess.logit_transform(y, eps), tr
    if kind == "add_noise":
        sigma = p.pop("sigma", 0.01)
        copies = p.pop("copies", 1)
        if p:
            raise ParameterError(f"add_noise takes sigma/copies, got {list(p)}")
        x2, y2 = preprocess.augment_rows(x, y, sigma, copies, seed)
        return x2, y2, None
    raise ParameterError(f"unknown preprocess stage {kind!r}")


def _loo_outlier_keep(x, y, seed, folds: int = 10, z_cut: float = 2.0,
                      lam: float = 1.0):
    """One-pass held-out-error outlier search over a ridge base learner:
    cross-fit per-sample errors, drop samples beyond mean + z_cut*std."""
    n = x.shape[0]
    k = min(folds, n)
    if k < 2:
        return np.ones(n, dtype=bool)
    err = np.empty(n)
    for fold in kfold_indices(n, k, seed):
        train = np.setdiff1d(np.arange(n), fold)
        est = learners_core.RidgeEstimator(lam=lam)
        est.fit(x[train], y[train])
        err[fold] = np.abs(est.predict(x[fold]) - y[fold]).mean(axis=1)
    keep = err <= err.mean() + z_cut * err.std()
    if not keep.any():
        keep = np.ones(n, dtype=bool)
    return keep


def _fit_dimred_stage(stage: StageSpec, x, y, seed):
    kind = stage.kind
    p = dict(stage.params)
    if kind == "pca":
        proj = dimred.fit_pca(x, **p)
        tr = ProjectMap(proj)
        return tr.apply(x), tr
    if kind == "tsvd":
        proj = dimred.fit_tsvd(x, **p)
        tr = ProjectMap(proj)
        return tr.apply(x), tr
    if kind == "variance_threshold":
        rep = dimred.variance_threshold(x, **p)
    elif kind == "select_k_best":
        rep = dimred.select_k_best_mi(x, y, **p)
    elif kind == "generic_univariate":
        rep = dimred.generic_univariate_select(x, y, seed=seed, **p)
    elif kind == "backward_elimination":
        rep = dimred.backward_elimination(x, y, **p)
    else:
        raise ParameterError(f"unknown dimred stage {kind!r}")
    tr = ColumnSelect(rep.selected.keep)
    return tr.apply(x), tr


# ---------------------------------------------------------------------------
# the fitted pipeline


PIPELINE_MAGIC = b"CONNECTO.PIPELINE.v1\n"


class FittedPipeline:
    """Immutable trained artifact: fitted transforms in application order
    plus the fitted learner(s). predict never refits anything."""

    def __init__(self, config, d_in, d_out, transforms, learner,
                 target_projection, postprocess, n_train_rows):
        self.config = config
        self.d_in = d_in
        self.d_out = d_out
        self.transforms = transforms
        self.learner = learner
        self.target_projection = target_projection
        self.postprocess = postprocess
        self.n_train_rows = n_train_rows

    def predict_rows(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.d_in:
            raise ShapeError(
                f"pipeline was fitted on {self.d_in} features, got {x.shape}"
            )
        for tr in self.transforms:
            x = tr.apply(x)
        pred = self.learner.predict(x)
        if self.target_projection is not None:
            pred = dimred.reconstruct(self.target_projection, pred)
        if "sigmoid_back" in self.postprocess:
            pred = preprocess.sigmoid_transform(pred)
        if "clip01" in self.postprocess:
            pred = np.clip(pred, 0.0, 1.0)
        return pred

    def predict(self, table: FeatureTable) -> FeatureTable:
        return FeatureTable(table.subject_ids, self.predict_rows(table.rows))

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(PIPELINE_MAGIC)
            pickle.dump(self, fh, protocol=4)

    @staticmethod
    def load(path) -> "FittedPipeline":
        with open(path, "rb") as fh:
            magic = fh.read(len(PIPELINE_MAGIC))
            if magic != PIPELINE_MAGIC:
                raise DataError(f"{path}: not a fitted-pipeline file")
            obj = pickle.load(fh)
        if not isinstance(obj, FittedPipeline):
            raise DataError(f"{path}: unexpected payload {type(obj)!r}")
        return obj


def fit_pipeline(config: PipelineConfig, train: LongitudinalDataset) -> FittedPipeline:
    """Fit every stage in declared order on the (possibly shrinking)
    training rows, then the learner; see the module docstring."""
    if not train.labeled:
        raise DataError("fit_pipeline needs a labeled dataset (t1 present)")
    x = train.t0.rows
    y = train.t1.rows
    d_in = x.shape[1]
    d_out = y.shape[1]
    transforms = []
    post = list(config.postprocess)
    stage_no = 0
    for stage in config.preprocess:
        try:
            x, y, tr = _fit_preprocess_stage(
                stage, x, y, derive_seed(config.seed, stage_no)
            )
        except Exception as exc:
            raise StageError(f"preprocess:{stage.kind}", exc) from exc
        if tr is not None:
            transforms.append(tr)
        if stage.kind == "invsf" and "sigmoid_back" not in post:
            post.append("sigmoid_back")
        stage_no += 1
    if x.shape[0] == 0:
        raise DataError("no training rows left after elimination")
    for stage in config.dimred:
        try:
            x, tr = _fit_dimred_stage(stage, x, y, derive_seed(config.seed, stage_no))
        except Exception as exc:
            raise StageError(f"dimred:{stage.kind}", exc) from exc
        transforms.append(tr)
        stage_no += 1
    target_projection = None
    if config.target_dimred is not None:
        st = config.target_dimred
        try:
            fitter = dimred.fit_pca if st.kind == "pca" else dimred.fit_tsvd
            target_projection = fitter(y, **st.params)
            y = dimred.project(target_projection, y)
        except Exception as exc:
            raise StageError(f"target_dimred:{st.kind}", exc) from exc
    learner_seed = derive_seed(config.seed, 9999)
    try:
        if config.ffl and _is_structure_coupled(config.learner):
            learner = PerColumnRegressor(config.learner, learner_seed)
        else:
            learner = build_learner(config.learner, learner_seed)
        learner.fit(x, y)
    except Exception as exc:
        raise StageError(f"learner:{config.learner.kind}", exc) from exc
    return FittedPipeline(
        config=config,
        d_in=d_in,
        d_out=d_out,
        transforms=transforms,
        learner=learner,
        target_projection=target_projection,
        postprocess=tuple(post),
        n_train_rows=x.shape[0],
    )


# ---------------------------------------------------------------------------
# bundled team configurations


def team_config_path(team: int):
    if not 1 <= team <= 20:
        raise ParameterError(f"team id must lie in 1..20, got {team}")
    return importlib.resources.files("connecto").joinpath(
        "configs", f"team{team:02d}.cfg"
    )


def load_team_config(team: int) -> PipelineConfig:
    """Bundled configuration reproducing one competing team's pipeline."""
    path = team_config_path(team)
    return config_from_text(path.read_text(encoding="utf-8"))


def all_team_ids() -> list:
    return list(range(1, 21))
