"""Metrics, cross-validation, competition scoring, rank aggregation,
significance testing, and residual matrices.

Ranking protocol: per metric (MAE ascending, PCC descending) each team
gets three local ranks (public, private, CV mean) with ties sharing the
minimum rank; the measure rank is the tie-aware rank of the mean of those
three; the final rank is the tie-aware rank of the mean of the MAE and
PCC measure ranks.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ._stats import kfold_indices, paired_t_pvalue
from .connectome import (
    ConnectivityMatrix,
    FeatureTable,
    LongitudinalDataset,
    devectorize,
    n_rois_from_features,
)
from .errors import DataError, ParameterError, ShapeError


def _pair(pred, truth):
    p = pred.rows if isinstance(pred, FeatureTable) else np.asarray(pred, dtype=float)
    t = truth.rows if isinstance(truth, FeatureTable) else np.asarray(truth, dtype=float)
    if p.shape != t.shape:
        raise ShapeError(f"prediction {p.shape} vs truth {t.shape}")
    return p, t


def mae(pred, truth) -> float:
    """Mean absolute error over every (subject, feature) entry."""
    p, t = _pair(pred, truth)
    return float(np.abs(p - t).mean())


def mse(pred, truth) -> float:
    p, t = _pair(pred, truth)
    return float(((p - t) ** 2).mean())


def pcc(pred, truth) -> float:
    """Pearson correlation over the flattened entry pairs.

    Zero variance on either side is defined as correlation 0 (warned).
    """
    p, t = _pair(pred, truth)
    a = p.ravel()
    b = t.ravel()
    a = a - a.mean()
    b = b - b.mean()
    na = float(np.sqrt(a @ a))
    nb = float(np.sqrt(b @ b))
    if na == 0.0 or nb == 0.0:
        warnings.warn("constant values in PCC; defining correlation as 0")
        return 0.0
    return float((a @ b) / (na * nb))


def per_subject_mae(pred, truth) -> np.ndarray:
    p, t = _pair(pred, truth)
    return np.abs(p - t).mean(axis=1)


def per_subject_pcc(pred, truth) -> np.ndarray:
    """Row-wise Pearson correlation; degenerate rows score 0."""
    p, t = _pair(pred, truth)
    a = p - p.mean(axis=1, keepdims=True)
    b = t - t.mean(axis=1, keepdims=True)
    na = np.sqrt((a * a).sum(axis=1))
    nb = np.sqrt((b * b).sum(axis=1))
    denom = na * nb
    bad = denom == 0
    if bad.any():
        warnings.warn(f"{int(bad.sum())} constant row(s) in per-subject PCC; scored 0")
    out = np.zeros(p.shape[0])
    ok = ~bad
    out[ok] = (a[ok] * b[ok]).sum(axis=1) / denom[ok]
    return out


def pcc_subject_mean(pred, truth) -> float:
    """Alternative PCC aggregation: mean of the per-subject correlations
    (the default elsewhere correlates the flattened tables)."""
    return float(per_subject_pcc(pred, truth).mean())


def kfold_split(n: int, k: int = 5, seed: int = 0) -> list[np.ndarray]:
    """Seeded shuffle, contiguous folds, sizes differing by at most one."""
    return kfold_indices(n, k, seed)


@dataclass(frozen=True)
class ScoreRecord:
    name: str
    split: str
    mae: float
    mse: float
    pcc: float


@dataclass(frozen=True)
class CVResult:
    folds: tuple
    mae_mean: float
    mae_std: float
    mse_mean: float
    mse_std: float
    pcc_mean: float
    pcc_std: float


def cross_validate(config, dataset: LongitudinalDataset, k: int = 5,
                   seed: int = 0) -> CVResult:
    """k-fold CV of a pipeline config on a labeled dataset.

    Each fold fits on the remaining k-1 folds and scores the held-out
    one; the summary reports the mean and population std over folds.
    """
    from .pipeline import fit_pipeline

    if not dataset.labeled:
        raise DataError("cross-validation needs a labeled dataset")
    n = dataset.t0.n_subjects
    folds = kfold_indices(n, k, seed)
    records = []
    for i, fold in enumerate(folds):
        train_idx = np.setdiff1d(np.arange(n), fold)
        train = LongitudinalDataset(
            t0=dataset.t0.select(train_idx), t1=dataset.t1.select(train_idx)
        )
        fitted = fit_pipeline(config, train)
        pred = fitted.predict_rows(dataset.t0.rows[fold])
        truth = dataset.t1.rows[fold]
        records.append(
            ScoreRecord(config.name, f"cv_fold_{i}", mae(pred, truth),
                        mse(pred, truth), pcc(pred, truth))
        )
    maes = np.array([r.mae for r in records])
    mses = np.array([r.mse for r in records])
    pccs = np.array([r.pcc for r in records])
    return CVResult(
        folds=tuple(records),
        mae_mean=float(maes.mean()), mae_std=float(maes.std()),
        mse_mean=float(mses.mean()), mse_std=float(mses.std()),
        pcc_mean=float(pccs.mean()), pcc_std=float(pccs.std()),
    )


# ---------------------------------------------------------------------------
# rank aggregation


@dataclass(frozen=True)
class TeamSummary:
    """The six ranked scores of one team."""

    name: str
    mae_public: float
    mae_private: float
    mae_cv: float
    pcc_public: float
    pcc_private: float
    pcc_cv: float


@dataclass(frozen=True)
class RankTable:
    names: tuple
    mae_local: np.ndarray  # (n, 3): public, private, cv
    pcc_local: np.ndarray  # (n, 3)
    mae_rank: np.ndarray
    pcc_rank: np.ndarray
    final_rank: np.ndarray

    def ordered_names(self) -> list:
        order = np.lexsort((self.names, self.final_rank))
        return [self.names[i] for i in order]

    def row(self, name: str) -> dict:
        i = self.names.index(name)
        return {
            "name": name,
            "mae_local": [int(v) for v in self.mae_local[i]],
            "pcc_local": [int(v) for v in self.pcc_local[i]],
            "mae_rank": int(self.mae_rank[i]),
            "pcc_rank": int(self.pcc_rank[i]),
            "final_rank": int(self.final_rank[i]),
        }


def competition_rank(values: np.ndarray, descending: bool = False) -> np.ndarray:
    """Tie-aware minimum ('competition') ranking: 1 + number of strictly
    better entries."""
    v = np.asarray(values, dtype=float)
    if descending:
        return np.array([1 + int((v > x).sum()) for x in v])
    return np.array([1 + int((v < x).sum()) for x in v])


def rank_table_from_local_ranks(names, mae_local, pcc_local,
                                aggregator: str = "mean") -> RankTable:
    """Aggregate precomputed local ranks into measure and final ranks.

    "mean" averages the local ranks (the protocol that reproduces the
    published standings); "product" multiplies them instead (rank
    product), kept as an alternative aggregator.
    """
    names = tuple(names)
    mae_local = np.asarray(mae_local, dtype=float)
    pcc_local = np.asarray(pcc_local, dtype=float)
    if mae_local.shape != (len(names), 3) or pcc_local.shape != (len(names), 3):
        raise ShapeError("local ranks must be (n_teams, 3) per metric")
    if aggregator == "mean":
        mae_agg = (mae_local[:, 0] + mae_local[:, 1] + mae_local[:, 2]) / 3.0
        pcc_agg = (pcc_local[:, 0] + pcc_local[:, 1] + pcc_local[:, 2]) / 3.0
    elif aggregator == "product":
        mae_agg = mae_local[:, 0] * mae_local[:, 1] * mae_local[:, 2]
        pcc_agg = pcc_local[:, 0] * pcc_local[:, 1] * pcc_local[:, 2]
    else:
        raise ParameterError(f"unknown rank aggregator {aggregator!r}")
    mae_rank = competition_rank(mae_agg)
    pcc_rank = competition_rank(pcc_agg)
    if aggregator == "mean":
        final = competition_rank((mae_rank + pcc_rank) / 2.0)
    else:
        final = competition_rank(mae_rank * pcc_rank)
    return RankTable(
        names=names,
        mae_local=mae_local.astype(int),
        pcc_local=pcc_local.astype(int),
        mae_rank=mae_rank,
        pcc_rank=pcc_rank,
        final_rank=final,
    )


def compute_rank_table(summaries, aggregator: str = "mean") -> RankTable:
    """Rank teams from their six scores (MAE ascending, PCC descending)."""
    summaries = list(summaries)
    if not summaries:
        raise ParameterError("no team summaries to rank")
    names = [s.name for s in summaries]
    if len(set(names)) != len(names):
        raise ParameterError("team names must be unique")
    for s in summaries:
        for field_name in ("mae_public", "mae_private", "mae_cv",
                           "pcc_public", "pcc_private", "pcc_cv"):
            v = getattr(s, field_name)
            if v is None or not np.isfinite(v):
                raise DataError(f"team {s.name} is missing {field_name}")
    mae_cols = np.array([[s.mae_public, s.mae_private, s.mae_cv] for s in summaries])
    pcc_cols = np.array([[s.pcc_public, s.pcc_private, s.pcc_cv] for s in summaries])
    mae_local = np.column_stack(
        [competition_rank(mae_cols[:, j]) for j in range(3)]
    )
    pcc_local = np.column_stack(
        [competition_rank(pcc_cols[:, j], descending=True) for j in range(3)]
    )
    return rank_table_from_local_ranks(names, mae_local, pcc_local, aggregator)


# ---------------------------------------------------------------------------
# significance testing


def paired_ttest_matrix(per_team_scores: dict) -> tuple:
    """Two-tailed paired t-test p-values between every pair of teams.

    Values are aligned per-subject score vectors (same subjects, same
    order). Returns (names, matrix) with an exactly symmetric matrix and
    unit diagonal.
    """
    names = list(per_team_scores)
    vecs = [np.asarray(per_team_scores[n], dtype=float) for n in names]
    if len(vecs) == 0:
        raise ParameterError("no teams to compare")
    length = vecs[0].shape[0]
    for n, v in zip(names, vecs):
        if v.ndim != 1 or v.shape[0] != length:
            raise ShapeError(f"misaligned score vector for {n}")
    m = len(names)
    p = np.ones((m, m))
    for i in range(m):
        for j in range(i + 1, m):
            pij = paired_t_pvalue(vecs[i], vecs[j])
            p[i, j] = pij
            p[j, i] = pij
    return names, p


def residual_matrix(pred_subject, truth_subject) -> ConnectivityMatrix:
    """Element-wise absolute difference, reshaped to a connectivity matrix."""
    p = np.asarray(
        pred_subject.values if hasattr(pred_subject, "values") else pred_subject,
        dtype=float,
    )
    t = np.asarray(
        truth_subject.values if hasattr(truth_subject, "values") else truth_subject,
        dtype=float,
    )
    if p.shape != t.shape or p.ndim != 1:
        raise ShapeError("need two aligned feature vectors")
    return devectorize(np.abs(p - t), n_rois_from_features(p.shape[0]))
