"""Data model for longitudinal brain connectivity.

A connectome is a symmetric, zero-diagonal adjacency matrix over ROIs;
its feature encoding is the row-major upper triangle (595 values for the
default 35-ROI parcellation). CSV files carry one subject per row under
the header ``ID,f0,...,f{d-1}``; floats are emitted as shortest
round-trip decimals and files always end in LF newlines.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import IngestionError, ParameterError, ShapeError

DEFAULT_N_ROIS = 35


def n_features(n_rois: int) -> int:
    """Number of upper-triangle entries for an n_rois x n_rois matrix."""
    if n_rois < 2:
        raise ParameterError(f"need at least 2 ROIs, got {n_rois}")
    return n_rois * (n_rois - 1) // 2


def n_rois_from_features(d: int) -> int:
    """Inverse of n_features; errors when d is not a valid triangle count."""
    n = int(round((1 + (1 + 8 * d) ** 0.5) / 2))
    if n < 2 or n_features(n) != d:
        raise ShapeError(f"{d} is not n*(n-1)/2 for any integer ROI count")
    return n


def triu_index(i: int, j: int, n: int) -> int:
    """Feature index of edge (i, j) in row-major upper-triangle order.

    Requires 0 <= i < j < n; the mapping is a bijection onto
    [0, n*(n-1)/2).
    """
    if not (0 <= i < j < n):
        raise ParameterError(f"edge ({i}, {j}) outside the upper triangle of order {n}")
    return i * (2 * n - i - 1) // 2 + (j - i - 1)


@dataclass(frozen=True)
class ConnectivityMatrix:
    """Symmetric nonnegative adjacency matrix of a brain graph."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ShapeError(f"weights must be square, got {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ParameterError("connectivity weights must be finite")
        if np.any(w < 0):
            raise ParameterError("connectivity weights must be nonnegative")
        if np.any(np.diagonal(w) != 0):
            raise ParameterError("diagonal must be exactly zero")
        if not np.array_equal(w, w.T):
            raise ParameterError("weights must be exactly symmetric")
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def n_rois(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class FeatureVector:
    """Upper-triangle vectorization of one connectivity matrix."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1:
            raise ShapeError(f"feature vector must be 1-D, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ParameterError("feature values must be finite")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def d(self) -> int:
        return self.values.shape[0]


def vectorize(m: ConnectivityMatrix) -> FeatureVector:
    """Flatten the upper triangle of a connectivity matrix (row-major)."""
    iu = np.triu_indices(m.n_rois, k=1)
    return FeatureVector(m.weights[iu])


def devectorize(v: FeatureVector | np.ndarray, n_rois: int) -> ConnectivityMatrix:
    """Rebuild the symmetric matrix from its upper-triangle vector.

    Values land at both (i, j) and (j, i); the diagonal is forced to zero.
    Exact inverse of vectorize.
    """
    values = v.values if isinstance(v, FeatureVector) else np.asarray(v, dtype=float)
    if values.shape != (n_features(n_rois),):
        raise ShapeError(
            f"expected {n_features(n_rois)} features for {n_rois} ROIs, "
            f"got {values.shape}"
        )
    w = np.zeros((n_rois, n_rois))
    iu = np.triu_indices(n_rois, k=1)
    w[iu] = values
    w[(iu[1], iu[0])] = values
    return ConnectivityMatrix(w)


@dataclass(frozen=True)
class FeatureTable:
    """Subjects-by-features matrix with unique string subject IDs."""

    subject_ids: tuple
    rows: np.ndarray

    def __post_init__(self):
        ids = tuple(str(s) for s in self.subject_ids)
        r = np.asarray(self.rows, dtype=float)
        if r.ndim != 2:
            raise ShapeError(f"rows must be 2-D, got shape {r.shape}")
        if len(ids) != r.shape[0]:
            raise ShapeError(f"{len(ids)} subject ids but {r.shape[0]} rows")
        if len(set(ids)) != len(ids):
            raise ParameterError("subject ids must be unique")
        if not np.all(np.isfinite(r)):
            raise ParameterError("feature table entries must be finite")
        r = r.copy()
        r.setflags(write=False)
        object.__setattr__(self, "subject_ids", ids)
        object.__setattr__(self, "rows", r)

    @property
    def n_subjects(self) -> int:
        return self.rows.shape[0]

    @property
    def d(self) -> int:
        return self.rows.shape[1]

    def select(self, indices) -> "FeatureTable":
        idx = np.asarray(indices)
        return FeatureTable(
            tuple(self.subject_ids[i] for i in idx), self.rows[idx]
        )


@dataclass(frozen=True)
class LongitudinalDataset:
    """Baseline table plus (optionally) the follow-up table to predict."""

    t0: FeatureTable
    t1: FeatureTable | None = None

    def __post_init__(self):
        if self.t1 is not None:
            if self.t1.subject_ids != self.t0.subject_ids:
                raise ParameterError("t0 and t1 must list the same subjects in order")
            if self.t1.d != self.t0.d:
                raise ShapeError("t0 and t1 must share the feature count")

    @property
    def labeled(self) -> bool:
        return self.t1 is not None


def load_csv(path, expect_d: int | None = None) -> FeatureTable:
    """Read a feature table; errors name the offending row/column.

    The header must be ``ID,f0,...,f{d-1}``; cells must parse as finite
    decimals with a dot separator (locale-independent).
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError(f"{path}: empty file") from None
        if not header or header[0] != "ID":
            raise IngestionError(f"{path}: first header column must be 'ID'")
        d = len(header) - 1
        expected = ["f%d" % k for k in range(d)]
        if header[1:] != expected:
            bad = next(
                (k for k, (a, b) in enumerate(zip(header[1:], expected)) if a != b), d
            )
            raise IngestionError(f"{path}: header column {bad + 1} should be 'f{bad}'")
        if expect_d is not None and d != expect_d:
            raise IngestionError(f"{path}: expected {expect_d} features, header has {d}")
        ids = []
        seen = set()
        data = []
        for rowno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != d + 1:
                raise IngestionError(
                    f"{path}: row {rowno} has {len(row) - 1} features, expected {d}"
                )
            sid = row[0]
            if sid in seen:
                raise IngestionError(f"{path}: row {rowno} duplicates ID '{sid}'")
            seen.add(sid)
            vals = np.empty(d)
            for k, cell in enumerate(row[1:]):
                try:
                    vals[k] = float(cell)
                except ValueError:
                    raise IngestionError(
                        f"{path}: row {rowno} column f{k}: not a number: {cell!r}"
                    ) from None
                if not np.isfinite(vals[k]):
                    raise IngestionError(
                        f"{path}: row {rowno} column f{k}: non-finite value {cell!r}"
                    )
            ids.append(sid)
            data.append(vals)
    rows = np.vstack(data) if data else np.empty((0, d))
    return FeatureTable(tuple(ids), rows)


def write_csv(table: FeatureTable, path) -> None:
    """Emit a feature table; floats use shortest round-trip decimals, LF EOLs."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("ID," + ",".join("f%d" % k for k in range(table.d)) + "\n")
        for sid, row in zip(table.subject_ids, table.rows):
            fh.write(sid + "," + ",".join(repr(float(v)) for v in row) + "\n")


def generate_synthetic(
    n_subjects: int,
    n_rois: int = DEFAULT_N_ROIS,
    drift: float = 0.1,
    noise_sigma: float = 0.02,
    seed: int = 0,
    id_prefix: str = "S",
) -> LongitudinalDataset:
    """Seeded synthetic longitudinal dataset for desk-scale runs.

    Baseline edges are uniform in [0, 1); the follow-up is
    clip(t0 * (1 - drift) + eps, 0, 1) with eps ~ Normal(0, noise_sigma)
    drawn edgewise. Equal seeds give bitwise-equal tables.
    """
    if n_subjects < 1:
        raise ParameterError("n_subjects must be >= 1")
    if not 0.0 <= drift <= 1.0:
        raise ParameterError("drift must lie in [0, 1]")
    if noise_sigma < 0.0:
        raise ParameterError("noise_sigma must be >= 0")
    d = n_features(n_rois)
    rng = np.random.default_rng(seed)
    t0 = rng.random((n_subjects, d))
    t1 = t0 * (1.0 - drift)
    if noise_sigma > 0.0:
        t1 = t1 + rng.normal(0.0, noise_sigma, size=t1.shape)
    t1 = np.clip(t1, 0.0, 1.0)
    ids = tuple(f"{id_prefix}{i:04d}" for i in range(n_subjects))
    return LongitudinalDataset(
        t0=FeatureTable(ids, t0), t1=FeatureTable(ids, t1)
    )
