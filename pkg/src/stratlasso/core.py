"""Domain types, standardization, dataset assembly, splitting and folding."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (DataError, EmptyStratum, TooFewRows, UnknownGroup,
                     ZeroVarianceColumn)

__all__ = [
    "FeatureMeta", "Dataset", "StandardizationRecord", "DataConfig",
    "FoldAssignment", "standardize", "assemble", "split_train_test",
    "make_folds", "expand_features",
]


@dataclass(frozen=True)
class FeatureMeta:
    """Column identity: name, kind and interaction-candidate flag.

    Categorical features are stored in ``Dataset.X`` as integer level codes
    (0 .. L-1) and expanded to indicator columns at solver boundaries.
    """

    name: str
    kind: str = "continuous"
    levels: tuple = ()
    interaction_candidate: bool = False

    def __post_init__(self):
        if self.kind not in ("continuous", "categorical"):
            raise DataError(f"feature {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == "categorical":
            object.__setattr__(self, "levels", tuple(str(v) for v in self.levels))
            if len(self.levels) < 2:
                raise DataError(f"categorical feature {self.name!r} needs >= 2 levels")
            if len(set(self.levels)) != len(self.levels):
                raise DataError(f"categorical feature {self.name!r} has duplicate levels")

    @property
    def is_categorical(self):
        return self.kind == "categorical"


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix, binary outcome, group labels and feature metadata."""

    X: np.ndarray
    y: np.ndarray
    group: np.ndarray
    features: tuple

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim != 2:
            raise DataError("X must be two-dimensional")
        y = np.asarray(self.y)
        group = np.asarray(self.group).astype(str)
        features = tuple(self.features)
        n, p = X.shape
        if n < 1:
            raise DataError("dataset has no rows")
        if y.shape != (n,) or group.shape != (n,):
            raise DataError("y and group must have one entry per row of X")
        if len(features) != p:
            raise DataError(f"{len(features)} feature descriptors for {p} columns")
        names = [f.name for f in features]
        if len(set(names)) != len(names):
            raise DataError("feature names must be unique")
        if not np.all(np.isfinite(X)):
            raise DataError("X contains missing or non-finite values")
        if not np.all((y == 0) | (y == 1)):
            raise DataError("y must be binary 0/1")
        for j, f in enumerate(features):
            if f.is_categorical:
                codes = X[:, j]
                if np.any(codes != np.round(codes)) or codes.min() < 0 \
                        or codes.max() >= len(f.levels):
                    raise DataError(f"invalid level codes in {f.name!r}")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y.astype(np.int64))
        object.__setattr__(self, "group", group)
        object.__setattr__(self, "features", features)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    @property
    def feature_names(self):
        return [f.name for f in self.features]

    def group_labels(self):
        """Distinct group labels in order of first appearance."""
        _, first = np.unique(self.group, return_index=True)
        return [str(self.group[i]) for i in np.sort(first)]

    def subset(self, rows):
        rows = np.asarray(rows)
        return Dataset(self.X[rows], self.y[rows], self.group[rows], self.features)


@dataclass(frozen=True)
class StandardizationRecord:
    """Per-column centering and (population) scaling."""

    columns: tuple
    mean: tuple
    scale: tuple

    def apply(self, X):
        X = np.array(X, dtype=float, copy=True)
        if self.columns:
            cols = list(self.columns)
            X[:, cols] = (X[:, cols] - np.asarray(self.mean)) / np.asarray(self.scale)
        return X

    def invert(self, X):
        X = np.array(X, dtype=float, copy=True)
        if self.columns:
            cols = list(self.columns)
            X[:, cols] = X[:, cols] * np.asarray(self.scale) + np.asarray(self.mean)
        return X

    def to_raw_coefficients(self, intercept, beta):
        """Map (intercept, beta) fitted on standardized columns to raw units."""
        beta = np.array(beta, dtype=float, copy=True)
        cols = list(self.columns)
        if cols:
            beta[cols] = beta[cols] / np.asarray(self.scale)
            intercept = intercept - float(beta[cols] @ np.asarray(self.mean))
        return float(intercept), beta

    def to_standardized_coefficients(self, intercept, beta):
        beta = np.array(beta, dtype=float, copy=True)
        cols = list(self.columns)
        if cols:
            intercept = intercept + float(beta[cols] @ np.asarray(self.mean))
            beta[cols] = beta[cols] * np.asarray(self.scale)
        return float(intercept), beta

    def to_dict(self):
        return {"columns": list(self.columns), "mean": list(self.mean),
                "scale": list(self.scale)}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(int(c) for c in d["columns"]),
                   tuple(float(v) for v in d["mean"]),
                   tuple(float(v) for v in d["scale"]))


def standardize(X, columns, names=None):
    """Center and scale the selected columns to mean 0 and population sd 1.

    Parameters
    ----------
    X : array of shape (n, p)
    columns : iterable of int
        Columns to standardize; the rest are returned unchanged.
    names : sequence of str, optional
        Column names used in error messages.

    Returns
    -------
    Xs : ndarray
    record : StandardizationRecord

    Raises
    ------
    ZeroVarianceColumn
        If a selected column is constant.
    """
    X = np.asarray(X, dtype=float)
    columns = tuple(sorted(int(c) for c in columns))
    means, scales = [], []
    for c in columns:
        col = X[:, c]
        mu = col.mean()
        sd = np.sqrt(np.mean((col - mu) ** 2))
        if not sd > 1e-12 * max(1.0, abs(mu)):
            raise ZeroVarianceColumn(names[c] if names is not None else c)
        means.append(float(mu))
        scales.append(float(sd))
    record = StandardizationRecord(columns, tuple(means), tuple(scales))
    return record.apply(X), record


@dataclass(frozen=True)
class DataConfig:
    """Training-data configuration: one group, majority + one minority, or all."""

    mode: str
    groups: tuple = ()

    def __post_init__(self):
        if self.mode not in ("group", "mix", "all"):
            raise DataError(f"unknown data configuration mode {self.mode!r}")
        expected = {"group": 1, "mix": 2, "all": 0}[self.mode]
        if len(self.groups) != expected:
            raise DataError(f"{self.mode} configuration takes {expected} group(s)")

    @classmethod
    def group_only(cls, label):
        return cls("group", (str(label),))

    @classmethod
    def mix(cls, majority, minority):
        return cls("mix", (str(majority), str(minority)))

    @classmethod
    def all(cls):
        return cls("all")

    @classmethod
    def parse(cls, text):
        """Parse ``all``, ``group:AF`` or ``mix:WB,AF``."""
        text = text.strip()
        if text == "all":
            return cls.all()
        mode, _, rest = text.partition(":")
        if mode == "group" and rest:
            return cls.group_only(rest)
        if mode == "mix":
            parts = [s.strip() for s in rest.split(",")]
            if len(parts) == 2 and all(parts):
                return cls.mix(*parts)
        raise DataError(f"cannot parse data configuration {text!r}")

    def __str__(self):
        if self.mode == "all":
            return "all"
        return f"{self.mode}:{','.join(self.groups)}"

    @property
    def label(self):
        """Short label used in report tables (group code, ``Mix`` or ``All``)."""
        return {"group": self.groups[0] if self.groups else "", "mix": "Mix",
                "all": "All"}[self.mode]


@dataclass(frozen=True, eq=False)
class FoldAssignment:
    fold_id: np.ndarray
    k: int

    def train_rows(self, fold):
        return np.flatnonzero(self.fold_id != fold)

    def test_rows(self, fold):
        return np.flatnonzero(self.fold_id == fold)

    def restrict(self, rows):
        """Fold assignment of a row subset (same fold labels)."""
        return FoldAssignment(self.fold_id[np.asarray(rows)], self.k)


def assemble(dataset, config):
    """Keep the rows selected by a data configuration, preserving order."""
    present = set(dataset.group_labels())
    for g in config.groups:
        if g not in present:
            raise UnknownGroup(g)
    if config.mode == "all":
        return dataset
    keep = np.isin(dataset.group, list(config.groups))
    return dataset.subset(np.flatnonzero(keep))


def _strata(dataset):
    """Row indices per (group, y) cell, positives first then negatives."""
    cells = []
    for label in (1, 0):
        for g in dataset.group_labels():
            rows = np.flatnonzero((dataset.group == g) & (dataset.y == label))
            cells.append((g, label, rows))
    return cells


def split_train_test(dataset, test_fraction, seed):
    """Stratified train/test split on the joint (group, outcome) cell.

    Each cell of ``m >= 2`` rows sends ``round(m * test_fraction)`` rows to the
    test side, clamped to ``[1, m - 1]``; singleton cells stay in training.

    Raises
    ------
    EmptyStratum
        If a group lacks one of the two outcome classes.
    """
    if not 0 < test_fraction < 1:
        raise DataError("test_fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    test_mask = np.zeros(dataset.n, dtype=bool)
    for g, label, rows in _strata(dataset):
        m = rows.size
        if m == 0:
            raise EmptyStratum(g, label)
        if m == 1:
            continue
        n_test = min(max(int(np.floor(m * test_fraction + 0.5)), 1), m - 1)
        test_mask[rng.permutation(rows)[:n_test]] = True
    return (dataset.subset(np.flatnonzero(~test_mask)),
            dataset.subset(np.flatnonzero(test_mask)))


def make_folds(dataset, k, seed):
    """Stratified fold assignment on the joint (group, outcome) cell.

    Rows of each cell are shuffled and dealt round-robin; the dealing position
    carries over between cells so that small cells land in different folds.
    """
    if k < 2:
        raise DataError("k must be at least 2")
    if dataset.n < k:
        raise TooFewRows(f"{dataset.n} rows cannot fill {k} folds")
    rng = np.random.default_rng(seed)
    fold_id = np.empty(dataset.n, dtype=np.int64)
    pos = 0
    for g, label, rows in _strata(dataset):
        if rows.size == 0:
            raise EmptyStratum(g, label)
        rows = rng.permutation(rows)
        fold_id[rows] = (pos + np.arange(rows.size)) % k
        pos = (pos + rows.size) % k
    return FoldAssignment(fold_id, k)


@dataclass(frozen=True)
class ExpandedColumn:
    feature: int
    level: int | None  # None for continuous columns
    name: str


def expand_features(X, features, coding="reference"):
    """One-hot expand categorical level codes.

    ``coding="reference"`` drops the first level (plain lasso);
    ``coding="indicator"`` keeps every level (group-lasso groups).

    Returns
    -------
    Z : ndarray of shape (n, q)
    columns : list of ExpandedColumn
    """
    if coding not in ("reference", "indicator"):
        raise ValueError(f"unknown coding {coding!r}")
    X = np.asarray(X, dtype=float)
    blocks, columns = [], []
    for j, f in enumerate(features):
        if not f.is_categorical:
            blocks.append(X[:, j:j + 1])
            columns.append(ExpandedColumn(j, None, f.name))
            continue
        start = 1 if coding == "reference" else 0
        for lev in range(start, len(f.levels)):
            blocks.append((X[:, j:j + 1] == lev).astype(float))
            columns.append(ExpandedColumn(j, lev, f"{f.name}={f.levels[lev]}"))
    Z = np.hstack(blocks) if blocks else np.empty((X.shape[0], 0))
    return Z, columns


def continuous_columns(columns):
    return [i for i, c in enumerate(columns) if c.level is None]


def stratum_counts(dataset):
    """Mapping ``(group, y) -> count`` for every group present."""
    return {(g, label): int(rows.size) for g, label, rows in _strata(dataset)}


def prepare_design(dataset_or_X, features, coding="reference", record=None):
    """Expand categoricals and standardize the continuous columns.

    With ``record=None`` the standardization is estimated from the data;
    otherwise the given record is applied (e.g. to test rows).
    """
    X = getattr(dataset_or_X, "X", dataset_or_X)
    Z, columns = expand_features(X, features, coding)
    if record is None:
        names = [c.name for c in columns]
        Z, record = standardize(Z, continuous_columns(columns), names)
    else:
        Z = record.apply(Z)
    return Z, columns, record
