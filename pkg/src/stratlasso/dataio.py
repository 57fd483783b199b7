"""CSV + schema ingestion and emission.

Data file: a header row, one outcome column (0/1), one group column and one
column per feature.  Schema sidecar: one line per feature,
``name,kind,candidate_flag`` where ``kind`` is ``continuous`` or
``categorical:level1|level2|...`` and the flag is ``0``/``1``.  Blank lines
and lines starting with ``#`` are ignored.
"""

import csv
from pathlib import Path

import numpy as np

from .core import Dataset, FeatureMeta
from .errors import DataError

_TRUE = {"1", "true", "yes", "y"}
_FALSE = {"0", "false", "no", "n"}


def parse_schema(text):
    features = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = [s.strip() for s in line.split(",")]
        if len(parts) != 3:
            raise DataError(f"schema line {lineno}: expected name,kind,candidate_flag")
        name, kind, flag = parts
        if flag.lower() in _TRUE:
            cand = True
        elif flag.lower() in _FALSE:
            cand = False
        else:
            raise DataError(f"schema line {lineno}: bad candidate flag {flag!r}")
        if kind == "continuous":
            features.append(FeatureMeta(name, "continuous", (), cand))
        elif kind.startswith("categorical:"):
            levels = tuple(kind[len("categorical:"):].split("|"))
            features.append(FeatureMeta(name, "categorical", levels, cand))
        else:
            raise DataError(f"schema line {lineno}: unknown kind {kind!r}")
    return features


def format_schema(features):
    lines = []
    for f in features:
        kind = "continuous" if not f.is_categorical else "categorical:" + "|".join(f.levels)
        lines.append(f"{f.name},{kind},{int(f.interaction_candidate)}")
    return "\n".join(lines) + "\n"


def read_schema(path):
    return parse_schema(Path(path).read_text())


def read_dataset(csv_path, schema_path, outcome="y", group_col="group"):
    """Load a dataset, rejecting missing cells and unknown levels."""
    features = read_schema(schema_path)
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{csv_path}: empty file") from None
        index = {name: i for i, name in enumerate(header)}
        for required in [outcome, group_col] + [f.name for f in features]:
            if required not in index:
                raise DataError(f"{csv_path}: missing column {required!r}")
        rows = list(reader)
    n = len(rows)
    X = np.empty((n, len(features)))
    y = np.empty(n, dtype=np.int64)
    group = []
    lookup = [{lev: k for k, lev in enumerate(f.levels)} for f in features]
    for r, row in enumerate(rows, 2):
        if len(row) != len(header):
            raise DataError(f"{csv_path}:{r}: expected {len(header)} cells, got {len(row)}")
        if any(cell.strip() == "" for cell in row):
            raise DataError(f"{csv_path}:{r}: missing value")
        label = row[index[outcome]].strip()
        if label not in ("0", "1"):
            raise DataError(f"{csv_path}:{r}: outcome must be 0 or 1, got {label!r}")
        y[r - 2] = int(label)
        group.append(row[index[group_col]].strip())
        for j, f in enumerate(features):
            cell = row[index[f.name]].strip()
            if f.is_categorical:
                if cell not in lookup[j]:
                    raise DataError(f"{csv_path}:{r}: unknown level {cell!r} for {f.name!r}")
                X[r - 2, j] = lookup[j][cell]
            else:
                try:
                    X[r - 2, j] = float(cell)
                except ValueError:
                    raise DataError(f"{csv_path}:{r}: bad number {cell!r} in {f.name!r}") from None
                if not np.isfinite(X[r - 2, j]):
                    raise DataError(f"{csv_path}:{r}: non-finite value in {f.name!r}")
    if n == 0:
        raise DataError(f"{csv_path}: no data rows")
    return Dataset(X, y, np.array(group), features)


def write_dataset(dataset, csv_path, schema_path=None, outcome="y", group_col="group"):
    """Write ``dataset`` as CSV (and its schema); floats use ``repr`` so they round-trip."""
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([group_col, outcome] + dataset.feature_names)
        for i in range(dataset.n):
            cells = [dataset.group[i], int(dataset.y[i])]
            for j, f in enumerate(dataset.features):
                v = dataset.X[i, j]
                cells.append(f.levels[int(v)] if f.is_categorical else repr(float(v)))
            w.writerow(cells)
    if schema_path is not None:
        Path(schema_path).write_text(format_schema(dataset.features))


def feature_to_dict(f):
    d = {"name": f.name, "kind": f.kind, "candidate": f.interaction_candidate}
    if f.is_categorical:
        d["levels"] = list(f.levels)
    return d


def feature_from_dict(d):
    return FeatureMeta(d["name"], d["kind"], tuple(d.get("levels", ())),
                       bool(d["candidate"]))
