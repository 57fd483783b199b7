"""Cross-validation engine shared by every model family.

A model family plugs in through ``fit_fn(train_rows, grid)``, which fits on
the given rows for every hyperparameter in ``grid`` and returns a callable
``predict(rows) -> ndarray of shape (len(rows), m)`` of probabilities.  Path
solvers may stop early, so ``m <= len(grid)``; the curve is then truncated to
the shortest fold.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateFold

PROB_CLAMP = 1e-9

__all__ = ["CvCurve", "cv_deviance", "select_min", "deviance_per_row"]


def deviance_per_row(prob, y):
    """Binomial deviance of each row (probabilities clamped)."""
    prob = np.clip(prob, PROB_CLAMP, 1.0 - PROB_CLAMP)
    y = np.asarray(y, dtype=float)
    if prob.ndim == 2:
        y = y[:, None]
    return -2.0 * (y * np.log(prob) + (1 - y) * np.log1p(-prob))


@dataclass(frozen=True, eq=False)
class CvCurve:
    grid: np.ndarray
    mean: np.ndarray
    se: np.ndarray
    n_folds: int
    fold_means: np.ndarray | None = None  # shape (n_folds, m)

    def __len__(self):
        return len(self.mean)

    def to_csv(self, name="lambda"):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([name, "mean_deviance", "se", "n_folds"])
        for h, m, s in zip(self.grid, self.mean, self.se):
            w.writerow([repr(float(h)), repr(float(m)), repr(float(s)), self.n_folds])
        return buf.getvalue()

    def to_dict(self):
        return {"grid": self.grid.tolist(), "mean": self.mean.tolist(),
                "se": self.se.tolist(), "n_folds": self.n_folds}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["grid"], dtype=float), np.array(d["mean"], dtype=float),
                   np.array(d["se"], dtype=float), int(d["n_folds"]))


def _labels(data):
    return np.asarray(getattr(data, "y", data))


def cv_deviance(fit_fn, data, folds, hyper_grid, threads=1):
    """Mean held-out binomial deviance for every grid point.

    Parameters
    ----------
    fit_fn : callable
        ``fit_fn(train_rows, grid) -> predict``; see module docstring.
    data : Dataset or array of binary labels
    folds : FoldAssignment
    hyper_grid : sequence
        Hyperparameter values, most regularized first.
    threads : int
        Fold fits run on a thread pool of this size; results do not depend
        on it.

    Returns
    -------
    CvCurve

    Raises
    ------
    DegenerateFold
        If some fold's training part lacks one of the outcome classes.
    """
    y = _labels(data)
    grid = np.asarray(hyper_grid)
    for k in range(folds.k):
        tr = folds.train_rows(k)
        if tr.size == 0 or np.unique(y[tr]).size < 2:
            raise DegenerateFold(f"training part of fold {k} lacks an outcome class")
        if folds.test_rows(k).size == 0:
            raise DegenerateFold(f"fold {k} is empty")

    def run(k):
        predict = fit_fn(folds.train_rows(k), grid)
        te = folds.test_rows(k)
        prob = np.asarray(predict(te))
        return deviance_per_row(prob, y[te])

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            dev = list(pool.map(run, range(folds.k)))
    else:
        dev = [run(k) for k in range(folds.k)]
    m = min(d.shape[1] for d in dev)
    dev = [d[:, :m] for d in dev]
    sizes = np.array([d.shape[0] for d in dev], dtype=float)
    fold_means = np.vstack([d.mean(axis=0) for d in dev])
    mean = np.concatenate(dev).mean(axis=0)
    spread = ((fold_means - mean) ** 2 * sizes[:, None]).sum(axis=0) / sizes.sum()
    se = np.sqrt(spread / max(folds.k - 1, 1))
    return CvCurve(grid[:m], mean, se, folds.k, fold_means)


def select_min(curve, rtol=1e-12):
    """Index of the smallest mean deviance; ties go to the earliest point.

    Grids are ordered most-regularized first, so the earliest tie is the
    larger lambda.  Values within ``rtol`` of the minimum count as ties.
    """
    mean = np.asarray(curve.mean if isinstance(curve, CvCurve) else curve, dtype=float)
    if mean.size == 0:
        raise ValueError("empty curve")
    best = np.min(mean)
    return int(np.flatnonzero(mean <= best + rtol * abs(best))[0])
