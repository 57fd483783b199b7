"""Pretrained lasso for populations split into groups.

An overall lasso is fit on every group's training rows and its lambda picked
by CV.  Each group then gets its own lasso whose offset carries a
``(1 - alpha)`` share of the overall linear predictor and whose penalty
factors favour the overall support ``S``.  ``alpha = 1`` gives independent
per-group lassos; ``alpha = 0`` restricts each group model to ``S`` on top
of the full overall prediction.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import FoldAssignment, StandardizationRecord, expand_features
from .cv import CvCurve
from .errors import DegenerateGroup, DimensionMismatch, UnknownGroup
from .lasso import LassoModel, LassoPath, cv_lasso_path, fit_lasso_cv, sigmoid

DEFAULT_ALPHA_GRID = (0.0, 0.25, 0.5, 0.75, 1.0)


def compute_offset(X_k, intercept, beta, alpha):
    """``(1 - alpha) * (X_k @ beta + intercept)``."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    X_k = np.asarray(X_k, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if X_k.ndim != 2 or X_k.shape[1] != beta.shape[0]:
        raise DimensionMismatch(f"X_k has shape {X_k.shape}, beta has {beta.shape[0]} entries")
    return (1.0 - alpha) * (X_k @ beta + intercept)


def compute_penalty_factors(support, p, alpha):
    """Penalty factors ``(1 - alpha) * [1/alpha if j not in S else 1]``.

    At ``alpha = 1`` the formula collapses to all zeros; it is replaced by
    uniform ones (plain lasso).  At ``alpha = 0`` features outside ``S``
    get ``inf`` (excluded) and those inside get 1.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    in_s = np.zeros(p, dtype=bool)
    in_s[list(support)] = True
    if alpha == 1.0:
        return np.ones(p)
    if alpha == 0.0:
        return np.where(in_s, 1.0, np.inf)
    return (1.0 - alpha) * np.where(in_s, 1.0, 1.0 / alpha)


def normalize_penalty_factors(pf):
    """Rescale so the smallest finite positive factor is 1.

    A global scale on the factors is absorbed by lambda, so this only fixes
    the lambda units.
    """
    pf = np.asarray(pf, dtype=float)
    ok = np.isfinite(pf) & (pf > 0)
    if not ok.any():
        return pf.copy()
    return pf / pf[ok].min()


def group_standardization(Z_raw, overall):
    """Standardization of one group's expanded rows.

    Continuous columns are centered and scaled on the group's own rows, as a
    plain lasso on that group would do.  Columns constant within the group
    keep the overall record's centering and scale.
    """
    cols = list(overall.columns)
    mu = Z_raw[:, cols].mean(axis=0)
    sd = Z_raw[:, cols].std(axis=0)
    flat = ~(sd > 1e-12 * np.maximum(1.0, np.abs(mu)))
    mu = np.where(flat, overall.mean, mu)
    sd = np.where(flat, overall.scale, sd)
    return StandardizationRecord(tuple(cols), tuple(float(v) for v in mu),
                                 tuple(float(v) for v in sd))


@dataclass
class GroupFit:
    """Fine-tuned path of one group, on that group's standardization."""

    path: LassoPath
    selected: int
    cv: CvCurve | None = None
    standardization: StandardizationRecord | None = None

    @property
    def best(self):
        return self.path.entry(self.selected)

    def to_dict(self):
        return {"path": self.path.to_dict(), "selected": self.selected,
                "cv": None if self.cv is None else self.cv.to_dict(),
                "standardization": (None if self.standardization is None
                                    else self.standardization.to_dict())}

    @classmethod
    def from_dict(cls, d):
        rec = d.get("standardization")
        return cls(LassoPath.from_dict(d["path"]), int(d["selected"]),
                   None if d.get("cv") is None else CvCurve.from_dict(d["cv"]),
                   None if rec is None else StandardizationRecord.from_dict(rec))


@dataclass
class PretrainedModel:
    """Overall fit, support, alpha and one fine-tuned fit per group."""

    overall: LassoModel
    alpha: float
    group_fits: dict
    support: tuple = field(default=())
    alpha_curve: dict | None = None

    def __post_init__(self):
        if not self.support:
            self.support = tuple(int(j) for j in np.flatnonzero(self.overall.best.beta))

    @property
    def groups(self):
        return list(self.group_fits)

    def overall_linear_predictor(self, Z):
        best = self.overall.best
        return Z @ best.beta + best.intercept

    def predict_proba(self, X, group_labels, allow_fallback=False):
        """Score each row with its group's model, offset included.

        Unknown labels raise :class:`UnknownGroup` unless ``allow_fallback``,
        in which case those rows get the overall model's prediction.
        """
        Z = self.overall.design(X)
        Z_raw = expand_features(X, self.overall.features, "reference")[0]
        labels = np.asarray(group_labels).astype(str)
        if labels.shape != (Z.shape[0],):
            raise DimensionMismatch("one group label per row is required")
        lin0 = self.overall_linear_predictor(Z)
        out = np.empty(Z.shape[0])
        for g in np.unique(labels):
            rows = labels == g
            if g not in self.group_fits:
                if not allow_fallback:
                    raise UnknownGroup(g)
                out[rows] = sigmoid(lin0[rows])
                continue
            fit = self.group_fits[g]
            Z_g = Z[rows] if fit.standardization is None else fit.standardization.apply(Z_raw[rows])
            best = fit.best
            eta = best.intercept + Z_g @ best.beta + (1.0 - self.alpha) * lin0[rows]
            out[rows] = sigmoid(eta)
        return out

    def to_dict(self):
        return {"kind": "ptlasso", "alpha": self.alpha,
                "support": list(self.support),
                "overall": self.overall.to_dict(),
                "groups": {g: fit.to_dict() for g, fit in self.group_fits.items()},
                "alpha_curve": self.alpha_curve}

    @classmethod
    def from_dict(cls, d):
        return cls(LassoModel.from_dict(d["overall"]), float(d["alpha"]),
                   {g: GroupFit.from_dict(v) for g, v in d["groups"].items()},
                   tuple(int(j) for j in d["support"]), d.get("alpha_curve"))


def fit_overall(train, folds, n_lambda=50, *, tol=1e-9, threads=1):
    """CV-selected lasso on all training rows.

    Returns ``(model, intercept, beta, support)``; coefficients are on the
    model's standardized design.
    """
    model = fit_lasso_cv(train, folds, n_lambda=n_lambda, tol=tol, threads=threads)
    best = model.best
    support = tuple(int(j) for j in np.flatnonzero(best.beta))
    return model, best.intercept, best.beta, support


def _group_rows(train):
    rows = {}
    for g in train.group_labels():
        idx = np.flatnonzero(train.group == g)
        if np.unique(train.y[idx]).size < 2:
            raise DegenerateGroup(g)
        rows[g] = idx
    return rows


def fit_group_models(train, overall, alpha, folds, n_lambda=50, *, tol=1e-9,
                     threads=1):
    """Fine-tune one lasso per group with the pretrained offset and penalty factors.

    Each group's lambda is picked by CV on its own rows, reusing the global
    fold labels restricted to that group.  The offset comes from the overall
    design; the group's own coefficients live on its own standardization.
    """
    Z = overall.design(train.X)
    Z_raw = expand_features(train.X, overall.features, "reference")[0]
    best = overall.best
    support = tuple(int(j) for j in np.flatnonzero(best.beta))
    pf = normalize_penalty_factors(compute_penalty_factors(support, Z.shape[1], alpha))
    rows = _group_rows(train)

    def fit_one(g):
        idx = rows[g]
        offset = compute_offset(Z[idx], best.intercept, best.beta, alpha)
        record = group_standardization(Z_raw[idx], overall.standardization)
        sub_folds = FoldAssignment(folds.fold_id[idx], folds.k)
        path, curve, sel = cv_lasso_path(record.apply(Z_raw[idx]), train.y[idx], sub_folds,
                                         pf, offset, n_lambda=n_lambda, tol=tol)
        return GroupFit(path, sel, curve, record)

    labels = list(rows)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            fits = list(pool.map(fit_one, labels))
    else:
        fits = [fit_one(g) for g in labels]
    return PretrainedModel(overall, float(alpha), dict(zip(labels, fits)), support)


def _pooled_cv_deviance(model, train):
    total, count = 0.0, 0
    for g, fit in model.group_fits.items():
        n_g = int(np.sum(train.group == g))
        total += n_g * float(fit.cv.mean[fit.selected])
        count += n_g
    return total / count


def select_alpha(train, folds, alpha_grid=DEFAULT_ALPHA_GRID, n_lambda=50, *,
                 overall=None, tol=1e-9, threads=1, return_models=False):
    """Alpha with the smallest pooled CV deviance over groups.

    Ties (within 1e-12 relative) go to the larger alpha.
    """
    grid = sorted({float(a) for a in alpha_grid}, reverse=True)
    if not grid or grid[-1] < 0 or grid[0] > 1:
        raise ValueError("alpha grid must be nonempty within [0, 1]")
    if overall is None:
        overall = fit_overall(train, folds, n_lambda, tol=tol, threads=threads)[0]
    scores, models = {}, {}
    for a in grid:
        models[a] = fit_group_models(train, overall, a, folds, n_lambda, tol=tol,
                                     threads=threads)
        scores[a] = _pooled_cv_deviance(models[a], train)
    best = min(scores.values())
    alpha = next(a for a in grid if scores[a] <= best + 1e-12 * abs(best))
    if return_models:
        return alpha, scores, models
    return alpha


def fit_pretrained(train, folds, alpha=None, alpha_grid=DEFAULT_ALPHA_GRID,
                   n_lambda=50, *, tol=1e-9, threads=1):
    """Full two-stage fit; ``alpha=None`` selects it from ``alpha_grid`` by CV."""
    overall = fit_overall(train, folds, n_lambda, tol=tol, threads=threads)[0]
    if alpha is not None:
        return fit_group_models(train, overall, alpha, folds, n_lambda, tol=tol,
                                threads=threads)
    chosen, scores, models = select_alpha(train, folds, alpha_grid, n_lambda,
                                          overall=overall, tol=tol, threads=threads,
                                          return_models=True)
    model = models[chosen]
    model.alpha_curve = {repr(a): s for a, s in sorted(scores.items())}
    return model
