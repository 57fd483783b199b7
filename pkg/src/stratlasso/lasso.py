"""L1-penalized logistic regression paths.

The objective at each lambda is

    (1/n) * sum_i [log(1 + exp(eta_i)) - y_i * eta_i] + lam * sum_j pf_j |beta_j|

with ``eta = mu + X @ beta + offset``.  The intercept ``mu`` is never
penalized; ``pf_j = 0`` leaves a feature unpenalized and ``pf_j = inf``
excludes it.  Any global rescaling of ``pf`` is equivalent to rescaling lam.

The solver is a proximal Newton (IRLS) loop whose quadratic subproblems are
solved by cyclic coordinate descent on an active set; strong-rule screening
picks the active set and the full KKT conditions are re-checked before a
solution is accepted.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from ._cd import cd_quadratic
from .core import ExpandedColumn, StandardizationRecord, prepare_design
from .cv import PROB_CLAMP, CvCurve, cv_deviance, select_min
from .dataio import feature_from_dict, feature_to_dict
from .errors import (DimensionMismatch, Diverged, NonBinaryOutcome,
                     NoPenalizedFeatures)

logger = logging.getLogger(__name__)

WEIGHT_FLOOR = 1e-5
ETA_CLIP = 35.0


def soft_threshold(z, t):
    """``sign(z) * max(|z| - t, 0)``; vectorized."""
    if np.any(np.asarray(t) < 0):
        raise ValueError("threshold must be non-negative")
    return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)


def sigmoid(eta):
    """Logistic function with the linear predictor clipped to +-35.

    Clipping keeps outputs strictly inside (0, 1) for any finite input.
    """
    return expit(np.clip(eta, -ETA_CLIP, ETA_CLIP))


def mean_log_loss(eta, y):
    return float(np.mean(np.logaddexp(0.0, eta) - y * eta))


def binomial_deviance(prob, y):
    """Mean per-observation binomial deviance with probabilities clamped."""
    prob = np.clip(prob, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return float(-2.0 * np.mean(y * np.log(prob) + (1 - y) * np.log1p(-prob)))


@dataclass
class PenaltySpec:
    """Lambda path, per-feature penalty factors and a fixed offset.

    ``lambda_path=None`` asks for an automatic log-linear grid;
    ``penalty_factors=None`` means all ones; ``offset=None`` means zeros.
    """

    lambda_path: np.ndarray | None = None
    penalty_factors: np.ndarray | None = None
    offset: np.ndarray | None = None

    def resolve(self, n, p):
        pf = np.ones(p) if self.penalty_factors is None \
            else np.asarray(self.penalty_factors, dtype=float)
        if pf.shape != (p,):
            raise DimensionMismatch(f"penalty_factors has shape {pf.shape}, expected ({p},)")
        if np.any(np.isnan(pf)) or np.any(pf < 0):
            raise ValueError("penalty factors must be >= 0 (inf allowed)")
        offset = np.zeros(n) if self.offset is None \
            else np.asarray(self.offset, dtype=float)
        if offset.shape != (n,):
            raise DimensionMismatch(f"offset has shape {offset.shape}, expected ({n},)")
        lambdas = None
        if self.lambda_path is not None:
            lambdas = np.atleast_1d(np.asarray(self.lambda_path, dtype=float))
            if lambdas.size == 0 or np.any(lambdas <= 0):
                raise ValueError("lambda values must be > 0")
            if np.any(np.diff(lambdas) >= 0):
                raise ValueError("lambda path must be strictly descending")
        return lambdas, pf, offset


@dataclass(frozen=True)
class PathEntry:
    lam: float
    intercept: float
    beta: np.ndarray
    deviance: float

    @property
    def nonzero_count(self):
        return int(np.count_nonzero(self.beta))


@dataclass
class LassoPath:
    """Solutions along a decreasing lambda sequence.

    ``deviance`` is the total binomial deviance on the training rows and
    ``null_deviance`` that of the fit with only the intercept, offset and
    unpenalized features.
    """

    lambdas: np.ndarray
    intercepts: np.ndarray
    coefs: np.ndarray  # shape (n_lambda, p)
    deviance: np.ndarray
    null_deviance: float
    lambda_max: float
    penalty_factors: np.ndarray
    offset: np.ndarray | None = None
    n_iter: list = field(default_factory=list)

    def __len__(self):
        return len(self.lambdas)

    def entry(self, i):
        return PathEntry(float(self.lambdas[i]), float(self.intercepts[i]),
                         self.coefs[i].copy(), float(self.deviance[i]))

    @property
    def nonzero_count(self):
        return np.count_nonzero(self.coefs, axis=1)

    def linear_predictor(self, X, offset=None):
        """Linear predictors for every lambda, shape (n, n_lambda)."""
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.coefs.shape[1]:
            raise DimensionMismatch(
                f"X has shape {X.shape}, model expects {self.coefs.shape[1]} columns")
        eta = X @ self.coefs.T + self.intercepts
        if offset is not None:
            eta = eta + np.asarray(offset, dtype=float)[:, None]
        return eta

    def to_dict(self, include_offset=False):
        d = {
            "lambdas": self.lambdas.tolist(),
            "intercepts": self.intercepts.tolist(),
            "p": int(self.coefs.shape[1]),
            "coefs": [[[int(j), float(row[j])] for j in np.flatnonzero(row)]
                      for row in self.coefs],
            "deviance": self.deviance.tolist(),
            "null_deviance": self.null_deviance,
            "lambda_max": self.lambda_max,
            "penalty_factors": self.penalty_factors.tolist(),
        }
        if include_offset and self.offset is not None:
            d["offset"] = self.offset.tolist()
        return d

    @classmethod
    def from_dict(cls, d):
        m, p = len(d["lambdas"]), int(d["p"])
        coefs = np.zeros((m, p))
        for i, pairs in enumerate(d["coefs"]):
            for j, v in pairs:
                coefs[i, int(j)] = v
        offset = d.get("offset")
        return cls(np.array(d["lambdas"], dtype=float),
                   np.array(d["intercepts"], dtype=float), coefs,
                   np.array(d["deviance"], dtype=float),
                   float(d["null_deviance"]), float(d["lambda_max"]),
                   np.array(d["penalty_factors"], dtype=float),
                   None if offset is None else np.array(offset, dtype=float))


def _check_inputs(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2:
        raise DimensionMismatch("X must be two-dimensional")
    if y.shape != (X.shape[0],):
        raise DimensionMismatch(f"y has shape {y.shape}, expected ({X.shape[0]},)")
    if not np.all((y == 0) | (y == 1)):
        raise NonBinaryOutcome("y must contain only 0 and 1")
    return X, y.astype(float)


def _kkt_residual(g, c, pen):
    """Largest stationarity violation of a penalized point (intercept included)."""
    active = c != 0
    r = np.where(active, np.abs(g + pen * np.sign(c)),
                 np.maximum(np.abs(g) - pen, 0.0))
    return float(r.max()) if r.size else 0.0


def _newton_restricted(X, y, offset, cols, pen_cols, c, tol, max_iter):
    """Proximal Newton on the columns ``cols`` (others held at zero).

    ``c`` holds ``[intercept, beta[cols]]``.  Returns the solution and the
    number of Newton steps taken.
    """
    n = y.shape[0]
    Xa = X[:, cols]
    pen = np.concatenate([[0.0], pen_cols])
    c = c.copy()
    eta = c[0] + Xa @ c[1:] + offset
    for it in range(max_iter):
        prob = expit(eta)
        r = prob - y
        g = np.empty(c.size)
        g[0] = r.mean()
        g[1:] = Xa.T @ r / n
        if _kkt_residual(g, c, pen) <= tol:
            return c, it
        w = np.maximum(prob * (1.0 - prob), WEIGHT_FLOOR)
        H = np.empty((c.size, c.size))
        H[0, 0] = w.mean()
        wX = Xa * w[:, None]
        H[0, 1:] = H[1:, 0] = wX.sum(axis=0) / n
        H[1:, 1:] = Xa.T @ wX / n
        x, _ = cd_quadratic(H, g, c, pen, 100000, 1e-28)
        d = x - c
        f0 = mean_log_loss(eta, y) + pen @ np.abs(c)
        decrease = g @ d + pen @ (np.abs(x) - np.abs(c))
        step = 1.0
        while True:
            ct = c + step * d
            eta_t = ct[0] + Xa @ ct[1:] + offset
            ft = mean_log_loss(eta_t, y) + pen @ np.abs(ct)
            # rounding allowance: near the optimum the predicted decrease
            # falls below the resolution of the objective
            if ft <= f0 + 1e-4 * step * decrease + 8 * np.finfo(float).eps * abs(f0) \
                    or step < 1e-10:
                break
            step *= 0.5
        if step < 1e-10 and ft >= f0:
            # no representable progress: accept the current point
            return c, it
        c, eta = ct, eta_t
    raise Diverged(f"proximal Newton did not reach tolerance {tol:g} "
                   f"in {max_iter} iterations")


def _saturated(eta):
    """Fitted probabilities beyond the clamp band: the fit is separating."""
    bound = np.log((1.0 - PROB_CLAMP) / PROB_CLAMP)
    return bool(np.any(np.abs(eta) > bound))


def _null_fit(X, y, offset, unpen, tol, max_iter):
    """Intercept + offset + unpenalized features, no penalty."""
    cols = np.flatnonzero(unpen)
    mean_y = y.mean()
    c0 = np.zeros(cols.size + 1)
    if np.all(offset == 0) and 0 < mean_y < 1:
        c0[0] = np.log(mean_y / (1 - mean_y))
    c, _ = _newton_restricted(X, y, offset, cols, np.zeros(cols.size), c0,
                              tol, max_iter)
    beta = np.zeros(X.shape[1])
    beta[cols] = c[1:]
    return c[0], beta


def lambda_max(X, y, penalty_factors=None, offset=None, tol=1e-10, max_iter=100):
    """Smallest lambda at which every penalized coefficient is zero.

    ``max_j |x_j'(y - p0)| / (n pf_j)`` over finite, positive ``pf_j``, where
    ``p0`` are fitted probabilities of the intercept + offset model (plus any
    unpenalized features).

    Raises
    ------
    NoPenalizedFeatures
        If no feature has a finite positive penalty factor.
    """
    X, y = _check_inputs(X, y)
    _, pf, offset = PenaltySpec(None, penalty_factors, offset).resolve(*X.shape)
    penal = np.isfinite(pf) & (pf > 0)
    if not penal.any():
        raise NoPenalizedFeatures("no feature has a finite positive penalty factor")
    mu, beta = _null_fit(X, y, offset, pf == 0, tol, max_iter)
    g = X.T @ (expit(mu + X @ beta + offset) - y) / X.shape[0]
    return float(np.max(np.abs(g[penal]) / pf[penal]))


def default_lambda_path(lam_max, n_lambda=50, eps_ratio=1e-4):
    """Log-linear grid from ``lam_max`` down to ``eps_ratio * lam_max``."""
    if n_lambda < 2:
        raise ValueError("n_lambda must be at least 2")
    path = np.geomspace(lam_max, eps_ratio * lam_max, n_lambda)
    path[0] = lam_max
    return path


def fit_logistic_lasso(X, y, spec=None, tol=1e-9, max_iter=100, *,
                       n_lambda=50, eps_ratio=None, early_stop=True):
    """Fit an L1-penalized logistic regression path.

    Parameters
    ----------
    X : array of shape (n, p)
        Design matrix; standardize it beforehand unless raw scales are wanted.
    y : array of shape (n,)
        Binary outcome.
    spec : PenaltySpec, optional
    tol : float
        Absolute tolerance on the KKT residual of each solution.
    max_iter : int
        Newton iterations allowed per lambda.
    n_lambda, eps_ratio : int, float
        Automatic grid size and depth; ``eps_ratio`` defaults to 1e-2 when
        ``n < p`` and 1e-4 otherwise.
    early_stop : bool
        Stop the path once the fraction of deviance explained exceeds 0.999
        or stops improving (relative gain < 1e-5), after at least 5 entries,
        or once fitted probabilities leave ``[1e-9, 1 - 1e-9]``.  A lambda
        that fails to converge after the first also ends the path (logged).

    Returns
    -------
    LassoPath
    """
    X, y = _check_inputs(X, y)
    n, p = X.shape
    spec = spec or PenaltySpec()
    lambdas, pf, offset = spec.resolve(n, p)
    excluded = np.isinf(pf)
    unpen = pf == 0
    penal = ~excluded & ~unpen
    pf_pen = np.where(penal, pf, 0.0)

    mu0, beta0 = _null_fit(X, y, offset, unpen, tol, max_iter)
    eta0 = mu0 + X @ beta0 + offset
    null_dev = 2.0 * n * mean_log_loss(eta0, y)
    if penal.any():
        g = X.T @ (expit(eta0) - y) / n
        lam_max = float(np.max(np.abs(g[penal]) / pf[penal]))
    else:
        lam_max = 0.0
    if lambdas is None:
        if lam_max > 0:
            eps = eps_ratio if eps_ratio is not None else (1e-2 if n < p else 1e-4)
            lambdas = default_lambda_path(lam_max, n_lambda, eps)
        else:
            lambdas = np.array([0.0])

    mu, beta = mu0, beta0.copy()
    grad = X.T @ (expit(eta0) - y) / n
    lam_prev = max(lam_max, lambdas[0])
    ever = unpen.copy()
    out_lam, out_mu, out_beta, out_dev, iters = [], [], [], [], []
    for m, lam in enumerate(lambdas):
        strong = penal & (np.abs(grad) >= pf_pen * (2 * lam - lam_prev))
        work = ever | strong | (beta != 0)
        n_steps = 0
        while True:
            cols = np.flatnonzero(work)
            c = np.concatenate([[mu], beta[cols]])
            try:
                c, steps = _newton_restricted(X, y, offset, cols, lam * pf[cols],
                                              c, tol, max_iter)
            except Diverged:
                if m == 0:
                    raise
                logger.warning("path truncated at lambda index %d: no convergence", m)
                c = None
                break
            n_steps += steps
            mu = c[0]
            beta = np.zeros(p)
            beta[cols] = c[1:]
            eta = mu + X @ beta + offset
            grad = X.T @ (expit(eta) - y) / n
            viol = penal & ~work & (np.abs(grad) > lam * pf_pen + tol)
            if not viol.any():
                break
            work |= viol
        if c is None:
            break
        ever |= beta != 0
        dev = 2.0 * n * mean_log_loss(eta, y)
        out_lam.append(lam)
        out_mu.append(mu)
        out_beta.append(beta.copy())
        out_dev.append(dev)
        iters.append(n_steps)
        lam_prev = lam
        if early_stop and m >= 4 and null_dev > 0:
            ratio = 1 - dev / null_dev
            prev_ratio = 1 - out_dev[-2] / null_dev
            if ratio >= 0.999 or (ratio - prev_ratio) < 1e-5 * ratio:
                break
        if early_stop and m >= 1 and _saturated(eta):
            break

    path = LassoPath(np.array(out_lam), np.array(out_mu), np.vstack(out_beta),
                     np.array(out_dev), float(null_dev), lam_max, pf,
                     offset if spec.offset is not None else None, iters)
    nz = path.nonzero_count
    if np.any(np.diff(nz) < 0):
        logger.info("nonzero count decreases along the path at %s",
                    np.flatnonzero(np.diff(nz) < 0).tolist())
    return path


def predict_proba(entry, X, offset=None):
    """``sigmoid(intercept + X @ beta + offset)`` for one path entry."""
    X = np.asarray(X, dtype=float)
    beta = np.asarray(entry.beta)
    if X.ndim != 2 or X.shape[1] != beta.shape[0]:
        raise DimensionMismatch(f"X has shape {X.shape}, beta has {beta.shape[0]} entries")
    eta = entry.intercept + X @ beta
    if offset is not None:
        offset = np.asarray(offset, dtype=float)
        if offset.shape != (X.shape[0],):
            raise DimensionMismatch("offset length does not match X")
        eta = eta + offset
    return sigmoid(eta)


def kkt_check(X, y, entry, penalty_factors=None, offset=None, tol=1e-6,
              lam_max=None):
    """Check first-order optimality of one path entry.

    Nonzero ``beta_j``: ``|g_j + lam pf_j sign(beta_j)| <= tol * lam_max * max(pf_j, 1)``.
    Zero ``beta_j`` with finite ``pf_j > 0``: ``|g_j| <= lam pf_j (1 + tol)``.
    Zero ``beta_j`` with ``pf_j = 0``: ``|g_j| <= tol * lam_max``.
    Intercept: ``|g_0| <= tol``.  Excluded features must be exactly zero.

    Returns
    -------
    ok : bool
    worst : float
        Largest violation relative to its bound (<= 1 when ok).
    """
    X, y = _check_inputs(X, y)
    n, p = X.shape
    _, pf, offset = PenaltySpec(None, penalty_factors, offset).resolve(n, p)
    beta = np.asarray(entry.beta, dtype=float)
    lam = entry.lam
    if lam_max is None:
        lam_max = lambda_max(X, y, pf, offset) if np.any(np.isfinite(pf) & (pf > 0)) else 1.0
    r = expit(entry.intercept + X @ beta + offset) - y
    g = X.T @ r / n
    excluded = np.isinf(pf)
    if np.any(beta[excluded] != 0):
        return False, np.inf
    ratios = [abs(r.mean()) / tol]
    pf_f = np.where(excluded, 0.0, pf)
    nz = beta != 0
    if nz.any():
        ratios.extend(np.abs(g[nz] + lam * pf_f[nz] * np.sign(beta[nz]))
                      / (tol * lam_max * np.maximum(pf_f[nz], 1.0)))
    zpen = ~nz & ~excluded & (pf > 0)
    if zpen.any():
        ratios.extend(np.abs(g[zpen]) / (lam * pf[zpen] * (1 + tol)))
    zfree = ~nz & (pf == 0)
    if zfree.any():
        ratios.extend(np.abs(g[zfree]) / (tol * lam_max))
    worst = float(max(ratios))
    return worst <= 1.0, worst


@dataclass
class LassoModel:
    """A CV-selected lasso fit on a dataset, with its design bookkeeping.

    Coefficients live on the standardized, reference-coded design produced
    by :func:`stratlasso.core.prepare_design`.
    """

    features: tuple
    columns: list
    standardization: object
    path: LassoPath
    selected: int
    cv: object = None

    @property
    def best(self):
        return self.path.entry(self.selected)

    def design(self, X):
        Z, _, _ = prepare_design(X, self.features, "reference", self.standardization)
        return Z

    def predict_proba(self, X, offset=None, index=None):
        entry = self.path.entry(self.selected if index is None else index)
        return predict_proba(entry, self.design(X), offset)

    def to_dict(self):
        return {
            "kind": "lasso",
            "features": [feature_to_dict(f) for f in self.features],
            "columns": [[c.feature, c.level, c.name] for c in self.columns],
            "standardization": self.standardization.to_dict(),
            "path": self.path.to_dict(include_offset=True),
            "selected": self.selected,
            "cv": None if self.cv is None else self.cv.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(feature_from_dict(f) for f in d["features"]),
                   [ExpandedColumn(int(a), None if b is None else int(b), c)
                    for a, b, c in d["columns"]],
                   StandardizationRecord.from_dict(d["standardization"]),
                   LassoPath.from_dict(d["path"]), int(d["selected"]),
                   None if d.get("cv") is None else CvCurve.from_dict(d["cv"]))


def cv_lasso_path(Z, y, folds, penalty_factors=None, offset=None, *,
                  n_lambda=50, eps_ratio=None, lambdas=None, tol=1e-9,
                  threads=1):
    """Fit a path on all rows and pick lambda by fold-averaged deviance.

    Returns ``(path, curve, selected_index)``.  When no feature carries a
    finite positive penalty the path has a single unpenalized entry and the
    curve has length one.
    """
    Z = np.asarray(Z, dtype=float)
    y = np.asarray(y)
    n = Z.shape[0]
    offset = np.zeros(n) if offset is None else np.asarray(offset, dtype=float)
    spec = PenaltySpec(lambdas, penalty_factors, offset)
    path = fit_logistic_lasso(Z, y, spec, tol, n_lambda=n_lambda, eps_ratio=eps_ratio)
    penalized = bool(np.any(np.isfinite(path.penalty_factors) & (path.penalty_factors > 0)))

    def fit_fn(rows, grid):
        sub = fit_logistic_lasso(
            Z[rows], y[rows],
            PenaltySpec(grid if penalized else None, path.penalty_factors, offset[rows]),
            tol)
        return lambda te: sigmoid(sub.linear_predictor(Z[te], offset[te]))

    curve = cv_deviance(fit_fn, y, folds, path.lambdas, threads=threads)
    return path, curve, select_min(curve)


def fit_lasso_cv(dataset, folds, *, penalty_factors=None, offset=None,
                 n_lambda=50, eps_ratio=None, tol=1e-9, threads=1):
    """Standardize, fit a lasso path on ``dataset`` and select lambda by CV."""
    Z, columns, record = prepare_design(dataset, dataset.features, "reference")
    path, curve, best = cv_lasso_path(Z, dataset.y, folds, penalty_factors, offset,
                                      n_lambda=n_lambda, eps_ratio=eps_ratio,
                                      tol=tol, threads=threads)
    return LassoModel(dataset.features, columns, record, path, best, curve)
