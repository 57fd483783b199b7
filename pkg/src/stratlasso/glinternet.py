"""Hierarchical first-order interaction model fit by overlapped group-lasso.

Every feature gets a main-effect group.  Every pair ``(c, j)`` with ``c`` an
interaction candidate gets an interaction group holding its own copies of
both parents' columns plus their product columns.  The composite main effect
of a feature is the sum of its coefficients across all groups containing it,
so a nonzero interaction group always carries nonzero parent terms (strong
hierarchy) without explicit constraints.

The penalized objective is the mean logistic loss plus
``lam * sum_g gamma_g * ||beta_g||_2`` with ``gamma_g = sqrt(|g|)``.  It is
minimized by monotone FISTA with backtracking and group strong-rule
screening.
"""

from __future__ import annotations

import csv
import io
import logging
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .core import StandardizationRecord, expand_features, standardize
from .cv import CvCurve, cv_deviance, select_min
from .dataio import feature_from_dict, feature_to_dict
from .errors import DimensionMismatch, Diverged, NoCandidates, NonBinaryOutcome
from .lasso import mean_log_loss, sigmoid

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class InteractionGroupStructure:
    """Group layout of the expanded design.

    ``pairs[k] = (c, j)`` names the features of interaction group ``k``;
    ``c`` is the candidate.  Main groups come first in the design, one per
    feature, then the interaction groups in ``pairs`` order.
    """

    features: tuple
    pairs: tuple
    main_weights: tuple
    interaction_weights: tuple

    @property
    def n_groups(self):
        return len(self.features) + len(self.pairs)

    @property
    def group_weights(self):
        return np.array(self.main_weights + self.interaction_weights)

    def block_size(self, f):
        feat = self.features[f]
        return len(feat.levels) if feat.is_categorical else 1

    def group_sizes(self):
        sizes = [self.block_size(f) for f in range(len(self.features))]
        for a, b in self.pairs:
            sa, sb = self.block_size(a), self.block_size(b)
            sizes.append(sa + sb + sa * sb)
        return np.array(sizes, dtype=np.int64)

    def to_dict(self):
        return {"features": [feature_to_dict(f) for f in self.features],
                "pairs": [list(p) for p in self.pairs],
                "main_weights": list(self.main_weights),
                "interaction_weights": list(self.interaction_weights)}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(feature_from_dict(f) for f in d["features"]),
                   tuple((int(a), int(b)) for a, b in d["pairs"]),
                   tuple(float(w) for w in d["main_weights"]),
                   tuple(float(w) for w in d["interaction_weights"]))


def candidate_pairs(features):
    """Pairs ``(c, j)``: ``c`` a candidate, ``j != c``, each unordered pair once."""
    cand = [i for i, f in enumerate(features) if f.interaction_candidate]
    pairs = []
    for c in cand:
        for j in range(len(features)):
            if j == c or (features[j].interaction_candidate and j < c):
                continue
            pairs.append((c, j))
    return pairs


def build_groups(features, interactions=True, weights=None):
    """Group structure for a feature list.

    Parameters
    ----------
    features : sequence of FeatureMeta
    interactions : bool
        ``False`` gives a main-effects-only group lasso (no candidates needed).
    weights : {None, "sqrt", "unit"}
        Group weights; the default ``sqrt`` uses the square root of the
        group's column count.

    Raises
    ------
    NoCandidates
        If interactions are requested but no feature is a candidate.
    """
    features = tuple(features)
    if interactions:
        if not any(f.interaction_candidate for f in features):
            raise NoCandidates("no feature is flagged as an interaction candidate")
        pairs = tuple(candidate_pairs(features))
    else:
        pairs = ()
    probe = InteractionGroupStructure(features, pairs, (), ())
    sizes = probe.group_sizes()
    if weights in (None, "sqrt"):
        w = np.sqrt(sizes.astype(float))
    elif weights == "unit":
        w = np.ones(sizes.size)
    else:
        raise ValueError(f"unknown weights {weights!r}")
    m = len(features)
    return InteractionGroupStructure(features, pairs, tuple(w[:m].tolist()),
                                     tuple(w[m:].tolist()))


def group_soft_threshold(v, t):
    """``0`` if ``||v|| <= t`` else ``v * (1 - t / ||v||)``."""
    if t < 0:
        raise ValueError("threshold must be non-negative")
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v)
    if norm <= t:
        return np.zeros_like(v)
    return v * (1.0 - t / norm)


@dataclass(frozen=True)
class GroupDesign:
    """Expanded design plus the statistics needed to rebuild it on new rows."""

    structure: InteractionGroupStructure
    main_record: StandardizationRecord
    product_records: tuple  # per pair: (mean, scale) or None

    def blocks(self, X):
        """Main-effect blocks (standardized continuous, full indicators)."""
        feats = self.structure.features
        Z, columns = expand_features(X, feats, "indicator")
        Z = self.main_record.apply(Z)
        out = [[] for _ in feats]
        for k, col in enumerate(columns):
            out[col.feature].append(Z[:, k])
        return [np.column_stack(b) for b in out]

    def product_block(self, blocks, k):
        a, b = self.structure.pairs[k]
        A, B = blocks[a], blocks[b]
        P = (A[:, :, None] * B[:, None, :]).reshape(A.shape[0], -1)
        rec = self.product_records[k]
        if rec is not None:
            P = (P - rec[0]) / rec[1]
        return P

    def matrix(self, X):
        blocks = self.blocks(X)
        cols = list(blocks)
        for k, (a, b) in enumerate(self.structure.pairs):
            cols.extend([blocks[a], blocks[b], self.product_block(blocks, k)])
        return np.hstack(cols)

    def to_dict(self):
        return {"structure": self.structure.to_dict(),
                "main_record": self.main_record.to_dict(),
                "product_records": [None if r is None else [r[0], r[1]]
                                    for r in self.product_records]}

    @classmethod
    def from_dict(cls, d):
        return cls(InteractionGroupStructure.from_dict(d["structure"]),
                   StandardizationRecord.from_dict(d["main_record"]),
                   tuple(None if r is None else (float(r[0]), float(r[1]))
                         for r in d["product_records"]))


def make_design(X, structure):
    """Estimate standardization on ``X`` and return ``(GroupDesign, Z)``.

    Continuous main effects are standardized; continuous x continuous
    products are re-standardized; indicator columns and level-sliced
    products are left as they are.
    """
    feats = structure.features
    Zm, columns = expand_features(X, feats, "indicator")
    cont = [k for k, c in enumerate(columns) if c.level is None]
    _, main_record = standardize(Zm, cont, [c.name for c in columns])
    design = GroupDesign(structure, main_record, tuple(None for _ in structure.pairs))
    blocks = design.blocks(X)
    records = []
    for k, (a, b) in enumerate(structure.pairs):
        if feats[a].is_categorical or feats[b].is_categorical:
            records.append(None)
            continue
        prod = blocks[a][:, 0] * blocks[b][:, 0]
        mu = float(prod.mean())
        sd = float(np.sqrt(np.mean((prod - mu) ** 2)))
        records.append((mu, sd) if sd > 0 else None)
    design = GroupDesign(structure, main_record, tuple(records))
    return design, design.matrix(X)


# --- solver -----------------------------------------------------------------

def _group_norms(v, starts):
    return np.sqrt(np.add.reduceat(v * v, starts)) if starts.size else np.zeros(0)


def _prox(v, starts, sizes, thresh):
    norms = _group_norms(v, starts)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(norms > thresh, 1.0 - thresh / norms, 0.0)
    return v * np.repeat(scale, sizes)


def group_kkt_residuals(grad_b, grad_mu, beta, starts, sizes, thresh):
    """Per-group stationarity residuals.

    Active group: ``||g_g + thresh_g * b_g / ||b_g|| ||``.
    Inactive group: ``max(||g_g|| - thresh_g, 0)``.
    Returns ``(intercept residual, per-group residuals, active mask)``.
    """
    bn = _group_norms(beta, starts)
    active = bn > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        unit = beta / np.repeat(np.where(active, bn, 1.0), sizes)
    act_res = _group_norms(grad_b + np.repeat(thresh, sizes) * unit, starts)
    gn = _group_norms(grad_b, starts)
    res = np.where(active, act_res, np.maximum(gn - thresh, 0.0))
    return abs(grad_mu), res, active


def _fista(Z, y, starts, sizes, thresh, mu, beta, L, tol, max_iter,
           history=None, check_every=10):
    """Monotone FISTA with backtracking and momentum restarts.

    Works on a column-contiguous group design; ``thresh`` holds
    ``lam * gamma_g`` per group.  Returns ``(mu, beta, L, iterations)``.
    """
    n = y.shape[0]

    def grad(eta):
        r = expit(eta) - y
        return r.mean(), Z.T @ r / n

    def converged(g_mu, g_b, b):
        gm, res, _ = group_kkt_residuals(g_b, g_mu, b, starts, sizes, thresh)
        return gm <= tol and (res.size == 0 or res.max() <= tol), max(
            gm, res.max() if res.size else 0.0)

    x_mu, x_b = mu, beta.copy()
    eta_x = x_mu + Z @ x_b
    F_x = mean_log_loss(eta_x, y) + thresh @ _group_norms(x_b, starts)
    if history is not None:
        history.append(F_x)
    y_mu, y_b, eta_y = x_mu, x_b, eta_x
    t = 1.0
    worst = np.inf
    for it in range(max_iter):
        g_mu, g_b = grad(eta_y)
        if y_b is x_b:
            ok, worst = converged(g_mu, g_b, x_b)
            if ok:
                return x_mu, x_b, L, it
        elif it % check_every == 0:
            ok, worst = converged(*grad(eta_x), x_b)
            if ok:
                return x_mu, x_b, L, it
        f_y = mean_log_loss(eta_y, y)
        L *= 0.9
        while True:
            z_mu = y_mu - g_mu / L
            z_b = _prox(y_b - g_b / L, starts, sizes, thresh / L)
            d_mu, d_b = z_mu - y_mu, z_b - y_b
            eta_z = z_mu + Z @ z_b
            f_z = mean_log_loss(eta_z, y)
            bound = f_y + g_mu * d_mu + g_b @ d_b + 0.5 * L * (d_mu * d_mu + d_b @ d_b)
            if f_z <= bound + 1e-13 * abs(f_y):
                break
            L *= 2.0
        F_z = f_z + thresh @ _group_norms(z_b, starts)
        if F_z <= F_x:
            step_mu, step_b = z_mu - x_mu, z_b - x_b
            x_mu, x_b, eta_x, F_x = z_mu, z_b, eta_z, F_z
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            # gradient-based restart when momentum points uphill
            if d_mu * step_mu + d_b @ step_b < 0:
                t_new = 1.0
            mom = (t - 1.0) / t_new
            if mom > 0:
                y_mu, y_b = x_mu + mom * step_mu, x_b + mom * step_b
                eta_y = y_mu + Z @ y_b
            else:
                y_mu, y_b, eta_y = x_mu, x_b, eta_x
            t = t_new
        else:
            t = 1.0
            y_mu, y_b, eta_y = x_mu, x_b, eta_x
        if history is not None:
            history.append(F_x)
    ok, worst = converged(*grad(eta_x), x_b)
    if ok:
        return x_mu, x_b, L, max_iter
    raise Diverged(f"FISTA did not reach tolerance {tol:g} in {max_iter} "
                   f"iterations (residual {worst:.3g})")


# --- path -------------------------------------------------------------------

def _layout(structure):
    sizes = structure.group_sizes()
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
    return starts, sizes


def group_lambda_max(Z, y, structure):
    """``max_g ||Z_g'(y - p0)|| / (n gamma_g)`` with ``p0`` the intercept-only fit."""
    starts, _ = _layout(structure)
    n = y.shape[0]
    r = y.mean() - y
    g = Z.T @ r / n
    return float(np.max(_group_norms(g, starts) / structure.group_weights))


def fit_group_path(Z, y, structure, lambdas=None, *, n_lambda=50, eps_ratio=None,
                   tol=1e-6, max_iter=20000, early_stop=True, history=None):
    """Group-lasso logistic path on a prebuilt design.

    Returns a dict with ``lambdas``, ``intercepts``, ``coefs``, ``deviance``,
    ``null_deviance`` and ``lambda_max``.  ``history``, when a list, receives
    the objective trace of every FISTA run.
    """
    Z = np.asarray(Z, dtype=float)
    y = np.asarray(y)
    if not np.all((y == 0) | (y == 1)):
        raise NonBinaryOutcome("y must contain only 0 and 1")
    y = y.astype(float)
    n, q = Z.shape
    starts, sizes = _layout(structure)
    if sizes.sum() != q:
        raise DimensionMismatch(f"design has {q} columns, structure expects {sizes.sum()}")
    gamma = structure.group_weights
    ybar = y.mean()
    mu = float(np.log(ybar / (1 - ybar))) if 0 < ybar < 1 else 0.0
    null_dev = 2.0 * n * mean_log_loss(np.full(n, mu), y)
    lam_max = group_lambda_max(Z, y, structure)
    if lambdas is None:
        eps = eps_ratio if eps_ratio is not None else (1e-2 if n < q else 1e-4)
        lambdas = np.geomspace(lam_max, eps * lam_max, n_lambda)
        lambdas[0] = lam_max
    lambdas = np.atleast_1d(np.asarray(lambdas, dtype=float))
    if np.any(np.diff(lambdas) >= 0):
        raise ValueError("lambda path must be strictly descending")

    col_group = np.repeat(np.arange(sizes.size), sizes)
    beta = np.zeros(q)
    grad = Z.T @ (expit(np.full(n, mu)) - y) / n
    # global curvature bound for the mean logistic loss, intercept included
    L = 0.25 * (np.linalg.norm(np.column_stack([np.ones(n), Z]), 2) ** 2) / n
    lam_prev = max(lam_max, lambdas[0])
    ever = np.zeros(sizes.size, dtype=bool)
    out = {"lambdas": [], "intercepts": [], "coefs": [], "deviance": []}
    for m, lam in enumerate(lambdas):
        gnorm = _group_norms(grad, starts)
        work = ever | (gnorm >= gamma * (2 * lam - lam_prev))
        while True:
            cols = np.flatnonzero(work[col_group])
            w_sizes = sizes[work]
            w_starts = np.concatenate([[0], np.cumsum(w_sizes)[:-1]]).astype(np.int64)
            if cols.size:
                mu, b, L, _ = _fista(Z[:, cols], y, w_starts, w_sizes,
                                     lam * gamma[work], mu, beta[cols], L, tol,
                                     max_iter, history)
                beta = np.zeros(q)
                beta[cols] = b
            else:
                beta = np.zeros(q)
                mu = float(np.log(ybar / (1 - ybar)))
            eta = mu + Z @ beta
            grad = Z.T @ (expit(eta) - y) / n
            gnorm = _group_norms(grad, starts)
            viol = ~work & (gnorm > lam * gamma)
            if not viol.any():
                break
            work |= viol
        ever |= _group_norms(beta, starts) > 0
        dev = 2.0 * n * mean_log_loss(eta, y)
        out["lambdas"].append(lam)
        out["intercepts"].append(mu)
        out["coefs"].append(beta.copy())
        out["deviance"].append(dev)
        lam_prev = lam
        if early_stop and m >= 4 and null_dev > 0:
            ratio = 1 - dev / null_dev
            prev = 1 - out["deviance"][-2] / null_dev
            if ratio >= 0.999 or (ratio - prev) < 1e-5 * ratio:
                break
    return {"lambdas": np.array(out["lambdas"]),
            "intercepts": np.array(out["intercepts"]),
            "coefs": np.vstack(out["coefs"]),
            "deviance": np.array(out["deviance"]),
            "null_deviance": float(null_dev), "lambda_max": lam_max}


@dataclass
class GlinternetModel:
    """Fitted interaction path with its design recipe.

    Coefficients are stored per expanded design column; use
    :meth:`main_effects` and :meth:`interaction_coefs` for the composite
    parameterization.
    """

    design: GroupDesign
    lambdas: np.ndarray
    intercepts: np.ndarray
    coefs: np.ndarray
    deviance: np.ndarray
    null_deviance: float
    lambda_max: float
    selected: int | None = None
    cv: CvCurve | None = None
    _slices: list = field(default=None, repr=False)

    def __len__(self):
        return len(self.lambdas)

    @property
    def structure(self):
        return self.design.structure

    def _group_slices(self):
        if self._slices is None:
            starts, sizes = _layout(self.structure)
            self._slices = [slice(int(s), int(s + z)) for s, z in zip(starts, sizes)]
        return self._slices

    def active_groups(self, i):
        return np.array([np.any(self.coefs[i, s] != 0) for s in self._group_slices()])

    def main_effects(self, i):
        """Composite main-effect coefficient block per feature."""
        st = self.structure
        sl = self._group_slices()
        nf = len(st.features)
        theta = [self.coefs[i, sl[f]].copy() for f in range(nf)]
        for k, (a, b) in enumerate(st.pairs):
            s = sl[nf + k]
            sa, sb = st.block_size(a), st.block_size(b)
            theta[a] += self.coefs[i, s.start:s.start + sa]
            theta[b] += self.coefs[i, s.start + sa:s.start + sa + sb]
        return theta

    def interaction_coefs(self, i):
        """Product-block coefficients per pair ``(c, j)``."""
        st = self.structure
        sl = self._group_slices()
        nf = len(st.features)
        out = {}
        for k, (a, b) in enumerate(st.pairs):
            s = sl[nf + k]
            skip = st.block_size(a) + st.block_size(b)
            out[(a, b)] = self.coefs[i, s.start + skip:s.stop].copy()
        return out

    def predict_proba(self, X, index=None):
        i = self.selected if index is None else index
        if i is None:
            raise ValueError("no lambda index given and none selected")
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(self.structure.features):
            raise DimensionMismatch(
                f"X has shape {X.shape}, model expects {len(self.structure.features)} features")
        Z = self.design.matrix(X)
        return sigmoid(self.intercepts[i] + Z @ self.coefs[i])

    def to_dict(self):
        return {
            "kind": "glinternet",
            "design": self.design.to_dict(),
            "lambdas": self.lambdas.tolist(),
            "intercepts": self.intercepts.tolist(),
            "q": int(self.coefs.shape[1]),
            "coefs": [[[int(j), float(row[j])] for j in np.flatnonzero(row)]
                      for row in self.coefs],
            "deviance": self.deviance.tolist(),
            "null_deviance": self.null_deviance,
            "lambda_max": self.lambda_max,
            "selected": self.selected,
            "cv": None if self.cv is None else self.cv.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        m, q = len(d["lambdas"]), int(d["q"])
        coefs = np.zeros((m, q))
        for i, pairs in enumerate(d["coefs"]):
            for j, v in pairs:
                coefs[i, int(j)] = v
        return cls(GroupDesign.from_dict(d["design"]), np.array(d["lambdas"], dtype=float),
                   np.array(d["intercepts"], dtype=float), coefs,
                   np.array(d["deviance"], dtype=float), float(d["null_deviance"]),
                   float(d["lambda_max"]), d["selected"],
                   None if d.get("cv") is None else CvCurve.from_dict(d["cv"]))


def fit_glinternet(dataset, structure=None, lambda_path=None, tol=1e-6,
                   max_iter=20000, *, n_lambda=50, eps_ratio=None, history=None):
    """Fit the interaction path on a dataset (no lambda selection)."""
    structure = structure or build_groups(dataset.features)
    if len(structure.features) != dataset.p:
        raise DimensionMismatch("structure and dataset disagree on the feature count")
    design, Z = make_design(dataset.X, structure)
    res = fit_group_path(Z, dataset.y, structure, lambda_path, n_lambda=n_lambda,
                         eps_ratio=eps_ratio, tol=tol, max_iter=max_iter,
                         history=history)
    return GlinternetModel(design, res["lambdas"], res["intercepts"], res["coefs"],
                           res["deviance"], res["null_deviance"], res["lambda_max"])


def cv_glinternet(dataset, folds, structure=None, *, n_lambda=50, eps_ratio=None,
                  tol=1e-6, max_iter=20000, threads=1):
    """Fit the path on all rows and select lambda by fold-averaged deviance.

    The design (standardization included) is estimated once on ``dataset``.
    """
    model = fit_glinternet(dataset, structure, None, tol, max_iter,
                           n_lambda=n_lambda, eps_ratio=eps_ratio)
    Z = model.design.matrix(dataset.X)
    y = dataset.y

    def fit_fn(rows, grid):
        res = fit_group_path(Z[rows], y[rows], model.structure, grid, tol=tol,
                             max_iter=max_iter)
        return lambda te: sigmoid(res["intercepts"] + Z[te] @ res["coefs"].T)

    curve = cv_deviance(fit_fn, y, folds, model.lambdas, threads=threads)
    model.selected = select_min(curve)
    model.cv = curve
    return model


# --- summaries ----------------------------------------------------------------

def extract_interactions(model, index):
    """Active interaction pairs at one lambda, strongest first.

    Returns a list of ``(candidate_name, partner_name, strength)`` with
    ``strength = ||theta_{c:j}||_2`` on the standardized design.
    """
    feats = model.structure.features
    rows = []
    for (a, b), theta in model.interaction_coefs(index).items():
        s = float(np.linalg.norm(theta))
        if s > 0:
            rows.append((feats[a].name, feats[b].name, s))
    rows.sort(key=lambda r: (-r[2], r[0], r[1]))
    return rows


def interaction_tallies(interactions):
    """Count of active interactions per candidate."""
    return Counter(c for c, _, _ in interactions)


def path_statistics(model):
    """Per lambda: ``(lambda, n_main_effects, n_interactions, cv_error)``.

    ``cv_error`` is ``nan`` where no CV curve covers that lambda.
    """
    out = []
    for i, lam in enumerate(model.lambdas):
        n_main = sum(bool(np.any(t != 0)) for t in model.main_effects(i))
        n_int = sum(bool(np.any(t != 0)) for t in model.interaction_coefs(i).values())
        cv_err = float(model.cv.mean[i]) if model.cv is not None and i < len(model.cv) \
            else float("nan")
        out.append((float(lam), n_main, n_int, cv_err))
    return out


def path_statistics_csv(model):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["index", "lambda", "n_main_effects", "n_interactions", "cv_error"])
    for i, (lam, nm, ni, err) in enumerate(path_statistics(model)):
        w.writerow([i, repr(lam), nm, ni, repr(err)])
    return buf.getvalue()


def export_network(model, index):
    """Interaction network as CSV edge list sorted by descending strength."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["candidate", "partner", "strength"])
    for c, j, s in extract_interactions(model, index):
        w.writerow([c, j, repr(abs(s))])
    return buf.getvalue()
