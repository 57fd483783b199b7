"""Random instances and optimality checks shared by several test modules."""

import numpy as np
from scipy.special import expit

from stratlasso.core import Dataset, FeatureMeta
from stratlasso.glinternet import _group_norms, _layout

# criterion result lines, echoed in the terminal summary
ACCEPTANCE_LINES = []


def random_lasso_instance(seed):
    """Small dense logistic problem: ``n`` in [15, 60], ``p`` in [1, 10]."""
    rng = np.random.default_rng(seed)
    n, p = int(rng.integers(15, 61)), int(rng.integers(1, 11))
    X = rng.normal(size=(n, p))
    beta = rng.normal(size=p) * rng.integers(0, 2, p)
    y = (rng.random(n) < expit(X @ beta)).astype(int)
    if y.min() == y.max():
        y[0] = 1 - y[0]
    return X, y


def random_instance(seed, categorical=True):
    rng = np.random.default_rng(seed)
    n, p = int(rng.integers(40, 200)), int(rng.integers(2, 6))
    feats, cols = [], []
    for j in range(p):
        if categorical and j == p - 1 and rng.random() < 0.5:
            levels = tuple(str(v) for v in range(int(rng.integers(2, 4))))
            feats.append(FeatureMeta(f"f{j}", "categorical", levels, False))
            cols.append(rng.integers(0, len(levels), n).astype(float))
        else:
            feats.append(FeatureMeta(f"f{j}", "continuous", (), j < 2))
            cols.append(rng.normal(size=n))
    X = np.column_stack(cols)
    eta = X[:, 0] - 0.5 * X[:, 1] + X[:, 0] * X[:, 1]
    y = (rng.random(n) < expit(eta)).astype(int)
    return Dataset(X, y, np.full(n, "A"), feats)


def group_kkt_ratio(model, ds):
    """Largest group stationarity violation relative to its bound (<= 1 passes)."""
    Z = model.design.matrix(ds.X)
    starts, sizes = _layout(model.structure)
    gamma = model.structure.group_weights
    n = ds.n
    worst = 0.0
    for i, lam in enumerate(model.lambdas):
        b = model.coefs[i]
        r = expit(model.intercepts[i] + Z @ b) - ds.y
        g = Z.T @ r / n
        worst = max(worst, abs(r.mean()) / 1e-5)
        bn = _group_norms(b, starts)
        for k, (s, z) in enumerate(zip(starts, sizes)):
            if bn[k] > 0:
                v = np.linalg.norm(g[s:s + z] + lam * gamma[k] * b[s:s + z] / bn[k]) / 1e-5
            else:
                v = np.linalg.norm(g[s:s + z]) / (lam * gamma[k] * (1 + 1e-5))
            worst = max(worst, v)
    return worst


def hierarchy_violations(model):
    bad = 0
    for i in range(len(model)):
        theta = model.main_effects(i)
        for (a, b), coef in model.interaction_coefs(i).items():
            if np.any(coef != 0) and not (np.any(theta[a] != 0) and np.any(theta[b] != 0)):
                bad += 1
    return bad
