import numpy as np
import pytest

from stratlasso.core import Dataset, FeatureMeta


def continuous_features(p, candidates=()):
    return [FeatureMeta(f"x{j + 1}", "continuous", (), j in candidates) for j in range(p)]


def logistic_data(rng, n, p, beta=None, intercept=0.0):
    X = rng.standard_normal((n, p))
    if beta is None:
        beta = np.zeros(p)
    prob = 1.0 / (1.0 + np.exp(-(intercept + X @ beta)))
    y = (rng.random(n) < prob).astype(int)
    if y.min() == y.max():
        y[0] = 1 - y[0]
    return X, y


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE_LINES

    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip("]"))):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def three_groups():
    """Counts {WB: 100, SA: 20, AF: 15}, both classes in every group."""
    rng = np.random.default_rng(3)
    sizes = {"WB": 100, "SA": 20, "AF": 15}
    group = np.concatenate([np.full(n, g) for g, n in sizes.items()])
    n = group.size
    X = rng.standard_normal((n, 3))
    y = np.zeros(n, dtype=int)
    start = 0
    for g, m in sizes.items():
        y[start:start + max(2, m // 4)] = 1
        start += m
    return Dataset(X, y, group, continuous_features(3))


SIM_SEEDS = range(100)


@pytest.fixture(scope="session")
def transfer_runs():
    """Per seed on the ``transfer`` preset, against an independent minority test sample.

    Records minority-group test AUC of the pretrained and group-only lasso,
    the fine-tuned minority model's and the plain Mix lasso's nonzero counts,
    the chosen alpha and the elapsed time.
    """
    import time

    from stratlasso.core import DataConfig, assemble, make_folds
    from stratlasso.evaluation import auc
    from stratlasso.lasso import fit_lasso_cv
    from stratlasso.pretrained import fit_pretrained
    from stratlasso.synth import cohort_preset, generate

    rows, t0 = [], time.perf_counter()
    for seed in SIM_SEEDS:
        cfg = cohort_preset("transfer", seed=seed)
        train = generate(cfg)
        test = generate(cfg.with_sizes({"MAJ": 0, "MIN": 2000}, seed=10_000 + seed))
        folds = make_folds(train, 3, seed)
        pt = fit_pretrained(train, folds)
        minority = assemble(train, DataConfig.group_only("MIN"))
        group_only = fit_lasso_cv(minority, make_folds(minority, 3, seed))
        mix = fit_lasso_cv(train, folds)
        rows.append(dict(
            seed=seed,
            auc_pt=auc(pt.predict_proba(test.X, test.group), test.y),
            auc_group=auc(group_only.predict_proba(test.X), test.y),
            nz_pt=pt.group_fits["MIN"].best.nonzero_count,
            nz_mix=mix.best.nonzero_count,
            alpha=pt.alpha))
    return rows, time.perf_counter() - t0


@pytest.fixture(scope="session")
def interaction_runs():
    """Per seed on the ``interaction`` preset: CV-selected glinternet diagnostics."""
    import time

    from stratlasso.core import make_folds
    from stratlasso.glinternet import cv_glinternet, extract_interactions, path_statistics
    from stratlasso.synth import cohort_preset, generate

    rows, t0 = [], time.perf_counter()
    for seed in SIM_SEEDS:
        ds = generate(cohort_preset("interaction", seed=seed))
        model = cv_glinternet(ds, make_folds(ds, 3, seed))
        found = extract_interactions(model, model.selected)
        stats = path_statistics(model)
        rows.append(dict(
            seed=seed,
            recovered=any(a == "x1" and b == "x2" for a, b, _ in found),
            top_is_planted=bool(found) and found[0][:2] == ("x1", "x2"),
            null_at_max=tuple(stats[0][1:3]) == (0, 0),
            argmin_inside=0 < model.selected < len(model.cv) - 1))
    return rows, time.perf_counter() - t0
