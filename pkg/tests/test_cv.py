import numpy as np
import pytest

from stratlasso.core import Dataset, FoldAssignment, make_folds
from stratlasso.cv import CvCurve, cv_deviance, deviance_per_row, select_min
from stratlasso.errors import DegenerateFold

from conftest import continuous_features


def constant_fit(y):
    """fit_fn predicting the training base rate for every grid point."""
    def fit_fn(rows, grid):
        p = y[rows].mean()
        return lambda te: np.full((te.size, len(grid)), p)
    return fit_fn


def grid_fit(y):
    """Grid point ``g`` shrinks the base rate toward 0.5 by factor ``g``."""
    def fit_fn(rows, grid):
        p = y[rows].mean()
        return lambda te: np.tile([0.5 + (p - 0.5) * (1 - g) for g in grid], (te.size, 1))
    return fit_fn


@pytest.fixture
def labels():
    rng = np.random.default_rng(5)
    return (rng.random(300) < 0.3).astype(int)


@pytest.fixture
def folds(labels):
    ds = Dataset(np.zeros((labels.size, 1)), labels, np.full(labels.size, "A"),
                 continuous_features(1))
    return make_folds(ds, 3, 0)


class TestCvDeviance:
    def test_base_rate_deviance_is_twice_entropy(self, labels, folds):
        curve = cv_deviance(constant_fit(labels), labels, folds, [0.0])
        ybar = labels.mean()
        entropy = -(ybar * np.log(ybar) + (1 - ybar) * np.log(1 - ybar))
        assert curve.mean[0] == pytest.approx(2 * entropy, rel=2e-3)

    def test_single_grid_point(self, labels, folds):
        assert len(cv_deviance(constant_fit(labels), labels, folds, [1.0])) == 1

    def test_duplicated_rows_same_mean(self, labels, folds):
        a = cv_deviance(constant_fit(labels), labels, folds, [0.0, 0.5])
        y2 = np.r_[labels, labels]
        f2 = FoldAssignment(np.r_[folds.fold_id, folds.fold_id], 3)
        b = cv_deviance(constant_fit(y2), y2, f2, [0.0, 0.5])
        np.testing.assert_allclose(b.mean, a.mean, atol=1e-9)

    def test_grid_reordering_reorders_curve(self, labels, folds):
        grid = [0.1, 0.5, 0.9]
        a = cv_deviance(grid_fit(labels), labels, folds, grid)
        b = cv_deviance(grid_fit(labels), labels, folds, grid[::-1])
        np.testing.assert_array_equal(b.mean, a.mean[::-1])

    def test_row_permutation_invariance(self, labels, folds):
        perm = np.random.default_rng(2).permutation(labels.size)
        a = cv_deviance(grid_fit(labels), labels, folds, [0.2, 0.6])
        yp = labels[perm]
        fp = FoldAssignment(folds.fold_id[perm], 3)
        b = cv_deviance(grid_fit(yp), yp, fp, [0.2, 0.6])
        np.testing.assert_allclose(b.mean, a.mean, rtol=1e-13)

    def test_threads_do_not_change_result(self, labels, folds):
        a = cv_deviance(grid_fit(labels), labels, folds, [0.1, 0.3])
        b = cv_deviance(grid_fit(labels), labels, folds, [0.1, 0.3], threads=3)
        np.testing.assert_array_equal(a.mean, b.mean)
        np.testing.assert_array_equal(a.se, b.se)

    def test_truncates_to_shortest_fold(self, labels, folds):
        def fit_fn(rows, grid):
            m = len(grid) - (1 if 0 in rows else 0)
            return lambda te: np.full((te.size, m), 0.3)
        curve = cv_deviance(fit_fn, labels, folds, [0.3, 0.2, 0.1])
        assert len(curve) == 2
        assert curve.grid.tolist() == [0.3, 0.2]

    def test_degenerate_fold(self):
        y = np.array([1, 0, 0, 0, 0, 0])
        f = FoldAssignment(np.array([0, 1, 1, 2, 2, 2]), 3)
        with pytest.raises(DegenerateFold):
            cv_deviance(constant_fit(y), y, f, [0.0])

    def test_se_nonnegative_and_fold_count(self, labels, folds):
        curve = cv_deviance(grid_fit(labels), labels, folds, [0.0, 0.5, 1.0])
        assert np.all(curve.se >= 0)
        assert curve.n_folds == 3


class TestDeviancePerRow:
    def test_clamped(self):
        d = deviance_per_row(np.array([0.0, 1.0]), np.array([1, 0]))
        assert np.all(np.isfinite(d))


class TestSelectMin:
    def test_convex(self):
        assert select_min(np.array([3.0, 2.0, 1.5, 1.7, 2.5])) == 2

    def test_flat_picks_largest_lambda(self):
        assert select_min(np.ones(6)) == 0

    def test_near_tie_goes_first(self):
        assert select_min(np.array([2.0, 1.0 + 1e-14, 1.0])) == 1

    def test_empty(self):
        with pytest.raises(ValueError):
            select_min(np.array([]))


class TestCsv:
    def test_header_and_rows(self):
        c = CvCurve(np.array([1.0, 0.5]), np.array([1.2, 1.1]), np.array([0.1, 0.1]), 3)
        lines = c.to_csv().splitlines()
        assert lines[0] == "lambda,mean_deviance,se,n_folds"
        assert lines[1].split(",")[-1] == "3"
        assert len(lines) == 3
