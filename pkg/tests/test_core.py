import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from stratlasso.core import (DataConfig, Dataset, FeatureMeta, assemble, expand_features,
                             make_folds, prepare_design, split_train_test, standardize,
                             stratum_counts)
from stratlasso.errors import (DataError, EmptyStratum, TooFewRows, UnknownGroup,
                               ZeroVarianceColumn)

from conftest import continuous_features


class TestFeatureMeta:
    def test_categorical_needs_two_levels(self):
        with pytest.raises(DataError):
            FeatureMeta("sex", "categorical", ("F",))

    def test_unknown_kind(self):
        with pytest.raises(DataError):
            FeatureMeta("a", "ordinal")


class TestDataset:
    def test_rejects_missing_values(self):
        X = np.array([[1.0], [np.nan]])
        with pytest.raises(DataError):
            Dataset(X, [0, 1], ["A", "A"], continuous_features(1))

    def test_rejects_nonbinary_outcome(self):
        with pytest.raises(DataError):
            Dataset(np.zeros((2, 1)), [0, 2], ["A", "A"], continuous_features(1))

    def test_duplicate_names(self):
        feats = [FeatureMeta("a"), FeatureMeta("a")]
        with pytest.raises(DataError):
            Dataset(np.zeros((2, 2)), [0, 1], ["A", "A"], feats)

    def test_bad_level_code(self):
        feats = [FeatureMeta("s", "categorical", ("0", "1"))]
        with pytest.raises(DataError):
            Dataset(np.array([[0.0], [2.0]]), [0, 1], ["A", "A"], feats)

    def test_group_labels_in_first_appearance_order(self):
        ds = Dataset(np.zeros((4, 1)), [0, 1, 0, 1], ["b", "a", "b", "c"],
                     continuous_features(1))
        assert ds.group_labels() == ["b", "a", "c"]


class TestStandardize:
    def test_population_sd(self):
        Z, rec = standardize(np.array([[1.0], [2.0], [3.0]]), [0])
        np.testing.assert_allclose(Z[:, 0], [-1.224744871391589, 0.0, 1.224744871391589],
                                   atol=1e-12)
        assert rec.scale[0] == pytest.approx(np.sqrt(2.0 / 3.0))

    def test_idempotent(self, rng):
        Z, _ = standardize(rng.normal(size=(50, 3)), [0, 1, 2])
        Z2, _ = standardize(Z, [0, 1, 2])
        np.testing.assert_allclose(Z2, Z, atol=1e-12)

    def test_zero_variance_names_column(self):
        with pytest.raises(ZeroVarianceColumn, match="age"):
            standardize(np.array([[5.0], [5.0], [5.0]]), [0], ["age"])

    def test_only_selected_columns_change(self, rng):
        X = rng.normal(3, 2, size=(20, 2))
        Z, _ = standardize(X, [1])
        np.testing.assert_array_equal(Z[:, 0], X[:, 0])

    @settings(max_examples=60, deadline=None)
    @given(arrays(np.float64, (12, 3), elements=st.floats(-1e3, 1e3)))
    def test_round_trip(self, X):
        if np.any(X.std(axis=0) < 1e-6 * (1 + np.abs(X).max())):
            return
        Z, rec = standardize(X, [0, 1, 2])
        assert np.all(np.abs(Z.mean(axis=0)) < 1e-10)
        assert np.all(np.abs(Z.std(axis=0) - 1) < 1e-10)
        np.testing.assert_allclose(rec.invert(Z), X, atol=1e-12 * (1 + np.abs(X).max()) * 10)

    def test_coefficient_round_trip(self, rng):
        X = rng.normal(5, 3, size=(40, 3))
        Z, rec = standardize(X, [0, 2])
        b0, b = 0.3, np.array([1.0, -2.0, 0.5])
        r0, rb = rec.to_raw_coefficients(b0, b)
        np.testing.assert_allclose(X @ rb + r0, Z @ b + b0, atol=1e-10)
        s0, sb = rec.to_standardized_coefficients(r0, rb)
        assert s0 == pytest.approx(b0, abs=1e-12)
        np.testing.assert_allclose(sb, b, atol=1e-12)


class TestExpand:
    def test_reference_and_indicator(self):
        feats = [FeatureMeta("a"), FeatureMeta("c", "categorical", ("x", "y", "z"))]
        X = np.array([[0.5, 0], [1.5, 2]])
        Z, cols = expand_features(X, feats, "reference")
        assert [c.name for c in cols] == ["a", "c=y", "c=z"]
        np.testing.assert_array_equal(Z, [[0.5, 0, 0], [1.5, 0, 1]])
        Z, cols = expand_features(X, feats, "indicator")
        assert Z.shape == (2, 4)
        np.testing.assert_array_equal(Z.sum(axis=1) - X[:, 0], [1, 1])

    def test_prepare_design_reuses_record(self, rng):
        X = rng.normal(2, 3, size=(30, 2))
        feats = continuous_features(2)
        Z, _, rec = prepare_design(X, feats)
        Z2, _, _ = prepare_design(X[:5], feats, record=rec)
        np.testing.assert_allclose(Z2, Z[:5])


class TestDataConfig:
    @pytest.mark.parametrize("text", ["all", "group:AF", "mix:WB,AF"])
    def test_parse_round_trip(self, text):
        assert str(DataConfig.parse(text)) == text

    @pytest.mark.parametrize("text", ["", "group:", "mix:WB", "some"])
    def test_parse_rejects(self, text):
        with pytest.raises(DataError):
            DataConfig.parse(text)

    def test_labels(self):
        assert DataConfig.group_only("AF").label == "AF"
        assert DataConfig.mix("WB", "AF").label == "Mix"
        assert DataConfig.all().label == "All"


class TestAssemble:
    def test_all_is_identity(self, three_groups):
        out = assemble(three_groups, DataConfig.all())
        np.testing.assert_array_equal(out.X, three_groups.X)

    def test_mix(self, three_groups):
        out = assemble(three_groups, DataConfig.mix("WB", "SA"))
        assert out.n == 120
        assert set(out.group) == {"WB", "SA"}

    def test_group_only(self, three_groups):
        out = assemble(three_groups, DataConfig.group_only("AF"))
        assert out.n == 15

    def test_mix_is_union_in_source_order(self, three_groups):
        mix = assemble(three_groups, DataConfig.mix("SA", "WB"))
        rows = np.flatnonzero(np.isin(three_groups.group, ["WB", "SA"]))
        np.testing.assert_array_equal(mix.X, three_groups.X[rows])

    def test_unknown_group(self, three_groups):
        with pytest.raises(UnknownGroup):
            assemble(three_groups, DataConfig.group_only("EA"))


def _one_group(n_pos, n_neg):
    y = np.r_[np.ones(n_pos, int), np.zeros(n_neg, int)]
    return Dataset(np.arange(y.size, dtype=float)[:, None], y, np.full(y.size, "A"),
                   continuous_features(1))


class TestSplit:
    @pytest.mark.parametrize("seed", range(5))
    def test_ten_rows_fifth(self, seed):
        train, test = split_train_test(_one_group(5, 5), 0.2, seed)
        assert test.n == 2
        assert test.y.sum() == 1

    def test_half_of_four(self):
        train, test = split_train_test(_one_group(2, 2), 0.5, 0)
        assert train.n == test.n == 2
        assert train.y.sum() == test.y.sum() == 1

    def test_deterministic_and_partition(self, three_groups):
        a = split_train_test(three_groups, 0.3, 11)
        b = split_train_test(three_groups, 0.3, 11)
        np.testing.assert_array_equal(a[1].X, b[1].X)
        rows = np.sort(np.r_[a[0].X[:, 0], a[1].X[:, 0]])
        np.testing.assert_array_equal(rows, np.sort(three_groups.X[:, 0]))

    def test_stratified_per_group(self, three_groups):
        train, test = split_train_test(three_groups, 0.2, 1)
        tr, te = stratum_counts(train), stratum_counts(test)
        full = stratum_counts(three_groups)
        for cell, m in full.items():
            assert te[cell] == min(max(int(np.floor(m * 0.2 + 0.5)), 1), m - 1)
            assert tr[cell] + te[cell] == m

    def test_empty_stratum(self):
        ds = Dataset(np.zeros((3, 1)), [0, 0, 0], ["A"] * 3, continuous_features(1))
        with pytest.raises(EmptyStratum):
            split_train_test(ds, 0.3, 0)


class TestFolds:
    def test_one_positive_per_fold(self):
        group = np.repeat(["a", "b", "c"], 3)
        y = np.tile([1, 0, 0], 3)
        ds = Dataset(np.zeros((9, 1)), y, group, continuous_features(1))
        for seed in range(10):
            f = make_folds(ds, 3, seed)
            counts = np.bincount(f.fold_id[y == 1], minlength=3)
            np.testing.assert_array_equal(counts, [1, 1, 1])

    def test_leave_one_out_shape(self):
        ds = _one_group(3, 3)
        f = make_folds(ds, 6, 0)
        np.testing.assert_array_equal(np.bincount(f.fold_id), np.ones(6))

    def test_too_few_rows(self):
        with pytest.raises(TooFewRows):
            make_folds(_one_group(1, 1), 3, 0)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.tuples(st.integers(1, 30), st.integers(1, 30)), min_size=1, max_size=4),
           st.integers(2, 5), st.integers(0, 1000))
    def test_balanced_positives(self, cells, k, seed):
        y, g = [], []
        for i, (npos, nneg) in enumerate(cells):
            y += [1] * npos + [0] * nneg
            g += [f"g{i}"] * (npos + nneg)
        y = np.array(y)
        if y.size < k:
            return
        ds = Dataset(np.zeros((y.size, 1)), y, g, continuous_features(1))
        f = make_folds(ds, k, seed)
        assert np.all(np.bincount(f.fold_id, minlength=k) > 0)
        for i, (npos, _) in enumerate(cells):
            rows = (ds.group == f"g{i}") & (y == 1)
            counts = np.bincount(f.fold_id[rows], minlength=k)
            assert np.all(np.abs(counts - npos / k) <= 1)
        np.testing.assert_array_equal(f.fold_id, make_folds(ds, k, seed).fold_id)
