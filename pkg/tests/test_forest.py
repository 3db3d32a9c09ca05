import csv
import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vbiopsy.forest import (FOREST_STREAM, ForestConfig, best_split, fit_forest,
                            fit_tree, forest_json, fuse, fused_feature_names, gini,
                            importances_csv, load_forest, predict, save_forest)
from vbiopsy.ingest import make_rng
from vbiopsy.radiomics import FEATURE_NAMES, RadiomicsVector

from oracles import best_split_bruteforce, gini_counter


def random_dataset(seed, n=None, d=None, integer=False):
    rng = make_rng(seed, 5)
    n = n or int(rng.integers(2, 51))
    d = d or int(rng.integers(1, 11))
    X = rng.integers(0, 4, (n, d)).astype(float) if integer else rng.normal(size=(n, d))
    y = rng.integers(0, 3, n)
    return X, y


def split_decrease(X, y, f, thr):
    y = list(y)
    left = [y[i] for i in range(len(y)) if X[i, f] <= thr]
    right = [y[i] for i in range(len(y)) if X[i, f] > thr]
    n = len(y)
    return gini_counter(y) - len(left) / n * gini_counter(left) - len(right) / n * gini_counter(right)


class TestGini:
    def test_values(self):
        assert gini([5, 0]) == 0.0
        assert gini([1, 1]) == 0.5
        assert gini([0, 0, 0]) == 0.0
        assert gini([1, 1, 1, 1]) == pytest.approx(0.75)


class TestBestSplit:
    def test_one_dimensional(self):
        X = np.array([[-2.0], [-1.0], [1.0], [2.0]])
        dec, f, thr = best_split(X, np.array([0, 0, 1, 1]), 2, [0])
        assert (dec, f, thr) == (0.5, 0, 0.0)

    def test_constant_features(self):
        assert best_split(np.ones((4, 2)), np.array([0, 1, 0, 1]), 2, [0, 1]) is None

    def test_tie_prefers_lowest_feature(self):
        X = np.array([[0.0, 0.0], [1.0, 1.0]])
        assert best_split(X, np.array([0, 1]), 2, [1, 0])[1] == 0

    def test_tie_prefers_lowest_threshold(self):
        # splitting after either end point isolates one sample of class 1
        X = np.array([[0.0], [1.0], [2.0]])
        dec, _, thr = best_split(X, np.array([1, 0, 1]), 2, [0])
        assert thr == 0.5

    @pytest.mark.parametrize("seed", range(40))
    def test_matches_exhaustive(self, seed):
        X, y = random_dataset(seed, integer=seed % 2 == 0)
        got = best_split(X, y, 3, range(X.shape[1]))
        want = best_split_bruteforce(X, y)
        if want is None:
            assert got is None
            return
        assert got[0] == pytest.approx(want[0], abs=1e-12)
        # the chosen split really achieves that decrease
        assert split_decrease(X, y, got[1], got[2]) == pytest.approx(want[0], abs=1e-12)


class TestTree:
    def test_pure_node_is_a_leaf(self):
        tree = fit_tree(np.random.default_rng(0).normal(size=(6, 3)), np.zeros(6, dtype=int), 2)
        assert tree.n_nodes == 1 and tree.counts == [[6, 0]]

    def test_one_dimensional(self):
        X = np.array([[-2.0], [-1.0], [1.0], [2.0]])
        tree = fit_tree(X, [0, 0, 1, 1])
        assert tree.feature[0] == 0 and tree.threshold[0] == 0.0
        assert tree.predict([[5.0]]).tolist() == [1]
        assert tree.predict([[0.0]]).tolist() == [0]  # equal goes left

    def test_fits_training_data(self):
        X, y = random_dataset(3, n=50, d=4)
        tree = fit_tree(X, y, 3)
        assert np.array_equal(tree.predict(X), y)

    def test_depth_limit(self):
        X, y = random_dataset(3, n=50, d=4)
        tree = fit_tree(X, y, 3, max_depth=1)
        assert tree.n_nodes == 3

    def test_left_child_numbered_first(self):
        X = np.array([[0.0], [1.0], [2.0], [3.0]])
        tree = fit_tree(X, [0, 1, 0, 1])
        assert tree.left[0] == 1

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            fit_tree(np.zeros((0, 2)), [])


def separable(n=80, d=5, seed=0):
    rng = make_rng(seed, 9)
    X = rng.normal(size=(n, d))
    y = (X[:, 0] > 0).astype(int)
    return X, y


class TestForest:
    def test_single_tree_without_bootstrap_is_cart(self):
        X, y = random_dataset(11, n=40, d=6)
        cfg = ForestConfig(n_trees=1, bootstrap=False, seed=4)
        forest = fit_forest(X, y, cfg, n_classes=3)
        tree = fit_tree(X, y, 3, max_features=math.ceil(math.sqrt(6)),
                        rng=make_rng(4, FOREST_STREAM, 0))
        assert forest.trees[0].to_dict() == tree.to_dict()

    def test_deterministic(self):
        X, y = random_dataset(12, n=40, d=6)
        cfg = ForestConfig(n_trees=10, seed=2)
        assert forest_json(fit_forest(X, y, cfg)) == forest_json(fit_forest(X, y, cfg))
        other = fit_forest(X, y, ForestConfig(n_trees=10, seed=3))
        assert forest_json(other) != forest_json(fit_forest(X, y, cfg))

    def test_single_informative_feature(self):
        X, y = separable()
        forest = fit_forest(X, y, ForestConfig(n_trees=20, max_features=5))
        assert forest.feature_importances[0] == pytest.approx(1.0)
        assert forest.feature_importances.sum() == pytest.approx(1.0)

    def test_constant_feature_has_zero_importance(self):
        X, y = random_dataset(13, n=50, d=4)
        X = np.hstack([X, np.full((50, 1), 7.0)])
        forest = fit_forest(X, y, ForestConfig(n_trees=15, max_features=5), n_classes=3)
        assert forest.feature_importances[-1] == 0.0

    def test_fits_training_data_with_all_features(self):
        X, y = random_dataset(14, n=50, d=5)
        forest = fit_forest(X, y, ForestConfig(n_trees=5, bootstrap=False, max_features=5))
        assert np.array_equal(forest.predict(X), y)

    def test_tied_vote_goes_to_lowest_class(self):
        X = np.array([[0.0], [1.0]])
        forest = fit_forest(X, [0, 1], ForestConfig(n_trees=1, bootstrap=False))
        forest.trees.append(fit_tree(X, [1, 0]))  # disagrees everywhere
        cls, votes = predict(forest, np.array([1.0]))
        assert votes.tolist() == [1, 1] and cls == 0

    def test_monotone_transform_invariance(self):
        X, y = random_dataset(15, n=40, d=3)
        cfg = ForestConfig(n_trees=8, seed=1)
        a = fit_forest(X, y, cfg, n_classes=3)
        b = fit_forest(np.exp(X), y, cfg, n_classes=3)
        assert np.array_equal(a.predict(X), b.predict(np.exp(X)))
        assert np.allclose(a.feature_importances, b.feature_importances)

    def test_proba_rows_sum_to_one(self):
        X, y = random_dataset(16, n=30, d=3)
        forest = fit_forest(X, y, ForestConfig(n_trees=7))
        assert np.allclose(forest.predict_proba(X).sum(axis=1), 1.0)

    def test_wrong_width(self):
        X, y = random_dataset(16, n=30, d=3)
        forest = fit_forest(X, y, ForestConfig(n_trees=2))
        with pytest.raises(ValueError):
            forest.predict(np.zeros((1, 4)))

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2 ** 31))
    def test_importances_are_a_distribution(self, seed):
        X, y = random_dataset(seed)
        forest = fit_forest(X, y, ForestConfig(n_trees=3))
        imp = forest.feature_importances
        assert (imp >= 0).all()
        assert imp.sum() == pytest.approx(1.0) or imp.sum() == 0.0


class TestSerialization:
    def test_json_round_trip(self, tmp_path):
        X, y = random_dataset(17, n=40, d=8)
        forest = fit_forest(X, y, ForestConfig(n_trees=5), feature_names=list(FEATURE_NAMES))
        save_forest(forest, tmp_path / "f.json")
        again = load_forest(tmp_path / "f.json")
        assert forest_json(again) == forest_json(forest)
        assert np.array_equal(again.predict(X), forest.predict(X))

    def test_importance_csv(self):
        X, y = random_dataset(18, n=30, d=8)
        forest = fit_forest(X, y, ForestConfig(n_trees=3), feature_names=list(FEATURE_NAMES))
        rows = list(csv.reader(io.StringIO(importances_csv(forest))))
        assert rows[0] == ["feature_name", "importance"]
        assert [r[0] for r in rows[1:]] == list(FEATURE_NAMES)


class TestFusion:
    def test_concatenation(self):
        vec = RadiomicsVector.from_array(range(8))
        out = fuse(np.array([9.0, 8.0]), vec)
        assert out.tolist() == [9.0, 8.0] + list(range(8))

    def test_names(self):
        names = fused_feature_names(32)
        assert len(names) == 40 and names[0] == "emb_0" and names[32:] == list(FEATURE_NAMES)

    def test_rejects_short_radiomics(self):
        with pytest.raises(ValueError):
            fuse(np.zeros(3), np.zeros(5))
