import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from churnkit.forest import (
    ForestError,
    ForestModel,
    Tree,
    bootstrap_indices,
    class_weights,
    grow_tree,
    load_forest,
    predict,
    save_forest,
    train_forest,
    weighted_gini,
)

from conftest import make_data, moons


def leaf(c0, c1):
    return Tree(np.array([-1]), np.zeros(1), np.array([-1]), np.array([-1]), np.array([[c0, c1]], float))


def stub_forest(n_ones, n_zeros, weights):
    trees = [leaf(0, 1)] * n_ones + [leaf(1, 0)] * n_zeros
    return ForestModel(trees, np.asarray(weights, float), 1, 0, 1)


# -- weights and impurity ----------------------------------------------------------

def test_class_weights():
    y = np.r_[np.zeros(100), np.ones(10)]
    assert class_weights(y, "balanced").tolist() == [1.0, 10.0]
    assert class_weights(np.r_[np.zeros(5), np.ones(5)], "balanced").tolist() == [1.0, 1.0]
    w = class_weights(np.r_[np.zeros(93), np.ones(7)], "balanced")
    assert w[1] == pytest.approx(93 / 7)
    assert class_weights(y).tolist() == [1.0, 1.0]
    # minority may also be label 0
    assert class_weights(1 - y, "balanced").tolist() == [10.0, 1.0]
    with pytest.raises(ForestError):
        class_weights(np.zeros(5), "balanced")


def test_weighted_gini_examples():
    assert weighted_gini((10, 0), (3, 7)) == 0
    assert weighted_gini((5, 5), (1, 1)) == 0.5
    assert weighted_gini((1, 10), (10, 1)) == pytest.approx(0.5)
    with pytest.raises(ForestError):
        weighted_gini((0, 0), (1, 1))


@settings(max_examples=50)
@given(st.integers(0, 500), st.integers(0, 500))
def test_uniform_gini_is_classical(a, b):
    if a + b == 0:
        return
    p = a / (a + b)
    assert weighted_gini((a, b), (1, 1)) == pytest.approx(1 - p * p - (1 - p) ** 2)


# -- single trees -----------------------------------------------------------------

def test_pure_sample_is_single_leaf():
    t = grow_tree(np.random.default_rng(0).normal(size=(20, 3)), np.ones(20, dtype=int))
    assert t.n_nodes == 1 and t.is_leaf(0)


def test_two_point_split_at_midpoint():
    t = grow_tree(np.array([[0.0], [1.0]]), np.array([0, 1]))
    assert t.n_nodes == 3
    assert t.feature[0] == 0 and t.threshold[0] == 0.5
    assert t.value[t.left[0]].tolist() == [1, 0]
    assert t.value[t.right[0]].tolist() == [0, 1]


def test_identical_rows_mixed_labels_is_mixed_leaf():
    t = grow_tree(np.ones((6, 2)), np.array([0, 1, 0, 1, 1, 0]))
    assert t.n_nodes == 1 and t.value[0].tolist() == [3, 3]
    assert t.vote(np.ones((1, 2))).tolist() == [0]  # leaf tie goes to class 0


def test_paths_strictly_shrink():
    X, y = moons(400, seed=2)
    t = grow_tree(X, y, features_per_split=1, seed=3)
    assert t.n_samples is not None
    for path in t.paths():
        sizes = [t.n_samples[node] for node in path]
        assert all(a > b for a, b in zip(sizes, sizes[1:]))


def test_max_depth_and_min_split():
    X, y = moons(300, seed=1)
    assert grow_tree(X, y, max_depth=0).n_nodes == 1
    shallow = grow_tree(X, y, max_depth=2)
    assert max(len(p) for p in shallow.paths()) <= 3
    assert grow_tree(X, y, min_samples_split=1000).n_nodes == 1


# -- forests ------------------------------------------------------------------------

def test_train_forest_defaults_and_determinism():
    X, y = moons(300, seed=4)
    data = make_data(X, y)
    a = train_forest(data, n_trees=10, seed=7)
    b = train_forest(data, n_trees=10, seed=7)
    assert a.n_trees == 10 and a.features_per_split == 2  # ceil(sqrt(2))
    for ta, tb in zip(a.trees, b.trees):
        assert np.array_equal(ta.feature, tb.feature) and np.array_equal(ta.threshold, tb.threshold)
    with pytest.raises(ForestError):
        train_forest(data, n_trees=0)
    import inspect
    assert inspect.signature(train_forest).parameters["n_trees"].default == 100


def test_parallel_growth_matches_serial():
    X, y = moons(300, seed=5)
    data = make_data(X, y)
    a = train_forest(data, n_trees=8, seed=1)
    b = train_forest(data, n_trees=8, seed=1, n_jobs=3)
    assert all(np.array_equal(s.threshold, t.threshold) for s, t in zip(a.trees, b.trees))


def test_bootstrap_is_per_tree():
    assert np.array_equal(bootstrap_indices(50, 1, 3), bootstrap_indices(50, 1, 3))
    assert not np.array_equal(bootstrap_indices(50, 1, 3), bootstrap_indices(50, 1, 4))


def test_moons_held_out_accuracy():
    X, y = moons(2000, seed=0)
    Xt, yt = moons(1000, seed=1)
    model = train_forest(make_data(X, y), n_trees=50, seed=0)
    assert (model.predict(Xt) == yt).mean() >= 0.90


def test_training_set_fit():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(300, 4))
    y = (rng.random(300) < 0.3).astype(int)  # pure noise labels, distinct rows
    model = train_forest(make_data(X, y), seed=0)
    assert (model.predict(X) == y).mean() >= 0.99
    for t in range(3):
        bag = np.unique(bootstrap_indices(300, 0, t))
        assert (model.trees[t].vote(X[bag]) == y[bag]).all()


# -- weighted vote --------------------------------------------------------------------

def test_unanimous_vote():
    cls, scores = predict(stub_forest(100, 0, (1, 1)), np.zeros(1))
    assert cls == 1 and scores.tolist() == [0, 100]


def test_weighted_vote_overturns_majority():
    cls, scores = predict(stub_forest(40, 60, (1, 10)), np.zeros(1))
    assert scores.tolist() == [60, 400] and cls == 1
    assert predict(stub_forest(40, 60, (1, 1)), np.zeros(1))[0] == 0


def test_score_tie_goes_to_class_0():
    assert predict(stub_forest(50, 50, (1, 1)), np.zeros(1))[0] == 0


def test_uniform_weights_equal_majority_vote():
    X, y = moons(400, seed=6)
    model = train_forest(make_data(X, y), n_trees=15, seed=2)
    Xt, _ = moons(300, seed=9)
    votes = model.votes(Xt)
    assert np.array_equal(model.predict(Xt), (votes[:, 1] > votes[:, 0]).astype(int))


def test_dimension_mismatch():
    with pytest.raises(ForestError):
        stub_forest(1, 0, (1, 1)).predict(np.zeros((2, 3)))


# -- persistence ----------------------------------------------------------------------

def test_save_load_round_trip(tmp_path):
    X, y = moons(300, seed=8)
    model = train_forest(make_data(X, y), n_trees=12, weights="balanced", seed=3)
    path = tmp_path / "forest.txt"
    save_forest(model, path)
    back = load_forest(path)
    Xt, _ = moons(500, seed=10)
    assert np.array_equal(back.scores(Xt), model.scores(Xt))
    save_forest(back, tmp_path / "again.txt")
    assert path.read_bytes() == (tmp_path / "again.txt").read_bytes()


def test_load_rejects_garbage(tmp_path):
    bad = tmp_path / "x.txt"
    bad.write_text("hello\n")
    with pytest.raises(ForestError):
        load_forest(bad)
