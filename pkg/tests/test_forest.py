import numpy as np
import pandas as pd
import pytest

from tacklepep.forest import (ConditionalDensity, DensityForest, FoldResult, ForestConfig,
                              RegressionTree, evaluate_forest, fit_forest, fit_tree,
                              fit_weekly_folds, load_forest, point_errors, predict_density,
                              read_forest_header, save_forest)
from tacklepep.tracking import StandardizationStats


def _leaf(v):
    return RegressionTree(np.array([-1], dtype=np.int32), np.array([0.0]),
                          np.array([-1], dtype=np.int32), np.array([-1], dtype=np.int32),
                          np.array([float(v)]))


def _forest_of(values, p=2):
    return DensityForest([_leaf(v) for v in values], [f"x{j}" for j in range(p)], 1, 5, 0)


def test_three_tree_toy():
    d = predict_density(_forest_of([2, 5, 11]), np.zeros(2))
    np.testing.assert_array_equal(d.draws, [2.0, 5.0, 11.0])
    assert d.mean() == 6.0
    assert d.cdf(4.0) == pytest.approx(1 / 3)
    assert d.cdf(5.0) == pytest.approx(2 / 3)
    assert d.cdf(11.0) == 1.0
    assert d.cdf(1.99) == 0.0
    assert d.is_valid(3)


def test_single_tree_forest_is_point_mass(rng):
    X = rng.normal(size=(60, 3))
    y = X[:, 0] * 3
    f = fit_forest(X, y, ForestConfig(n_trees=1, mtry=3))
    d = predict_density(f, X[0])
    assert len(d) == 1 and d.is_valid(1)
    assert d.mean() == f.predict(X[:1])[0]


def test_step_function_recovered():
    x = np.linspace(-1, 1, 400)
    X = np.c_[x]
    y = np.where(x > 0.1, 10.0, -4.0)
    tree = fit_tree(X, y, mtry=1, min_node_size=5)
    assert tree.n_leaves == 2
    split = tree.threshold[0]
    # midpoint between the neighbouring sorted values around 0.1
    lo, hi = x[x <= 0.1].max(), x[x > 0.1].min()
    assert split == pytest.approx((lo + hi) / 2)
    np.testing.assert_array_equal(tree.predict(X), y)


def test_min_node_size_respected(rng):
    X = rng.normal(size=(300, 4))
    y = X[:, 0] + rng.normal(scale=0.1, size=300)
    tree = fit_tree(X, y, mtry=4, min_node_size=7)
    counts = np.bincount([tree.leaf_index(r) for r in X], minlength=tree.n_nodes)
    leaves = np.flatnonzero(tree.feature < 0)
    assert counts[leaves].min() >= 7


def test_density_mean_is_point_prediction(rng):
    X = rng.normal(size=(200, 5))
    y = X @ np.arange(1.0, 6.0) + rng.normal(size=200)
    f = fit_forest(X, y, ForestConfig(n_trees=50))
    Xq = rng.normal(size=(30, 5))
    pts = f.predict(Xq)
    for d, p in zip(predict_density(f, Xq), pts):
        assert d.is_valid(50)
        assert abs(d.mean() - p) < 1e-9


def test_thread_count_does_not_change_forest(rng):
    X = rng.normal(size=(150, 6))
    y = np.sin(X[:, 0]) + X[:, 1]
    a = fit_forest(X, y, ForestConfig(n_trees=20, n_jobs=1), master_seed=5)
    b = fit_forest(X, y, ForestConfig(n_trees=20, n_jobs=4), master_seed=5)
    assert all(s.same_structure(t) for s, t in zip(a.trees, b.trees))
    Xq = rng.normal(size=(10, 6))
    assert a.tree_predictions(Xq).tobytes() == b.tree_predictions(Xq).tobytes()


def test_different_seeds_differ(rng):
    X = rng.normal(size=(150, 6))
    y = X[:, 0] + rng.normal(size=150)
    a = fit_forest(X, y, ForestConfig(n_trees=5), master_seed=1)
    b = fit_forest(X, y, ForestConfig(n_trees=5), master_seed=2)
    assert not all(s.same_structure(t) for s, t in zip(a.trees, b.trees))


def test_save_load_round_trip(tmp_path, rng):
    X = rng.normal(size=(120, 4))
    y = X[:, 2] * 2
    stats = StandardizationStats.fit(X, ["a", "b", "c", "d"])
    f = fit_forest(stats.apply(X), y, ForestConfig(n_trees=8), feature_names=list("abcd"),
                   stats=stats, fold=3)
    path = tmp_path / "f.tprf"
    save_forest(f, path)
    g = load_forest(path)
    assert g.fold == 3 and g.feature_names == list("abcd")
    Xq = stats.apply(rng.normal(size=(7, 4)))
    assert g.tree_predictions(Xq).tobytes() == f.tree_predictions(Xq).tobytes()
    assert read_forest_header(path)["schema_hash"] == f.schema
    save_forest(g, tmp_path / "g.tprf")
    assert (tmp_path / "g.tprf").read_bytes() == path.read_bytes()


def test_corrupt_file_rejected(tmp_path):
    p = tmp_path / "bad.tprf"
    p.write_bytes(b"nope")
    with pytest.raises(ValueError):
        load_forest(p)


def test_wrong_width_rejected():
    with pytest.raises(ValueError):
        _forest_of([1, 2], p=3).tree_predictions(np.zeros((1, 2)))


def test_mtry_out_of_range():
    with pytest.raises(ValueError):
        fit_forest(np.zeros((10, 2)), np.zeros(10), ForestConfig(n_trees=1, mtry=3))


def test_point_errors_arithmetic():
    rmse, mae = point_errors([3.0, -3.0], [0.0, 0.0])
    assert rmse == 3.0 and mae == 3.0


def test_evaluate_forest_averages_folds():
    folds = [FoldResult(w, None, 10, np.arange(4), np.zeros(4), r, m)
             for w, r, m in ((1, 2.0, 1.0), (2, 4.0, 3.0))]
    ev = evaluate_forest(folds)
    assert ev["rmse"] == 3.0 and ev["mae"] == 2.0
    assert ev["mae_sd"] == pytest.approx(np.sqrt(2.0))
    assert [f["week"] for f in ev["per_fold"]] == [1, 2]


def test_empty_density_invalid():
    assert not ConditionalDensity([]).is_valid()
    assert not ConditionalDensity([1.0, np.nan]).is_valid()


def _week_table(rng, n_per_week=30):
    rows = []
    for w in range(1, 10):
        for i in range(n_per_week):
            rows.append(dict(game_id=w, play_id=i, frame_id=1, week=w,
                             a=rng.normal(), b=rng.normal()))
    t = pd.DataFrame(rows)
    t["response"] = 3 * t["a"] - t["b"]
    return t


def test_weekly_folds_partition_rows(rng):
    t = _week_table(rng)
    folds = fit_weekly_folds(t, ["a", "b"], ForestConfig(n_trees=5))
    assert [f.week for f in folds] == list(range(1, 10))
    idx = np.concatenate([f.eval_keys for f in folds])
    assert sorted(idx) == list(range(len(t)))
    for f in folds:
        assert (t["week"].to_numpy()[f.eval_keys] == f.week).all()
        assert f.n_train == len(t) - len(f.eval_keys)
        assert f.forest.fold == f.week


def test_fold_standardization_uses_training_rows_only(rng):
    t = _week_table(rng)
    t.loc[t["week"] == 4, "a"] += 100.0
    f4 = fit_weekly_folds(t, ["a", "b"], ForestConfig(n_trees=2), weeks=[4])[0]
    train = t[t["week"] != 4]
    assert f4.forest.stats.mean[0] == pytest.approx(train["a"].mean())


def test_missing_week_skipped(rng):
    t = _week_table(rng)
    t = t[t["week"] != 6]
    folds = fit_weekly_folds(t, ["a", "b"], ForestConfig(n_trees=2))
    assert 6 not in [f.week for f in folds]
    assert len(folds) == 8
