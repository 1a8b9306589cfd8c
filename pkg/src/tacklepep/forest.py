"""Random forest whose per-tree predictions form a conditional density.

Each tree is a CART regression tree grown on its own bootstrap resample.
Instead of averaging the trees away, :func:`predict_density` keeps the N
tree predictions as an empirical sample of the yards-to-be-gained
distribution.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from tacklepep import _cart
from tacklepep.io import atomic_write_bytes
from tacklepep.tracking import StandardizationStats

logger = logging.getLogger(__name__)

FOREST_FORMAT = "tacklepep-forest"
FOREST_VERSION = 1
_MAGIC = b"TPRF"


def schema_hash(feature_names) -> str:
    """Short hash identifying an ordered feature schema."""
    h = hashlib.sha256("\x1f".join(feature_names).encode())
    return h.hexdigest()[:16]


@dataclass
class RegressionTree:
    """Flat-array binary tree. ``feature[i] < 0`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    seed: int = 0

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        offsets = np.array([0, self.n_nodes], dtype=np.int64)
        return _cart.predict_trees(X, self.feature, self.threshold, self.left,
                                   self.right, self.value, offsets)[:, 0]

    def leaf_index(self, x) -> int:
        node = 0
        while self.feature[node] >= 0:
            if x[self.feature[node]] <= self.threshold[node]:
                node = self.left[node]
            else:
                node = self.right[node]
        return node

    def same_structure(self, other: RegressionTree) -> bool:
        return all(np.array_equal(getattr(self, a), getattr(other, a))
                   for a in ("feature", "threshold", "left", "right", "value"))


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 1000
    mtry: int | None = None  # None -> floor(sqrt(p))
    min_node_size: int = 5
    n_jobs: int = 1

    def resolved_mtry(self, p: int) -> int:
        mtry = self.mtry if self.mtry is not None else max(1, int(math.isqrt(p)))
        if not 1 <= mtry <= p:
            raise ValueError(f"mtry must lie in [1, {p}], got {mtry}")
        return mtry


def fit_tree(X, y, mtry: int, min_node_size: int = 5, rng_seed=0,
             sample_idx=None) -> RegressionTree:
    """Grow a single CART regression tree.

    Parameters
    ----------
    X : array of shape (n, p)
    y : array of shape (n,)
    mtry : int
        Features drawn without replacement as split candidates at each node.
    min_node_size : int
        Nodes with fewer than ``2 * min_node_size`` rows are not split, and
        no child may hold fewer than ``min_node_size`` rows.
    rng_seed : int or numpy.random.SeedSequence
        Seeds the feature draws.
    sample_idx : array of int, optional
        Row multiset to grow on (a bootstrap resample). Defaults to all rows.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or len(X) != len(y) or len(y) == 0:
        raise ValueError("X must be (n, p) and y (n,) with n > 0")
    p = X.shape[1]
    if not 1 <= mtry <= p:
        raise ValueError(f"mtry must lie in [1, {p}], got {mtry}")
    if min_node_size < 1:
        raise ValueError("min_node_size must be >= 1")
    rng = np.random.default_rng(rng_seed)
    if sample_idx is None:
        sample_idx = np.arange(len(y), dtype=np.int64)
    sample_idx = np.asarray(sample_idx, dtype=np.int64)
    # internal nodes <= leaves - 1 <= n / min_node_size
    rand_u = rng.random((len(sample_idx) // min_node_size + 1, mtry))
    XT = np.ascontiguousarray(X.T)
    arrays = _cart.grow_tree(XT, y, sample_idx, mtry, min_node_size, rand_u)
    seed = rng_seed.entropy if isinstance(rng_seed, np.random.SeedSequence) else rng_seed
    return RegressionTree(*arrays, seed=int(seed) if np.isscalar(seed) else 0)


@dataclass
class DensityForest:
    trees: list[RegressionTree]
    feature_names: list[str]
    mtry: int
    min_node_size: int
    master_seed: int
    stats: StandardizationStats | None = None
    fold: int | None = None  # held-out week, if any
    _flat: tuple | None = field(default=None, repr=False, compare=False)

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    @property
    def schema(self) -> str:
        return schema_hash(self.feature_names)

    def _flatten(self):
        if self._flat is None:
            sizes = [t.n_nodes for t in self.trees]
            offsets = np.zeros(len(sizes) + 1, dtype=np.int64)
            offsets[1:] = np.cumsum(sizes)
            self._flat = (
                np.concatenate([t.feature for t in self.trees]),
                np.concatenate([t.threshold for t in self.trees]),
                np.concatenate([t.left for t in self.trees]),
                np.concatenate([t.right for t in self.trees]),
                np.concatenate([t.value for t in self.trees]),
                offsets,
            )
        return self._flat

    def tree_predictions(self, X) -> np.ndarray:
        """Leaf values of every tree, shape (n_rows, n_trees), tree order."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != len(self.feature_names):
            raise ValueError(f"expected {len(self.feature_names)} features, got {X.shape[1]}")
        return _cart.predict_trees(X, *self._flatten())

    def predict(self, X) -> np.ndarray:
        """Classical point prediction: the mean over trees."""
        draws = self.tree_predictions(X)
        return np.array([math.fsum(row) / draws.shape[1] for row in draws])


def _tree_job(X, y, mtry, min_node_size, seq):
    rng = np.random.default_rng(seq)
    boot = rng.integers(0, len(y), len(y))
    rand_u = rng.random((len(y) // min_node_size + 1, mtry))
    arrays = _cart.grow_tree(X, y, boot, mtry, min_node_size, rand_u)
    return RegressionTree(*arrays, seed=int(seq.spawn_key[-1]))


def fit_forest(X, y, config: ForestConfig = ForestConfig(), master_seed: int = 0,
               feature_names=None, stats=None, fold=None) -> DensityForest:
    """Fit ``config.n_trees`` trees on independent bootstrap resamples.

    Tree ``i`` draws its resample and feature subsets from child ``i`` of
    ``SeedSequence(master_seed)``, so the forest does not depend on
    ``config.n_jobs``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(y) == 0:
        raise ValueError("cannot fit a forest on zero rows")
    if config.n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    p = X.shape[1]
    mtry = config.resolved_mtry(p)
    if feature_names is None:
        feature_names = [f"x{j}" for j in range(p)]
    XT = np.ascontiguousarray(X.T)
    seqs = np.random.SeedSequence(master_seed).spawn(config.n_trees)
    if config.n_jobs > 1:
        with ThreadPoolExecutor(config.n_jobs) as ex:
            trees = list(ex.map(lambda s: _tree_job(XT, y, mtry, config.min_node_size, s), seqs))
    else:
        trees = [_tree_job(XT, y, mtry, config.min_node_size, s) for s in seqs]
    return DensityForest(trees, list(feature_names), mtry, config.min_node_size,
                         master_seed, stats=stats, fold=fold)


@dataclass
class ConditionalDensity:
    """Unweighted empirical distribution of N per-tree predictions."""

    draws: np.ndarray

    def __post_init__(self):
        self.draws = np.asarray(self.draws, dtype=np.float64)

    def __len__(self):
        return len(self.draws)

    def mean(self) -> float:
        return math.fsum(self.draws) / len(self.draws)

    def cdf(self, t):
        s = np.sort(self.draws)
        return np.searchsorted(s, t, side="right") / len(s)

    def quantile(self, q):
        return np.quantile(self.draws, q)

    def is_valid(self, n_expected: int | None = None) -> bool:
        """Non-empty, finite, and its ECDF is a distribution function."""
        if len(self.draws) == 0 or not np.all(np.isfinite(self.draws)):
            return False
        if n_expected is not None and len(self.draws) != n_expected:
            return False
        s = np.sort(self.draws)
        grid = np.concatenate([[s[0] - 1.0], s, [s[-1] + 1.0]])
        F = self.cdf(grid)
        return bool(F[0] == 0.0 and F[-1] == 1.0 and np.all(np.diff(F) >= 0)
                    and np.all(self.cdf(s) >= self.cdf(s - 1e-12)))


def predict_density(forest: DensityForest, feature_vector) -> ConditionalDensity | list[ConditionalDensity]:
    """Per-tree draws for one standardized feature vector (or a 2-d batch)."""
    x = np.asarray(feature_vector, dtype=np.float64)
    draws = forest.tree_predictions(x)
    if x.ndim == 1:
        return ConditionalDensity(draws[0])
    return [ConditionalDensity(row) for row in draws]


# -- serialization -----------------------------------------------------------

_ARRAYS = (("feature", "<i4"), ("threshold", "<f8"), ("left", "<i4"),
           ("right", "<i4"), ("value", "<f8"))


def save_forest(forest: DensityForest, path) -> None:
    """Write a self-describing binary forest file.

    Layout: 4-byte magic, little-endian uint64 header length, a JSON header,
    then the concatenated node arrays and tree offsets.
    """
    feat, thr, left, right, value, offsets = forest._flatten()
    header = {
        "format": FOREST_FORMAT,
        "version": FOREST_VERSION,
        "schema_hash": forest.schema,
        "feature_names": forest.feature_names,
        "n_trees": forest.n_trees,
        "mtry": forest.mtry,
        "min_node_size": forest.min_node_size,
        "master_seed": forest.master_seed,
        "fold": forest.fold,
        "n_nodes_total": int(offsets[-1]),
        "stats": forest.stats.to_dict() if forest.stats is not None else None,
    }
    blob = json.dumps(header, sort_keys=True).encode()
    parts = [_MAGIC, struct.pack("<Q", len(blob)), blob]
    for arr, (_, dt) in zip((feat, thr, left, right, value), _ARRAYS):
        parts.append(np.ascontiguousarray(arr, dtype=dt).tobytes())
    parts.append(np.ascontiguousarray(offsets, dtype="<i8").tobytes())
    atomic_write_bytes(path, b"".join(parts))


def read_forest_header(path) -> dict:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError(f"{path}: not a forest file")
        (n,) = struct.unpack("<Q", fh.read(8))
        return json.loads(fh.read(n))


def load_forest(path) -> DensityForest:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError(f"{path}: not a forest file")
        (n,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(n))
        if header.get("format") != FOREST_FORMAT or header.get("version") != FOREST_VERSION:
            raise ValueError(f"{path}: unsupported forest format {header.get('format')} "
                             f"v{header.get('version')}")
        total = header["n_nodes_total"]
        arrays = [np.frombuffer(fh.read(total * np.dtype(dt).itemsize), dtype=dt).astype(dt[1:])
                  for _, dt in _ARRAYS]
        offsets = np.frombuffer(fh.read((header["n_trees"] + 1) * 8), dtype="<i8").astype(np.int64)
    if schema_hash(header["feature_names"]) != header["schema_hash"]:
        raise ValueError(f"{path}: schema hash mismatch")
    trees = []
    for t in range(header["n_trees"]):
        a, b = offsets[t], offsets[t + 1]
        trees.append(RegressionTree(*(arr[a:b].copy() for arr in arrays), seed=t))
    stats = StandardizationStats.from_dict(header["stats"]) if header["stats"] else None
    return DensityForest(trees, header["feature_names"], header["mtry"],
                         header["min_node_size"], header["master_seed"],
                         stats=stats, fold=header["fold"])


# -- weekly folds and evaluation --------------------------------------------

@dataclass
class FoldResult:
    week: int
    forest: DensityForest
    n_train: int
    eval_keys: np.ndarray  # row indices of the held-out week
    predictions: np.ndarray  # out-of-sample point predictions for eval_keys
    rmse: float
    mae: float


def fit_weekly_folds(table, feature_names, config: ForestConfig = ForestConfig(),
                     master_seed: int = 0, weeks=range(1, 10), frame_stride: int = 1,
                     response="response"):
    """Leave-one-week-out training.

    For every week, standardization statistics and a forest are fit on the
    other weeks' rows (optionally thinned to every ``frame_stride``-th
    frame) and the forest scores the held-out week. Weeks without rows are
    skipped with a warning.

    Returns a list of :class:`FoldResult`.
    """
    week_col = table["week"].to_numpy()
    X_raw = table[list(feature_names)].to_numpy(dtype=np.float64)
    y = table[response].to_numpy(dtype=np.float64)
    keep = _stride_mask(table, frame_stride)
    folds = []
    for w in weeks:
        held = week_col == w
        if not held.any():
            logger.warning("week %s has no rows; fold skipped", w)
            continue
        train = ~held & keep
        if not train.any():
            logger.warning("week %s has no training rows; fold skipped", w)
            continue
        stats = StandardizationStats.fit(X_raw[train], feature_names)
        forest = fit_forest(stats.apply(X_raw[train]), y[train], config,
                            master_seed=int(master_seed) * 100 + int(w),
                            feature_names=feature_names, stats=stats, fold=int(w))
        idx = np.flatnonzero(held)
        pred = forest.predict(stats.apply(X_raw[idx]))
        rmse, mae = point_errors(pred, y[idx])
        folds.append(FoldResult(int(w), forest, int(train.sum()), idx, pred, rmse, mae))
        logger.info("fold week %d: n_train=%d rmse=%.3f mae=%.3f", w, train.sum(), rmse, mae)
    return folds


def _stride_mask(table, stride):
    if stride <= 1:
        return np.ones(len(table), dtype=bool)
    rank = table.groupby(["game_id", "play_id"], sort=False).cumcount().to_numpy()
    return rank % stride == 0


def point_errors(pred, truth):
    err = np.asarray(pred, dtype=float) - np.asarray(truth, dtype=float)
    return float(np.sqrt(np.mean(err ** 2))), float(np.mean(np.abs(err)))


def evaluate_forest(folds) -> dict:
    """Fold-averaged RMSE and MAE, plus the per-fold values."""
    if not folds:
        raise ValueError("no folds to evaluate")
    rmse = [f.rmse for f in folds]
    mae = [f.mae for f in folds]
    return {
        "rmse": float(np.mean(rmse)),
        "mae": float(np.mean(mae)),
        "rmse_sd": float(np.std(rmse, ddof=1)) if len(folds) > 1 else 0.0,
        "mae_sd": float(np.std(mae, ddof=1)) if len(folds) > 1 else 0.0,
        "per_fold": [{"week": f.week, "n_train": f.n_train, "n_eval": len(f.eval_keys),
                      "rmse": f.rmse, "mae": f.mae} for f in folds],
    }
