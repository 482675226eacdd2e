import math
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from utils.errors import ParseError

logger = logging.getLogger(__name__)

LEAF = -1
KNN_QUERY_BATCH = 256


def tree_seeds(seed: int, n_trees: int) -> List[int]:
    """Pre-drawn per-tree seeds; tree t always sees the same stream regardless of thread count"""
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(n_trees)]


def bootstrap_indices(rng: np.random.Generator, n: int) -> np.ndarray:
    """n row indices drawn with replacement"""
    return rng.integers(0, n, size=n)


def _best_split_on_feature(x: np.ndarray, y: np.ndarray) -> Optional[Tuple[float, float]]:
    """(gain, threshold) of the best variance-reduction split of one feature, lowest threshold on ties"""
    order = np.argsort(x, kind="stable")
    xs = x[order]
    ys = y[order]
    valid = xs[:-1] < xs[1:]
    if not valid.any():
        return None

    m = len(ys)
    csum = np.cumsum(ys)
    csum2 = np.cumsum(ys * ys)
    total, total2 = csum[-1], csum2[-1]
    left_n = np.arange(1, m, dtype=np.float64)
    right_n = m - left_n
    left_sse = csum2[:-1] - csum[:-1] ** 2 / left_n
    right_sse = (total2 - csum2[:-1]) - (total - csum[:-1]) ** 2 / right_n
    parent_sse = total2 - total ** 2 / m
    gains = np.where(valid, parent_sse - (left_sse + right_sse), -np.inf)
    i = int(np.argmax(gains))
    return float(gains[i]), float((xs[i] + xs[i + 1]) / 2.0)


class DecisionTreeRegressor:
    """
    CART regression tree stored as parallel node arrays

    A node is a leaf when feature[node] == -1; otherwise samples with
    x[feature] <= threshold go to left[node], the rest to right[node].
    """

    def __init__(
        self,
        max_depth: Optional[int] = None,
        min_samples_split: int = 2,
        max_features: Optional[int] = None,
    ):
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split
        self.max_features = max_features
        self.feature: List[int] = []
        self.threshold: List[float] = []
        self.left: List[int] = []
        self.right: List[int] = []
        self.value: List[float] = []
        self.n_features = 0

    @property
    def node_count(self) -> int:
        return len(self.feature)

    def _new_node(self, value: float) -> int:
        self.feature.append(LEAF)
        self.threshold.append(0.0)
        self.left.append(LEAF)
        self.right.append(LEAF)
        self.value.append(value)
        return len(self.feature) - 1

    def _choose_split(self, X: np.ndarray, y: np.ndarray, rng: Optional[np.random.Generator]) -> Optional[Tuple[int, float]]:
        d = X.shape[1]
        k = d if self.max_features is None else min(self.max_features, d)
        if k < d and rng is not None:
            drawn = np.sort(rng.choice(d, size=k, replace=False))
            rest = np.setdiff1d(np.arange(d), drawn)
            # fall back to the remaining features only when every drawn one is constant
            groups = [drawn, rest]
        else:
            groups = [np.arange(d)]

        for features in groups:
            best: Optional[Tuple[int, float]] = None
            best_gain = -np.inf
            for f in features:
                found = _best_split_on_feature(X[:, f], y)
                if found is not None and found[0] > best_gain:
                    best_gain = found[0]
                    best = (int(f), found[1])
            if best is not None:
                return best
        return None

    def fit(self, X: np.ndarray, y: np.ndarray, rng: Optional[np.random.Generator] = None) -> "DecisionTreeRegressor":
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        self.n_features = X.shape[1]
        self.feature, self.threshold, self.left, self.right, self.value = [], [], [], [], []

        root = self._new_node(float(np.mean(y)))
        stack = [(root, np.arange(len(y)), 0)]
        while stack:
            node, idx, depth = stack.pop()
            ys = y[idx]
            if len(idx) < self.min_samples_split or np.all(ys == ys[0]):
                continue
            if self.max_depth is not None and depth >= self.max_depth:
                continue
            split = self._choose_split(X[idx], ys, rng)
            if split is None:
                continue
            f, threshold = split
            go_left = X[idx, f] <= threshold
            left_idx, right_idx = idx[go_left], idx[~go_left]
            self.feature[node] = f
            self.threshold[node] = threshold
            self.left[node] = self._new_node(float(np.mean(y[left_idx])))
            self.right[node] = self._new_node(float(np.mean(y[right_idx])))
            stack.append((self.right[node], right_idx, depth + 1))
            stack.append((self.left[node], left_idx, depth + 1))
        return self

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        feature = np.asarray(self.feature, dtype=np.intp)
        threshold = np.asarray(self.threshold, dtype=np.float64)
        left = np.asarray(self.left, dtype=np.intp)
        right = np.asarray(self.right, dtype=np.intp)
        value = np.asarray(self.value, dtype=np.float64)

        node = np.zeros(X.shape[0], dtype=np.intp)
        active = feature[node] != LEAF
        while active.any():
            rows = np.nonzero(active)[0]
            current = node[rows]
            go_left = X[rows, feature[current]] <= threshold[current]
            node[rows] = np.where(go_left, left[current], right[current])
            active = feature[node] != LEAF
        return value[node]

    def to_json(self) -> Dict[str, Any]:
        return {
            "n_features": self.n_features,
            "feature": list(self.feature),
            "threshold": list(self.threshold),
            "left": list(self.left),
            "right": list(self.right),
            "value": list(self.value),
        }

    @classmethod
    def from_json(cls, obj: Dict[str, Any]) -> "DecisionTreeRegressor":
        tree = cls()
        try:
            tree.n_features = int(obj["n_features"])
            tree.feature = [int(v) for v in obj["feature"]]
            tree.threshold = [float(v) for v in obj["threshold"]]
            tree.left = [int(v) for v in obj["left"]]
            tree.right = [int(v) for v in obj["right"]]
            tree.value = [float(v) for v in obj["value"]]
        except (KeyError, TypeError, ValueError) as e:
            raise ParseError(f"Invalid tree: {str(e)}")
        sizes = {len(tree.feature), len(tree.threshold), len(tree.left), len(tree.right), len(tree.value)}
        if len(sizes) != 1 or not tree.feature:
            raise ParseError("Tree node arrays are empty or have different lengths")
        return tree


class RandomForestRegressor:
    """Bagged CART trees; prediction is the arithmetic mean of the trees"""

    def __init__(
        self,
        n_trees: int = 230,
        feature_fraction: Optional[float] = None,
        min_samples_split: int = 2,
        seed: int = 0,
        threads: int = 1,
    ):
        self.n_trees = n_trees
        self.feature_fraction = feature_fraction
        self.min_samples_split = min_samples_split
        self.seed = seed
        self.threads = max(1, threads)
        self.trees: List[DecisionTreeRegressor] = []

    def max_features(self, d: int) -> int:
        if self.feature_fraction is None:
            return max(1, math.ceil(math.sqrt(d)))
        return max(1, min(d, math.ceil(self.feature_fraction * d)))

    def _fit_tree(self, X: np.ndarray, y: np.ndarray, tree_seed: int) -> DecisionTreeRegressor:
        rng = np.random.default_rng(tree_seed)
        rows = bootstrap_indices(rng, len(y))
        tree = DecisionTreeRegressor(
            min_samples_split=self.min_samples_split,
            max_features=self.max_features(X.shape[1]),
        )
        return tree.fit(X[rows], y[rows], rng)

    def fit(self, X: np.ndarray, y: np.ndarray) -> "RandomForestRegressor":
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        seeds = tree_seeds(self.seed, self.n_trees)
        if self.threads == 1:
            self.trees = [self._fit_tree(X, y, s) for s in seeds]
        else:
            with ThreadPoolExecutor(max_workers=self.threads) as executor:
                self.trees = list(executor.map(lambda s: self._fit_tree(X, y, s), seeds))
        logger.debug(f"Fitted {len(self.trees)} trees, {sum(t.node_count for t in self.trees)} nodes total")
        return self

    def tree_predictions(self, X: np.ndarray) -> np.ndarray:
        """(n_trees, n_samples) matrix of per-tree outputs"""
        return np.vstack([tree.predict(X) for tree in self.trees])

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.mean(self.tree_predictions(X), axis=0)

    def to_json(self) -> Dict[str, Any]:
        return {"trees": [t.to_json() for t in self.trees]}

    @classmethod
    def from_json(cls, obj: Dict[str, Any]) -> "RandomForestRegressor":
        forest = cls(n_trees=len(obj["trees"]))
        forest.trees = [DecisionTreeRegressor.from_json(t) for t in obj["trees"]]
        if not forest.trees:
            raise ParseError("Forest holds no trees")
        return forest


class KNeighborsRegressor:
    """Mean target of the k nearest training encodings (Euclidean, ties to the lower training index)"""

    def __init__(self, k: int = 5):
        self.k = k
        self.X = np.zeros((0, 0), dtype=np.float64)
        self.y = np.zeros(0, dtype=np.float64)

    def fit(self, X: np.ndarray, y: np.ndarray) -> "KNeighborsRegressor":
        self.X = np.asarray(X, dtype=np.float64)
        self.y = np.asarray(y, dtype=np.float64)
        return self

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        k = min(self.k, len(self.y))
        out = np.empty(X.shape[0], dtype=np.float64)
        train_sq = (self.X * self.X).sum(axis=1)
        for start in range(0, X.shape[0], KNN_QUERY_BATCH):
            batch = X[start:start + KNN_QUERY_BATCH]
            # squared distances; encodings are small integers so this is exact
            dist = (batch * batch).sum(axis=1)[:, None] + train_sq[None, :] - 2.0 * batch @ self.X.T
            nearest = np.argsort(dist, axis=1, kind="stable")[:, :k]
            out[start:start + len(batch)] = self.y[nearest].mean(axis=1)
        return out

    def to_json(self) -> Dict[str, Any]:
        return {"k": self.k, "X": self.X.tolist(), "y": self.y.tolist()}

    @classmethod
    def from_json(cls, obj: Dict[str, Any]) -> "KNeighborsRegressor":
        try:
            model = cls(k=int(obj["k"]))
            return model.fit(np.asarray(obj["X"], dtype=np.float64), np.asarray(obj["y"], dtype=np.float64))
        except (KeyError, TypeError, ValueError) as e:
            raise ParseError(f"Invalid k-NN model: {str(e)}")
