"""Black-box predictor interface and a bagged Gini decision-tree ensemble."""
from __future__ import annotations

import csv
import json
import math
from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .dataset import CATEGORICAL, Dataset, Schema, SchemaError

MODEL_FORMAT = "biasguard-forest"
MODEL_VERSION = 1


class Predictor(ABC):
    """Anything that maps encoded rows of ``schema`` to favorable-class probabilities."""

    schema: Schema

    @abstractmethod
    def predict_proba(self, values: np.ndarray) -> np.ndarray:
        """Probabilities in [0, 1] for a 2-d array of encoded rows."""

    def score(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 1 or x.shape[0] != len(self.schema.columns):
            raise SchemaError(
                f"instance has shape {x.shape}, model expects {len(self.schema.columns)} cells"
            )
        return float(self.predict_proba(x[None, :])[0])


class FunctionPredictor(Predictor):
    """Wraps a vectorised callable ``fn(values) -> probabilities``."""

    def __init__(self, schema: Schema, fn: Callable[[np.ndarray], np.ndarray]):
        self.schema = schema
        self._fn = fn

    def predict_proba(self, values: np.ndarray) -> np.ndarray:
        out = np.asarray(self._fn(np.atleast_2d(values)), dtype=np.float64).reshape(-1)
        if out.size and (out.min() < 0.0 or out.max() > 1.0 or np.isnan(out).any()):
            raise ValueError("predictor returned a score outside [0, 1]")
        return out


def score(model: Predictor, x: np.ndarray) -> float:
    return model.score(x)


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    max_depth: int = 12
    min_leaf: int = 2
    max_features: int | None = None  # None -> ceil(sqrt(n_features))

    def __post_init__(self):
        if self.n_trees < 1 or self.max_depth < 0 or self.min_leaf < 1:
            raise ValueError(f"invalid forest config {self}")
        if self.max_features is not None and self.max_features < 1:
            raise ValueError("max_features must be >= 1")


@dataclass(frozen=True, eq=False)
class Tree:
    """Flat node arrays. ``feature == -1`` marks a leaf.

    Numeric splits send ``x <= threshold`` left; categorical splits send
    ``x == threshold`` (a category code) left.
    """

    feature: np.ndarray
    threshold: np.ndarray
    categorical: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def apply(self, values: np.ndarray) -> np.ndarray:
        n = values.shape[0]
        node = np.zeros(n, dtype=np.intp)
        rows = np.arange(n)
        while True:
            f = self.feature[node]
            internal = f >= 0
            if not internal.any():
                return node
            x = values[rows, np.where(internal, f, 0)]
            thr = self.threshold[node]
            go_left = np.where(self.categorical[node], x == thr, x <= thr)
            node = np.where(internal, np.where(go_left, self.left[node], self.right[node]), node)

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "categorical": self.categorical.astype(int).tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "Tree":
        return cls(
            np.asarray(raw["feature"], dtype=np.intp),
            np.asarray(raw["threshold"], dtype=np.float64),
            np.asarray(raw["categorical"], dtype=bool),
            np.asarray(raw["left"], dtype=np.intp),
            np.asarray(raw["right"], dtype=np.intp),
            np.asarray(raw["value"], dtype=np.float64),
        )


class ForestModel(Predictor):
    """Mean of the reached leaves' favorable fractions across trees."""

    def __init__(self, schema: Schema, trees: list[Tree], config: ForestConfig, seed: int):
        self.schema = schema
        self.trees = list(trees)
        self.config = config
        self.seed = seed

    def predict_proba(self, values: np.ndarray) -> np.ndarray:
        if not self.trees:
            raise ValueError("forest has no trees")
        values = np.atleast_2d(np.asarray(values, dtype=np.float64))
        if values.shape[1] != len(self.schema.columns):
            raise SchemaError(f"expected {len(self.schema.columns)} columns, got {values.shape[1]}")
        # Sequential accumulation keeps a row's score independent of batch composition.
        total = np.zeros(values.shape[0])
        for tree in self.trees:
            total += tree.value[tree.apply(values)]
        return np.clip(total / len(self.trees), 0.0, 1.0)

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "seed": self.seed,
            "config": asdict(self.config),
            "schema": self.schema.to_dict(),
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ForestModel":
        if raw.get("format") != MODEL_FORMAT or raw.get("version") != MODEL_VERSION:
            raise ValueError("not a supported forest model file")
        return cls(
            Schema.from_dict(raw["schema"]),
            [Tree.from_dict(t) for t in raw["trees"]],
            ForestConfig(**raw["config"]),
            int(raw["seed"]),
        )


def save_model(model: ForestModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model.to_dict()), encoding="utf-8")


def load_model(path: str | Path) -> ForestModel:
    return ForestModel.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _weighted_gini(pos: np.ndarray, n: np.ndarray) -> np.ndarray:
    # n * 2p(1-p) up to the constant factor 2
    return pos * (n - pos) / n


class _TreeBuilder:
    def __init__(self, X, y, categorical, n_codes, usable, config: ForestConfig, k: int, rng):
        self.X = X
        self.features = np.flatnonzero(usable)
        self.y = y
        self.categorical = categorical
        self.n_codes = n_codes
        self.max_depth = config.max_depth
        self.min_leaf = config.min_leaf
        self.k = k
        self.rng = rng
        self.nodes: list[list] = []

    def _new_node(self, value: float) -> int:
        self.nodes.append([-1, 0.0, False, -1, -1, value])
        return len(self.nodes) - 1

    def _best_split(self, rows: np.ndarray, f: int):
        x = self.X[rows, f]
        y = self.y[rows]
        n = rows.shape[0]
        min_leaf = self.min_leaf
        if self.categorical[f]:
            codes = x.astype(np.intp)
            counts = np.bincount(codes, minlength=self.n_codes[f])
            pos = np.bincount(codes, weights=y, minlength=self.n_codes[f])
            ok = (counts >= min_leaf) & (n - counts >= min_leaf)
            if not ok.any():
                return None
            cand = np.flatnonzero(ok)
            nl = counts[cand].astype(np.float64)
            pl = pos[cand]
            total_pos = y.sum()
            cost = _weighted_gini(pl, nl) + _weighted_gini(total_pos - pl, n - nl)
            j = int(np.argmin(cost))
            return cost[j], float(cand[j]), True
        order = np.argsort(x, kind="stable")
        xs = x[order]
        cum = np.cumsum(y[order])
        nl = np.arange(min_leaf, n - min_leaf + 1, dtype=np.float64)
        if nl.size == 0:
            return None
        split_at = nl.astype(np.intp)  # left = xs[:split_at]
        distinct = xs[split_at] > xs[split_at - 1]
        if not distinct.any():
            return None
        nl = nl[distinct]
        split_at = split_at[distinct]
        pl = cum[split_at - 1]
        cost = _weighted_gini(pl, nl) + _weighted_gini(cum[-1] - pl, n - nl)
        j = int(np.argmin(cost))
        lo, hi = xs[split_at[j] - 1], xs[split_at[j]]
        thr = (lo + hi) / 2.0
        if not lo <= thr < hi:
            thr = lo
        return cost[j], float(thr), False

    def build(self, rows: np.ndarray) -> None:
        stack = [(rows, 0, None, False)]
        while stack:
            rows, depth, parent, is_left = stack.pop()
            y = self.y[rows]
            n = rows.shape[0]
            pos = float(y.sum())
            node = self._new_node(pos / n)
            if parent is not None:
                self.nodes[parent][3 if is_left else 4] = node
            if depth >= self.max_depth or pos == 0.0 or pos == n or n < 2 * self.min_leaf:
                continue
            parent_cost = pos * (n - pos) / n
            order = self.rng.permutation(self.features)
            best = None
            # Draw k features; keep drawing past k only while no valid split was found.
            for tried, f in enumerate(order):
                if tried >= self.k and best is not None:
                    break
                found = self._best_split(rows, int(f))
                if found is not None and found[0] < parent_cost - 1e-12:
                    if best is None or found[0] < best[0]:
                        best = (found[0], int(f), found[1], found[2])
            if best is None:
                continue
            _, f, thr, is_cat = best
            x = self.X[rows, f]
            go_left = (x == thr) if is_cat else (x <= thr)
            self.nodes[node][0:3] = [f, thr, is_cat]
            # push right first so the left subtree is numbered first
            stack.append((rows[~go_left], depth + 1, node, False))
            stack.append((rows[go_left], depth + 1, node, True))

    def tree(self) -> Tree:
        cols = list(zip(*self.nodes))
        return Tree(
            np.asarray(cols[0], dtype=np.intp),
            np.asarray(cols[1], dtype=np.float64),
            np.asarray(cols[2], dtype=bool),
            np.asarray(cols[3], dtype=np.intp),
            np.asarray(cols[4], dtype=np.intp),
            np.asarray(cols[5], dtype=np.float64),
        )


def train_forest(train: Dataset, config: ForestConfig | None = None, seed: int = 0) -> ForestModel:
    """Fit a bagged ensemble of Gini trees on ``train``.

    Each tree sees a bootstrap sample of size m and a fresh random feature
    subset at every node. Per-tree generators are spawned from ``seed`` so the
    result is reproducible regardless of how trees are scheduled.
    """
    config = config or ForestConfig()
    schema = train.schema
    m = len(train)
    if m < config.min_leaf:
        raise ValueError(f"need at least {config.min_leaf} training rows, got {m}")
    X = train.values
    y = train.labels.astype(np.float64)
    categorical = np.array([c.kind == CATEGORICAL for c in schema.columns])
    n_codes = np.array([len(c.categories) for c in schema.columns])
    usable = np.ones(len(schema.columns), dtype=bool)
    usable[schema.label_index] = False
    n_features = int(usable.sum())
    k = config.max_features or math.ceil(math.sqrt(n_features))
    k = min(k, n_features)

    trees = []
    for child in np.random.SeedSequence(seed).spawn(config.n_trees):
        rng = np.random.default_rng(child)
        sample = rng.integers(0, m, m)
        builder = _TreeBuilder(X, y, categorical, n_codes, usable, config, k, rng)
        builder.build(sample)
        trees.append(builder.tree())
    return ForestModel(schema, trees, config, seed)


class LookupPredictor:
    """Scores held in a table keyed by source row id.

    Used when a model lives outside this process and only its scores are
    available; it cannot score counterfactual rows, so it can feed the
    metrics and baselines but not the guardrail.
    """

    def __init__(self, table: dict[int, float]):
        self.table = dict(table)

    def score(self, row_id: int) -> float:
        try:
            return self.table[int(row_id)]
        except KeyError:
            raise KeyError(f"no score for row id {row_id}") from None

    def scores(self, row_ids) -> np.ndarray:
        return np.array([self.score(r) for r in row_ids], dtype=np.float64)


def load_external_scores(path: str | Path, delimiter: str = ",") -> LookupPredictor:
    """Read a ``row_id,probability`` file."""
    table: dict[int, float] = {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh, delimiter=delimiter)
        fields = [f.strip() for f in (reader.fieldnames or [])]
        if "row_id" not in fields or "probability" not in fields:
            raise ValueError(f"{path}: expected columns row_id, probability")
        for rec in reader:
            rec = {k.strip(): v for k, v in rec.items()}
            rid = int(rec["row_id"])
            p = float(rec["probability"])
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{path}: row id {rid}: probability {p} outside [0, 1]")
            if rid in table:
                raise ValueError(f"{path}: duplicate row id {rid}")
            table[rid] = p
    if not table:
        raise ValueError(f"{path}: no scores")
    return LookupPredictor(table)
