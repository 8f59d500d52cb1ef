"""Inference-time fairness guardrail.

For each instance the protected attribute is flipped and both versions are
scored. When the two rounded decisions disagree, the ``t_augment`` nearest
members of the opposite-group synthetic pool are scored too, and their mean is
blended with the original score. Instances whose decision does not depend on
the protected attribute pass through untouched.
"""
from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .classifier import Predictor
from .dataset import Dataset, Schema, Standardizer
from .generator import SyntheticPool

MEAN = "mean"
MAJORITY = "majority"


@dataclass(frozen=True)
class GuardrailConfig:
    t_augment: int = 8
    weight: float = 0.5
    aggregation: str = MEAN

    def __post_init__(self):
        if int(self.t_augment) != self.t_augment or self.t_augment < 1:
            raise ValueError("t_augment must be an integer >= 1")
        if not 0.0 <= self.weight <= 1.0:
            raise ValueError("weight must lie in [0, 1]")
        if self.aggregation not in (MEAN, MAJORITY):
            raise ValueError(f"unknown aggregation {self.aggregation!r}")


@dataclass(frozen=True)
class GuardedPrediction:
    original_score: float
    opposite_score: float
    triggered: bool
    tta_scores: tuple[float, ...]
    final_score: float
    flipped: bool


@dataclass
class BatchStats:
    triggered: int = 0
    flips: int = 0
    total_seconds: float = 0.0
    phase_seconds: dict = field(default_factory=lambda: {"scoring": 0.0, "neighbors": 0.0, "aggregation": 0.0})


def round_half_up(p: float) -> int:
    return 1 if p >= 0.5 else 0


def flip_protected(x: np.ndarray, schema: Schema) -> np.ndarray:
    out = np.array(x, dtype=np.float64, copy=True)
    j = schema.protected_index
    out[..., j] = 1.0 - out[..., j]
    return out


def detect_bias(y_hat: float, y_hat_opp: float) -> bool:
    return round_half_up(y_hat) != round_half_up(y_hat_opp)


def _fmean(values) -> float:
    # Clamped so the mean of equal scores is exactly that score.
    values = list(values)
    return min(max(math.fsum(values) / len(values), min(values)), max(values))


def aggregate(y_hat: float, tta_scores, w: float = 0.5) -> float:
    """``w * y_hat + (1 - w) * mean(tta_scores)``; identity when there are no augmentations."""
    tta = list(tta_scores)
    if not tta:
        return y_hat
    m = _fmean(tta)
    out = w * y_hat + (1.0 - w) * m
    return min(max(out, min(y_hat, m)), max(y_hat, m))


def majority_vote(y_hat: float, tta_scores) -> float:
    """Majority of the rounded votes of ``{y_hat} + tta_scores``; ties keep ``y_hat``."""
    votes = [round_half_up(y_hat)] + [round_half_up(s) for s in tta_scores]
    ones = sum(votes)
    zeros = len(votes) - ones
    if ones == zeros:
        return y_hat
    return 1.0 if ones > zeros else 0.0


class NeighborIndex:
    """Brute-force nearest-neighbour search over one pool.

    Distance is Euclidean over standardized numerics plus a 0/1 mismatch per
    categorical column; the protected and label columns are ignored.
    """

    def __init__(self, pool: SyntheticPool, standardizer: Standardizer):
        schema = pool.schema
        self.pool = pool
        self.standardizer = standardizer
        self.cat_cols = np.array(
            [i for i in schema.categorical_indices if i not in (schema.protected_index, schema.label_index)],
            dtype=np.intp,
        )
        self.z = standardizer.transform(pool.members)
        self.cats = pool.members[:, self.cat_cols]

    def distances_sq(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        zx = self.standardizer.transform(x[None, :])[0]
        d = ((self.z - zx) ** 2).sum(axis=1)
        if self.cat_cols.size:
            d = d + (self.cats != x[self.cat_cols]).sum(axis=1)
        return d

    def query(self, x: np.ndarray, t: int) -> np.ndarray:
        if t > len(self.pool):
            raise ValueError(f"pool has {len(self.pool)} members, {t} neighbours requested")
        # stable sort: equal distances resolve to the lower pool index
        return np.argsort(self.distances_sq(x), kind="stable")[:t]


def nearest_neighbors(x: np.ndarray, pool: SyntheticPool, t: int, standardizer: Standardizer) -> np.ndarray:
    """The ``t`` pool members closest to ``x``, nearest first."""
    pa = int(x[pool.schema.protected_index])
    if pool.pa_value == pa:
        raise ValueError(f"pool is conditioned on protected value {pa}, same as the instance")
    idx = NeighborIndex(pool, standardizer).query(x, t)
    return pool.members[idx]


class BiasGuard:
    """Wraps a predictor with the flip / check / augment / blend procedure.

    The guard reads nothing from the model beyond ``predict_proba``, so any
    :class:`~biasguard.classifier.Predictor` works.
    """

    def __init__(self, model: Predictor, pools, config: GuardrailConfig, standardizer: Standardizer):
        by_value = {p.pa_value: p for p in pools}
        if set(by_value) != {0, 1}:
            raise ValueError("need one pool per protected value (0 and 1)")
        self.model = model
        self.schema = model.schema
        self.config = config
        self.standardizer = standardizer
        self.indexes = {v: NeighborIndex(p, standardizer) for v, p in by_value.items()}

    def _combine(self, y_hat: float, tta: list[float]) -> float:
        if self.config.aggregation == MAJORITY:
            return majority_vote(y_hat, tta) if tta else y_hat
        return aggregate(y_hat, tta, self.config.weight)

    def _augment(self, x: np.ndarray) -> np.ndarray:
        pa = int(x[self.schema.protected_index])
        index = self.indexes[1 - pa]
        members = index.pool.members[index.query(x, self.config.t_augment)]
        if np.any(members[:, self.schema.protected_index] != 1 - pa):
            raise RuntimeError("augmentation does not carry the opposite protected value")
        return members

    def _finish(self, y: float, y_opp: float, triggered: bool, tta: list[float]) -> GuardedPrediction:
        final = self._combine(y, tta)
        return GuardedPrediction(
            original_score=y,
            opposite_score=y_opp,
            triggered=triggered,
            tta_scores=tuple(tta),
            final_score=final,
            flipped=round_half_up(final) != round_half_up(y),
        )

    def predict(self, x: np.ndarray) -> GuardedPrediction:
        x = np.asarray(x, dtype=np.float64)
        y = self.model.score(x)
        y_opp = self.model.score(flip_protected(x, self.schema))
        triggered = detect_bias(y, y_opp)
        tta: list[float] = []
        if triggered:
            tta = [float(s) for s in self.model.predict_proba(self._augment(x))]
        return self._finish(y, y_opp, triggered, tta)

    def predict_batch(self, test: Dataset) -> tuple[list[GuardedPrediction], BatchStats]:
        """Guard every row of ``test``; row i of the output equals ``predict(test.values[i])``."""
        stats = BatchStats()
        start = time.perf_counter()
        X = test.values

        t0 = time.perf_counter()
        y = self.model.predict_proba(X)
        y_opp = self.model.predict_proba(flip_protected(X, self.schema))
        stats.phase_seconds["scoring"] += time.perf_counter() - t0

        triggered = (y >= 0.5) != (y_opp >= 0.5)
        hits = np.flatnonzero(triggered)

        t0 = time.perf_counter()
        augmented = [self._augment(X[i]) for i in hits]
        stats.phase_seconds["neighbors"] += time.perf_counter() - t0

        t0 = time.perf_counter()
        tta_by_row: dict[int, list[float]] = {}
        if hits.size:
            # Each row scored alone would give the same numbers; one call is just cheaper.
            flat = self.model.predict_proba(np.concatenate(augmented))
            t = self.config.t_augment
            for k, i in enumerate(hits):
                tta_by_row[int(i)] = [float(s) for s in flat[k * t:(k + 1) * t]]
        stats.phase_seconds["scoring"] += time.perf_counter() - t0

        t0 = time.perf_counter()
        out = [
            self._finish(float(y[i]), float(y_opp[i]), bool(triggered[i]), tta_by_row.get(i, []))
            for i in range(X.shape[0])
        ]
        stats.phase_seconds["aggregation"] += time.perf_counter() - t0

        stats.triggered = int(hits.size)
        stats.flips = sum(p.flipped for p in out)
        stats.total_seconds = time.perf_counter() - start
        return out, stats


def guard_predict(model: Predictor, x: np.ndarray, pools, cfg: GuardrailConfig,
                  standardizer: Standardizer) -> GuardedPrediction:
    return BiasGuard(model, pools, cfg, standardizer).predict(x)


def guard_batch(model: Predictor, test: Dataset, pools, cfg: GuardrailConfig,
                standardizer: Standardizer) -> tuple[list[GuardedPrediction], BatchStats]:
    return BiasGuard(model, pools, cfg, standardizer).predict_batch(test)


DUMP_COLUMNS = ("row_id", "original_score", "opposite_score", "triggered", "final_score", "flipped")


def write_guard_dump(path: str | Path, row_ids, predictions: list[GuardedPrediction]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DUMP_COLUMNS)
        for rid, p in zip(row_ids, predictions):
            w.writerow([int(rid), repr(p.original_score), repr(p.opposite_score), int(p.triggered),
                        repr(p.final_score), int(p.flipped)])


def read_guard_dump(path: str | Path) -> dict[str, np.ndarray]:
    """Columns of a guarded-prediction dump as arrays keyed by column name."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != DUMP_COLUMNS:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        recs = list(reader)
    return {
        "row_id": np.array([int(r["row_id"]) for r in recs], dtype=np.int64),
        "original_score": np.array([float(r["original_score"]) for r in recs]),
        "opposite_score": np.array([float(r["opposite_score"]) for r in recs]),
        "triggered": np.array([r["triggered"] == "1" for r in recs]),
        "final_score": np.array([float(r["final_score"]) for r in recs]),
        "flipped": np.array([r["flipped"] == "1" for r in recs]),
    }
