"""Group fairness and performance metrics.

Rates that would divide by zero come back as :class:`Undefined` values naming
what failed, never as a silent 0 or 1. Group index 1 is the privileged group.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np


@dataclass(frozen=True)
class Undefined:
    reason: str

    def __str__(self) -> str:
        return f"undefined ({self.reason})"


@dataclass(frozen=True)
class Confusion:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def size(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class GroupConfusion:
    unprivileged: Confusion
    privileged: Confusion

    def __getitem__(self, pa: int) -> Confusion:
        return self.privileged if pa == 1 else self.unprivileged


@dataclass(frozen=True)
class EqualizedOdds:
    eod: float
    delta_tpr: float
    delta_fpr: float


def _aligned(*arrays) -> list[np.ndarray]:
    out = [np.asarray(a).astype(np.int64).reshape(-1) for a in arrays]
    n = out[0].shape[0]
    if any(a.shape[0] != n for a in out):
        raise ValueError("input vectors differ in length")
    if n == 0:
        raise ValueError("empty input")
    for a in out:
        if np.any((a != 0) & (a != 1)):
            raise ValueError("entries must be binary")
    return out


def confusion_by_group(labels, predictions, pa_values) -> GroupConfusion:
    y, p, g = _aligned(labels, predictions, pa_values)
    groups = []
    for v in (0, 1):
        m = g == v
        yy, pp = y[m], p[m]
        groups.append(Confusion(
            tp=int(np.sum((yy == 1) & (pp == 1))),
            fp=int(np.sum((yy == 0) & (pp == 1))),
            tn=int(np.sum((yy == 0) & (pp == 0))),
            fn=int(np.sum((yy == 1) & (pp == 0))),
        ))
    return GroupConfusion(*groups)


def equalized_odds(gc: GroupConfusion) -> EqualizedOdds | Undefined:
    """Mean of the absolute between-group gaps in TPR and FPR."""
    tpr, fpr = {}, {}
    for v in (0, 1):
        c = gc[v]
        if c.tp + c.fn == 0:
            return Undefined(f"TPR of group {v}: no ground-truth positives")
        if c.fp + c.tn == 0:
            return Undefined(f"FPR of group {v}: no ground-truth negatives")
        tpr[v] = c.tp / (c.tp + c.fn)
        fpr[v] = c.fp / (c.fp + c.tn)
    d_tpr = abs(tpr[1] - tpr[0])
    d_fpr = abs(fpr[1] - fpr[0])
    return EqualizedOdds(0.5 * (d_tpr + d_fpr), d_tpr, d_fpr)


def disparate_impact(predictions, pa_values) -> float | Undefined:
    """P(pred=1 | unprivileged) / P(pred=1 | privileged).

    When neither group receives a positive decision the ratio is taken as 1.
    """
    p, g = _aligned(predictions, pa_values)
    n0, n1 = int(np.sum(g == 0)), int(np.sum(g == 1))
    if n0 == 0 or n1 == 0:
        return Undefined(f"group {0 if n0 == 0 else 1} is empty")
    pos0 = int(np.sum(p[g == 0]))
    pos1 = int(np.sum(p[g == 1]))
    if pos1 == 0:
        return 1.0 if pos0 == 0 else Undefined("privileged positive rate is 0")
    return (pos0 / n0) / (pos1 / n1)


def accuracy(labels, predictions) -> float:
    y, p = _aligned(labels, predictions)
    return float(np.mean(y == p))


def flips(base, final) -> int:
    b, f = _aligned(base, final)
    return int(np.sum(b != f))


@dataclass(frozen=True)
class MetricBundle:
    accuracy: float
    eod: float | Undefined
    delta_tpr: float | Undefined
    delta_fpr: float | Undefined
    di: float | Undefined
    flips: int


def metric_bundle(labels, predictions, pa_values, base_predictions) -> MetricBundle:
    eo = equalized_odds(confusion_by_group(labels, predictions, pa_values))
    if isinstance(eo, Undefined):
        eod = d_tpr = d_fpr = eo
    else:
        eod, d_tpr, d_fpr = eo.eod, eo.delta_tpr, eo.delta_fpr
    return MetricBundle(
        accuracy=accuracy(labels, predictions),
        eod=eod,
        delta_tpr=d_tpr,
        delta_fpr=d_fpr,
        di=disparate_impact(predictions, pa_values),
        flips=flips(base_predictions, predictions),
    )


@dataclass(frozen=True)
class FieldSummary:
    mean: float | Undefined
    std: float | Undefined
    n_defined: int
    n_total: int

    @property
    def complete(self) -> bool:
        return self.n_defined == self.n_total


def summarize_folds(bundles: list[MetricBundle]) -> dict[str, FieldSummary | int]:
    """Mean and population std of each metric across folds.

    Undefined fold values are skipped and counted; ``flips`` is summed.
    """
    if not bundles:
        raise ValueError("no folds to summarize")
    out: dict[str, FieldSummary | int] = {}
    for f in fields(MetricBundle):
        values = [getattr(b, f.name) for b in bundles]
        if f.name == "flips":
            out["flips"] = int(sum(values))
            continue
        defined = [v for v in values if not isinstance(v, Undefined)]
        if not defined:
            u = Undefined(f"{f.name} undefined in every fold")
            out[f.name] = FieldSummary(u, u, 0, len(values))
            continue
        mean = min(max(math.fsum(defined) / len(defined), min(defined)), max(defined))
        var = math.fsum((v - mean) ** 2 for v in defined) / len(defined)
        out[f.name] = FieldSummary(mean, math.sqrt(var), len(defined), len(values))
    return out
