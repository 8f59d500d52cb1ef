"""Post-processing comparison methods: reject-option classification and group thresholds.

Both are fitted on held-out calibration scores by exhaustive grid search with
equalized-odds difference as the objective. Candidates are ranked on an exact
integer form of that objective, so floating-point noise never decides a tie.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

DEFAULT_THETAS = tuple(k / 100 for k in range(1, 26))


@dataclass(frozen=True)
class RejectOptionPolicy:
    theta: float

    def __post_init__(self):
        if not 0.0 < self.theta < 0.5:
            raise ValueError("theta must lie in (0, 0.5)")


@dataclass(frozen=True)
class GroupThresholds:
    t_priv: float
    t_unpriv: float

    def __post_init__(self):
        if not (0.0 <= self.t_priv <= 1.0 and 0.0 <= self.t_unpriv <= 1.0):
            raise ValueError("thresholds must lie in [0, 1]")


def _as_arrays(scores, pa_values):
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    g = np.asarray(pa_values).astype(np.int64).reshape(-1)
    if s.shape != g.shape:
        raise ValueError("scores and protected values differ in length")
    return s, g


def apply_reject_option(scores, pa_values, policy: RejectOptionPolicy) -> np.ndarray:
    """Inside the band ``|s - 0.5| < theta`` favour the unprivileged group; round elsewhere."""
    s, g = _as_arrays(scores, pa_values)
    out = (s >= 0.5).astype(np.int64)
    band = np.abs(s - 0.5) < policy.theta
    out[band] = np.where(g[band] == 1, 0, 1)
    return out


def apply_thresholds(scores, pa_values, thresholds: GroupThresholds) -> np.ndarray:
    s, g = _as_arrays(scores, pa_values)
    t = np.where(g == 1, thresholds.t_priv, thresholds.t_unpriv)
    return (s >= t).astype(np.int64)


def _group_totals(labels, pa):
    """(positives, negatives) per group; raises when any rate would be undefined."""
    totals = {}
    for v in (0, 1):
        m = pa == v
        if not m.any():
            raise ValueError(f"calibration data has no members of group {v}")
        p = int(np.sum(labels[m] == 1))
        n = int(np.sum(labels[m] == 0))
        if p == 0 or n == 0:
            raise ValueError(f"equalized odds undefined: group {v} lacks positives or negatives")
        totals[v] = (p, n)
    return totals


def _eod_key(tp1, fp1, tp0, fp0, totals):
    """Integer proportional to EOD: 2*EOD*P0*P1*N0*N1."""
    (p0, n0), (p1, n1) = totals[0], totals[1]
    return abs(tp1 * p0 - tp0 * p1) * (n0 * n1) + abs(fp1 * n0 - fp0 * n1) * (p0 * p1)


def _prepare(cal_scores, cal_labels, cal_pa):
    s, g = _as_arrays(cal_scores, cal_pa)
    y = np.asarray(cal_labels).astype(np.int64).reshape(-1)
    if y.shape != s.shape:
        raise ValueError("labels and scores differ in length")
    return s, y, g, _group_totals(y, g)


def fit_reject_option(cal_scores, cal_labels, cal_pa, grid=DEFAULT_THETAS) -> RejectOptionPolicy:
    """Pick the theta with the lowest calibration EOD; ties go to the smaller theta."""
    s, y, g, totals = _prepare(cal_scores, cal_labels, cal_pa)
    best = None
    for theta in sorted(grid):
        pred = apply_reject_option(s, g, RejectOptionPolicy(theta))
        counts = {}
        for v in (0, 1):
            m = g == v
            counts[v] = (int(np.sum(pred[m] & (y[m] == 1))), int(np.sum(pred[m] & (y[m] == 0))))
        key = _eod_key(counts[1][0], counts[1][1], counts[0][0], counts[0][1], totals)
        if best is None or key < best[0]:
            best = (key, theta)
    return RejectOptionPolicy(best[1])


def fit_thresholds(cal_scores, cal_labels, cal_pa, grid_resolution: int = 100) -> GroupThresholds:
    """Exhaustive search over ``{0, 1/R, ..., 1}`` for both group thresholds.

    Minimises calibration EOD; ties go to higher calibration accuracy, then to
    the pair closest to (0.5, 0.5) in L1, then to the lexicographically
    smallest ``(t_priv, t_unpriv)``.
    """
    R = int(grid_resolution)
    if R < 1:
        raise ValueError("grid_resolution must be >= 1")
    s, y, g, totals = _prepare(cal_scores, cal_labels, cal_pa)
    grid = np.arange(R + 1) / R

    tp, fp, correct = {}, {}, {}
    for v in (0, 1):
        m = g == v
        above = s[m][None, :] >= grid[:, None]
        pos = y[m] == 1
        tp[v] = (above & pos).sum(axis=1).astype(np.int64)
        fp[v] = (above & ~pos).sum(axis=1).astype(np.int64)
        correct[v] = tp[v] + (totals[v][1] - fp[v])

    (p0, n0), (p1, n1) = totals[0], totals[1]
    bound = 2 * p0 * p1 * n0 * n1
    dtype = np.int64 if bound < 2**62 else object
    # rows index the privileged threshold, columns the unprivileged one
    key = _eod_key(tp[1].astype(dtype)[:, None], fp[1].astype(dtype)[:, None],
                   tp[0].astype(dtype)[None, :], fp[0].astype(dtype)[None, :], totals)
    acc = correct[1][:, None] + correct[0][None, :]
    steps = np.abs(2 * np.arange(R + 1) - R)
    l1 = steps[:, None] + steps[None, :]
    ii, jj = np.meshgrid(np.arange(R + 1), np.arange(R + 1), indexing="ij")

    if dtype is object:
        flat = min(range(key.size), key=lambda k: (key.flat[k], -acc.flat[k], l1.flat[k], ii.flat[k], jj.flat[k]))
    else:
        flat = int(np.lexsort((jj.ravel(), ii.ravel(), l1.ravel(), -acc.ravel(), key.ravel()))[0])
    i, j = divmod(flat, R + 1)
    return GroupThresholds(t_priv=float(grid[i]), t_unpriv=float(grid[j]))


def save_policy(path: str | Path, policy: RejectOptionPolicy | GroupThresholds,
                grid, calibration_seed: int) -> None:
    method = "reject_option" if isinstance(policy, RejectOptionPolicy) else "threshold_optimizer"
    payload = {
        "method": method,
        "params": asdict(policy),
        "grid": grid if isinstance(grid, int) else list(grid),
        "calibration_seed": calibration_seed,
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def load_policy(path: str | Path) -> tuple[RejectOptionPolicy | GroupThresholds, dict]:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if raw["method"] == "reject_option":
        policy = RejectOptionPolicy(**raw["params"])
    elif raw["method"] == "threshold_optimizer":
        policy = GroupThresholds(**raw["params"])
    else:
        raise ValueError(f"{path}: unknown method {raw['method']!r}")
    return policy, raw
