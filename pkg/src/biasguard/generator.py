"""Synthetic pools of protected-group instances.

A pool holds pre-generated rows that all carry one protected-attribute value.
The guardrail queries it by nearest-neighbour search. Pools come either from
the native kernel-jittered bootstrap sampler below or from an external
generator's output file (e.g. a CTGAN run), ingested with
:func:`load_external_pool`.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import CATEGORICAL, NUMERIC, Dataset, DataError, Schema, Standardizer, load_dataset

NATIVE = "native"
EXTERNAL = "external"
POOL_FORMAT = "biasguard-pools"
POOL_VERSION = 1


@dataclass(frozen=True, eq=False)
class SyntheticPool:
    schema: Schema
    pa_value: int
    members: np.ndarray
    provenance: str
    source: str

    def __post_init__(self):
        members = np.array(self.members, dtype=np.float64, copy=True)
        if self.pa_value not in (0, 1):
            raise ValueError("pa_value must be 0 or 1")
        if members.ndim != 2 or members.shape[0] < 1:
            raise ValueError("a pool needs at least one member")
        # Validates categories and finiteness.
        Dataset.from_values(self.schema, members)
        wrong = int(np.count_nonzero(members[:, self.schema.protected_index] != self.pa_value))
        if wrong:
            raise ValueError(f"{wrong} pool members do not carry protected value {self.pa_value}")
        members.setflags(write=False)
        object.__setattr__(self, "members", members)

    def __len__(self) -> int:
        return self.members.shape[0]

    def as_dataset(self) -> Dataset:
        return Dataset.from_values(self.schema, self.members)

    def to_dict(self) -> dict:
        return {
            "pa_value": self.pa_value,
            "provenance": self.provenance,
            "source": self.source,
            "members": self.members.tolist(),
        }

    @classmethod
    def from_dict(cls, schema: Schema, raw: dict) -> "SyntheticPool":
        return cls(schema, int(raw["pa_value"]), np.asarray(raw["members"], dtype=np.float64),
                   str(raw["provenance"]), str(raw["source"]))


@dataclass(frozen=True, eq=False)
class NativeSampler:
    schema: Schema
    pa_value: int
    group: np.ndarray
    bandwidths: np.ndarray  # aligned to schema.numeric_indices
    resample_prob: float
    seed: int

    def __post_init__(self):
        if np.any(self.bandwidths < 0):
            raise ValueError("bandwidths must be non-negative")
        if not 0.0 <= self.resample_prob <= 1.0:
            raise ValueError("resample probability must lie in [0, 1]")


def silverman_bandwidth(column: np.ndarray) -> float:
    """1.06 * sigma * n^(-1/5) with the population stddev."""
    n = column.shape[0]
    return float(1.06 * column.std() * n ** (-0.2))


def fit_native_sampler(train: Dataset, pa_value: int, seed: int = 0,
                       resample_prob: float = 0.1) -> NativeSampler:
    schema = train.schema
    group = train.values[train.protected == pa_value]
    if group.shape[0] < 2:
        raise ValueError(
            f"need at least 2 training rows with protected value {pa_value}, found {group.shape[0]}"
        )
    bw = np.array([silverman_bandwidth(group[:, i]) for i in schema.numeric_indices])
    return NativeSampler(schema, pa_value, group.copy(), bw, resample_prob, seed)


def generate(sampler: NativeSampler, count: int, seed: int | None = None) -> SyntheticPool:
    """Draw ``count`` members: bootstrap a group row, jitter numerics, resample categoricals.

    Every categorical other than the protected one is independently replaced,
    with probability ``resample_prob``, by a draw from the group's empirical
    marginal. The protected cell is then forced to the pool's value.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    seed = sampler.seed if seed is None else seed
    schema = sampler.schema
    rng = np.random.default_rng(seed)
    group = sampler.group
    picks = rng.integers(0, group.shape[0], count)
    out = group[picks].copy()
    num = schema.numeric_indices
    if num.size:
        noise = rng.standard_normal((count, num.size)) * sampler.bandwidths
        out[:, num] += noise
    for i in schema.categorical_indices:
        if i == schema.protected_index:
            continue
        swap = rng.random(count) < sampler.resample_prob
        donors = rng.integers(0, group.shape[0], count)
        out[swap, i] = group[donors[swap], i]
    out[:, schema.protected_index] = float(sampler.pa_value)
    return SyntheticPool(schema, sampler.pa_value, out, NATIVE, f"seed={seed}")


def load_external_pool(path: str | Path, schema: Schema, pa_value: int,
                       delimiter: str = ",") -> SyntheticPool:
    d = load_dataset(path, schema, delimiter=delimiter)
    wrong = int(np.count_nonzero(d.protected != pa_value))
    if wrong:
        raise DataError(f"{path}: {wrong} rows do not carry protected value {pa_value}")
    return SyntheticPool(schema, pa_value, d.values, EXTERNAL, str(path))


def distribution_report(pool: SyntheticPool, reference: Dataset) -> list[dict]:
    """Per-column divergence between a pool and a reference sample.

    Numeric columns get ``mean_gap`` (|mean difference| in reference-stddev
    units) and ``std_ratio`` (pool / reference); categorical columns get
    ``tv_distance`` between category frequencies.
    """
    schema = reference.schema
    rows = []
    for i, col in enumerate(schema.columns):
        p = pool.members[:, i]
        r = reference.values[:, i]
        if col.kind == NUMERIC:
            ref_std = r.std()
            diff = abs(p.mean() - r.mean())
            gap = diff / ref_std if ref_std > 0 else (0.0 if diff == 0 else float("inf"))
            ratio = p.std() / ref_std if ref_std > 0 else (1.0 if p.std() == 0 else float("inf"))
            rows.append({"column": col.name, "kind": NUMERIC, "mean_gap": gap, "std_ratio": ratio})
        else:
            k = len(col.categories)
            fp = np.bincount(p.astype(np.intp), minlength=k) / p.size
            fr = np.bincount(r.astype(np.intp), minlength=k) / r.size
            rows.append({"column": col.name, "kind": CATEGORICAL,
                         "tv_distance": 0.5 * float(np.abs(fp - fr).sum())})
    return rows


def format_distribution_report(rows: list[dict]) -> str:
    lines = [f"{'column':<20} {'kind':<12} {'mean_gap':>10} {'std_ratio':>10} {'tv':>8}"]
    for r in rows:
        if r["kind"] == NUMERIC:
            lines.append(f"{r['column']:<20} {r['kind']:<12} {r['mean_gap']:>10.4f} {r['std_ratio']:>10.4f} {'':>8}")
        else:
            lines.append(f"{r['column']:<20} {r['kind']:<12} {'':>10} {'':>10} {r['tv_distance']:>8.4f}")
    return "\n".join(lines)


def save_pools(path: str | Path, pools: tuple[SyntheticPool, SyntheticPool],
               standardizer: Standardizer, meta: dict | None = None) -> None:
    """Persist both pools plus the standardizer they are searched with."""
    schema = pools[0].schema
    payload = {
        "format": POOL_FORMAT,
        "version": POOL_VERSION,
        "meta": meta or {},
        "schema": schema.to_dict(),
        "standardizer": standardizer.to_dict(),
        "pools": [p.to_dict() for p in pools],
    }
    Path(path).write_text(json.dumps(payload), encoding="utf-8")


def load_pools(path: str | Path) -> tuple[tuple[SyntheticPool, SyntheticPool], Standardizer, dict]:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if raw.get("format") != POOL_FORMAT or raw.get("version") != POOL_VERSION:
        raise ValueError(f"{path}: not a supported pool cache")
    schema = Schema.from_dict(raw["schema"])
    pools = tuple(SyntheticPool.from_dict(schema, p) for p in raw["pools"])
    pools = tuple(sorted(pools, key=lambda p: p.pa_value))
    if [p.pa_value for p in pools] != [0, 1]:
        raise ValueError(f"{path}: cache must hold one pool per protected value")
    return pools, Standardizer.from_dict(raw["standardizer"]), raw.get("meta", {})
