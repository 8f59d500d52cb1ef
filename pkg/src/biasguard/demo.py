"""A small synthetic hiring-style dataset for smoke tests and the acceptance run."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .dataset import Column, Dataset, Schema, save_schema, write_dataset

DEMO_SCHEMA = Schema(
    columns=(
        Column("skill", "numeric"),
        Column("experience", "numeric"),
        Column("region", "categorical", ("north", "south", "east", "west")),
        Column("sex", "categorical", ("female", "male")),
        Column("hired", "categorical", ("no", "yes")),
    ),
    protected="sex",
    privileged="male",
    label="hired",
    favorable="yes",
)


def make_demo_dataset(m: int = 5000, seed: int = 0, skill_coef: float = 1.5,
                      experience_coef: float = 1.0) -> Dataset:
    """Clean labels drawn from a logistic function of ``skill`` and ``experience`` only.

    ``sex`` and ``region`` carry no signal. Group-dependent bias is injected
    later, into training folds only (see ``LabelBias`` in the harness).
    """
    rng = np.random.default_rng(seed)
    skill = rng.normal(size=m)
    experience = rng.normal(size=m)
    region = rng.integers(0, 4, m)
    sex = rng.integers(0, 2, m)
    logit = skill_coef * skill + experience_coef * experience
    hired = (rng.random(m) < 1.0 / (1.0 + np.exp(-logit))).astype(np.float64)
    return Dataset.from_values(DEMO_SCHEMA, np.column_stack([skill, experience, region, sex, hired]))


def write_demo(directory: str | Path, m: int = 5000, seed: int = 0) -> tuple[Path, Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    data_path, schema_path = directory / "demo.csv", directory / "demo.schema.json"
    write_dataset(make_demo_dataset(m, seed), data_path)
    save_schema(DEMO_SCHEMA, schema_path)
    return data_path, schema_path
