import numpy as np
import pytest

from biasguard.dataset import Column, Dataset, Schema

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def schema():
    return Schema(
        columns=(
            Column("age", "numeric"),
            Column("income", "numeric"),
            Column("city", "categorical", ("a", "b", "c")),
            Column("sex", "categorical", ("f", "m")),
            Column("label", "categorical", ("bad", "good")),
        ),
        protected="sex",
        privileged="m",
        label="label",
        favorable="good",
    )


@pytest.fixture
def small_dataset(schema):
    rng = np.random.default_rng(3)
    m = 60
    values = np.column_stack([
        rng.normal(40, 10, m),
        rng.normal(50, 5, m),
        rng.integers(0, 3, m),
        rng.integers(0, 2, m),
        rng.integers(0, 2, m),
    ])
    return Dataset.from_values(schema, values)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
