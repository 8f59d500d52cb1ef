import statistics

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from biasguard.dataset import DataError, Dataset, fit_standardizer, write_dataset
from biasguard.generator import (
    EXTERNAL,
    NativeSampler,
    SyntheticPool,
    distribution_report,
    fit_native_sampler,
    generate,
    load_external_pool,
    load_pools,
    save_pools,
    silverman_bandwidth,
)


def test_silverman_hand_value():
    col = np.arange(10, dtype=float)
    sigma = statistics.pstdev(range(10))
    assert sigma == pytest.approx(2.8723, abs=1e-4)
    h = silverman_bandwidth(col)
    assert h == pytest.approx(1.06 * sigma * 10 ** -0.2, rel=1e-14)
    assert h == pytest.approx(1.921, abs=1e-3)


def test_zero_variance_bandwidth(schema, small_dataset):
    v = small_dataset.values.copy()
    v[:, 0] = 42.0
    d = Dataset.from_values(schema, v)
    sampler = fit_native_sampler(d, 0, seed=1)
    assert sampler.bandwidths[0] == 0.0
    pool = generate(sampler, 50)
    assert np.all(pool.members[:, 0] == 42.0)


def test_group_too_small(schema, small_dataset):
    v = small_dataset.values.copy()
    v[:, 3] = 1.0
    v[0, 3] = 0.0
    with pytest.raises(ValueError, match="found 1"):
        fit_native_sampler(Dataset.from_values(schema, v), 0)


@pytest.mark.parametrize("pa", [0, 1])
def test_conditioning(small_dataset, pa):
    pool = generate(fit_native_sampler(small_dataset, pa, seed=3), 5)
    assert len(pool) == 5
    assert np.all(pool.members[:, small_dataset.schema.protected_index] == pa)


def test_no_noise_gives_copies(small_dataset):
    s = fit_native_sampler(small_dataset, 1, seed=0, resample_prob=0.0)
    s = NativeSampler(s.schema, s.pa_value, s.group, np.zeros_like(s.bandwidths), 0.0, 0)
    pool = generate(s, 40)
    rows = {tuple(r) for r in s.group}
    assert all(tuple(r) in rows for r in pool.members)


def test_generation_is_deterministic(small_dataset):
    s = fit_native_sampler(small_dataset, 0, seed=5)
    np.testing.assert_array_equal(generate(s, 30).members, generate(s, 30).members)
    assert not np.array_equal(generate(s, 30, seed=6).members, generate(s, 30).members)


def test_pool_rejects_wrong_pa(schema, small_dataset):
    with pytest.raises(ValueError, match="do not carry"):
        SyntheticPool(schema, 0, small_dataset.values, EXTERNAL, "x")


def _rows_with_pa(schema, n, pa, seed=0):
    rng = np.random.default_rng(seed)
    return Dataset.from_values(schema, np.column_stack([
        rng.normal(size=n), rng.normal(size=n), rng.integers(0, 3, n), np.full(n, pa), rng.integers(0, 2, n)]))


def test_external_pool(tmp_path, schema):
    f = tmp_path / "pool.csv"
    write_dataset(_rows_with_pa(schema, 100, 0), f)
    pool = load_external_pool(f, schema, 0)
    assert len(pool) == 100 and pool.provenance == EXTERNAL


def test_external_pool_wrong_pa_count(tmp_path, schema):
    d = _rows_with_pa(schema, 20, 0)
    v = d.values.copy()
    v[[2, 5, 11], 3] = 1.0
    f = tmp_path / "pool.csv"
    write_dataset(Dataset.from_values(schema, v), f)
    with pytest.raises(DataError, match=r"\b3 rows"):
        load_external_pool(f, schema, 0)


def test_external_pool_empty(tmp_path, schema):
    f = tmp_path / "pool.csv"
    f.write_text("")
    with pytest.raises(DataError):
        load_external_pool(f, schema, 0)


def test_report_identical(schema):
    ref = _rows_with_pa(schema, 50, 0)
    pool = SyntheticPool(schema, 0, ref.values, EXTERNAL, "copy")
    for row in distribution_report(pool, ref):
        if row["kind"] == "numeric":
            assert row["mean_gap"] == 0.0 and row["std_ratio"] == pytest.approx(1.0, abs=1e-15)
        else:
            assert row["tv_distance"] == 0.0


def test_report_shifted_column(schema):
    ref = _rows_with_pa(schema, 500, 0)
    v = ref.values.copy()
    sd = v[:, 0].std()
    v[:, 0] += sd
    rows = distribution_report(SyntheticPool(schema, 0, v, EXTERNAL, "shift"), ref)
    assert rows[0]["mean_gap"] == pytest.approx(1.0, rel=1e-12)
    assert rows[1]["mean_gap"] == 0.0


def test_report_tv_distance(schema):
    base = _rows_with_pa(schema, 10, 0).values.copy()
    ref_v, pool_v = base.copy(), base.copy()
    ref_v[:, 4] = [1] * 5 + [0] * 5  # {0.5, 0.5}
    pool_v[:, 4] = [1] * 6 + [0] * 4  # {0.6, 0.4}
    rows = distribution_report(SyntheticPool(schema, 0, pool_v, EXTERNAL, "x"), Dataset.from_values(schema, ref_v))
    assert rows[4]["tv_distance"] == pytest.approx(0.1, abs=1e-15)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31), st.integers(200, 600), st.floats(0.1, 20.0))
def test_fidelity(seed, n, scale):
    from biasguard.dataset import Column, Schema
    schema = Schema(
        columns=(Column("a", "numeric"), Column("b", "numeric"),
                 Column("g", "categorical", ("0", "1")), Column("y", "categorical", ("0", "1"))),
        protected="g", privileged="1", label="y", favorable="1",
    )
    rng = np.random.default_rng(seed)
    v = np.column_stack([rng.normal(3, scale, n), rng.exponential(scale, n), np.zeros(n), rng.integers(0, 2, n)])
    group = Dataset.from_values(schema, v)
    pool = generate(fit_native_sampler(group, 0, seed=seed), 2000)
    for row in distribution_report(pool, group):
        if row["kind"] == "numeric":
            assert row["mean_gap"] <= 0.15
            assert 0.8 <= row["std_ratio"] <= 1.3


def test_pool_cache_round_trip(tmp_path, small_dataset):
    pools = tuple(generate(fit_native_sampler(small_dataset, v, seed=v), 25) for v in (1, 0))
    std = fit_standardizer(small_dataset)
    save_pools(tmp_path / "p.json", pools, std, {"seed": 7})
    back, std2, meta = load_pools(tmp_path / "p.json")
    assert [p.pa_value for p in back] == [0, 1]
    np.testing.assert_array_equal(back[0].members, pools[1].members)
    np.testing.assert_array_equal(std2.stds, std.stds)
    assert meta == {"seed": 7}
