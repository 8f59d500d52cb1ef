import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from biasguard.baselines import (
    DEFAULT_THETAS,
    GroupThresholds,
    RejectOptionPolicy,
    apply_reject_option,
    apply_thresholds,
    fit_reject_option,
    fit_thresholds,
    load_policy,
    save_policy,
)


def test_reject_option_examples():
    pol = RejectOptionPolicy(0.1)
    np.testing.assert_array_equal(apply_reject_option([0.52, 0.52, 0.9, 0.9], [0, 1, 0, 1], pol), [1, 0, 1, 1])


def test_tiny_theta_is_plain_rounding():
    s = np.random.default_rng(0).random(500)
    s[:5] = [0.5, 0.4999999, 0.5000001, 0.0, 1.0]
    g = np.arange(500) % 2
    np.testing.assert_array_equal(apply_reject_option(s, g, RejectOptionPolicy(1e-9)), (s >= 0.5).astype(int))


def test_thresholds_examples():
    t = GroupThresholds(0.6, 0.6)
    np.testing.assert_array_equal(apply_thresholds([0.59, 0.6], [1, 1], t), [0, 1])
    assert apply_thresholds([], [], t).size == 0


# unprivileged positives sit at 0.455 and are rescued once
# theta reaches 0.05; from 0.06 on a privileged positive at 0.555 is demoted
THETA_CASE = (
    [0.455, 0.455, 0.9, 0.9, 0.1, 0.1, 0.1, 0.1] + [0.9, 0.9, 0.9, 0.555, 0.1, 0.1, 0.1, 0.1],
    [1, 1, 1, 1, 0, 0, 0, 0] * 2,
    [0] * 8 + [1] * 8,
)


def test_theta_unique_minimiser():
    s, y, g = THETA_CASE
    eods = {th: oracles.eod(y, oracles.reject_predict(s, g, th), g)[0] for th in DEFAULT_THETAS}
    best = min(eods.values())
    assert [th for th, e in eods.items() if e == best] == [0.05]
    assert fit_reject_option(s, y, g).theta == 0.05


def test_theta_all_tie():
    # scores far from 0.5: no theta in the grid changes anything
    s, y, g = [0.9, 0.1, 0.9, 0.1], [1, 0, 1, 0], [0, 0, 1, 1]
    assert fit_reject_option(s, y, g).theta == 0.01


def test_single_group_calibration_errors():
    with pytest.raises(ValueError):
        fit_reject_option([0.2, 0.8], [0, 1], [1, 1])
    with pytest.raises(ValueError):
        fit_thresholds([0.2, 0.8], [0, 1], [0, 0])


# perfect separation at 0.6 for the privileged group and at 0.4 for the
# unprivileged one; no other grid pair reaches EOD 0 with full accuracy
PAIR_CASE = (
    [0.6, 0.95, 0.8, 0.59, 0.05, 0.3] + [0.4, 0.95, 0.7, 0.39, 0.05, 0.2],
    [1, 1, 1, 0, 0, 0] * 2,
    [1] * 6 + [0] * 6,
)


def test_thresholds_known_pair():
    s, y, g = PAIR_CASE
    assert oracles.best_thresholds(s, y, g, 100) == (0.6, 0.4)
    assert fit_thresholds(s, y, g) == GroupThresholds(0.6, 0.4)


def test_thresholds_symmetric_groups():
    s = [0.1, 0.35, 0.55, 0.8, 0.9]
    y = [0, 0, 1, 1, 1]
    t = fit_thresholds(s * 2, y * 2, [0] * 5 + [1] * 5)
    assert t.t_priv == t.t_unpriv


def test_thresholds_r1():
    s, y, g = PAIR_CASE
    t = fit_thresholds(s, y, g, grid_resolution=1)
    assert (t.t_priv, t.t_unpriv) in {(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)}
    assert (t.t_priv, t.t_unpriv) == oracles.best_thresholds(s, y, g, 1)


def _calibration(seed, n):
    rng = np.random.default_rng(seed)
    s = np.round(rng.random(n) * 20) / 20  # coarse scores force many ties
    y = rng.integers(0, 2, n)
    g = rng.integers(0, 2, n)
    y[:4], g[:4] = [0, 1, 0, 1], [0, 0, 1, 1]
    return s.tolist(), y.tolist(), g.tolist()


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31), st.integers(6, 40), st.sampled_from([1, 2, 3, 7, 20]))
def test_thresholds_match_oracle(seed, n, R):
    s, y, g = _calibration(seed, n)
    t = fit_thresholds(s, y, g, R)
    assert (t.t_priv, t.t_unpriv) == oracles.best_thresholds(s, y, g, R)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), st.integers(6, 60))
def test_theta_matches_oracle(seed, n):
    s, y, g = _calibration(seed, n)
    s = [0.5 + (v - 0.5) * 0.4 for v in s]  # keep scores inside the theta grid's reach
    assert fit_reject_option(s, y, g).theta == oracles.best_theta(s, y, g, DEFAULT_THETAS)


def test_policy_round_trip(tmp_path):
    save_policy(tmp_path / "r.json", RejectOptionPolicy(0.07), DEFAULT_THETAS, 5)
    pol, raw = load_policy(tmp_path / "r.json")
    assert pol == RejectOptionPolicy(0.07) and raw["calibration_seed"] == 5
    save_policy(tmp_path / "t.json", GroupThresholds(0.6, 0.4), 100, 9)
    pol, raw = load_policy(tmp_path / "t.json")
    assert pol == GroupThresholds(0.6, 0.4) and raw["grid"] == 100


def test_invalid_policies():
    with pytest.raises(ValueError):
        RejectOptionPolicy(0.0)
    with pytest.raises(ValueError):
        GroupThresholds(1.2, 0.5)
    with pytest.raises(ValueError):
        fit_thresholds([0.1, 0.9, 0.1, 0.9], [0, 1, 0, 1], [0, 0, 1, 1], grid_resolution=0)
