import pytest
from hypothesis import given, settings, strategies as st

import oracles
from biasguard.metrics import (
    Confusion,
    GroupConfusion,
    MetricBundle,
    Undefined,
    accuracy,
    confusion_by_group,
    disparate_impact,
    equalized_odds,
    flips,
    metric_bundle,
    summarize_folds,
)


def test_confusion_example():
    gc = confusion_by_group((1, 0, 1, 0), (1, 0, 0, 0), (1, 1, 0, 0))
    assert gc.privileged == Confusion(tp=1, tn=1, fp=0, fn=0)
    assert gc.unprivileged == Confusion(tn=1, fn=1, tp=0, fp=0)


def test_all_correct():
    y = [1, 0, 1, 1, 0, 0]
    gc = confusion_by_group(y, y, [0, 1, 0, 1, 0, 1])
    assert gc[0].fn == gc[0].fp == gc[1].fn == gc[1].fp == 0


@pytest.mark.parametrize("args", [((), (), ()), ((1, 0), (1,), (0, 1))])
def test_bad_input(args):
    with pytest.raises(ValueError):
        confusion_by_group(*args)


def test_eod_example():
    # TPR (0.8, 0.7), FPR (0.2, 0.1)
    gc = GroupConfusion(Confusion(tp=8, fn=2, fp=2, tn=8), Confusion(tp=7, fn=3, fp=1, tn=9))
    eo = equalized_odds(gc)
    assert eo.delta_tpr == pytest.approx(0.1, abs=1e-15)
    assert eo.delta_fpr == pytest.approx(0.1, abs=1e-15)
    assert eo.eod == pytest.approx(0.1, abs=1e-15)


def test_eod_identical_groups():
    c = Confusion(3, 1, 4, 2)
    assert equalized_odds(GroupConfusion(c, c)).eod == 0.0


def test_eod_undefined_names_group_and_rate():
    eo = equalized_odds(GroupConfusion(Confusion(fp=1, tn=2), Confusion(1, 1, 1, 1)))
    assert isinstance(eo, Undefined)
    assert "TPR" in eo.reason and "group 0" in eo.reason


def test_di_examples():
    # unprivileged rate 0.3, privileged 0.6
    p = [1] * 3 + [0] * 7 + [1] * 6 + [0] * 4
    g = [0] * 10 + [1] * 10
    assert disparate_impact(p, g) == pytest.approx(0.5, abs=1e-15)
    assert disparate_impact([1, 0, 1, 0], [0, 0, 1, 1]) == 1.0
    u = disparate_impact([1, 0, 0, 0, 0, 0, 0, 0, 0, 0], [0] * 5 + [1] * 5)
    assert isinstance(u, Undefined) and "privileged" in u.reason
    assert disparate_impact([0, 0, 0, 0], [0, 0, 1, 1]) == 1.0
    assert isinstance(disparate_impact([1, 0], [1, 1]), Undefined)


def test_accuracy_and_flips():
    assert accuracy([1, 0, 1, 1], [1, 0, 1, 0]) == 0.75
    assert accuracy([1, 0], [1, 0]) == 1.0
    with pytest.raises(ValueError):
        accuracy([1, 0], [1])
    assert flips([1, 0, 1], [1, 0, 1]) == 0
    assert flips([1, 0, 1], [0, 0, 1]) == 1
    assert flips([1, 0, 1, 0, 1], [0, 1, 0, 1, 0]) == 5


def _bundle(**kw):
    base = dict(accuracy=0.5, eod=0.1, delta_tpr=0.1, delta_fpr=0.1, di=1.0, flips=1)
    base.update(kw)
    return MetricBundle(**base)


def test_summarize_equal_folds():
    s = summarize_folds([_bundle(eod=0.1)] * 3)
    assert s["eod"].mean == 0.1 and s["eod"].std == 0.0
    assert s["flips"] == 3


def test_summarize_population_std():
    s = summarize_folds([_bundle(eod=0.0), _bundle(eod=0.2)])
    assert s["eod"].mean == pytest.approx(0.1, abs=1e-15)
    assert s["eod"].std == pytest.approx(0.1, abs=1e-15)


def test_summarize_undefined_fold():
    folds = [_bundle(di=v) for v in (1.0, 2.0, Undefined("x"), 3.0, 4.0)]
    s = summarize_folds(folds)["di"]
    assert s.mean == 2.5 and s.n_defined == 4 and s.n_total == 5 and not s.complete
    s = summarize_folds([_bundle(di=Undefined("x"))] * 2)["di"]
    assert isinstance(s.mean, Undefined) and s.n_defined == 0
    with pytest.raises(ValueError):
        summarize_folds([])


vectors = st.integers(1, 50).flatmap(lambda m: st.tuples(
    *(st.lists(st.integers(0, 1), min_size=m, max_size=m) for _ in range(4))))


@settings(max_examples=300, deadline=None)
@given(vectors)
def test_matches_oracle(data):
    y, p, g, base = data
    b = metric_bundle(y, p, g, base)
    assert b.accuracy == pytest.approx(float(oracles.accuracy(y, p)), abs=1e-12)
    assert b.flips == oracles.flips(base, p)
    ref = oracles.eod(y, p, g)
    if ref is None:
        assert isinstance(b.eod, Undefined)
    else:
        assert abs(b.eod - float(ref[0])) <= 1e-12
        assert abs(b.delta_tpr - float(ref[1])) <= 1e-12
        assert abs(b.delta_fpr - float(ref[2])) <= 1e-12
        assert b.eod == (b.delta_tpr + b.delta_fpr) / 2
        assert 0 <= b.eod <= 1
    ref_di = oracles.di(p, g)
    if ref_di is None:
        assert isinstance(b.di, Undefined)
    else:
        assert abs(b.di - float(ref_di)) <= 1e-12 and b.di >= 0


@settings(max_examples=200, deadline=None)
@given(vectors)
def test_group_relabel_symmetry(data):
    y, p, g, base = data
    swapped = [1 - a for a in g]
    a, b = metric_bundle(y, p, g, base), metric_bundle(y, p, swapped, base)
    if isinstance(a.eod, Undefined):
        assert isinstance(b.eod, Undefined)
    else:
        assert a.eod == b.eod
    if not isinstance(a.di, Undefined) and not isinstance(b.di, Undefined) and a.di > 0:
        assert b.di == pytest.approx(1 / a.di, rel=1e-12)
