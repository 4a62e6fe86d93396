import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agglo_mvc.metrics import evaluate, nmi, pair_counts
from oracles import metrics_oracle, pair_oracle

labelings = st.integers(2, 30).flatmap(
    lambda n: st.tuples(st.lists(st.integers(0, 4), min_size=n, max_size=n),
                        st.lists(st.integers(0, 4), min_size=n, max_size=n)))


def test_identical_labelings_score_one():
    x = [0, 0, 1, 2, 2, 2]
    assert all(v == 1.0 for v in evaluate(x, x).to_dict().values())


def test_permuted_labels():
    r = evaluate([0, 0, 1, 1], [1, 1, 0, 0])
    assert r.nmi == 1.0 and r.rand_index == 1.0


def test_worked_pair_example():
    assert pair_counts([0, 0, 0, 1], [0, 0, 1, 1]) == (1, 2, 1, 2)
    r = evaluate([0, 0, 0, 1], [0, 0, 1, 1])
    assert r.rand_index == 0.5
    assert r.precision == pytest.approx(1 / 3, abs=1e-15)
    assert r.recall == 0.5
    assert r.f_score == pytest.approx(0.4, abs=1e-15)


def test_all_singletons():
    r = evaluate([0, 1, 2], [0, 1, 2])
    assert (r.precision, r.recall, r.f_score) == (1.0, 1.0, 1.0)
    r = evaluate([0, 1, 2, 3], [0, 0, 1, 1])
    assert (r.precision, r.recall, r.f_score) == (1.0, 0.0, 0.0)


def test_single_cluster_nmi_is_zero():
    assert nmi([0, 0, 0, 0], [0, 1, 0, 1]) == 0.0
    assert nmi([0, 1, 2, 3], [5, 5, 5, 5]) == 0.0


def test_input_errors():
    with pytest.raises(ValueError, match="mismatch"):
        evaluate([0, 1], [0, 1, 1])
    with pytest.raises(ValueError, match="two samples"):
        evaluate([0], [0])


def test_json_keys():
    assert list(evaluate([0, 1, 1], [0, 1, 0]).to_dict()) == ["nmi", "ri", "purity", "precision", "recall",
                                                              "f_score"]


@settings(max_examples=100, deadline=None)
@given(labelings)
def test_agrees_with_brute_force(case):
    pred, truth = case
    got = evaluate(pred, truth).to_dict()
    ref = metrics_oracle(pred, truth)
    for key in got:
        assert abs(got[key] - ref[key]) < 1e-12, key
    tp, fp, fn, tn = pair_counts(pred, truth)
    assert (tp, fp, fn, tn) == pair_oracle(pred, truth)
    n = len(pred)
    assert tp + fp + fn + tn == n * (n - 1) // 2


@settings(max_examples=100, deadline=None)
@given(labelings, st.permutations(range(5)), st.permutations(range(5)))
def test_relabeling_invariance(case, perm_a, perm_b):
    pred, truth = case
    base = evaluate(pred, truth).to_dict()
    moved = evaluate([perm_a[p] for p in pred], [perm_b[t] + 10 for t in truth]).to_dict()
    for key in base:
        assert base[key] == pytest.approx(moved[key], abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 5), min_size=2, max_size=30).filter(lambda x: len(set(x)) > 1))
def test_self_comparison_all_ones(x):
    assert all(v == pytest.approx(1.0, abs=1e-12) for v in evaluate(x, x).to_dict().values())


def test_accepts_numpy_and_lists():
    a = np.array([1, 1, 2, 2])
    assert evaluate(a, [3, 3, 4, 4]).nmi == 1.0
