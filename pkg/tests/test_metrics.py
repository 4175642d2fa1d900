import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from fsknet.metrics import (MetricError, average_accuracy, confusion_matrix, format_table, kappa,
                            overall_accuracy, summarize)

from oracles import brute_metrics

HAND = [[2, 1], [0, 3]]


def test_hand_case():
    assert overall_accuracy(HAND) == pytest.approx(5 / 6, abs=1e-15)
    assert average_accuracy(HAND) == pytest.approx(5 / 6, abs=1e-15)
    assert kappa(HAND) == pytest.approx(2 / 3, abs=1e-15)
    po, aa, k = brute_metrics(HAND)
    assert k == pytest.approx(2 / 3, abs=1e-15)


def test_perfect_and_worst():
    d = np.diag([3, 4, 5])
    assert overall_accuracy(d) == average_accuracy(d) == kappa(d) == 1.0
    assert overall_accuracy([[0, 4], [6, 0]]) == 0.0
    assert average_accuracy([[5, 0], [7, 0]]) == 0.5


def test_errors():
    with pytest.raises(MetricError):
        overall_accuracy(np.zeros((3, 3)))
    with pytest.raises(MetricError):
        kappa([[4, 0], [0, 0]])
    with pytest.raises(MetricError):
        overall_accuracy([[1, 2, 3]])


def test_aa_skips_absent_classes():
    cm = [[3, 1, 0], [0, 0, 0], [0, 0, 2]]
    with pytest.warns(UserWarning, match=r"\[2\]"):
        aa = average_accuracy(cm)
    assert aa == pytest.approx((0.75 + 1.0) / 2)


def test_confusion_matrix_from_labels():
    cm = confusion_matrix([1, 1, 2, 3, 3], [1, 2, 2, 3, 1], 3)
    assert cm.tolist() == [[1, 1, 0], [0, 1, 0], [1, 0, 1]]
    with pytest.raises(MetricError):
        confusion_matrix([0, 1], [1, 1], 3)


cms = st.integers(2, 5).flatmap(
    lambda c: hnp.arrays(np.int64, (c, c), elements=st.integers(0, 30))
).filter(lambda m: (m.sum(axis=1) > 0).all() and m.sum() > 0)


@settings(max_examples=60, deadline=None)
@given(cms, st.randoms(use_true_random=False))
def test_invariant_under_class_permutation(cm, rnd):
    perm = list(range(len(cm)))
    rnd.shuffle(perm)
    pm = cm[np.ix_(perm, perm)]
    a, b = summarize(cm), summarize(pm)
    for k in a:
        if k == "Kappa" and math.isnan(a[k]):
            continue
        assert a[k] == pytest.approx(b[k], abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(cms, st.integers(1, 9))
def test_invariant_under_scaling(cm, s):
    a, b = summarize(cm), summarize(cm * s)
    for k in a:
        assert a[k] == pytest.approx(b[k], abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(cms)
def test_kappa_bounded_by_oa(cm):
    assert kappa(cm) <= overall_accuracy(cm) + 1e-15
    is_diag = not (cm - np.diag(np.diag(cm))).any()
    assert (abs(kappa(cm) - 1) < 1e-15) == is_diag


def test_independent_predictions_have_zero_kappa():
    rng = np.random.default_rng(0)
    truth = rng.integers(1, 5, 20_000)
    pred = rng.choice(4, 20_000, p=[0.1, 0.2, 0.3, 0.4]) + 1
    assert abs(kappa(confusion_matrix(truth, pred, 4))) < 0.05


def test_format_table_four_places():
    text = format_table({"test": {"OA": 0.998333, "AA": 0.99731, "Kappa": 0.9981}})
    assert "0.9983" in text and "0.9973" in text and "0.9981" in text
