import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from oracles import loop_bland_altman, loop_mae, pairwise_auroc, scan_operating_point
from ppgbench.errors import ValidationError
from ppgbench.metrics import (
    auroc, bland_altman, confusion_at, evaluate, macro_average, mae, median_baseline,
    operating_point, roc_curve, selection_score,
)

@st.composite
def scored_labels(draw, min_size=2, max_size=120):
    n = draw(st.integers(min_size, max_size))
    # a coarse grid keeps heavy ties and stays distinguishable after transforms
    scores = draw(st.lists(st.integers(-40, 40).map(lambda k: k / 8), min_size=n, max_size=n))
    labels = draw(st.lists(st.integers(0, 1), min_size=n, max_size=n))
    return scores, labels


def test_auroc_hand_cases():
    assert auroc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == 1.0
    assert auroc([0.3] * 6, [1, 0, 1, 0, 0, 1]) == 0.5
    assert auroc([0.8, 0.4, 0.6, 0.2], [1, 0, 0, 1]) == 0.5
    assert auroc([0.2, 0.4], [1, 1]) is None
    assert auroc([0.2, 0.4], [0, 0]) is None


def test_auroc_rejects_bad_input():
    with pytest.raises(ValidationError):
        auroc([0.1, 0.2], [0, 2])
    with pytest.raises(ValidationError):
        auroc([0.1, np.nan], [0, 1])
    with pytest.raises(ValidationError):
        auroc([0.1, 0.2, 0.3], [0, 1])


@settings(max_examples=100, deadline=None)
@given(scored_labels())
def test_auroc_equals_pairwise_oracle(case):
    scores, labels = case
    expected = pairwise_auroc(scores, labels)
    got = auroc(scores, labels)
    if expected is None:
        assert got is None
    else:
        assert abs(got - expected) <= 1e-12


@settings(max_examples=100, deadline=None)
@given(scored_labels())
def test_auroc_complement_and_monotone_invariance(case):
    scores, labels = case
    a = auroc(scores, labels)
    assume(a is not None)
    assert auroc(scores, [1 - y for y in labels]) == pytest.approx(1 - a, abs=1e-12)
    transformed = [math.atan(s) * 3 + 7 for s in scores]
    assert auroc(transformed, labels) == pytest.approx(a, abs=1e-12)


def test_macro_average():
    assert macro_average([0.9, 0.7]) == pytest.approx(0.8)
    assert macro_average([0.9, None]) == 0.9
    assert macro_average([None, float("nan")]) is None
    vals = list(np.random.default_rng(0).uniform(0.5, 1, 13))
    assert macro_average(vals) == pytest.approx(sum(vals) / 13, abs=1e-15)


def test_operating_point_hand_case():
    scores = [0.35, 0.5, 0.6, 0.7, 0.1, 0.2, 0.3, 0.4, 0.9]
    labels = [1, 1, 1, 1, 0, 0, 0, 0, 0]
    op = operating_point(scores, labels, min_specificity=0.8)
    assert (op.sensitivity, op.specificity, op.threshold) == (0.75, 0.8, 0.5)
    assert confusion_at(scores, labels, op.threshold) == (0.75, 0.8)


def test_operating_point_separated_and_inverted():
    op = operating_point([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0], min_specificity=0.8)
    assert (op.sensitivity, op.specificity) == (1.0, 1.0)
    scores, labels = [1.0] * 5 + [0.0] * 5, [0] * 5 + [1] * 5
    op = operating_point(scores, labels, min_specificity=0.8)
    assert (op.sensitivity, op.specificity, op.threshold) == scan_operating_point(
        scores, labels, min_specificity=0.8)
    op = operating_point(scores, labels, min_sensitivity=0.8)
    assert (op.sensitivity, op.specificity, op.threshold) == scan_operating_point(
        scores, labels, min_sensitivity=0.8)


def test_operating_point_argument_checks():
    with pytest.raises(ValidationError):
        operating_point([0.1, 0.2], [0, 1])
    with pytest.raises(ValidationError):
        operating_point([0.1, 0.2], [0, 1], min_specificity=0.8, min_sensitivity=0.8)
    with pytest.raises(ValidationError):
        operating_point([0.1, 0.2], [1, 1], min_specificity=0.8)


@settings(max_examples=150, deadline=None)
@given(scored_labels(), st.sampled_from([0.5, 0.8, 0.95]), st.booleans())
def test_operating_point_matches_scan_and_reapplies(case, level, on_spec):
    scores, labels = case
    assume(0 < sum(labels) < len(labels))
    kw = {"min_specificity": level} if on_spec else {"min_sensitivity": level}
    op = operating_point(scores, labels, **kw)
    expected = scan_operating_point(scores, labels, **kw)
    assert (op.sensitivity, op.specificity, op.threshold) == expected
    assert confusion_at(scores, labels, op.threshold) == (op.sensitivity, op.specificity)


def test_roc_curve_endpoints():
    fpr, tpr, thr = roc_curve([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1])
    assert (fpr[0], tpr[0], thr[0]) == (0.0, 0.0, math.inf)
    assert (fpr[-1], tpr[-1]) == (1.0, 1.0)
    assert np.all(np.diff(fpr) >= 0) and np.all(np.diff(tpr) >= 0)


def test_mae_cases():
    assert mae([1, 2, 3], [1, 2, 3]) == 0.0
    assert mae([2, -2], [0, 0]) == 2.0
    rng = np.random.default_rng(0)
    p, r = rng.normal(size=100), rng.normal(size=100)
    assert abs(mae(p, r) - loop_mae(p, r)) <= 1e-12
    with pytest.raises(ValidationError):
        mae([], [])


def test_bland_altman_cases():
    assert bland_altman([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == bland_altman([5, 6], [5, 6])
    ba = bland_altman([1, -1, 1, -1], [0, 0, 0, 0])
    s = 2 / math.sqrt(3)
    assert ba.bias == 0.0
    assert ba.sd == pytest.approx(s, abs=1e-15)
    assert ba.loa_high == pytest.approx(1.96 * s, abs=1e-12)
    assert ba.loa_low == pytest.approx(-1.96 * s, abs=1e-12)
    assert round(ba.loa_high, 4) == 2.2632
    with pytest.raises(ValidationError):
        bland_altman([1.0], [1.0])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(-200, 200), st.floats(-200, 200)), min_size=2, max_size=50),
       st.floats(-50, 50))
def test_bland_altman_oracle_and_shift_equivariance(pairs, c):
    pred = np.array([p for p, _ in pairs])
    ref = np.array([r for _, r in pairs])
    ba = bland_altman(pred, ref)
    bias, lo, hi = loop_bland_altman(pred, ref)
    assert ba.bias == pytest.approx(bias, abs=1e-9)
    assert (ba.loa_low, ba.loa_high) == pytest.approx((lo, hi), abs=1e-8)
    shifted = bland_altman(pred + c, ref)
    assert shifted.bias == pytest.approx(ba.bias + c, abs=1e-9)
    assert shifted.loa_high - shifted.loa_low == pytest.approx(ba.loa_high - ba.loa_low, abs=1e-8)


def test_median_baseline():
    assert median_baseline([1, 2, 3]) == 2
    assert median_baseline([1, 2, 3, 4]) == 2.5
    with pytest.raises(ValidationError):
        median_baseline([])


def test_evaluate_af_with_degenerate_aflt_column():
    scores = np.array([[0.9, 0.1], [0.8, 0.2], [0.3, 0.3], [0.6, 0.1], [0.2, 0.5], [0.1, 0.4]])
    targets = np.array([[1, 0], [1, 0], [1, 0], [0, 0], [0, 0], [0, 0]])
    report = evaluate("AF", scores, targets)
    af, aflt = report.per_label
    # hand count: 8 of 9 positive/negative pairs ordered correctly
    assert af.auroc == pytest.approx(8 / 9, abs=1e-15)
    assert (af.sens_at_spec80, af.threshold_spec80) == (pytest.approx(2 / 3), 0.8)
    assert (af.spec_at_sens80, af.threshold_sens80) == (pytest.approx(2 / 3), 0.3)
    assert (af.n_pos, af.n_neg) == (3, 3)
    assert aflt.auroc is None and aflt.sens_at_spec80 is None and not aflt.sufficient
    assert report.macro_auroc == af.auroc
    d = report.to_dict()
    assert d["per_label"][1]["auroc"] is None and d["report_version"] == 1


def test_evaluate_regression_hand_case():
    pred = [60, 70, 80, 90, 100, 110]
    ref = [62, 69, 83, 88, 100, 104]
    (row,) = evaluate("REG_HR", pred, ref).regression
    # differences -2, 1, -3, 2, 0, 6: sum of squared deviations 462/9 over 5 dof
    sd = math.sqrt(462 / 9 / 5)
    assert row.n == 6
    assert row.mae == pytest.approx(14 / 6, abs=1e-12)
    assert row.bias == pytest.approx(4 / 6, abs=1e-12)
    assert row.loa_low == pytest.approx(4 / 6 - 1.96 * sd, abs=1e-12)
    assert row.loa_high == pytest.approx(4 / 6 + 1.96 * sd, abs=1e-12)


def test_evaluate_bp_rows_in_order():
    rng = np.random.default_rng(0)
    y = np.column_stack([rng.normal(120, 10, 20), rng.normal(70, 5, 20)])
    rep = evaluate("REG_BP", y + 1, y)
    assert [r.label for r in rep.regression] == ["SBP", "DBP"]
    assert rep.regression[0].bias == pytest.approx(1.0)


def test_evaluate_min_per_class_and_shape_checks():
    s = np.array([[0.9, 0.1]] * 3 + [[0.1, 0.9]] * 3)
    t = np.array([[1, 0]] * 3 + [[0, 1]] * 3)
    rep = evaluate("AF", s, t, min_per_class=4)
    assert all(not m.sufficient and m.auroc is None for m in rep.per_label)
    assert rep.macro_auroc is None
    assert selection_score("AF", s, np.zeros_like(t)) == -math.inf
    with pytest.raises(ValidationError):
        evaluate("ARRH", s, t)
