"""Acceptance criteria, one test per criterion.

The terminal summary prints a PASS/FAIL line for each (see conftest.py).
"""

import json
import math
import time

import numpy as np
import pytest

from oracles import (
    ETHNICITY_ROWS, LABEL_ORDER, bmi_rule, bp_rule, central_difference, external_oracle, hr_rule,
    max_relative_error, rhythm_oracle,
)
from ppgbench.cli import main
from ppgbench.dsp import CLEAN_HIGH_HZ, CLEAN_LOW_HZ, CLEAN_ORDER, clean, design_bandpass, filtfilt
from ppgbench.metrics import auroc, bland_altman, evaluate, mae, median_baseline, operating_point
from ppgbench.neural import (
    AdamWState, TrainConfig, adamw_step, backward, forward, init_model, lenet1d_architecture,
    predict, save_checkpoint, train,
)
from ppgbench.neural import layers
from ppgbench.neural.checkpoint import to_bytes
from ppgbench.neural.model import bce_with_logits, mse_loss
from ppgbench.neural.train import accumulated_gradients
from ppgbench.strata import bmi_category, bp_category, ethnicity_table, hr_category
from ppgbench.synth import SynthSpec, generate_dataset
from ppgbench.tasks import build_task_dataset, get_task, map_external, map_rhythm, outcome_vector
from ppgbench.taxonomy import Dataset, PpgSegment, RhythmCode, split_folds, write_dataset

criterion = pytest.mark.criterion
FS = 125.0
WALL_CLOCK_S = 20 * 60


def _pairwise(scores, labels):
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    if pos.size == 0 or neg.size == 0:
        return None
    wins = (pos[:, None] > neg[None, :]).sum() + 0.5 * (pos[:, None] == neg[None, :]).sum()
    return wins / (pos.size * neg.size)


@criterion(1, "AUROC equals pairwise oracle on 1,000 tied cases")
def test_c1_auroc_oracle_equivalence(record_property):
    rng = np.random.default_rng(2024)
    cases = []
    for _ in range(1000):
        n = int(rng.integers(2, 201))
        levels = int(rng.integers(1, 12))  # few distinct values => heavy ties
        scores = rng.integers(0, levels, size=n) / max(levels - 1, 1)
        labels = (rng.uniform(size=n) < rng.uniform(0.05, 0.95)).astype(int)
        cases.append((scores, labels))
    t0 = time.perf_counter()
    got = [auroc(s, y) for s, y in cases]
    elapsed = time.perf_counter() - t0
    worst = 0.0
    for (s, y), g in zip(cases, got):
        want = _pairwise(s, y)
        assert (g is None) == (want is None)
        if want is not None:
            worst = max(worst, abs(g - want))
    record_property("detail", f"max |diff| {worst:.1e}, {elapsed:.2f} s")
    assert worst <= 1e-12
    assert elapsed < 10


@criterion(2, "Gradient check: every layer and full LeNet1D, rel err < 1e-4")
def test_c2_gradient_check(record_property):
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    errors = {}

    def check(name, analytic, f, arr):
        errors[name] = max(errors.get(name, 0.0),
                           max_relative_error(analytic, central_difference(f, arr, h=1e-5)))

    x = rng.normal(size=(2, 64, 2))
    w, b = rng.normal(size=(3, 2, 7)), rng.normal(size=3)
    r = rng.normal(size=(2, 64, 3))
    _, cache = layers.conv1d_forward(x, w, b)
    dx, dw, db = layers.conv1d_backward(r, cache)
    f = lambda: float(np.sum(layers.conv1d_forward(x, w, b)[0] * r))
    for g, arr in ((dx, x), (dw, w), (db, b)):
        check("conv1d", g, f, arr)

    r = rng.normal(size=x.shape)
    _, mask = layers.relu_forward(x)
    check("relu", layers.relu_backward(r, mask),
          lambda: float(np.sum(layers.relu_forward(x)[0] * r)), x)

    r = rng.normal(size=(2, 16, 2))
    _, cache = layers.maxpool_forward(x, 4)
    check("maxpool", layers.maxpool_backward(r, cache),
          lambda: float(np.sum(layers.maxpool_forward(x, 4)[0] * r)), x)

    r = rng.normal(size=(2, 2))
    check("gap", layers.gap_backward(r, x.shape),
          lambda: float(np.sum(layers.gap_forward(x)[0] * r)), x)

    h, wd, bd = rng.normal(size=(3, 4)), rng.normal(size=(5, 4)), rng.normal(size=5)
    r = rng.normal(size=(3, 5))
    _, cache = layers.dense_forward(h, wd, bd)
    f = lambda: float(np.sum(layers.dense_forward(h, wd, bd)[0] * r))
    for g, arr in zip(layers.dense_backward(r, cache), (h, wd, bd)):
        check("dense", g, f, arr)

    z, t = rng.normal(size=(3, 2)), (rng.uniform(size=(3, 2)) > 0.5).astype(float)
    check("bce", (1 / (1 + np.exp(-z)) - t) / z.size, lambda: bce_with_logits(z, t), z)
    check("mse", 2 * (z - t) / z.size, lambda: mse_loss(z, t), z)

    arch = lenet1d_architecture(2, conv_channels=(4, 4), hidden=6)
    model = init_model(arch, rng)
    for k in model.params:
        if k.endswith("bias"):
            model.params[k] = rng.normal(scale=0.1, size=model.params[k].shape)
    xb = rng.normal(size=(3, 1, 64))
    for kind, tgt in (("bce", t), ("mse", rng.normal(size=(3, 2)))):
        loss_fn = bce_with_logits if kind == "bce" else mse_loss
        _, grads = backward(model, xb, tgt, kind)
        for name, p in model.params.items():
            check(f"lenet1d/{kind}", grads[name], lambda: loss_fn(forward(model, xb), tgt), p)
    elapsed = time.perf_counter() - t0
    worst = max(errors.values())
    record_property("detail", f"max rel err {worst:.1e} over {len(errors)} checks, {elapsed:.1f} s")
    assert worst < 1e-4, errors
    assert elapsed < 60


@criterion(3, "Band-pass filter conformance (125 Hz, 0.5-8 Hz, order 3)")
def test_c3_filter_conformance(record_property):
    t0 = time.perf_counter()
    coeffs = design_bandpass(CLEAN_LOW_HZ, CLEAN_HIGH_HZ, FS, CLEAN_ORDER)
    assert abs(coeffs.b.sum()) <= 1e-9
    assert coeffs.is_stable()

    def single_pass_gain(freq):
        from scipy.signal import lfilter

        n = int(FS * 400)
        tt = np.arange(n) / FS
        y = lfilter(coeffs.b, coeffs.a, np.sin(2 * np.pi * freq * tt))
        tail = y[n // 2:]  # steady state
        return np.sqrt(2 * np.mean(tail**2))

    gains = {f: single_pass_gain(f) for f in (2.0, 0.05, 30.0)}
    assert gains[2.0] >= 0.95
    assert gains[0.05] <= 0.05 and gains[30.0] <= 0.05

    rng = np.random.default_rng(3)
    raw = rng.normal(size=int(FS * 60))
    y = filtfilt(coeffs, raw)
    lags = np.arange(-25, 26)
    xc = [np.dot(raw[max(0, -k): raw.size - max(0, k)], y[max(0, k): y.size - max(0, -k)])
          for k in lags]
    peak = int(lags[int(np.argmax(xc))])
    elapsed = time.perf_counter() - t0
    record_property("detail", f"sum(b) {coeffs.b.sum():.1e}; gains 2 Hz {gains[2.0]:.3f}, "
                              f"0.05 Hz {gains[0.05]:.4f}, 30 Hz {gains[30.0]:.4f}; "
                              f"xcorr peak lag {peak}")
    assert np.all(np.isfinite(y))
    assert peak == 0
    assert elapsed < 10


@criterion(4, "Rhythm and external mapping tables, output dimensions")
def test_c4_mapping_conformance(record_property):
    rhythm, external = rhythm_oracle(), external_oracle()
    checked = 0
    for code in RhythmCode:
        for task in ("AF", "SAA", "ARRH"):
            vec = outcome_vector(map_rhythm(code, task), task)
            assert (None if vec is None else vec.tolist()) == rhythm[code.value, task], (code, task)
            checked += 1
    for code in range(6):
        for task in ("AF", "SAA", "ARRH"):
            vec = outcome_vector(map_external(code, task), task)
            assert (None if vec is None else vec.tolist()) == external[code, task], (code, task)
            checked += 1
    assert get_task("ARRH").output_dim == 13 == len(LABEL_ORDER["ARRH"])
    assert get_task("AF").output_dim == get_task("SAA").output_dim == 2
    record_property("detail", f"{checked} (code, task) cells")
    assert checked == 26 * 3 + 6 * 3


@criterion(5, "Categorizer grids and ethnicity fixture round trip")
def test_c5_categorizer_grids(record_property):
    n = 0
    for sbp in range(40, 251):
        for dbp in range(20, min(sbp, 151)):
            assert bp_category(sbp, dbp).value == bp_rule(sbp, dbp)
            n += 1
    for k in range(200, 2201):
        assert hr_category(k / 10).value == hr_rule(k / 10)
        n += 1
    for k in range(100, 601):
        assert bmi_category(k / 10).value == bmi_rule(k / 10)
        n += 1
    expected = {raw: g for g, raws in ETHNICITY_ROWS.items() for raw in raws}
    assert {k: v.value for k, v in ethnicity_table().items()} == expected
    record_property("detail", f"{n} grid points, {len(expected)} ethnicity rows")


# --- end-to-end analogues -------------------------------------------------------


def _task_arrays(dataset, task):
    parts = [build_task_dataset(p, task) for p in split_folds(dataset)]
    out = []
    for pairs in parts:
        out.append((np.stack([s.samples for s, _ in pairs]).astype(np.float64),
                    np.stack([y for _, y in pairs])))
    return out


@pytest.fixture(scope="module")
def af_run():
    t0 = time.perf_counter()
    task = get_task("AF")
    spec = SynthSpec(counts={"SR": 1000, "AF": 1000}, seed=1)
    assert spec.noise_std.low == spec.noise_std.high == 0.1
    dataset = generate_dataset(spec).map(clean)
    tr, va, te = _task_arrays(dataset, task)
    config = TrainConfig(effective_batch=32, micro_batch=32, epochs=50, seed=0)
    model, history = train(config, task, tr, va)
    scores = predict(model, te[0], task)
    report = evaluate(task, scores, te[1])
    return {"model": model, "history": history, "report": report, "config": config,
            "seconds": time.perf_counter() - t0}


@pytest.mark.slow
@criterion(6, "AF analogue: test AUROC >= 0.95 within 20 min")
def test_c6_af_end_to_end(af_run, record_property):
    report, history = af_run["report"], af_run["history"]
    af = report.per_label[0]
    reduction = 1 - history.train_losses[-1] / history.initial_train_loss
    record_property("detail", f"AF AUROC {af.auroc:.4f}, epoch {history.selected_epoch} selected, "
                              f"train loss -{reduction:.0%}, {af_run['seconds']:.0f} s")
    assert af.label == "AF" and af.auroc >= 0.95
    assert report.per_label[1].auroc is None  # no AFLT in an SR/AF set
    assert reduction >= 0.5
    assert af_run["seconds"] < WALL_CLOCK_S


@pytest.mark.slow
@criterion(7, "HR analogue: MAE <= 2 bpm, beats median baseline, |bias| <= 0.5")
def test_c7_hr_end_to_end(record_property):
    t0 = time.perf_counter()
    task = get_task("REG_HR")
    spec = SynthSpec(counts={"SR": 700, "STACH": 650, "SBRAD": 650}, seed=1)
    dataset = generate_dataset(spec).map(clean)
    assert len(dataset) == 2000
    tr, va, te = _task_arrays(dataset, task)
    config = TrainConfig(effective_batch=32, micro_batch=32, epochs=40, seed=0)
    model, history = train(config, task, tr, va)
    pred = predict(model, te[0], task)[:, 0]
    ref = te[1][:, 0]
    model_mae = mae(pred, ref)
    base_mae = mae(np.full_like(ref, median_baseline(tr[1][:, 0])), ref)
    bias = bland_altman(pred, ref).bias
    seconds = time.perf_counter() - t0
    record_property("detail", f"MAE {model_mae:.3f} bpm vs baseline {base_mae:.2f}, "
                              f"bias {bias:+.3f}, {seconds:.0f} s")
    assert model_mae <= 2.0
    assert model_mae < base_mae
    assert abs(bias) <= 0.5
    assert seconds < WALL_CLOCK_S


@pytest.mark.slow
@criterion(8, "Variable-length inference and external command on a Liu-format set")
def test_c8_variable_length_and_external(af_run, tmp_path, capsys, record_property):
    model = af_run["model"]
    rng = np.random.default_rng(5)
    long_scores = predict(model, rng.normal(size=(4, 3750)), "AF")
    short_scores = predict(model, rng.normal(size=(4, 1000)), "AF")
    for s in (long_scores, short_scores):
        assert s.shape == (4, 2) and np.all(np.isfinite(s))

    ckpt = save_checkpoint(tmp_path / "model.ppgb", model, af_run["config"].to_dict(), None,
                           {"task": "AF", "clean": True, "sampling_rate_hz": FS})
    spec = SynthSpec(counts={"SR": 12, "AF": 12, "SARRH": 6}, seed=8, duration_s=10.0,
                     sampling_rate_hz=100.0)
    liu_codes = {"SR": 0, "AF": 5}
    segs = []
    for i, seg in enumerate(generate_dataset(spec)):
        code = liu_codes.get(seg.rhythm.value, 1 + i % 2)  # SARRH rows stand in for PVC/PAC
        segs.append(PpgSegment(seg.segment_id, seg.subject_id, seg.fold, seg.samples,
                               sampling_rate_hz=100.0, liu_code=code))
    write_dataset(Dataset(tuple(segs), "imported"), tmp_path / "liu")
    code = main(["external", "--checkpoint", str(ckpt), "--external", str(tmp_path / "liu"),
                 "--out-dir", str(tmp_path / "out")])
    stdout = capsys.readouterr().out
    assert code == 0
    assert json.loads(stdout.splitlines()[-1])["n_segments"] == 24
    doc = json.loads((tmp_path / "out" / "external.json").read_text())
    af = doc["per_label"][0]
    record_property("detail", f"3750 and 1000 samples -> (4, 2) finite; external set of 24 "
                              f"kept / 6 excluded, AF AUROC {af['auroc']:.3f}")
    assert af["n_pos"] == 12 and af["n_neg"] == 12 and af["auroc"] is not None


@criterion(9, "Bit-identical checkpoints per seed; accumulation equals one batch")
def test_c9_determinism_and_accumulation(record_property):
    rng = np.random.default_rng(9)
    X = rng.normal(size=(40, 256))
    Y = (rng.uniform(size=(40, 2)) > 0.5).astype(float)
    arch = lenet1d_architecture(2, conv_channels=(4, 8), hidden=8)
    config = TrainConfig(epochs=2, effective_batch=16, micro_batch=4, seed=21)
    blobs = []
    for _ in range(2):
        model, hist = train(config, "AF", (X, Y), (X, Y), arch=arch)
        blobs.append(to_bytes(model, config.to_dict(), hist.to_dict()))
    assert blobs[0] == blobs[1]

    model = init_model(arch, np.random.default_rng(1))
    Xb, Yb = X[:32], Y[:32]
    _, g_one = accumulated_gradients(model, Xb, Yb, "bce", micro_batch=32)
    worst = 0.0
    for k in (2, 4, 8, 16):
        _, g_acc = accumulated_gradients(model, Xb, Yb, "bce", micro_batch=32 // k)
        worst = max(worst, max(np.max(np.abs(g_one[n] - g_acc[n])) for n in g_one))
        state = AdamWState.zeros_like(model.params)
        p1, _ = adamw_step(model.params, g_one, state)
        p2, _ = adamw_step(model.params, g_acc, state)
        worst = max(worst, max(np.max(np.abs(p1[n] - p2[n])) for n in p1))
    record_property("detail", f"{len(blobs[0])} checkpoint bytes identical; "
                              f"accumulation max diff {worst:.1e}")
    assert worst <= 1e-10


@criterion(10, "Bland-Altman and operating-point hand cases")
def test_c10_hand_cases(record_property):
    ba = bland_altman([1.0, -1.0, 1.0, -1.0], [0.0, 0.0, 0.0, 0.0])
    sd = 2 / math.sqrt(3)
    assert ba.bias == 0.0
    assert ba.sd == pytest.approx(sd, abs=1e-12)
    assert ba.loa_low == pytest.approx(-1.96 * sd, abs=1e-12)
    assert ba.loa_high == pytest.approx(1.96 * sd, abs=1e-12)
    assert round(ba.loa_high, 4) == 2.2632
    same = bland_altman([3.0, 4.0], [3.0, 4.0])
    assert (same.bias, same.loa_low, same.loa_high) == (0.0, 0.0, 0.0)

    pos = [0.35, 0.5, 0.6, 0.7]
    neg = [0.1, 0.2, 0.3, 0.4, 0.9]
    op = operating_point(pos + neg, [1] * 4 + [0] * 5, min_specificity=0.8)
    assert op.sensitivity == 0.75 and op.specificity == 0.8 and op.threshold == 0.5
    perfect = operating_point([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0], min_specificity=0.8)
    assert perfect.sensitivity == 1.0 and perfect.specificity == 1.0
    record_property("detail", f"LoA +-{ba.loa_high:.4f}; sens {op.sensitivity} at spec "
                              f"{op.specificity} (threshold {op.threshold})")
