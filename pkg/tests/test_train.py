"""Training-loop unit tests on tiny models; budget-scale runs live in
test_acceptance.py."""

import numpy as np
import pytest

from implut.dataio import DatasetPair, GenSpec, generate_pair
from implut.image import ImageBuf
from implut.losses import PgConfig
from implut.predictor import ParamPredictor
from implut.train import (BaselineLinearLuts, LossTrace, TrainConfig,
                          TrainingDiverged, psnr, stage1, stage2, stage3,
                          train_baseline_linear)
from implut.transform import FilterParams, MlpFilter


def tiny_cfg(**kw):
    base = dict(seed=0, resolution=8, stage1_steps=3, stage2_steps=3,
                stage3_steps=3, stage2_batch=2, stage3_batch=2,
                pg=PgConfig(sample_count=1))
    base.update(kw)
    return TrainConfig(**base)


def tiny_pairs(n=3, seed=0):
    spec = GenSpec(count=n, size=(8, 8), seed=seed)
    return [generate_pair(spec, i) for i in range(n)]


def snapshot(params):
    return {k: t.data.copy() for k, t in params.items()}


def changed(params, before):
    return any(not np.array_equal(t.data, before[k])
               for k, t in params.items())


def test_stage1_zero_steps_is_identity():
    model = MlpFilter(hidden=8, seed=0)
    before = snapshot(model.params)
    stage1(model, [p.x for p in tiny_pairs()], tiny_cfg(stage1_steps=0))
    assert not changed(model.params, before)


def test_stage1_deterministic():
    outs = []
    for _ in range(2):
        model = MlpFilter(hidden=8, seed=0)
        stage1(model, [p.x for p in tiny_pairs()], tiny_cfg())
        outs.append(snapshot(model.params))
    assert all(np.array_equal(outs[0][k], outs[1][k]) for k in outs[0])


def test_stage1_trains_baseline_too():
    baseline = BaselineLinearLuts(n=5, seed=0)
    before = snapshot(baseline.params)
    train_baseline_linear(baseline, [p.x for p in tiny_pairs()], tiny_cfg())
    assert changed(baseline.params, before)


def test_stage2_returns_per_pair_params_and_updates_model():
    model = MlpFilter(hidden=8, seed=0)
    pairs = tiny_pairs()
    before = snapshot(model.params)
    learned, trace = stage2(model, pairs, tiny_cfg())
    assert len(learned) == len(pairs)
    assert all(isinstance(w, FilterParams) for w in learned)
    assert changed(model.params, before)
    assert len(trace.column("total", "stage2")) == 3


def test_stage2_identity_dataset_keeps_w_near_zero():
    model = MlpFilter(hidden=8, seed=0)
    pairs = [DatasetPair(p.x, p.x, np.zeros(5)) for p in tiny_pairs()]
    learned, _ = stage2(model, pairs, tiny_cfg(stage2_steps=20))
    for w in learned:
        assert np.max(np.abs(w.values)) <= 0.05


def test_stage3_freezes_model():
    model = MlpFilter(hidden=8, seed=0)
    predictor = ParamPredictor(hidden=8, seed=0)
    model_before = snapshot(model.params)
    pred_before = snapshot(predictor.params)
    stage3(predictor, model, tiny_pairs(), tiny_cfg())
    assert not changed(model.params, model_before)  # bit-identical
    assert changed(predictor.params, pred_before)


def test_stage3_zero_steps_leaves_predictor():
    model = MlpFilter(hidden=8, seed=0)
    predictor = ParamPredictor(hidden=8, seed=0)
    before = snapshot(predictor.params)
    stage3(predictor, model, tiny_pairs(), tiny_cfg(stage3_steps=0))
    assert not changed(predictor.params, before)


def test_divergence_aborts():
    model = MlpFilter(hidden=8, seed=0)
    model.params["w4"].data[:] = 1e308  # overflows the residual to NaN
    with pytest.raises(TrainingDiverged):
        stage1(model, [p.x for p in tiny_pairs()], tiny_cfg())


def test_baseline_linear_in_w(rng):
    baseline = BaselineLinearLuts(n=5, seed=3)
    img = ImageBuf(rng.random((5, 8, 3)))
    x = img.pixels
    w = rng.uniform(-0.5, 0.5, 5)
    y1 = baseline.apply(img, w)
    y2 = baseline.apply(img, 2 * w)
    assert np.max(np.abs((y2 - x) - 2 * (y1 - x))) <= 1e-9


def test_baseline_identity_at_zero(rng):
    baseline = BaselineLinearLuts(n=5, seed=3)
    img = ImageBuf(rng.random((5, 8, 3)))
    assert np.max(np.abs(baseline.apply(img, np.zeros(5)) - img.pixels)) <= 1e-12


def test_psnr_values(rng):
    a = ImageBuf(np.zeros((4, 4, 3)))
    assert psnr(a, a) == 99.0  # capped sentinel
    b = ImageBuf(np.full((4, 4, 3), 0.1))
    assert psnr(a, b) == pytest.approx(20.0, abs=1e-9)
    x, y = rng.random((5, 5, 3)), rng.random((5, 5, 3))
    m = float(np.mean((x - y) ** 2))
    assert psnr(ImageBuf(x), ImageBuf(y)) == pytest.approx(
        10 * np.log10(1 / m), abs=1e-9)


def test_trace_csv_round_trip(tmp_path):
    trace = LossTrace()
    trace.add("stage1", 0, guidance=1.5)
    trace.add("stage2", 0, total=2.0, guidance=0.5)
    path = tmp_path / "trace.csv"
    trace.write_csv(path)
    text = path.read_text().splitlines()
    assert text[0] == "stage,step,guidance,total"
    assert len(text) == 3


def test_full_batch_loss_nonincreasing_with_small_lr():
    # fixed image and w-bar: 25 full-batch steps should descend
    model = MlpFilter(hidden=8, seed=0)
    pairs = tiny_pairs(1)
    cfg = tiny_cfg(stage1_steps=25, stage1_lr=1e-4, momentum=0.0,
                   pg=PgConfig(sample_count=1, w_sample_range=(0.0, 0.0)))
    trace = LossTrace()
    stage1(model, [pairs[0].x], cfg, trace=trace)
    losses = trace.column("guidance", "stage1")
    drops = sum(1 for a, b in zip(losses, losses[1:]) if b <= a + 1e-12)
    assert drops >= 0.95 * (len(losses) - 1)
