"""Transform tests: identity law, residual structure, parameter counting."""

import numpy as np
import pytest

from implut import autodiff as ad
from implut.image import ImageBuf
from implut.transform import (DEFAULT_FILTER_NAMES, FilterParams, MlpFilter,
                              apply_direct, count_params, pixel_features,
                              transform_pixel, transform_pixels)


def test_identity_at_zero_strengths(small_model, random_image):
    out = apply_direct(small_model, random_image, FilterParams.zeros())
    assert np.max(np.abs(out.pixels - random_image.pixels)) <= 1e-9


def test_nonzero_strengths_change_pixels(small_model, random_image):
    w = FilterParams([0.8, 0, 0, 0, 0])
    out = apply_direct(small_model, random_image, w)
    assert np.max(np.abs(out.pixels - random_image.pixels)) > 1e-6


def test_output_clamped(small_model, rng):
    img = ImageBuf(np.clip(rng.random((8, 8, 3)) * 2 - 0.5, 0, 1))
    out = apply_direct(small_model, img, FilterParams(np.full(5, 1.0)))
    assert out.pixels.min() >= 0.0 and out.pixels.max() <= 1.0


def test_param_count_default_architecture():
    # 5 affine layers, (6+J) -> 256 -> 256 -> 256 -> 256 -> 3 with J = 5
    model = MlpFilter()
    assert count_params(model) == 201_219


def test_pixel_features_concat_raw_and_sorted():
    feats = pixel_features(np.array([[0.9, 0.1, 0.5]]))
    assert np.allclose(feats, [[0.9, 0.1, 0.5, 0.1, 0.5, 0.9]])


def test_transform_pixel_matches_batch(small_model, rng):
    px = rng.random(3)
    w = FilterParams(rng.uniform(-1, 1, 5))
    single = transform_pixel(small_model, px, w)
    batch = transform_pixels(small_model, px[None, :], w.values)
    assert np.allclose(single, batch[0], atol=1e-12)


def test_filter_params_clamp_and_names():
    w = FilterParams([2.0, -3.0, 0.5, 0, 0])
    assert w.values[0] == 1.0 and w.values[1] == -1.0
    assert w.names == DEFAULT_FILTER_NAMES
    assert (-w).values[0] == -1.0
    with pytest.raises(ValueError):
        FilterParams([0.0, 0.0])  # wrong length
    with pytest.raises(ValueError):
        FilterParams([np.nan, 0, 0, 0, 0])


def test_forward_graph_matches_numpy(small_model, rng):
    pixels = rng.random((17, 3))
    w = rng.uniform(-1, 1, 5)
    feats = pixel_features(pixels)
    graph_out = small_model.forward_graph(feats, w).data
    np_out = small_model.forward_np(np.concatenate(
        [feats, np.broadcast_to(w, (17, 5))], axis=1))
    assert np.allclose(graph_out, np_out, atol=1e-12)


def test_enhance_many_matches_individual(small_model, rng):
    pixels = rng.random((9, 3))
    ws = [rng.uniform(-1, 1, 5) for _ in range(3)]
    batched = small_model.enhance_many(pixels, ws, train_weights=False)
    enhancer = small_model.make_enhancer(pixels, train_weights=False)
    for out, w in zip(batched, ws):
        assert np.allclose(out.data, enhancer(w).data, atol=1e-12)


def test_eval_count_tracks_pixels(small_model, rng):
    small_model.eval_count = 0
    transform_pixels(small_model, rng.random((40, 3)), np.zeros(5))
    assert small_model.eval_count == 40


def test_float32_path_follows_input_dtype(small_model, rng):
    pixels = rng.random((5, 3)).astype(np.float32)
    feats = pixel_features(pixels).astype(np.float32)
    x = np.concatenate([feats, np.zeros((5, 5), np.float32)], axis=1)
    assert small_model.forward_np(x).dtype == np.float32
