"""Impression scorer tests: analytic formulas, ratio, external client."""

import json

import httpx
import numpy as np
import pytest

from implut.image import ImageBuf
from implut.scores import (DEFAULT_PROMPTS, ExternalScorer, ImpressionScores,
                           PromptPair, ScorerBadResponse, ScorerUnreachable,
                           clip_ratio, score_analytic, score_with_fallback)


def flat_image(rgb):
    return ImageBuf(np.tile(np.asarray(rgb, float), (4, 4, 1)))


def test_mid_gray_scores():
    s = score_analytic(flat_image([0.5, 0.5, 0.5])).values
    # luma 0.5, zero spread, zero chroma range, neutral opponents
    assert np.allclose(s, [0.5, 0.0, 0.0, 0.5, 0.5], atol=1e-9)


def test_pure_red_scores():
    s = dict(zip(score_analytic(flat_image([1, 0, 0])).names,
                 score_analytic(flat_image([1, 0, 0])).values))
    assert abs(s["Exposure"] - 0.299) <= 1e-9
    assert abs(s["Saturation"] - 1.0) <= 1e-9       # max - min = 1
    assert abs(s["Color temperature"] - 0.75) <= 1e-9  # (r+g)/2 - b = 0.5
    assert abs(s["Tint correction"] - 0.75) <= 1e-9    # (r+b)/2 - g = 0.5


def test_contrast_scales_with_spread(rng):
    half = np.zeros((4, 4, 3))
    half[:2] = 1.0
    s = score_analytic(ImageBuf(half)).values
    assert abs(s[1] - 1.0) <= 1e-9  # 2 * std of {0, 1} luma = 1


def test_scores_bounded(rng):
    for _ in range(20):
        s = score_analytic(ImageBuf(rng.random((6, 6, 3)))).values
        assert np.all(s >= 0.0) and np.all(s <= 1.0)


def test_impression_scores_validate():
    with pytest.raises(ValueError):
        ImpressionScores([1.5, 0, 0, 0, 0], [p.name for p in DEFAULT_PROMPTS])


def test_clip_ratio_properties():
    assert clip_ratio(0.3, 0.3) == pytest.approx(0.5)
    assert clip_ratio(0.9, 0.1) > 0.5
    assert clip_ratio(0.1, 0.9) < 0.5
    assert clip_ratio(100.0, -100.0) <= 1.0  # stable at extremes


def test_prompt_pair_validation():
    with pytest.raises(ValueError):
        PromptPair("Exposure", "", "Underexposed photo.")


def mock_scorer(handler):
    return ExternalScorer("http://scorer.test/score",
                          transport=httpx.MockTransport(handler))


def test_external_scorer_round_trip(random_image):
    seen = {}

    def handler(request):
        seen["payload"] = json.loads(request.content)
        sims = [{"positive": 0.8, "negative": 0.2}] * 5
        return httpx.Response(200, json={"similarities": sims})

    scores = mock_scorer(handler).score(random_image, DEFAULT_PROMPTS)
    assert seen["payload"]["pairs"][0]["positive"] == "Overexposed photo."
    assert "image_png_base64" in seen["payload"]
    expected = clip_ratio(0.8, 0.2)
    assert np.allclose(scores.values, expected, atol=1e-9)


def test_external_scorer_equal_sims_give_half(random_image):
    def handler(request):
        return httpx.Response(200, json={
            "similarities": [{"positive": 0.4, "negative": 0.4}] * 5})
    scores = mock_scorer(handler).score(random_image, DEFAULT_PROMPTS)
    assert np.allclose(scores.values, 0.5, atol=1e-12)


def test_external_scorer_bad_response(random_image):
    def handler(request):
        return httpx.Response(200, json={"similarities": [{"positive": 1.0}]})
    with pytest.raises(ScorerBadResponse):
        mock_scorer(handler).score(random_image, DEFAULT_PROMPTS)


def test_external_scorer_unreachable_falls_back(random_image):
    def handler(request):
        raise httpx.ConnectError("refused")
    scorer = mock_scorer(handler)
    with pytest.raises(ScorerUnreachable):
        scorer.score(random_image, DEFAULT_PROMPTS)
    with pytest.warns(UserWarning):
        scores, used_external = score_with_fallback(random_image,
                                                    external=scorer)
    assert not used_external
    analytic = score_analytic(random_image)
    assert np.allclose(scores.values, analytic.values)
