"""Impression scoring: how exposed / contrasty / saturated / warm / tinted
an image looks, as differentiable scalars in [0, 1].

The five analytic scorers are monotone proxies for their prompt pairs
and train end to end. The external scorer client talks to a remote
vision-language service over HTTP and is for evaluation and UI only; it
never participates in a loss.
"""

from __future__ import annotations

import base64
import warnings
from dataclasses import dataclass

import httpx
import numpy as np

from . import autodiff as ad
from .image import ImageBuf
from .transform import DEFAULT_FILTER_NAMES

__all__ = [
    "ImpressionScores",
    "PromptPair",
    "DEFAULT_PROMPTS",
    "score_graph",
    "score_analytic",
    "clip_ratio",
    "ExternalScorer",
    "ExternalScorerError",
    "ScorerUnreachable",
    "ScorerTimeout",
    "ScorerBadResponse",
    "score_with_fallback",
]

_LUMA = np.array([[0.299], [0.587], [0.114]])
_RANGE = np.array([[-1.0], [0.0], [1.0]])  # max - min after a row sort
_WARM = np.array([[0.5], [0.5], [-1.0]])   # (r+g)/2 - b
_TINT = np.array([[0.5], [-1.0], [0.5]])   # (r+b)/2 - g


@dataclass(frozen=True)
class PromptPair:
    name: str
    positive: str
    negative: str

    def __post_init__(self):
        if not self.name or not self.positive or not self.negative:
            raise ValueError("prompt pair fields must be non-empty")


DEFAULT_PROMPTS = (
    PromptPair("Exposure", "Overexposed photo.", "Underexposed photo."),
    PromptPair("Contrast", "Clear photo.", "Unclear photo."),
    PromptPair("Saturation", "Full color photo.", "No color photo."),
    PromptPair("Color temperature", "Yellow tinted photo.", "Blue tinted photo."),
    PromptPair("Tint correction", "Magenta tinted photo.", "Green tinted photo."),
)


class ImpressionScores:
    """J scores in [0, 1], aligned by name with the filter parameters."""

    __slots__ = ("values", "names")

    def __init__(self, values, names=DEFAULT_FILTER_NAMES):
        v = np.asarray(values, dtype=np.float64).reshape(-1)
        if len(v) != len(names):
            raise ValueError(f"{len(v)} scores for {len(names)} names")
        if not np.all((v >= 0.0) & (v <= 1.0)):
            raise ValueError("scores must lie in [0, 1]")
        self.values = v
        self.names = tuple(names)

    def as_dict(self) -> dict[str, float]:
        return {n: float(v) for n, v in zip(self.names, self.values)}


def _exposure(px: ad.Tensor) -> ad.Tensor:
    return (px @ _LUMA).mean()


def _contrast(px: ad.Tensor) -> ad.Tensor:
    luma = px @ _LUMA
    dev = luma - luma.mean()
    return 2.0 * dev.square().mean().sqrt()


def _saturation(px: ad.Tensor) -> ad.Tensor:
    sorted_px, _ = ad.sort_rows(px)
    return (sorted_px @ _RANGE).mean()


def _temperature(px: ad.Tensor) -> ad.Tensor:
    return 0.5 + 0.5 * (px @ _WARM).mean()


def _tint(px: ad.Tensor) -> ad.Tensor:
    return 0.5 + 0.5 * (px @ _TINT).mean()


ANALYTIC_SCORERS = {
    "Exposure": _exposure,
    "Contrast": _contrast,
    "Saturation": _saturation,
    "Color temperature": _temperature,
    "Tint correction": _tint,
}


def score_graph(pixels: ad.Tensor, names=DEFAULT_FILTER_NAMES) -> ad.Tensor:
    """Differentiable score vector for (P, 3) pixels, one entry per name."""
    parts = []
    for name in names:
        try:
            fn = ANALYTIC_SCORERS[name]
        except KeyError:
            raise ValueError(f"no analytic scorer for filter {name!r}") from None
        parts.append(fn(pixels))
    return ad.concat(parts)


def score_analytic(img: ImageBuf, names=DEFAULT_FILTER_NAMES) -> ImpressionScores:
    values = score_graph(ad.Tensor(img.flat()), names).data
    # exact formulas stay in [0,1]; rounding can graze the edges
    return ImpressionScores(np.clip(values, 0.0, 1.0), names)


def clip_ratio(s_pos: float, s_neg: float) -> float:
    """Two-way softmax exp(s+)/(exp(s+) + exp(s-)), computed stably."""
    d = s_neg - s_pos
    if d >= 0:
        e = np.exp(-d)
        return float(e / (1.0 + e))
    return float(1.0 / (1.0 + np.exp(d)))


class ExternalScorerError(RuntimeError):
    """Base class for remote scorer failures."""


class ScorerUnreachable(ExternalScorerError):
    pass


class ScorerTimeout(ExternalScorerError):
    pass


class ScorerBadResponse(ExternalScorerError):
    pass


class ExternalScorer:
    """Client for a remote similarity service.

    Request (JSON): {"image_png_base64": <str>, "pairs": [{"name", "positive",
    "negative"}, ...]}. Response: {"similarities": [{"positive": <float>,
    "negative": <float>}, ...]} in request order. Scores are the
    clip_ratio of each pair; not differentiable.
    """

    def __init__(self, endpoint: str, timeout: float = 10.0, transport=None):
        self.endpoint = endpoint
        self.timeout = timeout
        self._transport = transport

    def score(self, img: ImageBuf, prompts=DEFAULT_PROMPTS) -> ImpressionScores:
        payload = {
            "image_png_base64": base64.b64encode(_png_bytes(img)).decode("ascii"),
            "pairs": [
                {"name": p.name, "positive": p.positive, "negative": p.negative}
                for p in prompts
            ],
        }
        try:
            with httpx.Client(transport=self._transport, timeout=self.timeout) as client:
                resp = client.post(self.endpoint, json=payload)
        except httpx.TimeoutException as e:
            raise ScorerTimeout(f"scorer timed out after {self.timeout}s") from e
        except httpx.HTTPError as e:
            raise ScorerUnreachable(f"scorer unreachable: {e}") from e
        if resp.status_code != 200:
            raise ScorerBadResponse(f"scorer returned HTTP {resp.status_code}")
        try:
            sims = resp.json()["similarities"]
            values = [clip_ratio(float(s["positive"]), float(s["negative"])) for s in sims]
        except (KeyError, TypeError, ValueError) as e:
            raise ScorerBadResponse(f"malformed scorer response: {e}") from e
        if len(values) != len(prompts):
            raise ScorerBadResponse(
                f"expected {len(prompts)} similarity pairs, got {len(values)}")
        return ImpressionScores(values, [p.name for p in prompts])


def score_with_fallback(img: ImageBuf, prompts=DEFAULT_PROMPTS,
                        external: ExternalScorer | None = None):
    """Score via the external service when available, else analytically.

    Returns (scores, used_external).
    """
    if external is not None:
        try:
            return external.score(img, prompts), True
        except ExternalScorerError as e:
            warnings.warn(f"external scorer failed ({e}); using analytic scores")
    return score_analytic(img, [p.name for p in prompts]), False


def _png_bytes(img: ImageBuf) -> bytes:
    from .dataio import encode_png

    return encode_png(img)
