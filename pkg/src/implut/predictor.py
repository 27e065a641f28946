"""Predicting filter strengths from an image.

The image is area-averaged to a small analysis resolution, summarized
as a 38-value global descriptor, then passed through a small tanh MLP
whose bounded output stays in the strength range used everywhere else.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .image import ImageBuf
from .transform import DEFAULT_FILTER_NAMES, FilterParams

__all__ = [
    "FEATURE_DIM",
    "ParamPredictor",
    "downscale",
    "image_features",
    "predict",
]

FEATURE_DIM = 38
_HIST_BINS = 16
_HIST_SIGMA = 1.0 / 16.0
_HIST_CENTERS = (np.arange(_HIST_BINS) + 0.5) / _HIST_BINS
_RESERVED = FEATURE_DIM - (6 + _HIST_BINS + 3)  # padding for format stability

_LUMA = np.array([[0.299], [0.587], [0.114]])
_RANGE = np.array([[-1.0], [0.0], [1.0]])
_OPPONENT = np.array([[0.5, 0.5], [0.5, -1.0], [-1.0, 0.5]])  # warm, tint axes


def _area_weight_matrix(src: int, dst: int) -> np.ndarray:
    """(dst, src) row-stochastic overlap weights for 1-D area averaging."""
    w = np.zeros((dst, src))
    step = src / dst
    for i in range(dst):
        lo, hi = i * step, (i + 1) * step
        q0, q1 = int(np.floor(lo)), int(np.ceil(hi))
        for q in range(q0, min(q1, src)):
            w[i, q] = min(hi, q + 1) - max(lo, q)
    return w / step


def downscale(img: ImageBuf, target: tuple[int, int]) -> ImageBuf:
    """Exact area-average resampling to (height, width)."""
    h, w = target
    if h < 1 or w < 1:
        raise ValueError("target size must be at least 1x1")
    wr = _area_weight_matrix(img.height, h)
    wc = _area_weight_matrix(img.width, w)
    out = np.einsum("hi,ijc,wj->hwc", wr, img.pixels, wc)
    return ImageBuf.clamped(out)


def feature_graph(pixels: ad.Tensor) -> ad.Tensor:
    """Differentiable (1, 38) descriptor of (P, 3) pixels.

    Layout: channel means (3), channel stds (3), soft luma histogram
    (16), saturation mean (1), warm/tint opponent means (2), reserved
    zeros (13).
    """
    p = pixels.data.shape[0]
    row_mean = ad.Tensor(np.full((1, p), 1.0 / p))
    means = row_mean @ pixels                                   # (1, 3)
    dev = pixels - means
    stds = (row_mean @ dev.square()).sqrt()                     # (1, 3)
    luma = pixels @ _LUMA                                       # (P, 1)
    d = luma - _HIST_CENTERS.reshape(1, _HIST_BINS)
    hist = row_mean @ (d.square() * (-0.5 / _HIST_SIGMA**2)).exp()  # (1, 16)
    sorted_px, _ = ad.sort_rows(pixels)
    sat = (row_mean @ (sorted_px @ _RANGE))                     # (1, 1)
    opponents = row_mean @ (pixels @ _OPPONENT)                 # (1, 2)
    reserved = ad.Tensor(np.zeros((1, _RESERVED)))
    return ad.concat([means, stds, hist, sat, opponents, reserved], axis=1)


def image_features(img: ImageBuf, analysis_size: int = 16) -> np.ndarray:
    small = downscale(img, (analysis_size, analysis_size))
    return feature_graph(ad.Tensor(small.flat())).data.reshape(-1)


class ParamPredictor:
    """38 -> 64 -> 64 -> J MLP, tanh after every layer including the last."""

    def __init__(self, filter_names=DEFAULT_FILTER_NAMES, hidden: int = 64,
                 analysis_size: int = 16, seed: int = 0):
        if hidden < 1:
            raise ValueError("hidden width must be positive")
        self.filter_names = tuple(filter_names)
        self.j = len(self.filter_names)
        self.analysis_size = analysis_size
        self.dims = [FEATURE_DIM, hidden, hidden, self.j]
        self.params = ad.ParamSet()
        rng = np.random.default_rng(seed)
        for i, (fan_in, fan_out) in enumerate(zip(self.dims[:-1], self.dims[1:])):
            bound = np.sqrt(1.0 / fan_in)
            self.params.add(f"w{i}", rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.params.add(f"b{i}", rng.uniform(-bound, bound, size=fan_out))

    @property
    def n_layers(self) -> int:
        return len(self.dims) - 1

    def weight_arrays(self) -> list[np.ndarray]:
        out = []
        for i in range(self.n_layers):
            out.append(self.params[f"w{i}"].data)
            out.append(self.params[f"b{i}"].data)
        return out

    def forward_graph(self, features) -> ad.Tensor:
        """(1, 38) features -> (1, J) strengths in (-1, 1)."""
        h = features if isinstance(features, ad.Tensor) else ad.Tensor(
            np.asarray(features, dtype=np.float64).reshape(1, FEATURE_DIM))
        for i in range(self.n_layers):
            h = (h @ self.params[f"w{i}"] + self.params[f"b{i}"]).tanh()
        return h


def predict(predictor: ParamPredictor, img: ImageBuf) -> FilterParams:
    feats = image_features(img, predictor.analysis_size)
    out = predictor.forward_graph(feats).data.reshape(-1)
    return FilterParams(out, predictor.filter_names)
