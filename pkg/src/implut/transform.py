"""The learned color transform: an MLP-defined residual pixel filter.

A pixel is mapped as

    out = rgb + e(rgb ++ sorted(rgb) ++ w) - e(rgb ++ sorted(rgb) ++ 0)

where `e` is a five-layer tanh MLP and `w` is the vector of named
filter strengths. Subtracting the zero-strength branch makes w = 0 an
exact identity, so every filter is a deviation from "do nothing".
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .image import ImageBuf

__all__ = [
    "DEFAULT_FILTER_NAMES",
    "FilterParams",
    "MlpFilter",
    "pixel_features",
    "transform_pixels",
    "transform_pixel",
    "apply_direct",
    "count_params",
]

DEFAULT_FILTER_NAMES = (
    "Exposure",
    "Contrast",
    "Saturation",
    "Color temperature",
    "Tint correction",
)

_APPLY_CHUNK = 1 << 16  # pixels per forward chunk, bounds peak memory


class FilterParams:
    """Named filter strengths, clamped to [-1, 1] at the public boundary."""

    __slots__ = ("values", "names")

    def __init__(self, values, names=DEFAULT_FILTER_NAMES, clamp: bool = True):
        v = np.asarray(values, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite filter value")
        if len(v) != len(names):
            raise ValueError(f"{len(v)} values for {len(names)} filter names")
        self.values = np.clip(v, -1.0, 1.0) if clamp else v
        self.names = tuple(names)

    @classmethod
    def zeros(cls, names=DEFAULT_FILTER_NAMES) -> "FilterParams":
        return cls(np.zeros(len(names)), names)

    def __len__(self) -> int:
        return len(self.values)

    def __neg__(self) -> "FilterParams":
        return FilterParams(-self.values, self.names, clamp=False)

    def as_dict(self) -> dict[str, float]:
        return {n: float(v) for n, v in zip(self.names, self.values)}


class MlpFilter:
    """Five affine layers (3+3+J) -> hidden -> ... -> 3, tanh between.

    The final layer is linear so the residual can be signed. Weights
    are float64 and initialized uniform in +-sqrt(1/fan_in) from the
    given seed.
    """

    def __init__(self, filter_names=DEFAULT_FILTER_NAMES, hidden: int = 256,
                 layers: int = 5, seed: int = 0):
        if layers < 1:
            raise ValueError("model needs at least one affine layer")
        if hidden < 1:
            raise ValueError("hidden width must be positive")
        if len(filter_names) < 1:
            raise ValueError("need at least one filter")
        self.filter_names = tuple(filter_names)
        self.j = len(self.filter_names)
        self.dims = [6 + self.j] + [hidden] * (layers - 1) + [3]
        self.params = ad.ParamSet()
        rng = np.random.default_rng(seed)
        for i, (fan_in, fan_out) in enumerate(zip(self.dims[:-1], self.dims[1:])):
            bound = np.sqrt(1.0 / fan_in)
            self.params.add(f"w{i}", rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.params.add(f"b{i}", rng.uniform(-bound, bound, size=fan_out))
        self.eval_count = 0  # pixels transformed on the inference path

    @property
    def n_layers(self) -> int:
        return len(self.dims) - 1

    def weight_arrays(self) -> list[np.ndarray]:
        """Flat list [w0, b0, w1, b1, ...] of the raw arrays."""
        out = []
        for i in range(self.n_layers):
            out.append(self.params[f"w{i}"].data)
            out.append(self.params[f"b{i}"].data)
        return out

    def forward_np(self, feats: np.ndarray) -> np.ndarray:
        """Inference-path MLP on (P, 6+J) features; dtype follows input."""
        if feats.shape[1] != self.dims[0]:
            raise ValueError(f"expected {self.dims[0]} input features, got {feats.shape[1]}")
        h = feats
        for i in range(self.n_layers):
            w = self.params[f"w{i}"].data
            b = self.params[f"b{i}"].data
            if feats.dtype == np.float32:
                w = w.astype(np.float32)
                b = b.astype(np.float32)
            h = h @ w + b
            if i < self.n_layers - 1:
                h = np.tanh(h)
        return h

    def forward_graph(self, feats6: np.ndarray, w, train_weights: bool = True) -> ad.Tensor:
        """Differentiable MLP application on (P, 6) base features.

        `w` is either a constant (J,) array or a Tensor carrying
        gradients (per-image parameters, predictor output). With
        `train_weights=False` the weights enter the graph as constants,
        so backward skips them entirely.
        """
        p = feats6.shape[0]
        if isinstance(w, ad.Tensor):
            w_rows = ad.Tensor(np.ones((p, 1))) @ w.reshape(1, self.j)
            h = ad.concat([ad.Tensor(feats6), w_rows], axis=1)
        else:
            w = np.asarray(w, dtype=np.float64).reshape(-1)
            if len(w) != self.j:
                raise ValueError(f"{len(w)} strengths for a {self.j}-filter model")
            h = ad.Tensor(np.concatenate([feats6, np.broadcast_to(w, (p, self.j))], axis=1))
        for i in range(self.n_layers):
            wt = self.params[f"w{i}"]
            bt = self.params[f"b{i}"]
            if not train_weights:
                wt = ad.Tensor(wt.data)
                bt = ad.Tensor(bt.data)
            h = h @ wt + bt
            if i < self.n_layers - 1:
                h = h.tanh()
        return h

    def enhance_many(self, pixels: np.ndarray, w_list, train_weights: bool = True) -> list[ad.Tensor]:
        """Enhance the same pixels under several strength vectors at once.

        All variants plus the shared zero-strength branch ride through
        one stacked forward pass, so the per-variant cost is a single
        large matrix product instead of many small ones.
        """
        p = pixels.shape[0]
        feats6 = pixel_features(pixels)
        ws = [self.check_params(w) for w in w_list] + [np.zeros(self.j)]
        stacked = np.concatenate([
            np.concatenate([feats6, np.broadcast_to(w, (p, self.j))], axis=1) for w in ws
        ], axis=0)
        out = self.forward_graph_raw(stacked, train_weights)
        e0 = ad.rows(out, len(w_list) * p, (len(w_list) + 1) * p)
        base = ad.Tensor(pixels) - e0
        return [ad.rows(out, k * p, (k + 1) * p) + base for k in range(len(w_list))]

    def forward_graph_raw(self, feats: np.ndarray, train_weights: bool = True) -> ad.Tensor:
        """Differentiable MLP on pre-assembled (P, 6+J) features."""
        if feats.shape[1] != self.dims[0]:
            raise ValueError(f"expected {self.dims[0]} input features, got {feats.shape[1]}")
        h = ad.Tensor(feats)
        for i in range(self.n_layers):
            wt = self.params[f"w{i}"]
            bt = self.params[f"b{i}"]
            if not train_weights:
                wt = ad.Tensor(wt.data)
                bt = ad.Tensor(bt.data)
            h = h @ wt + bt
            if i < self.n_layers - 1:
                h = h.tanh()
        return h

    def make_enhancer(self, pixels: np.ndarray, train_weights: bool = True):
        """Return enhance(w) -> Tensor (P, 3) over fixed input pixels.

        The zero-strength branch is built once and shared by every call,
        so loss graphs that probe many w values pay for it only once.
        """
        feats6 = pixel_features(pixels)
        e0 = self.forward_graph(feats6, np.zeros(self.j), train_weights)
        base = ad.Tensor(pixels) - e0

        def enhance(w) -> ad.Tensor:
            return self.forward_graph(feats6, w, train_weights) + base

        return enhance

    def check_params(self, w) -> np.ndarray:
        v = np.asarray(w.values if isinstance(w, FilterParams) else w, dtype=np.float64).reshape(-1)
        if len(v) != self.j:
            raise ValueError(f"{len(v)} strengths for a {self.j}-filter model")
        return v


def pixel_features(rgb: np.ndarray) -> np.ndarray:
    """(P, 3) pixels -> (P, 6): raw channels followed by their ascending sort."""
    return np.concatenate([rgb, np.sort(rgb, axis=1, kind="stable")], axis=1)


def transform_pixels(model: MlpFilter, rgb: np.ndarray, w) -> np.ndarray:
    """Residual transform of (P, 3) pixels; output unclamped."""
    v = model.check_params(w)
    feats6 = pixel_features(rgb)
    p = rgb.shape[0]
    model.eval_count += p
    with_w = np.concatenate([feats6, np.broadcast_to(v.astype(rgb.dtype), (p, model.j))], axis=1)
    with_0 = np.concatenate([feats6, np.zeros((p, model.j), dtype=rgb.dtype)], axis=1)
    return rgb + model.forward_np(with_w) - model.forward_np(with_0)


def transform_pixel(model: MlpFilter, rgb, w) -> np.ndarray:
    """Single-pixel form of the residual transform (unclamped)."""
    rgb = np.asarray(rgb, dtype=np.float64).reshape(1, 3)
    return transform_pixels(model, rgb, w)[0]


def apply_direct(model: MlpFilter, img: ImageBuf, w) -> ImageBuf:
    """Apply the transform to every pixel independently; clamp on output."""
    flat = img.flat()
    out = np.empty_like(flat)
    for lo in range(0, flat.shape[0], _APPLY_CHUNK):
        hi = min(lo + _APPLY_CHUNK, flat.shape[0])
        out[lo:hi] = transform_pixels(model, flat[lo:hi], w)
    return ImageBuf.clamped(out.reshape(img.pixels.shape))


def count_params(model: MlpFilter) -> int:
    return model.params.count()
