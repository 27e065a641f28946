"""Training objectives.

The central one penalizes the score Jacobian's distance from the
identity: nudging filter j must move impression j at unit rate and
leave every other impression alone. The Jacobian is taken by central
differences over the filter strengths; each difference is a pair of
full differentiable forward passes, so the loss still backpropagates
into the model weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .image import ImageBuf
from .scores import score_graph

__all__ = [
    "PgConfig",
    "jacobian_scores",
    "prompt_guidance_loss",
    "prompt_guidance_loss_diag_only",
    "mse",
    "invertibility_loss",
]


@dataclass
class PgConfig:
    """Hyperparameters of the prompt guidance loss."""

    lambda_per_filter: np.ndarray | None = None  # defaults to ones(J)
    lambda_off: float = 1.0
    fd_step: float = 0.05
    sample_count: int = 2          # images per loss evaluation
    w_sample_range: tuple[float, float] = (-1.0, 1.0)

    def __post_init__(self):
        if self.fd_step <= 0:
            raise ValueError("fd_step must be positive")
        if self.lambda_off < 0:
            raise ValueError("lambda_off must be non-negative")
        if self.lambda_per_filter is not None:
            lam = np.asarray(self.lambda_per_filter, dtype=np.float64)
            if np.any(lam <= 0):
                raise ValueError("per-filter lambdas must be positive")
            self.lambda_per_filter = lam

    def lambdas(self, j: int) -> np.ndarray:
        if self.lambda_per_filter is None:
            return np.ones(j)
        if len(self.lambda_per_filter) != j:
            raise ValueError(f"{len(self.lambda_per_filter)} lambdas for J={j}")
        return self.lambda_per_filter

    def sample_w(self, rng: np.random.Generator, j: int) -> np.ndarray:
        lo, hi = self.w_sample_range
        return rng.uniform(lo, hi, size=j)


def _pixels_of(img) -> np.ndarray:
    if isinstance(img, ImageBuf):
        return img.flat()
    a = np.asarray(img, dtype=np.float64)
    return a.reshape(-1, 3)


def jacobian_scores(model, img, w_bar, delta: float, train_weights: bool = True) -> ad.Tensor:
    """(J, J) Tensor D with D[j', j] = d score_j' / d strength_j at w_bar.

    Central differences over the strength vector; every entry is a
    differentiable function of the model weights.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    pixels = _pixels_of(img)
    w_bar = np.asarray(w_bar.values if hasattr(w_bar, "values") else w_bar,
                       dtype=np.float64).reshape(-1)
    names = model.filter_names
    j = len(names)
    probes = []
    for k in range(j):
        wp = w_bar.copy()
        wp[k] += delta
        wm = w_bar.copy()
        wm[k] -= delta
        probes += [wp, wm]
    if hasattr(model, "enhance_many"):
        outputs = model.enhance_many(pixels, probes, train_weights)
    else:
        enhance = model.make_enhancer(pixels, train_weights)
        outputs = [enhance(w) for w in probes]
    cols = []
    for k in range(j):
        c_plus = score_graph(outputs[2 * k], names)
        c_minus = score_graph(outputs[2 * k + 1], names)
        cols.append(((c_plus - c_minus) * (1.0 / (2.0 * delta))).reshape(j, 1))
    return ad.concat(cols, axis=1)


def _pg_loss(model, images, cfg: PgConfig, w_bars, rng, diag_only: bool) -> ad.Tensor:
    j = len(model.filter_names)
    if w_bars is None:
        if rng is None:
            raise ValueError("need either explicit w_bars or an rng to sample them")
        w_bars = [cfg.sample_w(rng, j) for _ in images]
    if len(w_bars) != len(images):
        raise ValueError("one sampled strength vector per image required")
    lam = cfg.lambdas(j)
    eye = np.eye(j)
    mask = np.diag(lam) if diag_only else np.diag(lam) + cfg.lambda_off * (1.0 - eye)
    total = None
    for img, w_bar in zip(images, w_bars):
        d = jacobian_scores(model, img, w_bar, cfg.fd_step)
        term = ((d - eye).abs() * mask).sum()
        total = term if total is None else total + term
    return total * (1.0 / len(images))


def prompt_guidance_loss(model, images, cfg: PgConfig, w_bars=None, rng=None) -> ad.Tensor:
    """Mean over images of sum_j lam_j|D_jj - 1| + lam sum_{j'!=j}|D_j'j|."""
    if len(images) == 0:
        raise ValueError("need at least one image")
    return _pg_loss(model, images, cfg, w_bars, rng, diag_only=False)


def prompt_guidance_loss_diag_only(model, images, cfg: PgConfig, w_bars=None, rng=None) -> ad.Tensor:
    """Ablation variant keeping only the diagonal (targeted-score) terms."""
    if len(images) == 0:
        raise ValueError("need at least one image")
    return _pg_loss(model, images, cfg, w_bars, rng, diag_only=True)


def mse(a, b):
    """Mean squared error over all pixels and channels.

    Plain numbers for two images; a Tensor when either side is a graph
    node (loss construction).
    """
    if isinstance(a, ad.Tensor) or isinstance(b, ad.Tensor):
        at = a if isinstance(a, ad.Tensor) else ad.Tensor(_pixels_of(a))
        bt = b if isinstance(b, ad.Tensor) else ad.Tensor(_pixels_of(b))
        if at.data.shape != bt.data.shape:
            raise ValueError(f"shape mismatch: {at.data.shape} vs {bt.data.shape}")
        return (at - bt).square().mean()
    pa, pb = _pixels_of(a), _pixels_of(b)
    if pa.shape != pb.shape:
        raise ValueError(f"shape mismatch: {pa.shape} vs {pb.shape}")
    return float(np.mean((pa - pb) ** 2))


def invertibility_loss(model, x, t, w, train_weights: bool = True) -> ad.Tensor:
    """MSE between x and the target t enhanced with reversed strengths."""
    xp = _pixels_of(x)
    tp = _pixels_of(t)
    if xp.shape != tp.shape:
        raise ValueError(f"shape mismatch: {xp.shape} vs {tp.shape}")
    enhance = model.make_enhancer(tp, train_weights)
    if isinstance(w, ad.Tensor):
        w_rev = -w
    else:
        w_rev = -np.asarray(w.values if hasattr(w, "values") else w, dtype=np.float64)
    return mse(enhance(w_rev), xp)
