"""Three-stage optimization.

Stage 1 shapes the filters alone: only the guidance loss, only the
transform weights. Stage 2 introduces one strength vector per training
pair and fits targets plus the reversed-strength reconstruction
constraint. Stage 3 freezes the transform and fits the predictor.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .image import ImageBuf
from .losses import (PgConfig, invertibility_loss, mse, prompt_guidance_loss,
                     prompt_guidance_loss_diag_only)
from .predictor import ParamPredictor, downscale, image_features
from .transform import DEFAULT_FILTER_NAMES, FilterParams, MlpFilter

__all__ = [
    "TrainConfig",
    "TrainingDiverged",
    "LossTrace",
    "SgdMomentum",
    "stage1",
    "stage2",
    "stage3",
    "BaselineLinearLuts",
    "train_baseline_linear",
    "psnr",
]


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    seed: int = 0
    momentum: float = 0.9
    resolution: int = 64
    stage1_steps: int = 150
    stage1_lr: float = 1e-3
    stage2_steps: int = 150
    stage2_lr: float = 1e-3
    stage2_lr_w: float = 1e-2
    stage2_batch: int = 8
    stage3_steps: int = 300
    stage3_lr: float = 1e-3
    stage3_batch: int = 8
    checkpoint_every: int = 0  # steps; 0 disables periodic snapshots
    pg: PgConfig = field(default_factory=PgConfig)

    def __post_init__(self):
        for name in ("stage1_steps", "stage2_steps", "stage3_steps"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        for name in ("stage1_lr", "stage2_lr", "stage2_lr_w", "stage3_lr"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.resolution < 8:
            raise ValueError("working resolution must be at least 8")


class LossTrace:
    """Per-step loss rows, exportable as CSV (step, stage, term columns)."""

    def __init__(self):
        self.rows: list[dict] = []

    def add(self, stage: str, step: int, **terms: float):
        self.rows.append({"stage": stage, "step": step, **terms})

    def column(self, name: str, stage: str | None = None) -> list[float]:
        return [r[name] for r in self.rows
                if name in r and (stage is None or r["stage"] == stage)]

    def write_csv(self, path) -> None:
        keys = ["stage", "step"]
        for row in self.rows:
            for k in row:
                if k not in keys:
                    keys.append(k)
        with open(path, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=keys)
            writer.writeheader()
            writer.writerows(self.rows)


class SgdMomentum:
    """Plain gradient descent with heavy-ball momentum, in-place updates."""

    def __init__(self, params: ad.ParamSet, lr: float, momentum: float = 0.9):
        self.params = params
        self.lr = lr
        self.momentum = momentum
        self._velocity = {name: np.zeros_like(t.data) for name, t in params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        for name, t in self.params.items():
            v = self._velocity[name]
            v *= self.momentum
            v -= self.lr * grads[name]
            t.data += v
        self.params.bump()


def _as_training_pixels(img, resolution: int) -> np.ndarray:
    if isinstance(img, ImageBuf):
        if max(img.height, img.width) > resolution:
            img = downscale(img, (resolution, resolution))
        return img.flat()
    return np.asarray(img, dtype=np.float64).reshape(-1, 3)


def _check_finite(loss_value: float, stage: str, step: int) -> None:
    if not np.isfinite(loss_value):
        raise TrainingDiverged(f"{stage} diverged at step {step}: loss={loss_value}")


def stage1(model, images, cfg: TrainConfig, diag_only: bool = False,
           trace: LossTrace | None = None) -> LossTrace:
    """Guidance-only training of the transform weights."""
    if len(images) == 0:
        raise ValueError("need at least one training image")
    trace = trace if trace is not None else LossTrace()
    rng = np.random.default_rng([cfg.seed, 1])
    pixel_sets = [_as_training_pixels(img, cfg.resolution) for img in images]
    opt = SgdMomentum(model.params, cfg.stage1_lr, cfg.momentum)
    loss_fn = prompt_guidance_loss_diag_only if diag_only else prompt_guidance_loss
    for step in range(cfg.stage1_steps):
        picks = rng.choice(len(pixel_sets), size=min(cfg.pg.sample_count, len(pixel_sets)),
                           replace=False)
        batch = [pixel_sets[i] for i in picks]
        try:
            loss = loss_fn(model, batch, cfg.pg, rng=rng)
        except ad.NonFiniteError as e:
            raise TrainingDiverged(f"stage1 diverged at step {step}: {e}") from e
        value = loss.item()
        _check_finite(value, "stage1", step)
        grads = ad.grads_for(loss, model.params)
        opt.step(grads)
        trace.add("stage1", step, guidance=value)
    return trace


def stage2(model: MlpFilter, pairs, cfg: TrainConfig,
           trace: LossTrace | None = None) -> tuple[list[FilterParams], LossTrace]:
    """Joint fit of transform weights and one strength vector per pair."""
    if len(pairs) == 0:
        raise ValueError("need at least one training pair")
    trace = trace if trace is not None else LossTrace()
    rng = np.random.default_rng([cfg.seed, 2])
    xs = [_as_training_pixels(p.x, cfg.resolution) for p in pairs]
    ts = [_as_training_pixels(p.t, cfg.resolution) for p in pairs]
    w_params = ad.ParamSet()
    w_tensors = [w_params.add(f"w_{i}", np.zeros(model.j)) for i in range(len(pairs))]
    opt_model = SgdMomentum(model.params, cfg.stage2_lr, cfg.momentum)
    opt_w = SgdMomentum(w_params, cfg.stage2_lr_w, cfg.momentum)
    for step in range(cfg.stage2_steps):
        picks = rng.choice(len(pairs), size=min(cfg.stage2_batch, len(pairs)), replace=False)
        pg_picks = rng.choice(len(pairs), size=min(cfg.pg.sample_count, len(pairs)),
                              replace=False)
        try:
            pg = prompt_guidance_loss(model, [xs[i] for i in pg_picks], cfg.pg, rng=rng)
            recon = None
            invert = None
            for i in picks:
                enhance = model.make_enhancer(xs[i])
                r = mse(enhance(w_tensors[i]), ts[i])
                v = invertibility_loss(model, xs[i], ts[i], w_tensors[i])
                recon = r if recon is None else recon + r
                invert = v if invert is None else invert + v
            scale = 1.0 / len(picks)
            loss = pg + recon * scale + invert * scale
        except ad.NonFiniteError as e:
            raise TrainingDiverged(f"stage2 diverged at step {step}: {e}") from e
        value = loss.item()
        _check_finite(value, "stage2", step)
        ad.backward(loss)
        grads_m = {n: (t.grad if t.grad is not None else np.zeros_like(t.data))
                   for n, t in model.params.items()}
        grads_w = {n: (t.grad if t.grad is not None else np.zeros_like(t.data))
                   for n, t in w_params.items()}
        opt_model.step(grads_m)
        opt_w.step(grads_w)
        trace.add("stage2", step, total=value, guidance=pg.item(),
                  reconstruction=recon.item() * scale, invertibility=invert.item() * scale)
    learned = [FilterParams(t.data, model.filter_names, clamp=False) for t in w_tensors]
    return learned, trace


def stage3(predictor: ParamPredictor, model: MlpFilter, pairs, cfg: TrainConfig,
           trace: LossTrace | None = None) -> LossTrace:
    """Fit the predictor against frozen filters: MSE(T, E(X, F(X)))."""
    if len(pairs) == 0:
        raise ValueError("need at least one training pair")
    trace = trace if trace is not None else LossTrace()
    rng = np.random.default_rng([cfg.seed, 3])
    xs = [_as_training_pixels(p.x, cfg.resolution) for p in pairs]
    ts = [_as_training_pixels(p.t, cfg.resolution) for p in pairs]
    feats = [image_features(p.x, predictor.analysis_size) for p in pairs]
    # transform weights enter graphs as constants; cache a frozen enhancer per pair
    enhancers = [model.make_enhancer(x, train_weights=False) for x in xs]
    opt = SgdMomentum(predictor.params, cfg.stage3_lr, cfg.momentum)
    for step in range(cfg.stage3_steps):
        picks = rng.choice(len(pairs), size=min(cfg.stage3_batch, len(pairs)), replace=False)
        try:
            loss = None
            for i in picks:
                w = predictor.forward_graph(feats[i]).reshape(model.j)
                term = mse(enhancers[i](w), ts[i])
                loss = term if loss is None else loss + term
            loss = loss * (1.0 / len(picks))
        except ad.NonFiniteError as e:
            raise TrainingDiverged(f"stage3 diverged at step {step}: {e}") from e
        value = loss.item()
        _check_finite(value, "stage3", step)
        grads = ad.grads_for(loss, predictor.params)
        opt.step(grads)
        trace.add("stage3", step, prediction=value)
    return trace


class BaselineLinearLuts:
    """Residual linear combination of per-filter LUT outputs.

    out = x + sum_j strength_j * lookup(x, table_j); strengths scale
    fixed per-filter color maps, so the response is linear in w by
    construction. Tables start at zero (identity at any w... as w -> 0).
    """

    def __init__(self, filter_names=DEFAULT_FILTER_NAMES, n: int = 17,
                 seed: int = 0):
        if n < 2:
            raise ValueError("LUT needs at least 2 points per axis")
        self.filter_names = tuple(filter_names)
        self.j = len(self.filter_names)
        self.n = n
        self.params = ad.ParamSet()
        rng = np.random.default_rng(seed)
        for jdx in range(self.j):
            init = rng.uniform(-1e-3, 1e-3, size=(n**3, 3))
            self.params.add(f"table{jdx}", init)

    def _interp_coeffs(self, pixels: np.ndarray):
        n = self.n
        scaled = np.clip(pixels, 0.0, 1.0) * (n - 1)
        i0 = np.minimum(scaled.astype(np.int64), n - 2)
        f = scaled - i0
        base = i0[:, 0] + n * (i0[:, 1] + n * i0[:, 2])
        offsets = np.array([0, 1, n, n + 1, n * n, n * n + 1, n * n + n, n * n + n + 1])
        idx = base[:, None] + offsets[None, :]
        fr, fg, fb = f[:, 0], f[:, 1], f[:, 2]
        wr = np.stack([1 - fr, fr, 1 - fr, fr, 1 - fr, fr, 1 - fr, fr], axis=1)
        wg = np.stack([1 - fg, 1 - fg, fg, fg, 1 - fg, 1 - fg, fg, fg], axis=1)
        wb = np.stack([1 - fb] * 4 + [fb] * 4, axis=1)
        return idx, wr * wg * wb

    def make_enhancer(self, pixels: np.ndarray, train_weights: bool = True):
        idx, weights = self._interp_coeffs(pixels)
        px = ad.Tensor(pixels)
        parts = []
        for jdx in range(self.j):
            table = self.params[f"table{jdx}"]
            if not train_weights:
                table = ad.Tensor(table.data)
            parts.append(ad.weighted_gather(table, idx, weights))

        def enhance(w) -> ad.Tensor:
            if isinstance(w, ad.Tensor):
                raise TypeError("baseline strengths are plain values, not graph nodes")
            w = np.asarray(w, dtype=np.float64).reshape(-1)
            out = px
            for jdx, part in enumerate(parts):
                out = out + part * float(w[jdx])
            return out

        return enhance

    def apply(self, img: ImageBuf, w) -> np.ndarray:
        """Unclamped numpy application (structural checks, visualization)."""
        pixels = img.flat()
        idx, weights = self._interp_coeffs(pixels)
        w = np.asarray(w.values if hasattr(w, "values") else w, dtype=np.float64).reshape(-1)
        out = pixels.copy()
        for jdx in range(self.j):
            table = self.params[f"table{jdx}"].data
            out += w[jdx] * np.einsum("pk,pkc->pc", weights, table[idx])
        return out.reshape(img.pixels.shape)


def train_baseline_linear(baseline: BaselineLinearLuts, images, cfg: TrainConfig,
                          trace: LossTrace | None = None) -> LossTrace:
    """Stage-1 protocol (guidance loss only) on the linear architecture."""
    return stage1(baseline, images, cfg, trace=trace)


def psnr(a: ImageBuf, b: ImageBuf, cap: float = 99.0) -> float:
    """10 log10(1 / MSE) for unit-range images, capped for near-equality."""
    err = mse(a, b)
    if err < 1e-10:
        return cap
    return min(cap, 10.0 * np.log10(1.0 / err))
