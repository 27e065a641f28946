"""Dataset generation and image file IO.

The synthetic generator stands in for expert-retouched photo datasets:
each pair is a procedural input image and a target produced by five
parametric adjustments (exposure, contrast, saturation, temperature,
tint) whose ground-truth strengths are kept for diagnostics.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

from .image import ImageBuf

__all__ = [
    "DEFAULT_PARAM_RANGES",
    "GenSpec",
    "DatasetPair",
    "generate_pair",
    "generate_dataset",
    "apply_reference_filters",
    "UnsupportedFormatError",
    "CorruptFileError",
    "read_image",
    "write_image",
    "encode_png",
    "decode_png",
]

# (low, high) per generator parameter; also the documented hard bounds
DEFAULT_PARAM_RANGES = (
    (-0.3, 0.3),    # exposure: x * e^p1
    (-0.3, 0.3),    # contrast: 0.5 + (x - 0.5)(1 + p2)
    (-0.3, 0.3),    # saturation: L + (x - L)(1 + p3)
    (-0.08, 0.08),  # temperature: r + p4, b - p4
    (-0.08, 0.08),  # tint: g - p5, r + p5/2, b + p5/2
)

_LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class GenSpec:
    count: int
    size: tuple[int, int] = (64, 64)
    seed: int = 0
    ranges: tuple = DEFAULT_PARAM_RANGES

    def __post_init__(self):
        if self.count < 0:
            raise ValueError("count must be non-negative")
        if min(self.size) < 2:
            raise ValueError("image size must be at least 2x2")
        if len(self.ranges) != 5:
            raise ValueError("need 5 parameter ranges")
        for (lo, hi), (blo, bhi) in zip(self.ranges, DEFAULT_PARAM_RANGES):
            if lo > hi or lo < blo or hi > bhi:
                raise ValueError(f"range ({lo}, {hi}) outside bounds ({blo}, {bhi})")


@dataclass(frozen=True)
class DatasetPair:
    x: ImageBuf
    t: ImageBuf
    params: np.ndarray  # the 5 ground-truth adjustment strengths

    def __post_init__(self):
        if not self.x.same_shape(self.t):
            raise ValueError("input and target must share dimensions")


def _procedural_image(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    """Smooth color sinusoids plus soft-edged rectangles, normalized to [0, 1]."""
    v, u = np.meshgrid(np.linspace(0, 1, h), np.linspace(0, 1, w), indexing="ij")
    img = np.zeros((h, w, 3))
    for _ in range(4):
        amp = rng.uniform(-1.0, 1.0, size=3)
        fx, fy = rng.uniform(0.25, 2.5, size=2)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        wave = np.sin(2.0 * np.pi * (fx * u + fy * v) + phase)
        img += wave[:, :, None] * amp
    for _ in range(2):
        cx, cy = rng.uniform(0.15, 0.85, size=2)
        hw, hh = rng.uniform(0.05, 0.3, size=2)
        soft = rng.uniform(0.01, 0.08)
        color = rng.uniform(-1.0, 1.0, size=3)
        mx = 1.0 / (1.0 + np.exp(-(hw - np.abs(u - cx)) / soft))
        my = 1.0 / (1.0 + np.exp(-(hh - np.abs(v - cy)) / soft))
        img += (mx * my)[:, :, None] * color
    lo, hi = img.min(), img.max()
    if hi - lo < 1e-9:
        return np.full_like(img, 0.5)
    return (img - lo) / (hi - lo)


def apply_reference_filters(x: np.ndarray, p) -> np.ndarray:
    """The five parametric adjustments, in order, clamped at the end."""
    p = np.asarray(p, dtype=np.float64).reshape(5)
    y = x * np.exp(p[0])
    y = 0.5 + (y - 0.5) * (1.0 + p[1])
    luma = (y @ _LUMA)[:, :, None]
    y = luma + (y - luma) * (1.0 + p[2])
    y = y + np.array([p[3], 0.0, -p[3]])
    y = y + np.array([p[4] / 2.0, -p[4], p[4] / 2.0])
    return np.clip(y, 0.0, 1.0)


def generate_pair(spec: GenSpec, index: int) -> DatasetPair:
    rng = np.random.default_rng([spec.seed, index])
    h, w = spec.size
    x = _procedural_image(rng, h, w)
    p = np.array([rng.uniform(lo, hi) for lo, hi in spec.ranges])
    t = apply_reference_filters(x, p)
    return DatasetPair(ImageBuf(x), ImageBuf(t), p)


def generate_dataset(spec: GenSpec) -> list[DatasetPair]:
    return [generate_pair(spec, i) for i in range(spec.count)]


# -- file IO ---------------------------------------------------------------


class UnsupportedFormatError(ValueError):
    pass


class CorruptFileError(ValueError):
    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        super().__init__(message if offset is None else f"{message} (byte offset {offset})")


def _quantize(img: ImageBuf) -> np.ndarray:
    return np.round(img.pixels * 255.0).astype(np.uint8)


def encode_png(img: ImageBuf) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(_quantize(img), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def decode_png(data: bytes) -> ImageBuf:
    try:
        with Image.open(io.BytesIO(data)) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    except UnidentifiedImageError as e:
        raise CorruptFileError(f"not a decodable PNG: {e}") from e
    except OSError as e:
        raise CorruptFileError(f"truncated or damaged PNG: {e}") from e
    return ImageBuf(arr / 255.0)


def _encode_ppm(img: ImageBuf) -> bytes:
    header = f"P6\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + _quantize(img).tobytes()


def _decode_ppm(data: bytes) -> ImageBuf:
    if not data.startswith(b"P6"):
        raise CorruptFileError("missing P6 magic", offset=0)
    fields = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if pos == start:
            raise CorruptFileError("truncated header", offset=pos)
        token = data[start:pos]
        if not token.isdigit():
            raise CorruptFileError(f"non-numeric header token {token!r}", offset=start)
        fields.append(int(token))
    w, h, maxval = fields
    if maxval != 255:
        raise CorruptFileError(f"unsupported maxval {maxval}", offset=pos)
    pos += 1  # single whitespace after maxval
    need = w * h * 3
    payload = data[pos : pos + need]
    if len(payload) != need:
        raise CorruptFileError(
            f"payload has {len(payload)} of {need} bytes", offset=pos + len(payload))
    arr = np.frombuffer(payload, dtype=np.uint8).reshape(h, w, 3)
    return ImageBuf(arr.astype(np.float64) / 255.0)


def write_image(path, img: ImageBuf) -> None:
    path = str(path)
    if path.lower().endswith(".png"):
        data = encode_png(img)
    elif path.lower().endswith(".ppm"):
        data = _encode_ppm(img)
    else:
        raise UnsupportedFormatError(f"unsupported image extension: {path}")
    with open(path, "wb") as f:
        f.write(data)


def read_image(path) -> ImageBuf:
    path = str(path)
    with open(path, "rb") as f:
        data = f.read()
    if path.lower().endswith(".png"):
        return decode_png(data)
    if path.lower().endswith(".ppm"):
        return _decode_ppm(data)
    raise UnsupportedFormatError(f"unsupported image extension: {path}")
