"""Uniform 3D LUT: trilinear lookup, MLP distillation, Adobe .cube IO.

The lattice has `n` points per axis at k/(n-1). Table rows are ordered
red-fastest, then green, then blue, matching the .cube convention.
"""

from __future__ import annotations

import numpy as np

from .image import ImageBuf
from .transform import MlpFilter, pixel_features

__all__ = [
    "Lut3d",
    "CubeParseError",
    "lattice_coords",
    "lookup",
    "lookup_points",
    "bypass",
    "write_cube",
    "parse_cube",
]


class CubeParseError(ValueError):
    """Malformed .cube text; carries the 1-based offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


def lattice_coords(n: int) -> np.ndarray:
    """(n^3, 3) lattice RGB coordinates, red varying fastest."""
    axis = np.linspace(0.0, 1.0, n)
    b, g, r = np.meshgrid(axis, axis, axis, indexing="ij")
    return np.stack([r.ravel(), g.ravel(), b.ravel()], axis=1)


class Lut3d:
    """n points per axis; `table` is the (n^3, 3) output color per lattice point."""

    __slots__ = ("n", "table")

    def __init__(self, n: int, table: np.ndarray):
        if n < 2:
            raise ValueError("LUT needs at least 2 points per axis")
        table = np.asarray(table, dtype=np.float64)
        if table.shape != (n**3, 3):
            raise ValueError(f"table shape {table.shape} does not match n={n}")
        if not np.all(np.isfinite(table)):
            raise ValueError("non-finite LUT entry")
        self.n = n
        self.table = table

    @classmethod
    def identity(cls, n: int) -> "Lut3d":
        return cls(n, lattice_coords(n))


def lookup_points(lut: Lut3d, pts: np.ndarray) -> np.ndarray:
    """Trilinear interpolation of (P, 3) colors; inputs clamped to [0, 1]."""
    n = lut.n
    scaled = np.clip(pts, 0.0, 1.0) * (n - 1)
    i0 = np.minimum(scaled.astype(np.int64), n - 2)
    f = scaled - i0
    r0, g0, b0 = i0[:, 0], i0[:, 1], i0[:, 2]
    fr, fg, fb = f[:, 0:1], f[:, 1:2], f[:, 2:3]
    base = r0 + n * (g0 + n * b0)
    t = lut.table
    c000 = t[base]
    c100 = t[base + 1]
    c010 = t[base + n]
    c110 = t[base + n + 1]
    c001 = t[base + n * n]
    c101 = t[base + n * n + 1]
    c011 = t[base + n * n + n]
    c111 = t[base + n * n + n + 1]
    c00 = c000 + (c100 - c000) * fr
    c10 = c010 + (c110 - c010) * fr
    c01 = c001 + (c101 - c001) * fr
    c11 = c011 + (c111 - c011) * fr
    c0 = c00 + (c10 - c00) * fg
    c1 = c01 + (c11 - c01) * fg
    return c0 + (c1 - c0) * fb


def lookup(lut: Lut3d, img: ImageBuf) -> ImageBuf:
    out = lookup_points(lut, img.flat())
    return ImageBuf.clamped(out.reshape(img.pixels.shape))


def bypass(model: MlpFilter, w, n: int = 33, dtype=np.float64) -> Lut3d:
    """Distill the MLP transform into an n-point LUT.

    Evaluates the transform once per lattice point (n^3 evaluations,
    independent of any image size). The zero-strength branch depends
    only on the lattice and the weights, so it is cached per model
    version. `dtype=np.float32` selects the fast application path.
    """
    v = model.check_params(w)
    coords = lattice_coords(n).astype(dtype)
    feats6 = pixel_features(coords)
    key = (n, np.dtype(dtype).str, model.params.version)
    cache = getattr(model, "_bypass_zero_cache", None)
    if cache is None or cache[0] != key:
        zero = np.zeros((coords.shape[0], model.j), dtype=dtype)
        e0 = model.forward_np(np.concatenate([feats6, zero], axis=1))
        model._bypass_zero_cache = (key, e0)
    else:
        e0 = cache[1]
    wv = np.broadcast_to(v.astype(dtype), (coords.shape[0], model.j))
    ew = model.forward_np(np.concatenate([feats6, wv], axis=1))
    model.eval_count += coords.shape[0]
    table = (coords + ew - e0).astype(np.float64)
    return Lut3d(n, table)


def write_cube(lut: Lut3d, title: str | None = None) -> bytes:
    """Adobe .cube v1.0 text (LF newlines, 6 decimal places, red fastest)."""
    lines = []
    if title:
        lines.append(f'TITLE "{title}"')
    lines.append(f"LUT_3D_SIZE {lut.n}")
    for row in lut.table:
        lines.append(f"{row[0]:.6f} {row[1]:.6f} {row[2]:.6f}")
    return ("\n".join(lines) + "\n").encode("ascii")


def parse_cube(data: bytes | str) -> Lut3d:
    """Inverse of write_cube, up to the 6-decimal text quantization.

    DOMAIN_MIN/DOMAIN_MAX other than 0/1 are rejected as unsupported.
    """
    text = data.decode("ascii") if isinstance(data, bytes) else data
    n = None
    rows: list[list[float]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        keyword = tokens[0].upper()
        if keyword == "TITLE":
            continue
        if keyword == "LUT_3D_SIZE":
            if len(tokens) != 2 or not tokens[1].isdigit():
                raise CubeParseError("malformed LUT_3D_SIZE", lineno)
            n = int(tokens[1])
            if n < 2:
                raise CubeParseError("LUT_3D_SIZE must be at least 2", lineno)
            continue
        if keyword in ("DOMAIN_MIN", "DOMAIN_MAX"):
            expected = 0.0 if keyword == "DOMAIN_MIN" else 1.0
            try:
                vals = [float(t) for t in tokens[1:]]
            except ValueError:
                raise CubeParseError(f"non-numeric {keyword}", lineno) from None
            if len(vals) != 3 or any(v != expected for v in vals):
                raise CubeParseError(f"unsupported {keyword} (only 0/1 domain handled)", lineno)
            continue
        if keyword == "LUT_1D_SIZE":
            raise CubeParseError("1D LUTs are not supported", lineno)
        try:
            vals = [float(t) for t in tokens]
        except ValueError:
            raise CubeParseError(f"non-numeric token {tokens[0]!r}", lineno) from None
        if len(vals) != 3:
            raise CubeParseError(f"expected 3 values per data line, got {len(vals)}", lineno)
        rows.append(vals)
    if n is None:
        raise CubeParseError("missing LUT_3D_SIZE")
    if len(rows) != n**3:
        raise CubeParseError(f"expected {n ** 3} data lines for size {n}, got {len(rows)}")
    return Lut3d(n, np.array(rows))
