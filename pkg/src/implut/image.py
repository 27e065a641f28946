"""Image container shared by every module: float64 RGB in [0, 1]."""

from __future__ import annotations

import numpy as np

__all__ = ["ImageBuf"]


class ImageBuf:
    """An (H, W, 3) float64 image with all values in [0, 1].

    Instances are treated as immutable; operations return new buffers
    clamped back into range.
    """

    __slots__ = ("pixels",)

    def __init__(self, pixels: np.ndarray):
        a = np.asarray(pixels, dtype=np.float64)
        if a.ndim != 3 or a.shape[2] != 3:
            raise ValueError(f"expected (H, W, 3) array, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("non-finite pixel value")
        if a.min() < 0.0 or a.max() > 1.0:
            raise ValueError("pixel values outside [0, 1]; use ImageBuf.clamped")
        self.pixels = a

    @classmethod
    def clamped(cls, pixels: np.ndarray) -> "ImageBuf":
        a = np.asarray(pixels, dtype=np.float64)
        return cls(np.clip(a, 0.0, 1.0))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def flat(self) -> np.ndarray:
        """Pixels as an (H*W, 3) view-friendly array."""
        return self.pixels.reshape(-1, 3)

    def same_shape(self, other: "ImageBuf") -> bool:
        return self.pixels.shape == other.pixels.shape

    def __eq__(self, other):
        return isinstance(other, ImageBuf) and np.array_equal(self.pixels, other.pixels)

    def __hash__(self):
        raise TypeError("ImageBuf is not hashable")
