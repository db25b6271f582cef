"""Retinal ganglion cell layer: Gaussian smoothing of every input frame."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .core import Sequence


@dataclass(frozen=True, eq=False)
class SpatialKernel:
    weights: np.ndarray

    @property
    def size(self) -> int:
        return self.weights.shape[0]


def centered_grid(size: int) -> tuple[np.ndarray, np.ndarray]:
    """Integer (x, y) offsets of a size x size kernel centred on 0; arrays indexed [y, x]."""
    half = size // 2
    r = np.arange(-half, half + 1, dtype=np.float64)
    x, y = np.meshgrid(r, r)
    return x, y


def gaussian_kernel(sigma1: float, size: int) -> SpatialKernel:
    """Sampled isotropic Gaussian, renormalized to sum to one on the grid."""
    if size < 1 or size % 2 == 0:
        raise ValueError(f"kernel size must be odd and positive, got {size}")
    if not sigma1 > 0:
        raise ValueError(f"sigma1 must be positive, got {sigma1}")
    x, y = centered_grid(size)
    w = np.exp(-(x**2 + y**2) / (2.0 * sigma1**2)) / (2.0 * np.pi * sigma1**2)
    w /= w.sum()
    w.setflags(write=False)
    return SpatialKernel(w)


def smooth(frames: np.ndarray, kernel: SpatialKernel) -> np.ndarray:
    """Convolve each (H, W) slice of ``frames`` with ``kernel``, replicating edges."""
    frames = np.asarray(frames, dtype=np.float64)
    h, w = frames.shape[-2:]
    if kernel.size > min(h, w):
        raise ValueError(f"kernel of size {kernel.size} is larger than the {w}x{h} frame")
    if frames.ndim == 2:
        return ndimage.convolve(frames, kernel.weights, mode="nearest")
    out = np.empty_like(frames)
    flat_in = frames.reshape(-1, h, w)
    flat_out = out.reshape(-1, h, w)
    for i in range(flat_in.shape[0]):
        flat_out[i] = ndimage.convolve(flat_in[i], kernel.weights, mode="nearest")
    return out


def retina_layer(seq: Sequence, kernel: SpatialKernel) -> Sequence:
    return Sequence(smooth(seq.frames, kernel), seq.fps)
