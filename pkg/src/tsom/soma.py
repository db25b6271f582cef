"""SGC soma layer: centre-surround scale selection and z-score background suppression."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DirectionalStack, ReplicateConvolver
from .retina import centered_grid


@dataclass(frozen=True, eq=False)
class ScaleKernel:
    a: float
    mu: float
    weights: np.ndarray

    @property
    def size(self) -> int:
        return self.weights.shape[0]


def scale_profile(r2, a: float, mu: float):
    """Kernel value at squared (normalized) radius r2."""
    return np.exp(-a * r2) - mu * np.exp(-r2)


def scale_kernel(a: float, mu: float, size: int) -> ScaleKernel:
    """Centre-surround kernel; grid offsets are scaled by 2/size so the kernel spans about [-1, 1]."""
    if not a > 1:
        raise ValueError(f"a must exceed 1, got {a}")
    if not 0 < mu < 1:
        raise ValueError(f"mu must lie in (0, 1), got {mu}")
    if size < 1 or size % 2 == 0:
        raise ValueError(f"size must be odd, got {size}")
    x, y = centered_grid(size)
    s = 2.0 / size
    w = scale_profile((x * s) ** 2 + (y * s) ** 2, a, mu)
    w.setflags(write=False)
    return ScaleKernel(float(a), float(mu), w)


def scale_select(stack: DirectionalStack, kernel: ScaleKernel, workers: int | None = None) -> DirectionalStack:
    """Half-wave rectified convolution of every map with the scale kernel."""
    h, w = stack.maps.shape[-2:]
    if kernel.size > min(h, w):
        raise ValueError(f"scale kernel of size {kernel.size} does not fit a {w}x{h} map")
    out = ReplicateConvolver(kernel.weights, workers)(stack.maps)
    np.maximum(out, 0.0, out=out)
    return stack.with_maps(out)


def zscore_map(data: np.ndarray) -> np.ndarray:
    """Population z-score over the last two axes; constant maps give zeros."""
    data = np.asarray(data, dtype=np.float64)
    axes = (-2, -1)
    flat = data.max(axis=axes, keepdims=True) == data.min(axis=axes, keepdims=True)
    # z-scores are scale-free, so normalize first; keeps tiny and huge maps away from under/overflow
    scale = np.abs(data).max(axis=axes, keepdims=True)
    unit = data / np.where(flat, 1.0, scale)
    centred = unit - unit.mean(axis=axes, keepdims=True)
    std = np.sqrt((centred**2).mean(axis=axes, keepdims=True))
    flat |= std == 0
    return np.where(flat, 0.0, centred / np.where(flat, 1.0, std))


def background_suppress(stack: DirectionalStack, epsilon: float) -> DirectionalStack:
    """Weight each response by how far its z-score exceeds ``epsilon``."""
    if epsilon < 0:
        raise ValueError(f"epsilon must be non-negative, got {epsilon}")
    z = zscore_map(stack.maps)
    return stack.with_maps(stack.maps * np.maximum(z - epsilon, 0.0))
