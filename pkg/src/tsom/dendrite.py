"""SGC dendritic layer: oriented spatiotemporal filtering of the retinal output.

Each (direction, phase) channel is a spatial Gabor kernel followed by a
3-tap temporal derivative. The 3-D filter is the outer product of the two, so
it is applied separably.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import DirectionalStack, PipelineConfig, ReplicateConvolver, Sequence
from .retina import centered_grid

PHASES = (0.0, math.pi / 2)
OPPONENT_PHASES = (0.0, math.pi / 2, math.pi, 3 * math.pi / 2)


@dataclass(frozen=True, eq=False)
class GaborKernel:
    theta: float
    phi: float
    gamma: float
    sigma: float
    lam: float
    weights: np.ndarray

    @property
    def size(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class TemporalKernel:
    """Taps indexed by frame offset -h..h, applied as sum_k taps[k] * frame[t + k]."""

    taps: tuple[float, ...]

    @property
    def half(self) -> int:
        return len(self.taps) // 2

    def offsets(self) -> range:
        return range(-self.half, self.half + 1)

    def apply(self, series: np.ndarray) -> np.ndarray:
        """Filter along axis 0; the output drops ``half`` samples at each end."""
        series = np.asarray(series, dtype=np.float64)
        n = series.shape[0] - 2 * self.half
        if n < 1:
            raise ValueError(f"need at least {len(self.taps)} samples, got {series.shape[0]}")
        out = np.zeros((n,) + series.shape[1:])
        for tap, k in zip(self.taps, self.offsets()):
            if tap:
                out += tap * series[self.half + k : self.half + k + n]
        return out


def gabor_weights(theta, phi, gamma, sigma, lam, size) -> np.ndarray:
    """Real part of the oriented Gabor sampled on the centred integer grid."""
    x, y = centered_grid(size)
    xr = x * math.cos(theta) + y * math.sin(theta)
    yr = -x * math.sin(theta) + y * math.cos(theta)
    envelope = np.exp(-(xr**2 + gamma**2 * yr**2) / (2.0 * sigma**2))
    return envelope * np.cos(2.0 * math.pi * xr / lam + phi)


def gabor_kernel(theta, phi, gamma, sigma, lam, size, remove_dc: bool = True) -> GaborKernel:
    if size < 3 or size % 2 == 0:
        raise ValueError(f"kernel size must be odd and >= 3, got {size}")
    if not (gamma > 0 and sigma > 0 and lam > 0):
        raise ValueError("gamma, sigma and lambda must be positive")
    w = gabor_weights(theta, phi, gamma, sigma, lam, size)
    if remove_dc:
        w = w - w.mean()
    w.setflags(write=False)
    return GaborKernel(float(theta), float(phi), float(gamma), float(sigma), float(lam), w)


def directions(n_directions: int) -> tuple[float, ...]:
    return tuple(k * math.pi / n_directions for k in range(n_directions))


def gabor_bank(config: PipelineConfig) -> list[GaborKernel]:
    """Kernels for every direction in [0, pi) times the quadrature phases, direction-major."""
    config.validate()
    return [
        gabor_kernel(theta, phi, config.gabor_gamma, config.gabor_sigma, config.gabor_lambda, config.kernel_size)
        for theta in directions(config.n_directions)
        for phi in PHASES
    ]


def temporal_kernel() -> TemporalKernel:
    return TemporalKernel((-1.0, 0.0, 1.0))


class DendriteLayer:
    """Reusable dendritic filter bank; caches kernel spectra per frame size."""

    def __init__(self, config: PipelineConfig, workers: int | None = None):
        self.config = config
        self.bank = gabor_bank(config)
        self.temporal = temporal_kernel()
        self.directions = directions(config.n_directions)
        self.opponent = config.opponent_phases
        self.phases = OPPONENT_PHASES if self.opponent else PHASES
        self._conv = ReplicateConvolver(np.stack([g.weights for g in self.bank]), workers)

    def __call__(self, frames: np.ndarray, t0: int = 0) -> DirectionalStack:
        """Filter a (T, H, W) block; output slice i belongs to input frame t0 + half + i."""
        frames = np.asarray(frames, dtype=np.float64)
        if frames.shape[0] < len(self.temporal.taps):
            raise ValueError(
                f"sequence too short: need at least {len(self.temporal.taps)} frames, got {frames.shape[0]}"
            )
        # the temporal taps commute with the spatial convolution, so difference first
        change = self.temporal.apply(frames)
        maps = self._conv(change)  # (T', K, H, W)
        nd = len(self.directions)
        maps = maps.reshape(maps.shape[0], nd, len(PHASES), *maps.shape[-2:]).transpose(1, 2, 0, 3, 4)
        if self.opponent:
            # shifting the carrier phase by pi negates the kernel
            maps = np.concatenate([maps, -maps], axis=1)
        return DirectionalStack(self.directions, self.phases, maps, t0 + self.temporal.half)


def dendrite_response(seq: Sequence, config: PipelineConfig, workers: int | None = None) -> DirectionalStack:
    """Dendritic maps for frames 1..T-2 of an already smoothed sequence."""
    return DendriteLayer(config, workers)(seq.frames)
