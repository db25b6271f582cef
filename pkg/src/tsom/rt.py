"""Rt layer: quadrature motion energy, flicker normalization, pooling and localization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .core import DirectionalStack

FLICKER_KAPPA = 1e-6

_NEIGHBOURS = [(dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1) if (dy, dx) != (0, 0)]


@dataclass(frozen=True, eq=False)
class EnergyStack:
    """Non-negative energy maps of shape (n_directions, T, H, W)."""

    directions: tuple[float, ...]
    maps: np.ndarray
    t0: int = 0

    def __post_init__(self):
        maps = np.asarray(self.maps, dtype=np.float64)
        if maps.ndim != 4 or maps.shape[0] != len(self.directions):
            raise ValueError(f"maps shape {maps.shape} does not match {len(self.directions)} directions")
        object.__setattr__(self, "directions", tuple(float(d) for d in self.directions))
        object.__setattr__(self, "maps", maps)

    def with_maps(self, maps) -> "EnergyStack":
        return EnergyStack(self.directions, maps, self.t0)


@dataclass(frozen=True, order=True)
class Detection:
    t: int
    y: int
    x: int
    score: float

    def as_row(self) -> tuple[int, int, int, float]:
        return (self.t, self.x, self.y, self.score)


def motion_energy(stack: DirectionalStack) -> EnergyStack:
    """Phase-invariant energy sqrt(S_phi^2 + S_{phi+pi/2}^2) per direction."""
    pairs = stack.quadrature_pairs()
    if not pairs:
        raise ValueError(f"phases {stack.phases} contain no quadrature pair")
    idx = sorted({i for pair in pairs for i in pair})
    energy = np.sqrt(np.sum(stack.maps[:, idx] ** 2, axis=1))
    return EnergyStack(stack.directions, energy, stack.t0)


def flicker_normalize(energy: EnergyStack, kappa: float = FLICKER_KAPPA, mode: str = "pixel") -> EnergyStack:
    """Divide directional energy by the flicker energy (mean energy over directions).

    ``mode="pixel"`` averages over directions at each pixel; ``mode="global"``
    averages over directions and the whole frame, one normalizer per time step;
    ``mode="direction"`` averages each direction's map over the frame.
    """
    maps = energy.maps
    if mode == "pixel":
        flicker = maps.mean(axis=0, keepdims=True)
    elif mode == "direction":
        flicker = maps.mean(axis=(2, 3), keepdims=True)
    elif mode == "global":
        flicker = maps.mean(axis=(0, 2, 3), keepdims=True)
    else:
        raise ValueError(f"unknown flicker mode {mode!r}")
    return energy.with_maps(maps / (flicker + kappa))


def max_pool(maps: np.ndarray, pool_size: int) -> np.ndarray:
    """Stride-1 max pooling over the last two axes with replicated borders."""
    if pool_size < 1:
        raise ValueError(f"pool_size must be >= 1, got {pool_size}")
    maps = np.asarray(maps, dtype=np.float64)
    if pool_size == 1:
        return maps.copy()
    size = (1,) * (maps.ndim - 2) + (pool_size, pool_size)
    return ndimage.maximum_filter(maps, size=size, mode="nearest")


def pool_and_combine(energy: EnergyStack, alpha, pool_size: int) -> np.ndarray:
    """Weighted sum over directions of the max-pooled energy maps; returns (T, H, W)."""
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.shape != (len(energy.directions),):
        raise ValueError(f"{alpha.size} weights given for {len(energy.directions)} directions")
    if np.any(alpha < 0):
        raise ValueError("direction weights must be non-negative")
    pooled = max_pool(energy.maps, pool_size)
    return np.tensordot(alpha, pooled, axes=(0, 0))


def local_maxima(o: np.ndarray) -> list[tuple[float, int, int]]:
    """Strict 8-neighbourhood maxima of a 2-D map as (score, y, x).

    A flat top (connected pixels of equal value, e.g. produced by max pooling)
    counts as one maximum when every pixel bordering it is strictly lower; it is
    reported at its pixel nearest the centroid. A map with no lower pixel
    anywhere has no maxima.
    """
    o = np.asarray(o, dtype=np.float64)
    h, w = o.shape
    padded = np.pad(o, 1, mode="constant", constant_values=-np.inf)
    peak = ndimage.maximum_filter(padded, size=3, mode="constant", cval=-np.inf)[1:-1, 1:-1] == o
    if not peak.any():
        return []
    peak_p = np.pad(peak, 1, mode="constant", constant_values=False)
    # NaN outside the frame: the border is neither lower nor equal ground
    nan_p = np.pad(o, 1, mode="constant", constant_values=np.nan)
    leaks = np.zeros_like(peak)
    lower = np.zeros_like(peak)
    for dy, dx in _NEIGHBOURS:
        nb = nan_p[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]
        nb_peak = peak_p[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]
        leaks |= (nb == o) & ~nb_peak
        lower |= nb < o
    labels, n = ndimage.label(peak, structure=np.ones((3, 3), dtype=bool))
    if n == 0:
        return []
    idx = np.arange(1, n + 1)
    bad = ndimage.maximum(leaks, labels, idx).astype(bool)
    has_lower = ndimage.maximum(lower, labels, idx).astype(bool)
    sizes = ndimage.sum(np.ones_like(o), labels, idx)
    out = []
    ys, xs = np.nonzero(peak)
    lab = labels[ys, xs]
    singles = sizes == 1
    for y, x, l in zip(ys, xs, lab):
        if singles[l - 1] and not bad[l - 1] and has_lower[l - 1]:
            out.append((float(o[y, x]), int(y), int(x)))
    boxes = ndimage.find_objects(labels)
    for l in np.nonzero(~singles & ~bad & has_lower)[0] + 1:
        sy, sx = boxes[l - 1]
        py, px = np.nonzero(labels[sy, sx] == l)
        py, px = py + sy.start, px + sx.start
        cy, cx = py.mean(), px.mean()
        j = np.lexsort((px, py, (py - cy) ** 2 + (px - cx) ** 2))[0]
        out.append((float(o[py[j], px[j]]), int(py[j]), int(px[j])))
    return out


def suppress_neighbours(cands, radius: float, limit: int | None = None):
    """Greedy non-maximum suppression over (score, y, x) sorted best first.

    A candidate within ``radius`` pixels of an already kept one is dropped.
    Stops once ``limit`` candidates are kept.
    """
    if radius <= 0:
        return list(cands[:limit])
    kept: list = []
    r2 = radius * radius
    for c in cands:
        if limit is not None and len(kept) >= limit:
            break
        if all((c[1] - k[1]) ** 2 + (c[2] - k[2]) ** 2 > r2 for k in kept):
            kept.append(c)
    return kept


def detect_frame(
    o: np.ndarray, t: int, top_k: int, score_floor: float = 0.0, nms_radius: float = 0.0
) -> list[Detection]:
    """Top-k local maxima of one frame above ``score_floor``, best first, ties by (y, x).

    With ``nms_radius`` > 0 a maximum closer than that to a stronger kept one is dropped,
    so the leading and trailing blobs of one moving object yield a single detection.
    """
    if top_k < 1:
        raise ValueError(f"top_k must be >= 1, got {top_k}")
    if nms_radius < 0:
        raise ValueError(f"nms_radius must be non-negative, got {nms_radius}")
    cands = [c for c in local_maxima(o) if c[0] > score_floor]
    cands.sort(key=lambda c: (-c[0], c[1], c[2]))
    return [Detection(int(t), y, x, s) for s, y, x in suppress_neighbours(cands, nms_radius, top_k)]


def detect(
    o: np.ndarray, top_k: int = 1, score_floor: float = 0.0, t0: int = 0, nms_radius: float = 0.0
) -> list[Detection]:
    """Top-k local maxima above ``score_floor`` per frame of a (T, H, W) or (H, W) map."""
    o = np.asarray(o, dtype=np.float64)
    if o.ndim == 2:
        o = o[None]
    dets = []
    for i in range(o.shape[0]):
        dets.extend(detect_frame(o[i], t0 + i, top_k, score_floor, nms_radius))
    return dets

