"""End-to-end detector chaining the retina, SGC dendrite, SGC soma and Rt layers.

Frames are processed one output time step at a time so that long 512x512
sequences never hold more than a 3-frame window of directional maps.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .core import DirectionalStack, PipelineConfig, ReplicateConvolver, Sequence
from .dendrite import PHASES, DendriteLayer
from .retina import gaussian_kernel, smooth
from .rt import Detection, detect_frame, flicker_normalize, motion_energy, pool_and_combine
from .soma import background_suppress, scale_kernel


@dataclass
class FrameLayers:
    """Every intermediate map for one output time step t."""

    t: int
    retina: np.ndarray  # (H, W)
    dendrite: np.ndarray  # (n_dir, n_phase, H, W)
    scale: np.ndarray  # S', same shape
    suppressed: np.ndarray  # S, same shape
    energy: np.ndarray  # E', (n_dir, H, W)
    normalized: np.ndarray  # E, (n_dir, H, W)
    output: np.ndarray  # O, (H, W)


@dataclass
class PipelineResult:
    t0: int
    detections: list[Detection]
    score_maps: np.ndarray | None = None
    layers: dict[int, FrameLayers] = field(default_factory=dict)

    @property
    def times(self) -> range:
        n = 0 if self.score_maps is None else self.score_maps.shape[0]
        return range(self.t0, self.t0 + n)


def clear_border(o: np.ndarray, margin: int) -> np.ndarray:
    """Zero the outermost ``margin`` rows and columns in place."""
    if margin:
        o[:margin] = 0.0
        o[-margin:] = 0.0
        o[:, :margin] = 0.0
        o[:, -margin:] = 0.0
    return o


class TSOM:
    def __init__(self, config: PipelineConfig | None = None, workers: int | None = None):
        self.config = config or PipelineConfig()
        self.config.validate()
        self.workers = workers
        self.retina_kernel = gaussian_kernel(self.config.sigma1, self.config.retina_size)
        self.dendrite = DendriteLayer(self.config, workers)
        self.soma_kernel = scale_kernel(self.config.soma_a, self.config.soma_mu, self.config.kernel_size)
        self._soma_conv = ReplicateConvolver(self.soma_kernel.weights, workers)

    @property
    def t0(self) -> int:
        return self.dendrite.temporal.half

    def frame_range(self, n_frames: int) -> range:
        h = self.dendrite.temporal.half
        return range(h, n_frames - h)

    def _retina(self, frames: np.ndarray) -> np.ndarray:
        return smooth(frames, self.retina_kernel)

    def _scale_select(self, d: DirectionalStack) -> DirectionalStack:
        """Same result as ``soma.scale_select`` but convolves opponent channels only once."""
        if self.dendrite.opponent:
            c = self._soma_conv(d.maps[:, : len(PHASES)])
            return d.with_maps(np.maximum(np.concatenate([c, -c], axis=1), 0.0))
        return d.with_maps(np.maximum(self._soma_conv(d.maps), 0.0))

    def iter_layers(self, seq: Sequence, full: bool = False) -> Iterator[FrameLayers | tuple[int, np.ndarray]]:
        """Yield ``(t, O)`` per output frame, or ``FrameLayers`` when ``full``."""
        cfg = self.config
        taps = len(self.dendrite.temporal.taps)
        if len(seq) < taps:
            raise ValueError(f"sequence too short: need at least {taps} frames, got {len(seq)}")
        h = self.dendrite.temporal.half
        window: list[np.ndarray] = [self._retina(seq.frames[k]) for k in range(taps - 1)]
        for t in self.frame_range(len(seq)):
            window.append(self._retina(seq.frames[t + h]))
            d = self.dendrite(np.stack(window), t0=t - h)
            s_prime = self._scale_select(d)
            s = background_suppress(s_prime, cfg.zscore_epsilon)
            e_prime = motion_energy(s)
            e = flicker_normalize(e_prime, cfg.flicker_kappa, cfg.flicker_mode)
            o = pool_and_combine(e, cfg.alpha, cfg.pool_size)[0]
            clear_border(o, cfg.border_margin)
            if full:
                yield FrameLayers(
                    t,
                    window[h],
                    d.maps[:, :, 0],
                    s_prime.maps[:, :, 0],
                    s.maps[:, :, 0],
                    e_prime.maps[:, 0],
                    e.maps[:, 0],
                    o,
                )
            else:
                yield t, o
            window.pop(0)

    def layers(self, seq: Sequence) -> list[FrameLayers]:
        return list(self.iter_layers(seq, full=True))

    def score_maps(self, seq: Sequence) -> np.ndarray:
        """Rt output O for every output frame, shape (T - 2, H, W); first slice is frame 1."""
        return np.stack([o for _, o in self.iter_layers(seq)])

    def run(
        self,
        seq: Sequence,
        top_k: int | None = None,
        score_floor: float | None = None,
        keep_maps: bool = False,
        debug_frames: tuple[int, ...] = (),
    ) -> PipelineResult:
        top_k = self.config.top_k if top_k is None else top_k
        floor = self.config.score_floor if score_floor is None else score_floor
        dets, maps, layers = [], [], {}
        for item in self.iter_layers(seq, full=bool(debug_frames)):
            if isinstance(item, FrameLayers):
                t, o = item.t, item.output
                if t in debug_frames:
                    layers[t] = item
            else:
                t, o = item
            dets.extend(detect_frame(o, t, top_k, floor, self.config.nms_radius))
            if keep_maps:
                maps.append(o)
        return PipelineResult(self.t0, dets, np.stack(maps) if keep_maps else None, layers)
