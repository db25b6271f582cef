"""Synthetic bird's-eye scenes: a scrolling background with one small moving disk."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .core import Frame, Sequence, save_sequence

VALIDATION_START = (282.0, 102.0)
BACKGROUND_GRAY = 131.0 / 255.0


@dataclass
class GroundTruth:
    """Object centres per frame; several rows may share a frame index."""

    frames: np.ndarray
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.int64)
        self.x = np.asarray(self.x, dtype=np.int64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if not (self.frames.shape == self.x.shape == self.y.shape):
            raise ValueError("frames, x and y must have equal length")

    def __len__(self) -> int:
        return self.frames.size

    def at(self, t: int) -> list[tuple[int, int]]:
        m = self.frames == t
        return list(zip(self.x[m].tolist(), self.y[m].tolist()))

    def by_frame(self) -> dict[int, list[tuple[int, int]]]:
        out: dict[int, list[tuple[int, int]]] = {}
        for t, x, y in zip(self.frames.tolist(), self.x.tolist(), self.y.tolist()):
            out.setdefault(t, []).append((x, y))
        return out

    def restrict(self, frames) -> "GroundTruth":
        m = np.isin(self.frames, np.asarray(list(frames)))
        return GroundTruth(self.frames[m], self.x[m], self.y[m])

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["frame", "x", "y"])
            for row in zip(self.frames.tolist(), self.x.tolist(), self.y.tolist()):
                w.writerow(row)

    @classmethod
    def from_csv(cls, path: str | Path) -> "GroundTruth":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if rows and not {"frame", "x", "y"} <= set(rows[0]):
            raise ValueError(f"{path}: ground truth CSV needs columns frame,x,y")
        return cls(
            [int(r["frame"]) for r in rows],
            [int(round(float(r["x"]))) for r in rows],
            [int(round(float(r["y"]))) for r in rows],
        )


@dataclass
class SynthConfig:
    background: np.ndarray
    frame_size: int = 512
    n_frames: int = 200
    fps: float = 50.0
    v_a: float = 150.0
    v_b: float = 150.0
    theta_obj: float = 0.0
    theta_bg: float = 0.0
    radius: float = 3.0
    luminance: float = 0.0
    start: tuple[float, float] = VALIDATION_START
    wrap_object: bool = True  # object re-enters on the opposite side instead of leaving the frame
    supersample: int = 8

    def __post_init__(self):
        if isinstance(self.background, Frame):
            self.background = self.background.data
        self.background = np.asarray(self.background, dtype=np.float64)
        self.start = (float(self.start[0]), float(self.start[1]))
        self.validate()

    def scroll_offsets(self) -> np.ndarray:
        """Background crop origin (x, y) per frame, relative to frame 0.

        The crop window moves against ``theta_bg`` so the scene content moves along it.
        """
        k = np.arange(self.n_frames, dtype=np.float64)
        step = self.v_b / self.fps
        off = -np.stack([k * step * math.cos(self.theta_bg), k * step * math.sin(self.theta_bg)], axis=1)
        return np.round(off, 9) + 0.0

    def validate(self) -> None:
        if self.background.ndim != 2:
            raise ValueError("background must be a 2-D luminance array")
        if self.n_frames < 1:
            raise ValueError("n_frames must be >= 1")
        if self.radius < 1:
            raise ValueError("radius must be >= 1")
        if self.frame_size < 1 or self.fps <= 0:
            raise ValueError("frame_size and fps must be positive")
        if not 0.0 <= self.luminance <= 1.0:
            raise ValueError("luminance must lie in [0, 1]")
        off = self.scroll_offsets()
        extent = np.ceil(off.max(axis=0) - off.min(axis=0)).astype(int)
        need_w = self.frame_size + extent[0] + 1
        need_h = self.frame_size + extent[1] + 1
        bh, bw = self.background.shape
        if bw < need_w or bh < need_h:
            raise ValueError(
                f"background {bw}x{bh} too small for {self.n_frames} frames of {self.frame_size}px "
                f"scrolling at {self.v_b} px/s (needs {need_w}x{need_h})"
            )

    def object_centres(self) -> np.ndarray:
        k = np.arange(self.n_frames, dtype=np.float64)
        step = self.v_a / self.fps
        c = np.stack(
            [
                self.start[0] + k * step * math.cos(self.theta_obj),
                self.start[1] + k * step * math.sin(self.theta_obj),
            ],
            axis=1,
        )
        c = np.round(c, 9) + 0.0
        if self.wrap_object:
            c = np.mod(c, self.frame_size)
        return c


def crop_bilinear(background: np.ndarray, x0: float, y0: float, size: int) -> np.ndarray:
    ix, iy = math.floor(x0), math.floor(y0)
    fx, fy = x0 - ix, y0 - iy
    b = background
    out = (1 - fy) * (1 - fx) * b[iy : iy + size, ix : ix + size]
    if fx:
        out = out + (1 - fy) * fx * b[iy : iy + size, ix + 1 : ix + 1 + size]
    if fy:
        out = out + fy * (1 - fx) * b[iy + 1 : iy + 1 + size, ix : ix + size]
        if fx:
            out = out + fy * fx * b[iy + 1 : iy + 1 + size, ix + 1 : ix + 1 + size]
    return np.array(out, dtype=np.float64)


def disk_coverage(shape: tuple[int, int], cx: float, cy: float, radius: float, supersample: int = 8):
    """Fraction of each pixel covered by a disk, as (coverage, y-slice, x-slice) over its bounding box."""
    h, w = shape
    x_lo, x_hi = max(0, math.floor(cx - radius - 1)), min(w, math.ceil(cx + radius + 2))
    y_lo, y_hi = max(0, math.floor(cy - radius - 1)), min(h, math.ceil(cy + radius + 2))
    if x_lo >= x_hi or y_lo >= y_hi:
        return np.zeros((0, 0)), slice(0, 0), slice(0, 0)
    sub = (np.arange(supersample) + 0.5) / supersample - 0.5
    xs = (np.arange(x_lo, x_hi)[:, None] + sub[None, :]).ravel()
    ys = (np.arange(y_lo, y_hi)[:, None] + sub[None, :]).ravel()
    inside = ((xs[None, :] - cx) ** 2 + (ys[:, None] - cy) ** 2) <= radius**2
    cov = inside.reshape(y_hi - y_lo, supersample, x_hi - x_lo, supersample).mean(axis=(1, 3))
    return cov, slice(y_lo, y_hi), slice(x_lo, x_hi)


def render_disk(frame: np.ndarray, cx, cy, radius, luminance, supersample: int = 8) -> np.ndarray:
    cov, sy, sx = disk_coverage(frame.shape, cx, cy, radius, supersample)
    if cov.size:
        frame[sy, sx] = frame[sy, sx] * (1.0 - cov) + luminance * cov
    return frame


def generate(config: SynthConfig) -> tuple[Sequence, GroundTruth]:
    """Render the scene and the rounded object centre of every frame."""
    config.validate()
    n = config.frame_size
    off = config.scroll_offsets()
    base = -off.min(axis=0)
    centres = config.object_centres()
    frames = np.empty((config.n_frames, n, n))
    for k in range(config.n_frames):
        x0, y0 = base + off[k]
        frame = crop_bilinear(config.background, x0, y0, n)
        frames[k] = render_disk(frame, centres[k, 0], centres[k, 1], config.radius, config.luminance, config.supersample)
    gt = np.mod(np.rint(centres).astype(np.int64), n)
    return Sequence(frames, config.fps), GroundTruth(np.arange(config.n_frames), gt[:, 0], gt[:, 1])


def required_background(frame_size: int, n_frames: int, fps: float, max_speed: float) -> int:
    return frame_size + int(math.ceil((n_frames - 1) * max_speed / fps)) + 2


def _fractal_noise(rng: np.random.Generator, size: int, beta: float) -> np.ndarray:
    fy = np.fft.fftfreq(size)[:, None]
    fx = np.fft.rfftfreq(size)[None, :]
    f = np.hypot(fx, fy)
    f[0, 0] = 1.0
    amp = f ** (-beta / 2.0)
    amp[0, 0] = 0.0
    spec = amp * (rng.standard_normal(amp.shape) + 1j * rng.standard_normal(amp.shape))
    field_ = np.fft.irfft2(spec, s=(size, size))
    return (field_ - field_.mean()) / field_.std()


def aerial_background(size: int, seed: int = 0, mean: float = BACKGROUND_GRAY, contrast: float = 0.18) -> np.ndarray:
    """Procedural overhead-imagery stand-in: land parcels, roads, buildings and 1/f texture.

    Deterministic in ``seed``; values are clipped to [0.02, 0.98].
    """
    from scipy import ndimage

    rng = np.random.default_rng(seed)
    # parcels: nearest-seed regions with their own tone and a slight blur at the boundaries
    step = 4
    coarse = size // step + 1
    n_parcels = max(4, int(coarse**2 / 900))
    px = rng.uniform(0, coarse, n_parcels)
    py = rng.uniform(0, coarse, n_parcels)
    tone = rng.normal(0.0, 1.0, n_parcels)
    gy, gx = np.mgrid[0:coarse, 0:coarse]
    tree = _nearest(px, py, gx.ravel(), gy.ravel()).reshape(coarse, coarse)
    parcels = np.kron(tone[tree], np.ones((step, step)))[:size, :size]
    parcels = ndimage.gaussian_filter(parcels, 1.0)
    texture = _fractal_noise(rng, size, beta=2.4)
    fine = ndimage.gaussian_filter(rng.standard_normal((size, size)), 1.0)
    img = 1.0 * parcels + 0.5 * texture + 0.15 * fine / fine.std()
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    # roads
    for _ in range(max(2, size // 300)):
        ang = rng.uniform(0, math.pi)
        c = rng.uniform(-size / 2, size / 2)
        d = np.abs((xx - size / 2) * math.sin(ang) - (yy - size / 2) * math.cos(ang) - c)
        img += 1.5 * np.clip(2.5 - d, 0.0, 1.0)
    # buildings: small rectangles in loose clusters
    for _ in range(max(1, size // 250)):
        cx, cy = rng.uniform(0, size, 2)
        for _ in range(rng.integers(5, 25)):
            bx, by = int(cx + rng.normal(0, 40)), int(cy + rng.normal(0, 40))
            bw, bh = rng.integers(5, 16, 2)
            x0, y0 = np.clip([bx, by], 0, size - 1)
            img[y0 : y0 + bh, x0 : x0 + bw] += rng.choice([-1.0, 1.0]) * rng.uniform(1.0, 2.5)
    img = (img - img.mean()) / img.std()
    return np.clip(mean + contrast * img, 0.02, 0.98)


def _nearest(px, py, qx, qy) -> np.ndarray:
    from scipy.spatial import cKDTree

    return cKDTree(np.column_stack([px, py])).query(np.column_stack([qx, qy]))[1]


def bevs_suite(base_background: np.ndarray | None = None, seed: int = 0, n_frames: int = 200, fps: float = 50.0):
    """The five single-factor sweeps: object speed, radius, luminance, background speed, opposite direction.

    Companions held fixed: v_a=150 px/s, radius 3 px, luminance 0, v_b=150 px/s.
    """
    size = required_background(512, n_frames, fps, 400.0)
    if base_background is None:
        base_background = aerial_background(size, seed)
    speeds = [float(v) for v in range(0, 401, 20)]
    base = dict(background=base_background, n_frames=n_frames, fps=fps)
    out: list[tuple[SynthConfig, str]] = []
    for v in speeds:
        out.append((SynthConfig(**base, v_a=v), f"seq1_v_a={v:g}"))
    for r in range(1, 21):
        out.append((SynthConfig(**base, radius=float(r)), f"seq2_radius={r}"))
    for lm in np.round(np.linspace(0.0, 1.0, 11), 2):
        out.append((SynthConfig(**base, luminance=float(lm)), f"seq3_luminance={lm:g}"))
    for v in speeds:
        out.append((SynthConfig(**base, v_b=v), f"seq4_v_b={v:g}"))
    for v in speeds:
        out.append((SynthConfig(**base, v_b=v, theta_bg=math.pi), f"seq5_v_b={v:g}_opposite"))
    return out


def validation_scene(n_frames: int = 20, seed: int = 0, frame_size: int = 512, fps: float = 50.0) -> SynthConfig:
    """Object from VALIDATION_START along theta=0 over a background drifting across it (theta_bg = pi/2)."""
    size = required_background(frame_size, n_frames, fps, 150.0)
    return SynthConfig(aerial_background(size, seed), frame_size=frame_size, n_frames=n_frames, fps=fps, theta_bg=math.pi / 2)


def comparison_scenes(seeds=(1,), n_frames: int = 200, fps: float = 50.0, frame_size: int = 512) -> list[SynthConfig]:
    """Co-directional and opposite background motion at the fixed companions, one aerial background per seed."""
    size = required_background(frame_size, n_frames, fps, 150.0)
    scenes = []
    for seed in seeds:
        bg = aerial_background(size, seed)
        for theta_bg in (0.0, math.pi):
            scenes.append(SynthConfig(bg, frame_size=frame_size, n_frames=n_frames, fps=fps, theta_bg=theta_bg))
    return scenes


def write_synthetic(seq: Sequence, gt: GroundTruth, out_dir: str | Path) -> None:
    out_dir = Path(out_dir)
    save_sequence(seq, out_dir / "frames")
    gt.to_csv(out_dir / "groundtruth.csv")


def with_changes(config: SynthConfig, **changes) -> SynthConfig:
    return replace(config, **changes)
