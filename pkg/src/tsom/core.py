"""Frame and sequence data model, pipeline configuration and image I/O."""

from __future__ import annotations

import json
import math
import re
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Iterable, Sequence as Seq

import numpy as np
from PIL import Image, ImageSequence

REC601 = (0.299, 0.587, 0.114)
IMAGE_SUFFIXES = {".png", ".bmp", ".jpg", ".jpeg", ".tif", ".tiff", ".gif", ".pgm", ".ppm"}
MARKER_RADIUS = 5


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=np.float64, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Frame:
    """A single grayscale luminance raster with values in [0, 1].

    ``data`` is stored as a (height, width) array, so the value at pixel
    ``(x, y)`` is ``data[y, x]`` (equivalently ``data.ravel()[y * width + x]``).
    """

    data: np.ndarray

    def __post_init__(self):
        arr = _frozen(self.data)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"frame data must be a non-empty 2-D array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("frame data contains non-finite values")
        object.__setattr__(self, "data", arr)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    def at(self, x: int, y: int) -> float:
        return float(self.data[y, x])

    @classmethod
    def from_uint8(cls, pixels: np.ndarray) -> "Frame":
        return cls(np.asarray(pixels, dtype=np.float64) / 255.0)


@dataclass(frozen=True, eq=False)
class Sequence:
    """An ordered stack of equally sized frames sampled at ``fps``.

    ``frames`` has shape (T, height, width); frame ``k`` is shown at ``k / fps`` seconds.
    """

    frames: np.ndarray
    fps: float = 50.0

    def __post_init__(self):
        arr = _frozen(self.frames)
        if arr.ndim != 3 or arr.shape[0] < 1:
            raise ValueError(f"sequence must have shape (T, H, W) with T >= 1, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("sequence contains non-finite values")
        if not (math.isfinite(self.fps) and self.fps > 0):
            raise ValueError(f"fps must be positive, got {self.fps}")
        object.__setattr__(self, "frames", arr)

    @classmethod
    def from_frames(cls, frames: Iterable[Frame], fps: float = 50.0) -> "Sequence":
        frames = list(frames)
        if not frames:
            raise ValueError("cannot build a sequence from zero frames")
        shape = frames[0].data.shape
        for k, f in enumerate(frames):
            if f.data.shape != shape:
                raise ValueError(f"frame {k} has shape {f.data.shape}, expected {shape}")
        return cls(np.stack([f.data for f in frames]), fps)

    def __len__(self) -> int:
        return self.frames.shape[0]

    def __getitem__(self, k: int) -> Frame:
        return Frame(self.frames[k])

    @property
    def width(self) -> int:
        return self.frames.shape[2]

    @property
    def height(self) -> int:
        return self.frames.shape[1]

    def time(self, k: int) -> float:
        return k / self.fps


@dataclass(frozen=True, eq=False)
class DirectionalStack:
    """Feature maps indexed by direction, phase and time.

    ``maps`` has shape (n_directions, n_phases, T, H, W). ``t0`` is the index
    of the input frame that the first time slice belongs to.
    """

    directions: tuple[float, ...]
    phases: tuple[float, ...]
    maps: np.ndarray
    t0: int = 0

    def __post_init__(self):
        directions = tuple(float(d) for d in self.directions)
        phases = tuple(float(p) for p in self.phases)
        maps = np.asarray(self.maps, dtype=np.float64)
        if maps.ndim != 5 or maps.shape[:2] != (len(directions), len(phases)):
            raise ValueError(
                f"maps shape {maps.shape} does not match {len(directions)} directions x {len(phases)} phases"
            )
        object.__setattr__(self, "directions", directions)
        object.__setattr__(self, "phases", phases)
        object.__setattr__(self, "maps", maps)

    @property
    def n_times(self) -> int:
        return self.maps.shape[2]

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.t0, self.t0 + self.n_times)

    def quadrature_pairs(self) -> list[tuple[int, int]]:
        """Index pairs (i, j) of phases with phases[j] = phases[i] + pi/2 (mod 2 pi)."""
        pairs, used = [], set()
        for i, p in enumerate(self.phases):
            if i in used:
                continue
            for j, q in enumerate(self.phases):
                if j in used or j == i:
                    continue
                if abs(math.remainder(q - p - math.pi / 2, 2 * math.pi)) < 1e-9:
                    pairs.append((i, j))
                    used.update((i, j))
                    break
        return pairs

    def with_maps(self, maps: np.ndarray) -> "DirectionalStack":
        return DirectionalStack(self.directions, self.phases, maps, self.t0)


@dataclass
class PipelineConfig:
    """Every free constant of the detection pipeline."""

    # retina
    sigma1: float = 1.0
    retina_size: int = 5
    # SGC dendrite (Gabor bank)
    n_directions: int = 8
    gabor_gamma: float = 0.5
    gabor_sigma: float = 2.0
    gabor_lambda: float = 6.0
    kernel_size: int = 13
    opponent_phases: bool = True  # add the sign-inverted (phi + pi) channels before rectification
    # SGC soma
    soma_a: float = 4.0
    soma_mu: float = 0.4
    zscore_epsilon: float = 1.5
    # Rt
    pool_size: int = 3
    alpha: list[float] | None = None  # None -> uniform 1/n_directions
    flicker_kappa: float = 1e-6
    flicker_mode: str = "global"
    top_k: int = 1
    score_floor: float = 0.0
    nms_radius: float = 8.0  # weaker maxima this close to a kept one are dropped; 0 disables
    border_margin: int = 12  # output rows/columns within the combined filter reach of the edge are zeroed

    def __post_init__(self):
        if self.alpha is None:
            self.alpha = [1.0 / self.n_directions] * self.n_directions
        self.alpha = [float(a) for a in self.alpha]
        self.validate()

    def validate(self) -> None:
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, float) and not math.isfinite(v):
                raise ValueError(f"{f.name} must be finite, got {v}")
        if self.kernel_size < 3 or self.kernel_size % 2 == 0:
            raise ValueError(f"kernel_size must be odd and >= 3, got {self.kernel_size}")
        if self.retina_size < 1 or self.retina_size % 2 == 0:
            raise ValueError(f"retina_size must be odd, got {self.retina_size}")
        if self.n_directions < 2:
            raise ValueError(f"n_directions must be >= 2, got {self.n_directions}")
        if len(self.alpha) != self.n_directions:
            raise ValueError(f"alpha has {len(self.alpha)} weights for {self.n_directions} directions")
        if any(not math.isfinite(a) or a < 0 for a in self.alpha):
            raise ValueError("alpha weights must be finite and non-negative")
        if self.sigma1 <= 0 or self.gabor_sigma <= 0 or self.gabor_lambda <= 0 or self.gabor_gamma <= 0:
            raise ValueError("sigma1, gabor_sigma, gabor_lambda and gabor_gamma must be positive")
        if not self.soma_a > 1:
            raise ValueError(f"soma_a must exceed 1, got {self.soma_a}")
        if not 0 < self.soma_mu < 1:
            raise ValueError(f"soma_mu must lie in (0, 1), got {self.soma_mu}")
        if self.zscore_epsilon < 0:
            raise ValueError("zscore_epsilon must be non-negative")
        if self.pool_size < 1:
            raise ValueError("pool_size must be >= 1")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if self.nms_radius < 0:
            raise ValueError("nms_radius must be non-negative")
        if self.border_margin < 0:
            raise ValueError("border_margin must be non-negative")
        if self.flicker_kappa <= 0:
            raise ValueError("flicker_kappa must be positive")
        if self.flicker_mode not in ("pixel", "global", "direction"):
            raise ValueError(f"flicker_mode must be 'pixel', 'global' or 'direction', got {self.flicker_mode!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown pipeline config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path: str | Path) -> "PipelineConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# image I/O
# ---------------------------------------------------------------------------


def natural_key(name: str) -> list:
    return [int(tok) if tok.isdigit() else tok.lower() for tok in re.split(r"(\d+)", name)]


def image_to_luminance(img: Image.Image) -> np.ndarray:
    """Convert a PIL image to real-valued luminance in [0, 1]."""
    mode = img.mode
    if mode in ("I;16", "I;16B", "I;16L", "I"):
        arr = np.asarray(img, dtype=np.float64)
        return arr / (65535.0 if arr.max(initial=0) > 255 or mode.startswith("I;16") else 255.0)
    if mode == "F":
        return np.asarray(img, dtype=np.float64)
    if mode == "L":
        return np.asarray(img, dtype=np.float64) / 255.0
    if mode == "1":
        return np.asarray(img, dtype=np.float64)
    rgb = np.asarray(img.convert("RGB"), dtype=np.float64)
    lum = REC601[0] * rgb[..., 0] + REC601[1] * rgb[..., 1] + REC601[2] * rgb[..., 2]
    return lum / 255.0


class ImageReadError(OSError):
    """An input image is missing, unreadable or absent from a frame directory."""


def _read_image(path: Path) -> list[np.ndarray]:
    try:
        with Image.open(path) as img:
            return [image_to_luminance(page.copy()) for page in ImageSequence.Iterator(img)]
    except (OSError, SyntaxError, ValueError) as exc:
        raise ImageReadError(f"cannot read image {path}: {exc}") from exc


def load_sequence(path: str | Path, fps: float = 50.0) -> Sequence:
    """Load a directory of numbered frames, or a multi-frame image file."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"sequence path does not exist: {path}")
    if path.is_dir():
        files = sorted(
            (p for p in path.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES),
            key=lambda p: natural_key(p.name),
        )
        if not files:
            raise ImageReadError(f"no image files found in {path}")
        frames, shape = [], None
        for f in files:
            pages = _read_image(f)
            if shape is None:
                shape = pages[0].shape
            for page in pages:
                if page.shape != shape:
                    raise ValueError(f"{f} has size {page.shape[::-1]}, expected {shape[::-1]} (width, height)")
                frames.append(page)
    else:
        frames = _read_image(path)
        shape = frames[0].shape
        if any(p.shape != shape for p in frames):
            raise ValueError(f"{path} contains frames of differing sizes")
    return Sequence(np.stack(frames), fps)


def to_uint8(data: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(data, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def save_frame(frame: Frame | np.ndarray, path: str | Path) -> None:
    """Write luminance in [0, 1] as an 8-bit grayscale PNG without rescaling."""
    data = frame.data if isinstance(frame, Frame) else frame
    Image.fromarray(to_uint8(data), mode="L").save(Path(path))


def save_sequence(seq: Sequence, directory: str | Path, prefix: str = "frame") -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    width = max(4, len(str(len(seq) - 1)))
    paths = []
    for k in range(len(seq)):
        p = directory / f"{prefix}{k:0{width}d}.png"
        save_frame(seq.frames[k], p)
        paths.append(p)
    return paths


def normalize_minmax(data: np.ndarray) -> np.ndarray:
    """Rescale to [0, 1]; a constant map becomes all zeros."""
    data = np.asarray(data, dtype=np.float64)
    lo, hi = data.min(), data.max()
    if hi <= lo:
        return np.zeros_like(data)
    return (data - lo) / (hi - lo)


def save_map(data: np.ndarray, path: str | Path) -> None:
    data = np.asarray(data, dtype=np.float64)
    if not np.all(np.isfinite(data)):
        raise ValueError("cannot save a map with non-finite values")
    save_frame(normalize_minmax(data), path)


def overlay_detections(frame: Frame, detections: Seq, radius: float = MARKER_RADIUS, value: float = 1.0) -> Frame:
    """Draw a ring of the given radius around every detection.

    Only pixels within ``radius`` of a detection are touched.
    """
    data = np.array(frame.data, copy=True)
    yy, xx = np.mgrid[0 : frame.height, 0 : frame.width]
    for det in detections:
        d = np.hypot(xx - det.x, yy - det.y)
        data[(d <= radius) & (d >= radius - 1.0)] = value
    return Frame(data)


# ---------------------------------------------------------------------------
# convolution with replicated borders
# ---------------------------------------------------------------------------


class ReplicateConvolver:
    """2-D convolution of maps with one or more fixed kernels, replicate borders.

    Kernel spectra are computed once per frame shape. Maps of shape
    ``(..., H, W)`` convolved with a kernel stack ``(K, k, k)`` give
    ``(..., K, H, W)``; a single ``(k, k)`` kernel keeps the input shape.
    """

    def __init__(self, kernels: np.ndarray, workers: int | None = None):
        kernels = np.asarray(kernels, dtype=np.float64)
        self.single = kernels.ndim == 2
        self.kernels = kernels[None] if self.single else kernels
        k = self.kernels.shape[-1]
        if self.kernels.shape[-2] != k or k % 2 == 0:
            raise ValueError(f"kernels must be square with odd size, got {self.kernels.shape[-2:]}")
        self.half = k // 2
        self.workers = workers
        self._cache: dict[tuple[int, int], tuple[tuple[int, int], np.ndarray]] = {}

    def _spectra(self, shape):
        if shape not in self._cache:
            import scipy.fft as sfft

            h, w = shape
            size = (
                sfft.next_fast_len(h + 2 * self.half, real=True),
                sfft.next_fast_len(w + 2 * self.half, real=True),
            )
            spec = sfft.rfft2(self.kernels, s=size, workers=self.workers)
            self._cache[shape] = (size, spec)
        return self._cache[shape]

    def __call__(self, maps: np.ndarray) -> np.ndarray:
        import scipy.fft as sfft

        maps = np.asarray(maps, dtype=np.float64)
        h, w = maps.shape[-2:]
        hh = self.half
        pad = [(0, 0)] * (maps.ndim - 2) + [(hh, hh), (hh, hh)]
        padded = np.pad(maps, pad, mode="edge")
        size, spec = self._spectra((h, w))
        fx = sfft.rfft2(padded, s=size, workers=self.workers)
        prod = fx[..., None, :, :] * spec
        full = sfft.irfft2(prod, s=size, workers=self.workers)
        out = full[..., 2 * hh : 2 * hh + h, 2 * hh : 2 * hh + w]
        if self.single:
            out = out[..., 0, :, :]
        return np.ascontiguousarray(out)


def convolve_replicate(maps: np.ndarray, kernel: np.ndarray, workers: int | None = None) -> np.ndarray:
    return ReplicateConvolver(kernel, workers)(maps)


def convolve_direct(data: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Brute-force replicate-border convolution of a single 2-D map (test oracle speed class)."""
    from scipy import ndimage

    return ndimage.convolve(np.asarray(data, dtype=np.float64), np.asarray(kernel, dtype=np.float64), mode="nearest")
