"""Detection metrics, ROC sweeps, the frame-difference baseline and tuning experiments."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable

import numpy as np

from .core import PipelineConfig, Sequence, load_sequence
from .pipeline import TSOM
from .retina import gaussian_kernel, smooth
from .rt import Detection, detect_frame
from .synth import GroundTruth, SynthConfig, generate

MATCH_RADIUS = 5.0
SWEEP_PARAMETERS = ("radius", "v_a", "luminance", "v_b", "theta_bg")


@dataclass
class MatchResult:
    true_positives: int
    false_positives: int
    actual_objects: int
    n_frames: int

    def __post_init__(self):
        if min(self.true_positives, self.false_positives, self.actual_objects, self.n_frames) < 0:
            raise ValueError("match counts must be non-negative")
        if self.true_positives > self.actual_objects:
            raise ValueError("more true positives than objects")

    def __add__(self, other: "MatchResult") -> "MatchResult":
        return MatchResult(
            self.true_positives + other.true_positives,
            self.false_positives + other.false_positives,
            self.actual_objects + other.actual_objects,
            self.n_frames + other.n_frames,
        )


def _match_frame(dets: list[Detection], objects: list[tuple[int, int]], dist_threshold: float) -> int:
    """Greedy nearest-first assignment; returns the number of matched objects."""
    if not dets or not objects:
        return 0
    pairs = []
    for i, d in enumerate(dets):
        for j, (gx, gy) in enumerate(objects):
            dist = math.hypot(d.x - gx, d.y - gy)
            if dist <= dist_threshold:
                pairs.append((dist, -d.score, i, j))
    pairs.sort()
    used_d, used_g = set(), set()
    for _, _, i, j in pairs:
        if i not in used_d and j not in used_g:
            used_d.add(i)
            used_g.add(j)
    return len(used_g)


def match_detections(
    detections: Iterable[Detection],
    gt: GroundTruth,
    dist_threshold: float = MATCH_RADIUS,
    frames: Iterable[int] | None = None,
) -> MatchResult:
    """Count true and false positives over ``frames`` (default: every ground-truth frame).

    A detection within ``dist_threshold`` pixels (inclusive) of an unmatched object
    is a true positive; every other detection in an evaluated frame is a false positive.
    """
    by_frame = gt.by_frame()
    lo, hi = (int(gt.frames.min()), int(gt.frames.max())) if len(gt) else (0, -1)
    frames = sorted(by_frame) if frames is None else sorted(set(int(f) for f in frames))
    dets_by_frame: dict[int, list[Detection]] = {}
    for d in detections:
        if not lo <= d.t <= hi:
            raise ValueError(f"detection in frame {d.t} outside ground-truth range [{lo}, {hi}]")
        dets_by_frame.setdefault(d.t, []).append(d)
    tp = fp = actual = 0
    for t in frames:
        objects = by_frame.get(t, [])
        dets = dets_by_frame.get(t, [])
        matched = _match_frame(dets, objects, dist_threshold)
        tp += matched
        fp += len(dets) - matched
        actual += len(objects)
    return MatchResult(tp, fp, actual, len(frames))


def metrics(result: MatchResult) -> tuple[float, float]:
    """Detection rate (TP / objects) and false alarms per frame (FP / frames)."""
    if result.actual_objects <= 0 or result.n_frames <= 0:
        raise ValueError("metrics need at least one object and one frame")
    return result.true_positives / result.actual_objects, result.false_positives / result.n_frames


@dataclass
class RocCurve:
    """(F_A, D_R) per threshold, thresholds in descending order."""

    thresholds: list[float]
    points: list[tuple[float, float]]

    def dr_at_fa(self, fa: float) -> float:
        """Best detection rate reachable with at most ``fa`` false alarms per frame."""
        ok = [dr for f, dr in self.points if f <= fa + 1e-12]
        return max(ok, default=0.0)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["threshold", "fa", "dr"])
            for thr, (fa, dr) in zip(self.thresholds, self.points):
                w.writerow([repr(float(thr)), repr(float(fa)), repr(float(dr))])


def candidate_detections(
    score_maps: np.ndarray, top_k: int, score_floor: float, t0: int = 0, nms_radius: float = 0.0
) -> list[Detection]:
    dets = []
    for i in range(score_maps.shape[0]):
        dets.extend(detect_frame(score_maps[i], t0 + i, top_k, score_floor, nms_radius))
    return dets


def default_thresholds(candidates: Iterable[Detection], n_levels: int | None = None) -> list[float]:
    """Descending floors: every distinct candidate score (or ``n_levels`` quantiles of them), then 0."""
    scores = np.array([d.score for d in candidates], dtype=np.float64)
    if scores.size == 0:
        return [0.0]
    levels = scores if n_levels is None else np.quantile(scores, np.linspace(1.0, 0.0, n_levels))
    return sorted(set(float(v) for v in levels) | {0.0}, reverse=True)


def roc_from_candidates(
    candidates: list[Detection],
    gt: GroundTruth,
    thresholds: Iterable[float],
    frames: Iterable[int] | None = None,
    dist_threshold: float = MATCH_RADIUS,
) -> RocCurve:
    """ROC from pre-ranked per-frame candidates gathered at a floor no higher than any threshold.

    A candidate is kept at floor ``thr`` when its score exceeds it. Floors are visited in
    descending order and only frames that gain detections are re-matched, so the result
    equals matching every floor from scratch.
    """
    thresholds = sorted((float(t) for t in thresholds), reverse=True)
    if not thresholds:
        raise ValueError("thresholds must be non-empty")
    by_frame = gt.by_frame()
    frames = sorted(by_frame) if frames is None else sorted(set(frames))
    scored = set(frames)
    lo, hi = (int(gt.frames.min()), int(gt.frames.max())) if len(gt) else (0, -1)
    for d in candidates:
        if not lo <= d.t <= hi:
            raise ValueError(f"detection in frame {d.t} outside ground-truth range [{lo}, {hi}]")
    ranked = sorted((d for d in candidates if d.t in scored), key=lambda d: -d.score)
    actual = sum(len(by_frame.get(t, [])) for t in frames)
    if actual <= 0 or not frames:
        raise ValueError("metrics need at least one object and one frame")
    kept: dict[int, list[Detection]] = {}
    matched: dict[int, int] = {}
    tp = n_kept = i = 0
    points = []
    for thr in thresholds:
        touched = set()
        while i < len(ranked) and ranked[i].score > thr:
            d = ranked[i]
            kept.setdefault(d.t, []).append(d)
            touched.add(d.t)
            n_kept += 1
            i += 1
        for t in touched:
            m = _match_frame(kept[t], by_frame.get(t, []), dist_threshold)
            tp += m - matched.get(t, 0)
            matched[t] = m
        points.append(((n_kept - tp) / len(frames), tp / actual))
    return RocCurve(thresholds, points)


def roc(
    score_maps: np.ndarray,
    gt: GroundTruth,
    thresholds: Iterable[float] | None = None,
    top_k: int = 50,
    t0: int = 0,
    frames: Iterable[int] | None = None,
    nms_radius: float = 0.0,
) -> RocCurve:
    """Sweep the detection floor over ``score_maps`` (slice i is frame t0 + i)."""
    score_maps = np.asarray(score_maps, dtype=np.float64)
    if thresholds is not None:
        thresholds = list(thresholds)
        if not thresholds:
            raise ValueError("thresholds must be non-empty")
    floor = 0.0 if thresholds is None else min(thresholds)
    cands = candidate_detections(score_maps, top_k, floor, t0, nms_radius)
    if thresholds is None:
        thresholds = default_thresholds(cands)
    if frames is None:
        frames = [t for t in range(t0, t0 + score_maps.shape[0]) if t in set(gt.frames.tolist())]
    return roc_from_candidates(cands, gt, thresholds, frames)


# ---------------------------------------------------------------------------
# frame-difference baseline
# ---------------------------------------------------------------------------


def frame_difference_maps(seq: Sequence, sigma1: float = 1.0, size: int = 5) -> np.ndarray:
    """Smoothed absolute difference |f_t - f_{t-1}|; slice i belongs to frame i + 1."""
    if len(seq) < 2:
        raise ValueError(f"frame differencing needs at least 2 frames, got {len(seq)}")
    kernel = gaussian_kernel(sigma1, size)
    return np.stack([smooth(np.abs(seq.frames[t] - seq.frames[t - 1]), kernel) for t in range(1, len(seq))])


def frame_difference_baseline(
    seq: Sequence,
    top_k: int = 1,
    score_floor: float = 0.0,
    sigma1: float = 1.0,
    size: int = 5,
    nms_radius: float = 0.0,
) -> list[Detection]:
    if len(seq) < 2:
        raise ValueError(f"frame differencing needs at least 2 frames, got {len(seq)}")
    kernel = gaussian_kernel(sigma1, size)
    dets = []
    for t in range(1, len(seq)):
        diff = smooth(np.abs(seq.frames[t] - seq.frames[t - 1]), kernel)
        dets.extend(detect_frame(diff, t, top_k, score_floor, nms_radius))
    return dets


@dataclass
class Comparison:
    """Pooled ROC curves of the detector and the frame-difference baseline on the same frames."""

    tsom: RocCurve
    baseline: RocCurve
    n_scenes: int
    n_frames: int

    def at(self, fa: float) -> tuple[float, float]:
        return self.tsom.dr_at_fa(fa), self.baseline.dr_at_fa(fa)


def compare_with_baseline(
    scenes: Iterable[SynthConfig],
    pipeline_config: PipelineConfig | None = None,
    top_k: int | None = None,
    workers: int | None = None,
) -> Comparison:
    """Run both detectors on every scene and sweep one floor over the pooled candidates.

    Scenes are laid end to end in frame numbering; only frames where the detector has
    an output (both temporal neighbours present) are scored, for both methods. Each
    method contributes its top_k strongest peaks per frame (default: the pipeline's top_k).
    """
    detector = TSOM(pipeline_config, workers)
    cfg = detector.config
    top_k = cfg.top_k if top_k is None else top_k
    ours: list[Detection] = []
    theirs: list[Detection] = []
    gt_t, gt_x, gt_y, frames = [], [], [], []
    offset = n_scenes = 0
    for scene in scenes:
        seq, gt = generate(scene)
        valid = detector.frame_range(len(seq))
        for t, o in detector.iter_layers(seq):
            ours.extend(replace(d, t=d.t + offset) for d in detect_frame(o, t, top_k, 0.0, cfg.nms_radius))
        base = frame_difference_baseline(seq, top_k, 0.0, cfg.sigma1, cfg.retina_size, cfg.nms_radius)
        theirs.extend(replace(d, t=d.t + offset) for d in base if d.t in valid)
        gt_t.extend(gt.frames + offset)
        gt_x.extend(gt.x)
        gt_y.extend(gt.y)
        frames.extend(t + offset for t in valid)
        offset += len(seq)
        n_scenes += 1
    if not n_scenes:
        raise ValueError("scenes must be non-empty")
    pooled = GroundTruth(gt_t, gt_x, gt_y)
    return Comparison(
        roc_from_candidates(ours, pooled, default_thresholds(ours), frames),
        roc_from_candidates(theirs, pooled, default_thresholds(theirs), frames),
        n_scenes,
        len(frames),
    )


# ---------------------------------------------------------------------------
# tuning experiments
# ---------------------------------------------------------------------------


@dataclass
class TuningCurve:
    parameter: str
    values: list[float]
    soma_response: list[float]
    rt_response: list[float]
    precision: list[float] | None = None

    def peak(self, which: str = "soma") -> float:
        resp = self.soma_response if which == "soma" else self.rt_response
        return self.values[int(np.argmax(resp))]

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            header = [self.parameter, "soma_response", "rt_response"]
            if self.precision is not None:
                header.append("precision")
            w.writerow(header)
            for i, v in enumerate(self.values):
                row = [repr(float(v)), repr(float(self.soma_response[i])), repr(float(self.rt_response[i]))]
                if self.precision is not None:
                    row.append(repr(float(self.precision[i])))
                w.writerow(row)


def gt_response(detector: TSOM, seq: Sequence, gt: GroundTruth) -> tuple[float, float]:
    """Mean soma output (max over channels) and Rt output at the object centre over all output frames."""
    soma, rt = [], []
    for layers in detector.iter_layers(seq, full=True):
        for x, y in gt.at(layers.t):
            soma.append(float(layers.suppressed[:, :, y, x].max()))
            rt.append(float(layers.output[y, x]))
    return float(np.mean(soma)), float(np.mean(rt))


def localization_precision(detector: TSOM, seq: Sequence, gt: GroundTruth, dist_threshold: float = MATCH_RADIUS) -> float:
    """Fraction of output frames whose top detection lies within ``dist_threshold`` of the object."""
    res = detector.run(seq, top_k=1, score_floor=-np.inf)
    frames = list(detector.frame_range(len(seq)))
    return match_detections(res.detections, gt, dist_threshold, frames).true_positives / len(frames)


def tuning_sweep(
    parameter: str,
    values: Iterable[float],
    base_config: SynthConfig,
    pipeline_config: PipelineConfig | None = None,
    response_frames: int = 20,
    precision_frames: int | None = None,
    workers: int | None = None,
) -> TuningCurve:
    """Vary one scene parameter and record the response at the object and, optionally, precision.

    Responses use the first ``response_frames`` frames; precision runs ``precision_frames``
    frames (200 reproduces the single-trial protocol) and is skipped when None.
    """
    if parameter not in SWEEP_PARAMETERS:
        raise ValueError(f"unknown sweep parameter {parameter!r}; choose from {SWEEP_PARAMETERS}")
    values = [float(v) for v in values]
    if not values:
        raise ValueError("values must be non-empty")
    detector = TSOM(pipeline_config, workers)
    soma, rt, prec = [], [], []
    for v in values:
        cfg = replace(base_config, **{parameter: v, "n_frames": response_frames})
        seq, gt = generate(cfg)
        s, r = gt_response(detector, seq, gt)
        soma.append(s)
        rt.append(r)
        if precision_frames:
            seq, gt = generate(replace(base_config, **{parameter: v, "n_frames": precision_frames}))
            prec.append(localization_precision(detector, seq, gt))
    return TuningCurve(parameter, values, soma, rt, prec if precision_frames else None)


# ---------------------------------------------------------------------------
# detections and external datasets on disk
# ---------------------------------------------------------------------------


def write_detections(detections: Iterable[Detection], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame", "x", "y", "score"])
        for d in detections:
            w.writerow([d.t, d.x, d.y, repr(float(d.score))])


def read_detections(path: str | Path) -> list[Detection]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if rows and not {"frame", "x", "y"} <= set(rows[0]):
        raise ValueError(f"{path}: detections CSV needs columns frame,x,y[,score]")
    return [
        Detection(int(r["frame"]), int(round(float(r["y"]))), int(round(float(r["x"]))), float(r.get("score") or 0.0))
        for r in rows
    ]


def load_rist(frames_dir: str | Path, gt_csv: str | Path, fps: float = 30.0) -> tuple[Sequence, GroundTruth]:
    """Load an externally obtained sequence in the synthetic-suite layout (numbered frames + frame,x,y CSV)."""
    seq = load_sequence(frames_dir, fps)
    gt = GroundTruth.from_csv(gt_csv)
    if len(gt) and (gt.frames.min() < 0 or gt.frames.max() >= len(seq)):
        raise ValueError(f"{gt_csv}: ground-truth frames exceed the {len(seq)} loaded frames")
    return seq, gt
