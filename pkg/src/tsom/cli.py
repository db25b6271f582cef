"""Command-line driver: ``tsom detect|synth|eval|tune|circuit-verify``.

Every command writes its artifacts plus a ``manifest.json`` recording the command
line, resolved configuration, seed, duration and artifact checksums.

Exit codes: 0 ok, 1 usage, 2 I/O, 3 validation, 4 property violation.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from . import __version__
from .circuit import DEFAULT_SEED, verify_proposition
from .core import PipelineConfig, load_sequence, overlay_detections, save_frame, save_map
from .evaluation import (
    MATCH_RADIUS,
    SWEEP_PARAMETERS,
    default_thresholds,
    match_detections,
    metrics,
    read_detections,
    roc_from_candidates,
    tuning_sweep,
    write_detections,
)
from .pipeline import TSOM, FrameLayers
from .synth import (
    BACKGROUND_GRAY,
    GroundTruth,
    SynthConfig,
    aerial_background,
    generate,
    required_background,
    write_synthetic,
)

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_VALIDATION, EXIT_PROPERTY = 0, 1, 2, 3, 4

DEFAULT_SWEEPS = {
    "radius": [float(r) for r in range(1, 21)],
    "v_a": [float(v) for v in range(10, 401, 10)],
    "luminance": [round(0.1 * k, 1) for k in range(11)],
    "v_b": [float(v) for v in range(0, 401, 20)],
    "theta_bg": [0.0, math.pi],
}


class PropertyViolation(Exception):
    pass


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# config and manifest helpers
# ---------------------------------------------------------------------------


def _read_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    return data


def _section(data: dict, name: str, flat_ok: bool) -> dict:
    """Pick ``data[name]``; a file without sections is taken as the section itself when ``flat_ok``."""
    if "pipeline" in data or "synth" in data:
        extra = set(data) - {"pipeline", "synth"}
        if extra:
            raise ValueError(f"unknown config sections: {sorted(extra)}")
        return dict(data.get(name, {}))
    return dict(data) if flat_ok else {}


def pipeline_config(data: dict, flat_ok: bool = True) -> PipelineConfig:
    return PipelineConfig.from_dict(_section(data, "pipeline", flat_ok))


SYNTH_KEYS = {f.name for f in fields(SynthConfig)} - {"background"}


def synth_settings(data: dict, args, flat_ok: bool = True) -> dict:
    """Synthetic-scene settings from the config file, overridden by explicit flags."""
    s = _section(data, "synth", flat_ok)
    unknown = set(s) - SYNTH_KEYS - {"background"}
    if unknown:
        raise ValueError(f"unknown synth config keys: {sorted(unknown)}")
    for key in ("n_frames", "frame_size", "fps", "v_a", "v_b", "theta_obj", "theta_bg", "radius", "luminance"):
        v = getattr(args, key, None)
        if v is not None:
            s[key] = v
    if getattr(args, "start", None) is not None:
        s["start"] = list(args.start)
    if getattr(args, "background", None) is not None:
        s["background"] = args.background
    s.setdefault("background", "aerial")
    return s


def build_background(spec: str, settings: dict, seed: int, max_speed: float | None = None) -> np.ndarray:
    """``aerial`` (procedural, seeded), ``uniform`` (flat gray) or a path to a grayscale image."""
    n = settings.get("frame_size", 512)
    n_frames = settings.get("n_frames", 200)
    fps = settings.get("fps", 50.0)
    speed = settings.get("v_b", 150.0) if max_speed is None else max_speed
    size = required_background(n, n_frames, fps, speed)
    if spec == "aerial":
        return aerial_background(size, seed)
    if spec == "uniform":
        return np.full((size, size), BACKGROUND_GRAY)
    return load_sequence(spec).frames[0]


def make_synth_config(settings: dict, seed: int, max_speed: float | None = None) -> SynthConfig:
    kw = {k: v for k, v in settings.items() if k != "background"}
    if "start" in kw:
        kw["start"] = tuple(kw["start"])
    bg = build_background(settings["background"], settings, seed, max_speed)
    return SynthConfig(background=bg, **kw)


def sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(out: Path, command: str, argv: list[str], config: dict, inputs: dict, seed, threads, started: float):
    artifacts = sorted(p for p in out.rglob("*") if p.is_file() and p.name != "manifest.json")
    manifest = {
        "command": command,
        "argv": argv,
        "version": __version__,
        "config": config,
        "inputs": inputs,
        "output_dir": str(out),
        "seed": seed,
        "threads": threads,
        "duration_s": round(time.perf_counter() - started, 3),
        "artifacts": {str(p.relative_to(out)): sha256(p) for p in artifacts},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def _prepare_out(path: str) -> Path:
    out = Path(path)
    if out.exists() and not out.is_dir():
        raise NotADirectoryError(f"output path {out} exists and is not a directory")
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _debug_images(layers: FrameLayers) -> dict[str, np.ndarray]:
    return {
        "retina": layers.retina,
        "dendrite": np.abs(layers.dendrite).max(axis=(0, 1)),
        "soma": layers.suppressed.max(axis=(0, 1)),
        "rt": layers.output,
    }


def cmd_detect(args, argv) -> int:
    started = time.perf_counter()
    cfg = pipeline_config(_read_config(args.config))
    if args.top_k is not None:
        cfg.top_k = args.top_k
    if args.score_floor is not None:
        cfg.score_floor = args.score_floor
    cfg.validate()
    seq = load_sequence(args.input, fps=args.fps)
    detector = TSOM(cfg, workers=args.threads)
    valid = detector.frame_range(len(seq))
    for t in args.debug_frames:
        if t not in valid:
            raise ValueError(f"debug frame {t} outside output range [{valid.start}, {valid.stop - 1}]")
    # everything is computed before the output directory is touched
    result = detector.run(seq, debug_frames=tuple(args.debug_frames))

    out = _prepare_out(args.out)
    write_detections(result.detections, out / "detections.csv")
    for t, layers in sorted(result.layers.items()):
        debug = out / "debug"
        debug.mkdir(exist_ok=True)
        for name, img in _debug_images(layers).items():
            save_map(img, debug / f"{name}_t{t:04d}.png")
    if args.overlays:
        ov = out / "overlays"
        ov.mkdir(exist_ok=True)
        by_t: dict[int, list] = {}
        for d in result.detections:
            by_t.setdefault(d.t, []).append(d)
        width = max(4, len(str(len(seq) - 1)))
        for t in valid:
            save_frame(overlay_detections(seq[t], by_t.get(t, [])), ov / f"frame{t:0{width}d}.png")
    write_manifest(
        out, "detect", argv, cfg.to_dict(),
        {"input": str(args.input), "fps": args.fps, "n_frames": len(seq), "output_frames": [valid.start, valid.stop - 1]},
        args.seed, args.threads, started,
    )
    print(f"{len(result.detections)} detections over frames {valid.start}..{valid.stop - 1} -> {out / 'detections.csv'}")
    return EXIT_OK


def cmd_synth(args, argv) -> int:
    started = time.perf_counter()
    settings = synth_settings(_read_config(args.config), args)
    config = make_synth_config(settings, args.seed)
    seq, gt = generate(config)
    out = _prepare_out(args.out)
    write_synthetic(seq, gt, out)
    write_manifest(out, "synth", argv, settings, {}, args.seed, args.threads, started)
    print(f"{len(seq)} frames of {config.frame_size}x{config.frame_size} -> {out}")
    return EXIT_OK


def _parse_frames(spec: str | None, gt: GroundTruth):
    if spec is None:
        return None
    try:
        lo, hi = (int(v) for v in spec.split(":"))
    except ValueError as exc:
        raise UsageError(f"--frames expects START:STOP, got {spec!r}") from exc
    if hi <= lo:
        raise UsageError(f"--frames range {spec!r} is empty")
    return range(lo, hi)


def cmd_eval(args, argv) -> int:
    started = time.perf_counter()
    dets = read_detections(args.detections)
    gt = GroundTruth.from_csv(args.groundtruth)
    frames = _parse_frames(args.frames, gt)
    res = match_detections(dets, gt, args.dist, frames)
    d_r, f_a = metrics(res)
    print(f"D_R={d_r} F_A={f_a}")
    if args.out:
        out = _prepare_out(args.out)
        report = {"d_r": d_r, "f_a": f_a, **asdict(res), "dist_threshold": args.dist}
        (out / "metrics.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
        if args.roc:
            frame_list = list(frames) if frames is not None else None
            curve = roc_from_candidates(dets, gt, default_thresholds(dets), frame_list, args.dist)
            curve.to_csv(out / "roc.csv")
        write_manifest(
            out, "eval", argv, {"dist_threshold": args.dist, "frames": args.frames, "roc": args.roc},
            {"detections": str(args.detections), "groundtruth": str(args.groundtruth)},
            args.seed, args.threads, started,
        )
    return EXIT_OK


def cmd_tune(args, argv) -> int:
    started = time.perf_counter()
    data = _read_config(args.config)
    cfg = pipeline_config(data, flat_ok=False)
    settings = synth_settings(data, args, flat_ok=False)
    values = args.values if args.values else DEFAULT_SWEEPS[args.sweep]
    settings.setdefault("n_frames", max(args.response_frames, args.precision_frames or 0))
    max_speed = max(values) if args.sweep == "v_b" else None
    base = make_synth_config(settings, args.seed, max_speed)
    curve = tuning_sweep(
        args.sweep, values, base, cfg,
        response_frames=args.response_frames, precision_frames=args.precision_frames, workers=args.threads,
    )
    out = _prepare_out(args.out)
    curve.to_csv(out / f"tune_{args.sweep}.csv")
    write_manifest(
        out, "tune", argv,
        {"pipeline": cfg.to_dict(), "synth": settings, "values": values,
         "response_frames": args.response_frames, "precision_frames": args.precision_frames},
        {}, args.seed, args.threads, started,
    )
    print(f"{args.sweep}: {len(values)} values, soma response peaks at {curve.peak('soma'):g}")
    return EXIT_OK


def cmd_circuit_verify(args, argv) -> int:
    started = time.perf_counter()
    report = verify_proposition(args.trials, (args.min_subsets, args.max_subsets), args.seed)
    out = _prepare_out(args.out)
    (out / "circuit_report.json").write_text(report.to_json(indent=2, sort_keys=True) + "\n")
    write_manifest(
        out, "circuit-verify", argv,
        {"trials": args.trials, "n_subsets_range": [args.min_subsets, args.max_subsets]},
        {}, args.seed, args.threads, started,
    )
    print(f"{report.trials} trials + {report.grid_cases} grid cases, {report.violations + report.grid_violations} violations")
    if not report.passed:
        raise PropertyViolation(f"two-stage activation fell below one-stage: {report.counterexample}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _shared(p: argparse.ArgumentParser, out_required: bool = True, seed_default=0):
    p.add_argument("--config", help="JSON config file (sections 'pipeline' and/or 'synth')")
    p.add_argument("--seed", type=int, default=seed_default, help="seed for every random draw")
    p.add_argument("--threads", type=_positive_int, default=os.cpu_count() or 1, help="FFT worker threads")
    p.add_argument("--out", required=out_required, help="output directory")


def _scene_flags(p: argparse.ArgumentParser):
    g = p.add_argument_group("scene")
    g.add_argument("--background", help="'aerial' (default), 'uniform' or path to a grayscale image")
    g.add_argument("--n-frames", dest="n_frames", type=_positive_int)
    g.add_argument("--frame-size", dest="frame_size", type=_positive_int)
    g.add_argument("--fps", type=float)
    g.add_argument("--v-a", dest="v_a", type=float, help="object speed, px/s")
    g.add_argument("--v-b", dest="v_b", type=float, help="background speed, px/s")
    g.add_argument("--theta-obj", dest="theta_obj", type=float, help="object direction, rad")
    g.add_argument("--theta-bg", dest="theta_bg", type=float, help="background direction, rad")
    g.add_argument("--radius", type=float, help="object radius, px")
    g.add_argument("--luminance", type=float, help="object luminance in [0, 1]")
    g.add_argument("--start", type=float, nargs=2, metavar=("X", "Y"))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tsom", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"tsom {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("detect", help="run the detector on a frame directory or multi-page image")
    p.add_argument("input")
    _shared(p)
    p.add_argument("--fps", type=float, default=50.0)
    p.add_argument("--top-k", dest="top_k", type=_positive_int)
    p.add_argument("--score-floor", dest="score_floor", type=float)
    p.add_argument("--debug-frames", dest="debug_frames", type=int, nargs="*", default=[],
                   help="frames whose retina/dendrite/soma/rt maps are saved as PNG")
    p.add_argument("--overlays", action="store_true", help="write frames with detection rings")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("synth", help="render a synthetic moving-object sequence with ground truth")
    _shared(p)
    _scene_flags(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", help="score detections against ground truth")
    p.add_argument("detections")
    p.add_argument("groundtruth")
    _shared(p, out_required=False)
    p.add_argument("--dist", type=float, default=MATCH_RADIUS, help="match radius, px (inclusive)")
    p.add_argument("--frames", help="evaluate frames START:STOP only (default: every ground-truth frame)")
    p.add_argument("--roc", action="store_true", help="also write roc.csv swept over detection scores")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("tune", help="response and precision versus one scene parameter")
    p.add_argument("sweep", choices=SWEEP_PARAMETERS)
    _shared(p)
    _scene_flags(p)
    p.add_argument("--values", type=float, nargs="+")
    p.add_argument("--response-frames", dest="response_frames", type=_positive_int, default=20)
    p.add_argument("--precision-frames", dest="precision_frames", type=_positive_int)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("circuit-verify", help="Monte Carlo check of two-stage versus one-stage activation")
    _shared(p, seed_default=DEFAULT_SEED)
    p.add_argument("--trials", type=_positive_int, default=100_000)
    p.add_argument("--min-subsets", dest="min_subsets", type=_positive_int, default=1)
    p.add_argument("--max-subsets", dest="max_subsets", type=_positive_int, default=20)
    p.set_defaults(func=cmd_circuit_verify)
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args, argv)
    except UsageError as exc:
        print(f"tsom {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PropertyViolation as exc:
        print(f"tsom {args.command}: property violated: {exc}", file=sys.stderr)
        return EXIT_PROPERTY
    except OSError as exc:
        print(f"tsom {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, TypeError) as exc:
        print(f"tsom {args.command}: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
