"""Command-line front end.

Exit codes: 0 success, 1 runtime/I-O/config error, 2 usage error,
3 alarms raised while ``--fail-on-alarm`` is set.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .bgmodel import BackgroundModel
from .config import Config, ConfigError, load_config
from .evaluation import AnnotationSet, EvalError, detections_from_json, evaluate, tube_boxes
from .flow import FlowError
from .forensics import (BusynessMatrix, CameraTamperMonitor, ForensicsError, TrespassMonitor, Zone,
                        busyness_test, busyness_train, forgery_scan, write_events)
from .synopsis import SynopsisError, TubeProducer, run_synopsis
from .synthgen import SceneScript, ScriptError, generate
from .tracker import TrackerError
from .video_io import VideoIOError, open_sequence, sequence_bytes, write_sequence

log = logging.getLogger("vidsyn")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, EXIT_ALARM = 0, 1, 2, 3

_RUNTIME_ERRORS = (VideoIOError, ConfigError, SynopsisError, ForensicsError, FlowError, EvalError,
                   TrackerError, ScriptError, OSError, ValueError)


@dataclass
class RunSummary:
    subcommand: str
    input: str
    wall_seconds: float
    frames: int
    outputs: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    @property
    def throughput_fps(self) -> float:
        return self.frames / self.wall_seconds if self.wall_seconds > 0 else 0.0

    def to_json(self) -> dict:
        return {"subcommand": self.subcommand, "input": self.input, "frames": self.frames,
                "wall_seconds": round(self.wall_seconds, 6), "throughput_fps": round(self.throughput_fps, 3),
                "outputs": self.outputs, **self.extra}

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1, sort_keys=True) + "\n")


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _fraction(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not 0 <= v < 1:
        raise argparse.ArgumentTypeError(f"must be in [0, 1), got {v}")
    return v


# flag dest -> dotted config key; None values are left to file/defaults
_OVERRIDES = {
    "cluster_size": "synopsis.cluster_size",
    "min_area": "regions.min_area_frac",
    "bg_history": "bg.history",
    "bg_var_threshold": "bg.var_threshold",
    "bg_shadow_threshold": "bg.shadow_threshold",
    "bg_max_components": "bg.max_components",
    "flow_levels": "flow.levels",
    "flow_search_px": "flow.search_px",
    "flow_estimator": "flow.estimator",
    "flow_bins": "flow.bins",
    "window": "forgery.window",
    "k": "forgery.k",
    "tau": "tamper.tau",
    "tamper_persistence": "tamper.persistence",
    "margin": "busyness.margin",
    "hits": "busyness.hits",
    "features": "busyness.features",
    "area_frac": "trespass.area_frac",
    "trespass_persistence": "trespass.persistence",
    "iou": "eval.iou_threshold",
}


def _config(args) -> Config:
    cfg = load_config(args.config)
    for dest, key in _OVERRIDES.items():
        v = getattr(args, dest, None)
        if v is not None:
            cfg.set(key, v)
    if getattr(args, "no_labels", False):
        cfg.synopsis.labels = False
    if getattr(args, "sequential", False):
        cfg.synopsis.concurrent = False
    return cfg.validate()


def _common(p: argparse.ArgumentParser, out_help: str) -> None:
    p.add_argument("--config", metavar="JSON", help="configuration file (flags override it)")
    p.add_argument("--out", required=True, metavar="PATH", help=out_help)
    p.add_argument("--summary", metavar="JSON", help="write the run summary here")
    p.add_argument("--quiet", action="store_true", help="suppress progress on stderr")
    p.add_argument("--fps", type=float, help="frame rate when the input has no metadata")


def _bg_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--bg-history", type=_positive_int, help="mixture history length (frames)")
    p.add_argument("--bg-var-threshold", type=float, help="squared Mahalanobis acceptance threshold")
    p.add_argument("--bg-shadow-threshold", type=float, help="lowest luminance ratio still labelled shadow")
    p.add_argument("--bg-max-components", type=_positive_int, help="Gaussians per pixel")


def _flow_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--flow-estimator", choices=("blockmatch", "farneback"))
    p.add_argument("--flow-levels", type=_positive_int)
    p.add_argument("--flow-search-px", type=_positive_int)
    p.add_argument("--flow-bins", type=int, choices=(9, 18))


def _alarm_flag(p: argparse.ArgumentParser) -> None:
    p.add_argument("--fail-on-alarm", action="store_true", help="exit 3 when any alarm is emitted")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vidsyn", description="Video synopsis and optical-flow forensics.")
    ap.add_argument("--version", action="version", version="%(prog)s 0.1.0")
    sub = ap.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("synopsize", help="condense a sequence into a collision-free synopsis")
    p.add_argument("input", help="frame directory or multi-image PNM file")
    _common(p, "output directory (synopsis frames, manifest.json, run_summary.json)")
    p.add_argument("--cluster-size", type=_positive_int, help="tubes scheduled together (CS)")
    p.add_argument("--min-area", type=_fraction, help="smallest object as a fraction of the frame area")
    _bg_flags(p)
    p.add_argument("--no-labels", action="store_true", help="do not draw time labels")
    p.add_argument("--sequential", action="store_true", help="run tube generation before scheduling")
    p.add_argument("--manifest-only", action="store_true", help="skip writing synopsis frames")
    p.set_defaults(func=cmd_synopsize)

    p = sub.add_parser("forgery", help="scan for deleted, inserted or duplicated frames")
    p.add_argument("input")
    _common(p, "JSON-lines alarm file")
    p.add_argument("--window", type=_positive_int, help="sliding median window (transitions)")
    p.add_argument("--k", type=float, help="robust z-score threshold")
    _flow_flags(p)
    _alarm_flag(p)
    p.set_defaults(func=cmd_forgery)

    p = sub.add_parser("camera-monitor", help="alarm when the view is blocked or moved")
    p.add_argument("input")
    _common(p, "JSON-lines alarm file")
    p.add_argument("--tau", type=float, help="foreground area ratio threshold")
    p.add_argument("--persistence", dest="tamper_persistence", type=_positive_int,
                   help="consecutive frames above tau")
    p.add_argument("--warmup", type=int, default=1, help="initial frames ignored while the model settles")
    p.add_argument("--min-area", type=_fraction)
    _bg_flags(p)
    _alarm_flag(p)
    p.set_defaults(func=cmd_camera_monitor)

    p = sub.add_parser("anomaly", help="busyness-matrix motion anomaly detection")
    asub = p.add_subparsers(dest="mode", required=True, metavar="MODE")
    t = asub.add_parser("train", help="learn a busyness matrix from normal footage")
    t.add_argument("input")
    _common(t, "busyness matrix JSON")
    t.add_argument("--features", choices=("dense", "corners"))
    _flow_flags(t)
    t.set_defaults(func=cmd_anomaly_train)
    t = asub.add_parser("test", help="report motion exceeding a trained matrix")
    t.add_argument("input")
    _common(t, "JSON-lines alarm file")
    t.add_argument("--matrix", required=True, help="busyness matrix from 'anomaly train'")
    t.add_argument("--margin", type=float, help="allowed excess over the trained maximum")
    t.add_argument("--hits", type=_positive_int, help="consecutive feature matrices before alarming")
    t.add_argument("--features", choices=("dense", "corners"))
    _flow_flags(t)
    _alarm_flag(t)
    t.set_defaults(func=cmd_anomaly_test)

    p = sub.add_parser("trespass", help="alarm on foreground inside user polygons")
    p.add_argument("input")
    _common(p, "JSON-lines alarm file")
    p.add_argument("--zones", required=True, help='JSON list of {"id", "points": [[x, y], ...]}')
    p.add_argument("--area-frac", type=_fraction, help="foreground fraction of a zone that alarms")
    p.add_argument("--persistence", dest="trespass_persistence", type=_positive_int)
    p.add_argument("--warmup", type=int, default=1, help="initial frames ignored while the model settles")
    p.add_argument("--min-area", type=_fraction)
    _bg_flags(p)
    _alarm_flag(p)
    p.set_defaults(func=cmd_trespass)

    p = sub.add_parser("eval", help="precision, recall and AP against annotations")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--detections", help="detections JSON in the annotation layout")
    src.add_argument("--input", help="sequence to track; its tube boxes are scored")
    p.add_argument("--annotations", required=True, help="ground-truth JSON")
    _common(p, "report JSON")
    p.add_argument("--csv", help="precision/recall curve CSV")
    p.add_argument("--iou", type=float, help="IoU needed for a match")
    p.add_argument("--min-area", type=_fraction)
    _bg_flags(p)
    p.set_defaults(func=cmd_eval)

    # fixture regeneration; deliberately left out of --help
    p = sub.add_parser("synthgen")
    p.add_argument("script", help="SceneScript JSON")
    p.add_argument("--out", required=True, help="output frame directory")
    p.add_argument("--annotations", help="write ground-truth annotations here")
    p.add_argument("--edit-log", help="write the applied edits here")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_synthgen)
    sub._choices_actions = [a for a in sub._choices_actions if a.dest != "synthgen"]
    return ap


def _open(args):
    from .video_io import StreamMeta
    meta = None
    if getattr(args, "fps", None):
        meta = StreamMeta(args.fps, 0, str(args.input))
    return open_sequence(args.input, meta)


def _finish(args, summary: RunSummary) -> None:
    if getattr(args, "summary", None):
        summary.outputs.setdefault("summary", args.summary)
        summary.write(args.summary)
    log.info("%s: %d frames in %.2f s (%.1f fps)", summary.subcommand, summary.frames,
             summary.wall_seconds, summary.throughput_fps)


def _alarm_exit(args, n: int) -> int:
    return EXIT_ALARM if n and getattr(args, "fail_on_alarm", False) else EXIT_OK


def cmd_synopsize(args) -> int:
    cfg = _config(args)
    source = _open(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    sink = None if args.manifest_only else out / "synopsis"
    res = run_synopsis(source, cfg, sink=sink, keep_frames=False)
    wall = time.perf_counter() - t0
    man = res.manifest
    man.write(out / "manifest.json")
    outputs = {"manifest": str(out / "manifest.json")}
    if sink is not None:
        outputs["synopsis"] = str(sink)
    summary = RunSummary("synopsize", str(args.input), wall, man.tov, outputs,
                         {"tov": man.tov, "tsv": man.tsv, "fr": man.fr, "cluster_size": man.cluster_size,
                          "tubes": len(res.tubes)})
    if sink is not None:
        summary.extra["synopsis_bytes"] = sequence_bytes(sink)
    summary.outputs["summary"] = args.summary or str(out / "run_summary.json")
    summary.write(summary.outputs["summary"])
    print(f"FR {man.fr:.4f} (TSV {man.tsv} / TOV {man.tov})  FPS {summary.throughput_fps:.1f}")
    log.info("synopsize: %d tubes, %.2f s", len(res.tubes), wall)
    return EXIT_OK


def cmd_forgery(args) -> int:
    cfg = _config(args)
    source = _open(args)
    t0 = time.perf_counter()
    events, seq = forgery_scan(source, cfg.forgery, cfg.flow)
    n = write_events(events, args.out)
    _finish(args, RunSummary("forgery", str(args.input), time.perf_counter() - t0, len(seq) + 1,
                             {"events": args.out}, {"alarms": n}))
    return _alarm_exit(args, n)


def _masks(source, cfg: Config):
    from .regions import clean_mask
    model = BackgroundModel(cfg.bg)
    for frame in source:
        yield frame, clean_mask(model.apply(frame).foreground(), cfg.regions)


def cmd_camera_monitor(args) -> int:
    cfg = _config(args)
    source = _open(args)
    t0 = time.perf_counter()
    mon = CameraTamperMonitor(cfg.tamper)
    events, frames = [], 0
    for frame, mask in _masks(source, cfg):
        frames += 1
        if frame.index < args.warmup:
            continue
        e = mon.step(mask, frame.index)
        if e is not None:
            events.append(e)
    n = write_events(events, args.out)
    _finish(args, RunSummary("camera-monitor", str(args.input), time.perf_counter() - t0, frames,
                             {"events": args.out}, {"alarms": n}))
    return _alarm_exit(args, n)


def cmd_anomaly_train(args) -> int:
    cfg = _config(args)
    source = _open(args)
    t0 = time.perf_counter()
    matrix = busyness_train(source, cfg.busyness, cfg.flow)
    matrix.save(args.out)
    _finish(args, RunSummary("anomaly train", str(args.input), time.perf_counter() - t0, len(source),
                             {"matrix": args.out}))
    return EXIT_OK


def cmd_anomaly_test(args) -> int:
    cfg = _config(args)
    matrix = BusynessMatrix.load(args.matrix)
    source = _open(args)
    t0 = time.perf_counter()
    events = busyness_test(source, matrix, cfg.busyness, cfg.flow)
    n = write_events(events, args.out)
    _finish(args, RunSummary("anomaly test", str(args.input), time.perf_counter() - t0, len(source),
                             {"events": args.out}, {"alarms": n}))
    return _alarm_exit(args, n)


def cmd_trespass(args) -> int:
    cfg = _config(args)
    try:
        zones = Zone.from_json(json.loads(Path(args.zones).read_text()))
    except json.JSONDecodeError as e:
        raise ForensicsError(f"cannot parse zones {args.zones}: {e}") from None
    mon = TrespassMonitor(zones, cfg.trespass)
    source = _open(args)
    t0 = time.perf_counter()
    events, frames = [], 0
    for frame, mask in _masks(source, cfg):
        frames += 1
        if frame.index < args.warmup:
            continue
        events.extend(mon.step(mask, frame.index))
    n = write_events(events, args.out)
    _finish(args, RunSummary("trespass", str(args.input), time.perf_counter() - t0, frames,
                             {"events": args.out}, {"alarms": n}))
    return _alarm_exit(args, n)


def cmd_eval(args) -> int:
    cfg = _config(args)
    ann = AnnotationSet.load(args.annotations)
    t0 = time.perf_counter()
    if args.detections:
        try:
            dets = detections_from_json(json.loads(Path(args.detections).read_text()))
        except json.JSONDecodeError as e:
            raise EvalError(f"cannot parse detections {args.detections}: {e}") from None
        src_name, frames = args.detections, ann.n_frames
    else:
        source = _open(args)
        tubes = [t for batch in TubeProducer(source, cfg) for t in batch]
        dets = tube_boxes(tubes)
        src_name, frames = args.input, len(source)
    rep = evaluate(dets, ann, cfg.eval.iou_threshold)
    rep.write(args.out, args.csv)
    outputs = {"report": args.out}
    if args.csv:
        outputs["curve"] = args.csv
    _finish(args, RunSummary("eval", str(src_name), time.perf_counter() - t0, frames, outputs,
                             {"average_precision": rep.average_precision}))
    if not args.quiet:
        print(f"precision {rep.final_precision:.4f}  recall {rep.final_recall:.4f}  AP {rep.average_precision:.4f}")
    return EXIT_OK


def cmd_synthgen(args) -> int:
    script = SceneScript.load(args.script)
    scene = generate(script)
    write_sequence(args.out, scene.source, scene.source.meta)
    if args.annotations:
        scene.annotations.save(args.annotations)
    if args.edit_log:
        Path(args.edit_log).write_text(json.dumps(
            [{"kind": r.kind, "detail": r.detail, "output_range": list(r.output_range)} for r in scene.edit_log],
            indent=1))
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # usage errors exit 2 here
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(name)s: %(message)s", stream=sys.stderr, force=True)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"vidsyn: config error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except _RUNTIME_ERRORS as e:
        print(f"vidsyn: error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
