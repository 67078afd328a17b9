"""Video synopsis and optical-flow forensics for fixed-camera footage."""
from .config import Config, ConfigError, load_config
from .video_io import Frame, StreamMeta, VideoIOError, open_sequence, to_luma, write_sequence
from .bgmodel import BACKGROUND, FOREGROUND, SHADOW, BackgroundModel, LabelMask, bg_apply, bg_snapshot
from .regions import BBox, Detection, clean_mask, extract_regions
from .tracker import ObjectFrame, Tracker, Tube, confirmation_threshold, predict_center
from .synopsis import (Placement, SchedulerState, SynopsisManifest, collides, frame_reduction,
                       render_synopsis_frame, run_synopsis, schedule, scheduler_step)
from .flow import FlowField, block_histograms, corner_features, dense_flow, flow_stats
from .forensics import (AlarmEvent, BusynessMatrix, CameraTamperMonitor, TrespassMonitor, busyness_test,
                        busyness_train, forgery_scan)
from .evaluation import AnnotationSet, EvalReport, match_frame, report

__version__ = "0.1.0"

__all__ = [
    "Config",
    "ConfigError",
    "load_config",
    "Frame",
    "StreamMeta",
    "VideoIOError",
    "open_sequence",
    "to_luma",
    "write_sequence",
    "BACKGROUND",
    "FOREGROUND",
    "SHADOW",
    "BackgroundModel",
    "LabelMask",
    "bg_apply",
    "bg_snapshot",
    "BBox",
    "Detection",
    "clean_mask",
    "extract_regions",
    "ObjectFrame",
    "Tracker",
    "Tube",
    "confirmation_threshold",
    "predict_center",
    "Placement",
    "SchedulerState",
    "SynopsisManifest",
    "collides",
    "frame_reduction",
    "render_synopsis_frame",
    "run_synopsis",
    "schedule",
    "scheduler_step",
    "FlowField",
    "block_histograms",
    "corner_features",
    "dense_flow",
    "flow_stats",
    "AlarmEvent",
    "BusynessMatrix",
    "CameraTamperMonitor",
    "TrespassMonitor",
    "busyness_test",
    "busyness_train",
    "forgery_scan",
    "AnnotationSet",
    "EvalReport",
    "match_frame",
    "report",
]
