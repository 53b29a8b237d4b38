"""Scene-aware streaming engine for frame-group video enhancement models."""

from vepipe.backend import Backend, blend_backend, identity_backend, load_backend
from vepipe.colorproc import ColorSpace, PixelFormat, Range, VideoFrame
from vepipe.errors import VepipeError
from vepipe.grouper import plan_batches, plan_scene, schedule_outputs
from vepipe.model_desc import (
    EnhancementTask,
    NetworkDescriptor,
    NetworkFlags,
    classify_task,
    validate_descriptor,
)
from vepipe.pipeline import PipelineConfig, PipelineStats, run_pipeline
from vepipe.scenedetect import SceneList

__version__ = "0.1.0"

__all__ = [
    "Backend",
    "ColorSpace",
    "EnhancementTask",
    "NetworkDescriptor",
    "NetworkFlags",
    "PipelineConfig",
    "PipelineStats",
    "PixelFormat",
    "Range",
    "SceneList",
    "VepipeError",
    "VideoFrame",
    "blend_backend",
    "classify_task",
    "identity_backend",
    "load_backend",
    "plan_batches",
    "plan_scene",
    "run_pipeline",
    "schedule_outputs",
    "validate_descriptor",
]
