"""Streaming enhancement engine.

Stages run concurrently and talk through bounded queues::

    reader thread       decode Y4M, dequantize, flag scene starts
      -> queue (n*b frames)
    engine (caller)     plan runs, fill the frame store, extract, fuse,
                        schedule outputs in presentation order
      -> queue (n*b frames)
    writer thread       convert to the container format, quantize, write

Runs are planned incrementally: run ``i`` of a scene is known to be a
regular run as soon as frame ``(i + 1) * n`` of the same scene has been read,
so a scene never has to be buffered whole. The remaining runs are planned
when the next scene start (or end of stream) arrives.
"""

import logging
import queue
import sys
import threading
from contextlib import ExitStack
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from vepipe.backend import (
    BUILTIN_MODELS,
    FeaturePyramid,
    builtin_backend,
    load_backend,
    tensors_to_frame,
)
from vepipe.colorproc import ColorSpace, PixelFormat, convert_frame
from vepipe.errors import ConfigError, FormatMismatch, RangeError, VepipeError
from vepipe.framestore import (
    FrameStore,
    StoreLayout,
    advance_region,
    place_plain,
    shared_region_map,
    shared_slot_offset,
)
from vepipe.grouper import (
    NetworkOutput,
    PassThrough,
    RunPlan,
    plan_batches,
    plan_scene,
    regular_run,
    schedule_run,
)
from vepipe.model_desc import EnhancementTask, classify_task, validate_descriptor
from vepipe.scenedetect import DEFAULT_THRESHOLD, SceneChangeDetector, SceneList, parse_scene_list
from vepipe.y4m import Y4MWriter, decode_frame, iter_raw_frames, read_header

log = logging.getLogger(__name__)

_DONE = object()


@dataclass
class PipelineConfig:
    """Everything needed for one run of the pipeline.

    Exactly one of ``scene_list`` and ``scene_threshold`` may be given; with
    neither, scene changes are detected at the default threshold.
    ``backend`` takes precedence over ``model`` and is meant for callers that
    construct a backend themselves.
    """

    input: object
    output: object
    network: object = None
    model: str = "identity"
    backend: object = None
    scene_list: object = None
    scene_threshold: float = None
    colorspace: ColorSpace = None
    range: object = None
    regions: int = 2
    on_write: object = None

    def __post_init__(self):
        if self.scene_list is not None and self.scene_threshold is not None:
            raise ConfigError("give either a scene list or a detection threshold, not both")
        if self.network is not None:
            validate_descriptor(self.network)


@dataclass
class PipelineStats:
    frames_in: int = 0
    frames_out: int = 0
    scenes: int = 0
    extract_calls: int = 0
    batches: int = 0
    shared_batches: int = 0
    plain_batches: int = 0
    region_copies: int = 0
    shared_region_items: list = field(default_factory=list)
    store_slots: int = 0
    peak_buffered: int = 0
    peak_cache: int = 0


class Engine:
    """Turns a stream of ``(frame, scene_start)`` pairs into output frames.

    ``emit(presentation_index, frame)`` is called strictly in presentation
    order with frames in the backend's output pixel format.
    """

    def __init__(self, backend, emit, regions=2, stats=None):
        self.backend = backend
        self.d = backend.network
        validate_descriptor(self.d)
        self.emit = emit
        self.stats = stats or PipelineStats()
        d = self.d
        self.layout = StoreLayout(d.n, d.batch, regions, d.flags.extra_frame)
        if d.flags.extra_frame:
            slots = self.layout.shared_slots
        else:
            slots = self.layout.plain_slots
        self.store = FrameStore(slots)
        self.stats.store_slots = slots
        self.region = 0
        self.plain_region = 0
        self.pending_copy = None
        self.structure = None
        self.frames = {}
        self.features = {}
        self.next_presentation = 0
        self._reset_scene(0)

    def _reset_scene(self, start):
        self.scene_start = start
        self.count = 0
        self.next_run = 0
        self.pending = []

    # stream driving

    def push(self, frame, scene_start):
        if scene_start and self.count:
            self._finish_scene()
        if self.count == 0:
            self._reset_scene(frame.frame_index)
            self.stats.scenes += 1
        elif frame.frame_index != self.scene_start + self.count:
            raise FormatMismatch(f"frame {frame.frame_index} out of sequence")
        self.frames[frame.frame_index] = frame
        self.count += 1
        self.stats.frames_in += 1
        self.stats.peak_buffered = max(self.stats.peak_buffered, len(self.frames))
        d = self.d
        while (self.next_run + 1) * d.n < self.count:
            self.pending.append(regular_run(self.next_run, d))
            self.next_run += 1
            if len(self.pending) == d.batch:
                self._dispatch_runs(self.pending)
                self.pending = []
                self._evict(self._lowest_needed())

    def finish(self):
        if self.count:
            self._finish_scene()

    def _finish_scene(self):
        m = self.count
        tail = plan_scene(m, self.d).runs[self.next_run:]
        self._dispatch_runs(self.pending + list(tail))
        self._evict(self.scene_start + m)
        self._reset_scene(self.scene_start + m)

    def _lowest_needed(self):
        n = self.d.n
        nxt = self.pending[0].inputs[0] if self.pending else self.next_run * n
        # a short final run may recycle up to n frames already read
        return self.scene_start + max(0, min(nxt, self.count - n))

    def _evict(self, below):
        for cache in (self.frames, self.features):
            for key in [k for k in cache if k < below]:
                del cache[key]

    # per batch work

    def _features(self, index):
        pyramid = self.features.get(index)
        if pyramid is None:
            pyramid = self.backend.extract(self.frames[index])
            self.stats.extract_calls += 1
            self.features[index] = pyramid
            self.stats.peak_cache = max(self.stats.peak_cache, len(self.features))
            if self.structure is None:
                self.structure = pyramid.structure
        return pyramid.flatten()

    def _dispatch_runs(self, runs):
        plan = RunPlan(tuple(runs), self.d.n, self.d.flags)
        for batch in plan_batches(plan, self.d.batch):
            self._dispatch(batch)

    def _fill_shared(self, batch):
        layout, store, r = self.layout, self.store, self.region
        s0 = self.scene_start
        written = set()
        if self.pending_copy is not None:
            instr, frame = self.pending_copy
            self.pending_copy = None
            if frame == s0 + batch.first_frame and store.frame_at[instr.src] == frame:
                store.copy(instr)
                self.stats.region_copies += 1
                written.add(instr.dst)
        for frame, off in shared_region_map(batch, r, layout):
            if off not in written:
                store.write(off, self._features(s0 + frame), s0 + frame)
                written.add(off)
        self.stats.shared_region_items.append(len(written))
        b = layout.b
        views = [store.view(shared_slot_offset(k, 0, r, layout), b)
                 for k in range(self.d.input_count())]
        return views

    def _fill_plain(self, batch):
        b = self.d.batch
        region = 0 if self.d.flags.extra_frame else self.plain_region
        s0 = self.scene_start
        for j, run in enumerate(batch.lanes):
            for frame, off in place_plain(run, j, b, self.store.slots, region):
                self.store.write(off, self._features(s0 + frame), s0 + frame)
        base = region * b * self.d.input_count()
        return [self.store.view(base + k * b, b) for k in range(self.d.input_count())]

    def _dispatch(self, batch):
        d = self.d
        self.stats.batches += 1
        if batch.shared:
            self.stats.shared_batches += 1
            views = self._fill_shared(batch)
        else:
            self.stats.plain_batches += 1
            views = self._fill_plain(batch)
        inputs = [FeaturePyramid.unflatten(v, self.structure) for v in views]
        outputs = self.backend.fuse(inputs)
        if len(outputs) != d.outputs_per_run():
            raise VepipeError(
                f"backend returned {len(outputs)} outputs, expected {d.outputs_per_run()}")
        if batch.shared:
            instr = advance_region(self.region, self.layout)
            self.pending_copy = (instr, self.scene_start + batch.first_frame + d.batch * d.n)
            self.region = (self.region + 1) % self.layout.regions
        elif not d.flags.extra_frame:
            self.plain_region = (self.plain_region + 1) % self.layout.regions
        self._emit_batch(batch, outputs)

    def _emit_batch(self, batch, outputs):
        d = self.d
        s0 = self.scene_start
        base = s0 * d.frame_rate_factor
        cs = None
        for j in range(batch.real):
            run = batch.lanes[j]
            for source, pres in schedule_run(run, d, base):
                if isinstance(source, PassThrough):
                    frame = self.frames[s0 + run.inputs[source.position]]
                else:
                    assert isinstance(source, NetworkOutput)
                    ref = self.frames[s0 + run.inputs[0]]
                    cs = ref.colorspace
                    tensors = tuple(np.array(a[j]) for a in outputs[source.slot])
                    frame = tensors_to_frame(tensors, d.pixel_format, cs, pres)
                if pres != self.next_presentation:
                    raise VepipeError(
                        f"presentation order broken: got {pres}, expected {self.next_presentation}")
                self.next_presentation += 1
                self.stats.frames_out += 1
                self.emit(pres, frame)


def output_header(header, d):
    """Container header for the enhanced stream."""
    width, height = d.output_dims(header.width, header.height)
    num, den = header.fps
    changes = {"width": width, "height": height,
               "fps": (num * d.frame_rate_factor, den)}
    if classify_task(d) is EnhancementTask.DEINTERLACE:
        changes["interlace"] = "p"
    return header.with_changes(**changes)


def resolve_backend(cfg, header, colorspace):
    """Instantiate the backend for ``cfg`` given the input stream's properties."""
    if cfg.backend is not None:
        return cfg.backend
    model = str(cfg.model)
    if model in BUILTIN_MODELS and not Path(model).is_dir():
        if cfg.network is None:
            raise ConfigError("built-in models need a network description")
        network = cfg.network
        if network.pixel_format is None:
            network = _with_pixel_format(network, header.pixel_format)
        return builtin_backend(model, network)
    backend, _ = load_backend(model, colorspace, cfg.network)
    return backend


def _with_pixel_format(network, fmt):
    return replace(network, pixel_format=fmt)


def _open(target, mode, stack):
    if hasattr(target, "read") or hasattr(target, "write"):
        return target
    if str(target) == "-":
        return sys.stdin.buffer if "r" in mode else sys.stdout.buffer
    return stack.enter_context(open(target, mode))


class _Worker(threading.Thread):
    """Thread that records its exception for the caller."""

    def __init__(self, target, name):
        super().__init__(name=name, daemon=True)
        self._target_fn = target
        self.error = None

    def run(self):
        try:
            self._target_fn()
        except BaseException as e:  # re-raised in the caller
            self.error = e


def _put(q, item, stop):
    while not stop.is_set():
        try:
            q.put(item, timeout=0.1)
            return True
        except queue.Full:
            continue
    return False


def _get(q, stop):
    while not stop.is_set():
        try:
            return q.get(timeout=0.1)
        except queue.Empty:
            continue
    return _DONE


def _load_scenes(cfg):
    if cfg.scene_list is None:
        return None
    if isinstance(cfg.scene_list, SceneList):
        return cfg.scene_list
    with open(cfg.scene_list, encoding="utf-8") as f:
        return parse_scene_list(f.read())


def run_pipeline(cfg):
    """Enhance ``cfg.input`` into ``cfg.output``.

    Returns:
        :class:`PipelineStats` for the run.
    """
    scenes = _load_scenes(cfg)
    with ExitStack() as stack:
        src = _open(cfg.input, "rb", stack)
        header = read_header(src)
        if cfg.range is not None:
            header = header.with_changes(range=cfg.range)
        colorspace = cfg.colorspace or header.resolved_colorspace()
        backend = resolve_backend(cfg, header, colorspace)
        d = backend.network
        validate_descriptor(d)
        if colorspace not in d.colorspaces:
            raise ConfigError(f"model does not support colorspace {colorspace.value}")
        out_header = output_header(header, d)
        dst = _open(cfg.output, "wb", stack)
        return _run_stages(cfg, src, header, out_header, colorspace, scenes, backend, dst)


def _run_stages(cfg, src, header, out_header, colorspace, scenes, backend, dst):
    d = backend.network
    depth = d.n * d.batch
    in_q = queue.Queue(maxsize=depth)
    out_q = queue.Queue(maxsize=depth)
    stop = threading.Event()
    stats = PipelineStats()
    starts = set(scenes.starts) if scenes is not None else None
    detector = None
    if scenes is None:
        detector = SceneChangeDetector(
            cfg.scene_threshold if cfg.scene_threshold is not None else DEFAULT_THRESHOLD)
    container_fmt = header.pixel_format

    def read():
        try:
            for i, (params, planes) in enumerate(iter_raw_frames(src, header)):
                frame = decode_frame(header, planes, i, colorspace, params)
                is_start = (i in starts) if starts is not None else detector.is_scene_start(frame)
                frame = convert_frame(frame, d.pixel_format, colorspace)
                if not _put(in_q, (frame, is_start), stop):
                    return
        finally:
            _put(in_q, _DONE, stop)

    def write():
        writer = Y4MWriter(dst, out_header)
        expected = 0
        while True:
            item = _get(out_q, stop)
            if item is _DONE:
                break
            pres, frame = item
            if pres != expected:
                raise VepipeError(f"writer got frame {pres}, expected {expected}")
            expected += 1
            writer.write(convert_frame(frame, container_fmt, colorspace), params=b"")
            if cfg.on_write is not None:
                cfg.on_write(pres)
        dst.flush()

    def emit(pres, frame):
        if not _put(out_q, (pres, frame), stop):
            raise VepipeError("writer stopped")

    reader = _Worker(read, "vepipe-reader")
    writer = _Worker(write, "vepipe-writer")
    reader.start()
    writer.start()
    engine = Engine(backend, emit, cfg.regions, stats)
    error = None
    try:
        while True:
            item = _get(in_q, stop)
            if item is _DONE or writer.error is not None:
                break
            engine.push(*item)
        if reader.error is None and writer.error is None:
            engine.finish()
    except BaseException as e:
        error = e
    if error is None and reader.error is None and writer.error is None:
        _put(out_q, _DONE, stop)
    else:
        stop.set()
    reader.join()
    writer.join()
    for e in (error, reader.error, writer.error):
        if e is not None:
            raise e
    if starts is not None and stats.frames_in and max(starts) >= stats.frames_in:
        raise RangeError(
            f"scene start {max(starts)} beyond last frame {stats.frames_in - 1}")
    log.info("wrote %d frames from %d input frames (%d scenes, %d batches)",
             stats.frames_out, stats.frames_in, stats.scenes, stats.batches)
    return stats
