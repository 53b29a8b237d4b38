"""Inference backend contract, built-in backends and model directories.

A backend splits a network into two stages:

``extract(frame) -> FeaturePyramid``
    Per-frame work. Called at most once per frame thanks to
    :class:`FeatureCache`, even when a frame is shared by two runs.

``fuse(inputs) -> outputs``
    ``inputs`` holds one batched pyramid per input slot; every array in it
    has a leading lane dimension of size ``b``. ``outputs`` is a list of
    ``outputs_per_run()`` frame tensors, each a tuple of arrays with leading
    dimension ``b``. Networks emitting ``2n`` frames return them in
    presentation order: enhanced frame, intermediate after it, next frame, ...

Frame tensors are ``(rgb_or_yuv[3, H, W],)`` for RGB and YUV444 and
``(y[1, H, W], uv[2, H/2, W/2])`` for YUV420.

A model directory holds ``model.json`` plus opaque weight files, one per
supported colorspace::

    {
      "model_id": "cycmunet-x2",
      "engine": "onnx",
      "n": 2,
      "flags": {"interpolation": true, "extra_frame": true, "double_frame": true},
      "scale_x": 2, "scale_y": 2,
      "pixel_format": "yuv420",
      "pyramid_levels": 3,
      "channels": [64, 64, 64],
      "variants": {"bt709": "bt709.onnx", "bt601": "bt601.onnx"}
    }

``model_id`` values ``identity`` and ``blend`` select built-in backends that
need no weights. Other models are executed by an engine adapter registered
with :func:`register_engine`.
"""

import json
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from vepipe.colorproc import ColorSpace, PixelFormat, VideoFrame
from vepipe.errors import (
    EngineUnavailable,
    InvalidConfig,
    ManifestError,
    UnsupportedColorspace,
)
from vepipe.model_desc import NetworkDescriptor, NetworkFlags, validate_descriptor

log = logging.getLogger(__name__)

MANIFEST_NAME = "model.json"
BUILTIN_MODELS = ("identity", "blend")


@dataclass(frozen=True)
class FeaturePyramid:
    """Per-frame features, finest level first. Each level is a tuple of arrays."""

    levels: tuple

    def flatten(self):
        return tuple(a for level in self.levels for a in level)

    @property
    def structure(self):
        return tuple(len(level) for level in self.levels)

    @classmethod
    def unflatten(cls, arrays, structure):
        levels, i = [], 0
        for size in structure:
            levels.append(tuple(arrays[i:i + size]))
            i += size
        return cls(tuple(levels))


@dataclass(frozen=True)
class BackendDescriptor:
    network: NetworkDescriptor
    model_id: str
    variants: dict = field(default_factory=dict)
    channels: tuple = ()
    engine: str = "builtin"


def frame_to_tensors(frame):
    if frame.format is PixelFormat.YUV420:
        y, u, v = frame.planes
        return (y[None], np.stack([u, v]))
    return (np.stack(frame.planes),)


def tensors_to_frame(tensors, fmt, colorspace, frame_index=0):
    if fmt is PixelFormat.YUV420:
        y, uv = tensors
        planes = [y[0], uv[0], uv[1]]
    else:
        (t,) = tensors
        planes = [t[0], t[1], t[2]]
    return VideoFrame.from_planes(planes, fmt, colorspace, frame_index)


class Backend:
    """Base class for backends. Subclasses implement :meth:`extract` and :meth:`fuse`."""

    def __init__(self, descriptor):
        self.descriptor = descriptor

    @property
    def network(self):
        return self.descriptor.network

    def extract(self, frame):
        raise NotImplementedError

    def fuse(self, inputs):
        raise NotImplementedError


class IdentityBackend(Backend):
    """Returns its inputs; intermediate frames hold the preceding frame."""

    def extract(self, frame):
        return FeaturePyramid((frame_to_tensors(frame),))

    def fuse(self, inputs):
        d = self.network
        frames = [p.levels[0] for p in inputs]
        if d.flags.double_frame:
            return [frames[q] for q in range(d.n) for _ in (0, 1)]
        return frames[:d.n]


class BlendBackend(IdentityBackend):
    """Intermediate frame = per-sample mean of its two neighbours."""

    def fuse(self, inputs):
        d = self.network
        frames = [p.levels[0] for p in inputs]
        out = []
        for q in range(d.n):
            # without a lookahead slot the last intermediate holds its frame
            nxt = frames[q + 1] if q + 1 < len(frames) else frames[q]
            mid = tuple(0.5 * a + 0.5 * b for a, b in zip(frames[q], nxt))
            if d.flags.double_frame:
                out.append(frames[q])
            out.append(mid)
        return out


def _builtin_network(n, flags, scale_x=1, scale_y=1, **kw):
    d = NetworkDescriptor(n=n, flags=flags, scale_x=Fraction(scale_x),
                          scale_y=Fraction(scale_y), **kw)
    validate_descriptor(d)
    return d


def identity_backend(n, flags=NetworkFlags(), scale=1, **kw):
    """Identity backend; see :class:`IdentityBackend`."""
    if Fraction(scale) != 1:
        raise InvalidConfig("identity backend only supports scale 1")
    d = _builtin_network(n, flags, **kw)
    return IdentityBackend(BackendDescriptor(d, "identity", channels=(3,)))


def blend_backend(n, flags, **kw):
    if not flags.interpolation:
        raise InvalidConfig("blend backend requires the interpolation flag")
    d = _builtin_network(n, flags, **kw)
    return BlendBackend(BackendDescriptor(d, "blend", channels=(3,)))


_BUILTIN_FACTORIES = {"identity": identity_backend, "blend": blend_backend}


def builtin_backend(model_id, network):
    """Instantiate a built-in backend for an existing network descriptor."""
    try:
        factory = _BUILTIN_FACTORIES[model_id]
    except KeyError:
        raise ManifestError(f"unknown built-in model {model_id!r}") from None
    if network.scale_x != 1 or network.scale_y != 1:
        raise InvalidConfig(f"built-in model {model_id!r} only supports scale 1")
    return factory(network.n, network.flags, batch=network.batch,
                   pixel_format=network.pixel_format,
                   colorspaces=network.colorspaces,
                   pyramid_levels=network.pyramid_levels)


_ENGINES = {}


def register_engine(name, factory):
    """Register ``factory(descriptor, weight_path) -> Backend`` for manifests with this engine."""
    _ENGINES[name] = factory


def unregister_engine(name):
    _ENGINES.pop(name, None)


def _require(manifest, key, kind):
    if key not in manifest:
        raise ManifestError(f"manifest missing field {key!r}")
    value = manifest[key]
    if kind is int and (isinstance(value, bool) or not isinstance(value, int)):
        raise ManifestError(f"manifest field {key!r} must be an integer, got {value!r}")
    if kind is not int and not isinstance(value, kind):
        raise ManifestError(f"manifest field {key!r} has wrong type: {value!r}")
    return value


def _fraction(value, key):
    try:
        f = Fraction(str(value))
    except (ValueError, ZeroDivisionError):
        raise ManifestError(f"manifest field {key!r} is not a number: {value!r}") from None
    return f


def parse_manifest(manifest):
    """Validate a decoded ``model.json`` and build its :class:`BackendDescriptor`."""
    if not isinstance(manifest, dict):
        raise ManifestError("manifest must be a JSON object")
    model_id = _require(manifest, "model_id", str)
    n = _require(manifest, "n", int)
    flags_raw = manifest.get("flags", {})
    if not isinstance(flags_raw, dict):
        raise ManifestError("manifest field 'flags' must be an object")
    unknown = set(flags_raw) - {"interpolation", "extra_frame", "double_frame"}
    if unknown:
        raise ManifestError(f"unknown flags {sorted(unknown)}")
    flags = NetworkFlags(**{k: bool(v) for k, v in flags_raw.items()})
    try:
        pixel_format = PixelFormat(manifest.get("pixel_format", "yuv420"))
    except ValueError:
        raise ManifestError(f"unknown pixel_format {manifest.get('pixel_format')!r}") from None
    levels = manifest.get("pyramid_levels", 1)
    if isinstance(levels, bool) or not isinstance(levels, int):
        raise ManifestError(f"pyramid_levels must be an integer, got {levels!r}")
    channels = manifest.get("channels")
    if channels is not None:
        if not isinstance(channels, list) or len(channels) != levels:
            raise ManifestError(
                f"channels must list one count per pyramid level ({levels}), got {channels!r}")
        channels = tuple(channels)

    builtin = model_id in BUILTIN_MODELS
    variants_raw = manifest.get("variants", {} if builtin else None)
    if variants_raw is None:
        raise ManifestError("manifest missing field 'variants'")
    if not isinstance(variants_raw, dict):
        raise ManifestError("manifest field 'variants' must be an object")
    try:
        variants = {ColorSpace.parse(k): v for k, v in variants_raw.items()}
    except ValueError as e:
        raise ManifestError(f"bad colorspace in variants: {e}") from None
    if not builtin and not variants:
        raise ManifestError("manifest lists no model variants")
    colorspaces = frozenset(variants) if variants else frozenset(ColorSpace)

    network = NetworkDescriptor(
        n=n, flags=flags,
        scale_x=_fraction(manifest.get("scale_x", 1), "scale_x"),
        scale_y=_fraction(manifest.get("scale_y", 1), "scale_y"),
        batch=manifest.get("batch", 1),
        pixel_format=pixel_format,
        colorspaces=colorspaces,
        pyramid_levels=levels,
    )
    try:
        validate_descriptor(network)
    except InvalidConfig as e:
        raise ManifestError(f"invalid network description: {e.reason}") from None
    engine = manifest.get("engine", "builtin" if builtin else "onnx")
    return BackendDescriptor(network, model_id, variants, channels or (), engine)


def read_manifest(model_dir):
    path = Path(model_dir) / MANIFEST_NAME
    try:
        with open(path, encoding="utf-8") as f:
            raw = json.load(f)
    except FileNotFoundError:
        raise ManifestError(f"no {MANIFEST_NAME} in {model_dir}") from None
    except json.JSONDecodeError as e:
        raise ManifestError(f"{path}: {e}") from None
    return raw


def load_backend(model_dir, cs, network=None):
    """Load the model variant for colorspace ``cs`` from ``model_dir``.

    Args:
        model_dir: directory containing ``model.json``.
        cs: colorspace of the video to process.
        network: optional descriptor replacing the manifest's (used when
            command-line options override manifest values).

    Returns:
        ``(backend, descriptor)``
    """
    desc = parse_manifest(read_manifest(model_dir))
    if network is not None:
        desc = BackendDescriptor(network, desc.model_id, desc.variants,
                                 desc.channels, desc.engine)
    if desc.model_id in BUILTIN_MODELS and not desc.variants:
        backend = builtin_backend(desc.model_id, desc.network)
        return backend, backend.descriptor
    if cs not in desc.variants:
        raise UnsupportedColorspace(cs.value)
    weights = Path(model_dir) / desc.variants[cs]
    if not weights.is_file():
        raise ManifestError(f"weight file {weights} for {cs.value} not found")
    if desc.model_id in BUILTIN_MODELS:
        backend = builtin_backend(desc.model_id, desc.network)
        return backend, backend.descriptor
    try:
        factory = _ENGINES[desc.engine]
    except KeyError:
        raise EngineUnavailable(
            f"no adapter registered for engine {desc.engine!r} (model {desc.model_id!r})"
        ) from None
    log.info("loading %s variant %s via %s", desc.model_id, weights.name, desc.engine)
    return factory(desc, weights), desc


class FeatureCache:
    """Index-keyed extract cache.

    ``calls`` counts backend extract invocations. Entries below the current
    region window are dropped with :meth:`evict_below`.
    """

    def __init__(self, backend):
        self.backend = backend
        self.entries = {}
        self.calls = 0
        self.peak = 0

    def get(self, frame):
        key = frame.frame_index
        pyramid = self.entries.get(key)
        if pyramid is None:
            pyramid = self.backend.extract(frame)
            self.calls += 1
            self.entries[key] = pyramid
            self.peak = max(self.peak, len(self.entries))
        return pyramid

    def evict_below(self, index):
        for key in [k for k in self.entries if k < index]:
            del self.entries[key]

    def __len__(self):
        return len(self.entries)


def extract_with_cache(frame, cache):
    return cache.get(frame)
