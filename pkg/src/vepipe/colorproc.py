"""Pixel formats, RGB/YUV matrix conversion, 4:2:0 resampling and quantization.

Frames are held as normalized floating point planes. Integer sample values
only exist at the I/O boundary (:func:`quantize` / :func:`dequantize`).

Chroma siting for 4:2:0 follows the MPEG-2 convention: chroma samples are
horizontally co-sited with even luma columns and vertically centred between
luma rows ``2i`` and ``2i + 1``.

Transfer characteristics are never applied; only the matrix and the
quantization range are converted.
"""

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from vepipe.errors import DimensionError, FormatMismatch


class ColorSpace(enum.Enum):
    BT601 = "bt601"
    BT709 = "bt709"
    BT2020 = "bt2020"

    @property
    def kr(self):
        return _COEFFS[self][0]

    @property
    def kb(self):
        return _COEFFS[self][1]

    @property
    def kg(self):
        return 1.0 - self.kr - self.kb

    @classmethod
    def parse(cls, text):
        key = str(text).strip().lower().replace("-", "").replace(".", "")
        key = {"601": "bt601", "709": "bt709", "2020": "bt2020",
               "bt470bg": "bt601", "smpte170m": "bt601",
               "bt2020nc": "bt2020", "bt2020ncl": "bt2020"}.get(key, key)
        return cls(key)


# (Kr, Kb) matrix coefficients from ITU-R BT.601, BT.709 and BT.2020.
_COEFFS = {
    ColorSpace.BT601: (0.299, 0.114),
    ColorSpace.BT709: (0.2126, 0.0722),
    ColorSpace.BT2020: (0.2627, 0.0593),
}


class PixelFormat(enum.Enum):
    RGB = "rgb"
    YUV444 = "yuv444"
    YUV420 = "yuv420"

    @property
    def is_yuv(self):
        return self is not PixelFormat.RGB


class Range(enum.Enum):
    LIMITED = "limited"
    FULL = "full"


SUPPORTED_DEPTHS = (8, 10, 16)


def plane_shapes(fmt, width, height):
    """Return the ``(rows, cols)`` shape of each of the three planes."""
    if fmt is PixelFormat.YUV420:
        if width % 2 or height % 2:
            raise DimensionError(f"YUV420 needs even dimensions, got {width}x{height}")
        chroma = (height // 2, width // 2)
        return [(height, width), chroma, chroma]
    return [(height, width)] * 3


@dataclass
class VideoFrame:
    """A single planar frame in normalized float representation.

    ``width`` and ``height`` are luma dimensions. Samples are nominally in
    ``[0, 1]``; limited-range footroom and headroom decode slightly outside
    that interval and is kept so that integer round trips stay exact.
    """

    planes: list
    width: int
    height: int
    format: PixelFormat
    colorspace: ColorSpace = ColorSpace.BT709
    frame_index: int = 0
    props: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.planes) != 3:
            raise DimensionError(f"expected 3 planes, got {len(self.planes)}")
        expected = plane_shapes(self.format, self.width, self.height)
        for i, (plane, shape) in enumerate(zip(self.planes, expected)):
            if plane.shape != shape:
                raise DimensionError(
                    f"plane {i} has shape {plane.shape}, expected {shape} for "
                    f"{self.format.value} {self.width}x{self.height}")

    @classmethod
    def from_planes(cls, planes, fmt, colorspace=ColorSpace.BT709, frame_index=0):
        height, width = planes[0].shape
        return cls(list(planes), width, height, fmt, colorspace, frame_index)

    def same_layout(self, other):
        return (self.width, self.height, self.format) == (
            other.width, other.height, other.format)

    def luma(self):
        """Luma plane used for content analysis (Y, or weighted RGB)."""
        if self.format.is_yuv:
            return self.planes[0]
        r, g, b = self.planes
        return 0.299 * r + 0.587 * g + 0.114 * b


def rgb_to_yuv_planes(r, g, b, cs):
    kr, kb = cs.kr, cs.kb
    # Kr*R + Kg*G + Kb*B written relative to G so grays map exactly
    y = g + kr * (r - g) + kb * (b - g)
    u = (b - y) / (2.0 * (1.0 - kb)) + 0.5
    v = (r - y) / (2.0 * (1.0 - kr)) + 0.5
    return y, u, v


def yuv_to_rgb_planes(y, u, v, cs):
    kr, kb, kg = cs.kr, cs.kb, cs.kg
    pb = u - 0.5
    pr = v - 0.5
    r = y + 2.0 * (1.0 - kr) * pr
    b = y + 2.0 * (1.0 - kb) * pb
    g = y - (kr * (r - y) + kb * (b - y)) / kg
    return r, g, b


def rgb_to_yuv444(frame, cs=None):
    """Convert an RGB frame to full-range float YUV 4:4:4.

    Args:
        frame: RGB :class:`VideoFrame`.
        cs: matrix to use; defaults to the frame's recorded colorspace.
    """
    if frame.format is not PixelFormat.RGB:
        raise FormatMismatch(f"expected RGB frame, got {frame.format.value}")
    cs = cs or frame.colorspace
    planes = rgb_to_yuv_planes(*frame.planes, cs)
    return replace(frame, planes=list(planes), format=PixelFormat.YUV444,
                   colorspace=cs)


def yuv444_to_rgb(frame, cs=None):
    """Inverse of :func:`rgb_to_yuv444`, clamped to ``[0, 1]``."""
    if frame.format is not PixelFormat.YUV444:
        raise FormatMismatch(f"expected YUV444 frame, got {frame.format.value}")
    cs = cs or frame.colorspace
    planes = [np.clip(p, 0.0, 1.0) for p in yuv_to_rgb_planes(*frame.planes, cs)]
    return replace(frame, planes=planes, format=PixelFormat.RGB, colorspace=cs)


def downsample_chroma_plane(c):
    """4:4:4 chroma plane -> 4:2:0 (MPEG-2 siting).

    Each output sample is the mean of the two vertically adjacent samples in
    the even column of its 2x2 block.
    """
    rows, cols = c.shape
    if rows % 2 or cols % 2:
        raise DimensionError(f"odd chroma plane dimensions {cols}x{rows}")
    even_cols = c[:, 0::2]
    return 0.5 * (even_cols[0::2] + even_cols[1::2])


def _upsample_axis(a, axis, out_len, offset):
    # Output sample t sits at source coordinate (t - offset) / 2.
    pos = (np.arange(out_len, dtype=np.float64) - offset) / 2.0
    n = a.shape[axis]
    pos = np.clip(pos, 0.0, n - 1)
    lo = np.floor(pos).astype(np.intp)
    hi = np.minimum(lo + 1, n - 1)
    w = (pos - lo).astype(a.dtype)
    shape = [1] * a.ndim
    shape[axis] = out_len
    w = w.reshape(shape)
    return np.take(a, lo, axis=axis) * (1 - w) + np.take(a, hi, axis=axis) * w


def upsample_chroma_plane(c):
    """4:2:0 chroma plane -> 4:4:4 by bilinear reconstruction (MPEG-2 siting)."""
    rows, cols = c.shape
    out = _upsample_axis(c, 1, cols * 2, 0.0)
    return _upsample_axis(out, 0, rows * 2, 0.5)


def chroma_down_420(frame):
    if frame.format is not PixelFormat.YUV444:
        raise FormatMismatch(f"expected YUV444 frame, got {frame.format.value}")
    if frame.width % 2 or frame.height % 2:
        raise DimensionError(
            f"4:2:0 needs even dimensions, got {frame.width}x{frame.height}")
    y, u, v = frame.planes
    return replace(frame, format=PixelFormat.YUV420,
                   planes=[y, downsample_chroma_plane(u), downsample_chroma_plane(v)])


def chroma_up_420(frame):
    if frame.format is not PixelFormat.YUV420:
        raise FormatMismatch(f"expected YUV420 frame, got {frame.format.value}")
    y, u, v = frame.planes
    return replace(frame, format=PixelFormat.YUV444,
                   planes=[y, upsample_chroma_plane(u), upsample_chroma_plane(v)])


def convert_frame(frame, target, cs=None):
    """Convert ``frame`` to pixel format ``target`` along the shortest path."""
    if frame.format is target:
        return frame
    cs = cs or frame.colorspace
    if frame.format is PixelFormat.YUV420:
        frame = chroma_up_420(frame)
    elif frame.format is PixelFormat.RGB:
        frame = rgb_to_yuv444(frame, cs)
    # frame is YUV444 here
    if target is PixelFormat.YUV444:
        return frame
    if target is PixelFormat.YUV420:
        return chroma_down_420(frame)
    return yuv444_to_rgb(frame, cs)


def _levels(depth, rng, chroma):
    if depth not in SUPPORTED_DEPTHS:
        raise ValueError(f"unsupported bit depth {depth}")
    if rng is Range.FULL:
        return 0.0, float((1 << depth) - 1)
    scale = float(1 << (depth - 8))
    if chroma:
        return 16.0 * scale, 224.0 * scale
    return 16.0 * scale, 219.0 * scale


def quantize_plane(plane, depth, rng, chroma=False):
    """Float plane -> integer codes, rounding half up and clamping to the code range."""
    lo, span = _levels(depth, rng, chroma)
    codes = np.floor(np.asarray(plane, dtype=np.float64) * span + lo + 0.5)
    np.clip(codes, 0, (1 << depth) - 1, out=codes)
    return codes.astype(np.uint8 if depth == 8 else np.uint16)


def dequantize_plane(codes, depth, rng, chroma=False, dtype=np.float32):
    lo, span = _levels(depth, rng, chroma)
    return ((np.asarray(codes, dtype=np.float64) - lo) / span).astype(dtype)


def quantize(planes, depth, rng, fmt=PixelFormat.YUV444):
    """Quantize three float planes. Planes 1 and 2 use chroma levels for YUV."""
    return [quantize_plane(p, depth, rng, chroma=fmt.is_yuv and i > 0)
            for i, p in enumerate(planes)]


def dequantize(planes, depth, rng, fmt=PixelFormat.YUV444, dtype=np.float32):
    return [dequantize_plane(p, depth, rng, chroma=fmt.is_yuv and i > 0, dtype=dtype)
            for i, p in enumerate(planes)]
