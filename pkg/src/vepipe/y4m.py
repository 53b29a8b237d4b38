"""YUV4MPEG2 reading and writing.

Supported chroma tags: ``420``, ``420jpeg``, ``420paldv``, ``420mpeg2`` and
``444``, with ``p10`` / ``p16`` high bit depth variants (little-endian 16-bit
samples). Unknown ``X`` parameters are preserved verbatim so that reading and
writing a file reproduces it byte for byte. ``XCOLORRANGE=FULL|LIMITED`` is
honoured for the quantization range.
"""

import re
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from vepipe.colorproc import (
    ColorSpace,
    PixelFormat,
    Range,
    VideoFrame,
    dequantize,
    plane_shapes,
    quantize,
)
from vepipe.errors import (
    BadHeaderParam,
    BadSignature,
    DimensionError,
    FormatMismatch,
    TruncatedFrame,
)

SIGNATURE = b"YUV4MPEG2"
FRAME_MARKER = b"FRAME"
_MAX_LINE = 4096

_CHROMA = {
    "420": (PixelFormat.YUV420, 8),
    "420jpeg": (PixelFormat.YUV420, 8),
    "420paldv": (PixelFormat.YUV420, 8),
    "420mpeg2": (PixelFormat.YUV420, 8),
    "420p10": (PixelFormat.YUV420, 10),
    "420p16": (PixelFormat.YUV420, 16),
    "444": (PixelFormat.YUV444, 8),
    "444p10": (PixelFormat.YUV444, 10),
    "444p16": (PixelFormat.YUV444, 16),
}
_RATIO = re.compile(r"^(\d+):(\d+)$")


@dataclass
class StreamHeader:
    """Parsed stream header.

    ``params`` keeps the original ``(tag, value)`` tokens in file order; the
    typed fields are authoritative and are written back into them.
    """

    width: int
    height: int
    fps: tuple = (25, 1)
    interlace: str = "p"
    aspect: str = "1:1"
    chroma: str = "420mpeg2"
    range: Range = Range.LIMITED
    colorspace: ColorSpace = None
    params: list = field(default_factory=list)

    def __post_init__(self):
        num, den = self.fps
        if num <= 0 or den <= 0:
            raise BadHeaderParam("F", f"frame rate must be positive, got {num}:{den}")
        if self.width <= 0 or self.height <= 0:
            raise BadHeaderParam("W", f"dimensions must be positive, got {self.width}x{self.height}")
        if self.chroma not in _CHROMA:
            raise BadHeaderParam("C", f"unsupported chroma format {self.chroma!r}")
        if self.pixel_format is PixelFormat.YUV420 and (self.width % 2 or self.height % 2):
            raise DimensionError(
                f"4:2:0 stream needs even dimensions, got {self.width}x{self.height}")

    @property
    def pixel_format(self):
        return _CHROMA[self.chroma][0]

    @property
    def depth(self):
        return _CHROMA[self.chroma][1]

    @property
    def fps_fraction(self):
        return Fraction(*self.fps)

    @property
    def frame_bytes(self):
        sample = 1 if self.depth == 8 else 2
        shapes = plane_shapes(self.pixel_format, self.width, self.height)
        return sum(r * c for r, c in shapes) * sample

    def resolved_colorspace(self):
        """Declared colorspace, else BT.709 for HD heights and BT.601 below."""
        if self.colorspace is not None:
            return self.colorspace
        return ColorSpace.BT709 if self.height >= 720 else ColorSpace.BT601

    def to_bytes(self):
        values = {"W": str(self.width), "H": str(self.height),
                  "F": f"{self.fps[0]}:{self.fps[1]}", "I": self.interlace,
                  "A": self.aspect, "C": self.chroma}
        params = self.params or [(t, "") for t in "WHFIAC"]
        tokens, seen = [], set()
        for tag, value in params:
            if tag in values:
                value = values[tag]
                seen.add(tag)
            tokens.append(tag + value)
        defaults = {"I": "p", "A": "1:1", "C": "420jpeg"}
        for tag in "WHFIAC":
            if tag not in seen and values[tag] != defaults.get(tag):
                tokens.append(tag + values[tag])
        return SIGNATURE + b" " + " ".join(tokens).encode("ascii") + b"\n"

    def with_changes(self, **kw):
        return replace(self, params=list(self.params), **kw)


def parse_header(line):
    """Parse a header line (with or without the trailing newline)."""
    line = line.rstrip(b"\n")
    parts = line.split(b" ")
    if parts[0] != SIGNATURE:
        raise BadSignature(f"stream does not start with {SIGNATURE.decode()}")
    kw = {"chroma": "420jpeg"}
    params = []
    width = height = None
    for raw in parts[1:]:
        if not raw:
            continue
        try:
            token = raw.decode("ascii")
        except UnicodeDecodeError:
            raise BadHeaderParam(repr(raw[:1]), "non-ASCII parameter") from None
        tag, value = token[0], token[1:]
        params.append((tag, value))
        if tag in "WH":
            if not value.isdigit():
                raise BadHeaderParam(tag, value)
            if tag == "W":
                width = int(value)
            else:
                height = int(value)
        elif tag == "F":
            m = _RATIO.match(value)
            if not m:
                raise BadHeaderParam(tag, value)
            kw["fps"] = (int(m.group(1)), int(m.group(2)))
        elif tag == "I":
            if value not in ("p", "t", "b", "m", "?"):
                raise BadHeaderParam(tag, value)
            kw["interlace"] = value
        elif tag == "A":
            kw["aspect"] = value
        elif tag == "C":
            if value not in _CHROMA:
                raise BadHeaderParam(tag, f"unsupported chroma format {value!r}")
            kw["chroma"] = value
        elif tag == "X":
            key, _, val = value.partition("=")
            if key == "COLORRANGE":
                kw["range"] = Range.FULL if val.upper() == "FULL" else Range.LIMITED
            elif key == "COLORMATRIX":
                try:
                    kw["colorspace"] = ColorSpace.parse(val)
                except ValueError:
                    raise BadHeaderParam(tag, value) from None
        else:
            raise BadHeaderParam(tag, "unknown parameter")
    if width is None:
        raise BadHeaderParam("W", "missing")
    if height is None:
        raise BadHeaderParam("H", "missing")
    return StreamHeader(width, height, params=params, **kw)


def _readline(stream):
    line = stream.readline(_MAX_LINE)
    if line and not line.endswith(b"\n"):
        return line, False
    return line, True


def read_header(stream):
    line, complete = _readline(stream)
    if not line.startswith(SIGNATURE):
        raise BadSignature(f"stream does not start with {SIGNATURE.decode()}")
    if not complete:
        raise BadHeaderParam("header", "line too long or not terminated")
    return parse_header(line)


def iter_raw_frames(stream, header):
    """Yield ``(frame_params, code_planes)`` for every frame in the stream."""
    dtype = np.uint8 if header.depth == 8 else np.dtype("<u2")
    shapes = plane_shapes(header.pixel_format, header.width, header.height)
    size = header.frame_bytes
    index = 0
    while True:
        line, complete = _readline(stream)
        if not line:
            return
        if not line.startswith(FRAME_MARKER) or not complete:
            raise TruncatedFrame(index, "missing FRAME marker")
        payload = stream.read(size)
        if len(payload) != size:
            raise TruncatedFrame(index, f"expected {size} bytes, got {len(payload)}")
        flat = np.frombuffer(payload, dtype=dtype)
        planes, pos = [], 0
        for rows, cols in shapes:
            planes.append(flat[pos:pos + rows * cols].reshape(rows, cols))
            pos += rows * cols
        yield line[len(FRAME_MARKER):].rstrip(b"\n"), planes
        index += 1


def decode_frame(header, planes, index, colorspace=None, params=b""):
    floats = dequantize(planes, header.depth, header.range, header.pixel_format)
    frame = VideoFrame(floats, header.width, header.height, header.pixel_format,
                       colorspace or header.resolved_colorspace(), index)
    if params:
        frame.props["y4m_frame_params"] = params
    return frame


def read_y4m(stream, colorspace=None):
    """Read a Y4M stream.

    Returns:
        ``(header, frames)`` where ``frames`` lazily yields float
        :class:`VideoFrame` objects numbered from 0.
    """
    header = read_header(stream)

    def frames():
        for i, (params, planes) in enumerate(iter_raw_frames(stream, header)):
            yield decode_frame(header, planes, i, colorspace, params)

    return header, frames()


class Y4MWriter:
    def __init__(self, stream, header):
        self.stream = stream
        self.header = header
        self.frames_written = 0
        stream.write(header.to_bytes())

    def encode(self, frame):
        h = self.header
        if (frame.width, frame.height, frame.format) != (h.width, h.height, h.pixel_format):
            raise FormatMismatch(
                f"frame is {frame.format.value} {frame.width}x{frame.height}, stream is "
                f"{h.pixel_format.value} {h.width}x{h.height}")
        codes = quantize(frame.planes, h.depth, h.range, h.pixel_format)
        if h.depth > 8:
            codes = [c.astype("<u2", copy=False) for c in codes]
        return b"".join(np.ascontiguousarray(c).tobytes() for c in codes)

    def write(self, frame, params=None):
        payload = self.encode(frame)
        if params is None:
            params = frame.props.get("y4m_frame_params", b"")
        self.stream.write(FRAME_MARKER + params + b"\n")
        self.stream.write(payload)
        self.frames_written += 1


def write_y4m(stream, header, frames):
    writer = Y4MWriter(stream, header)
    for frame in frames:
        writer.write(frame)
    return writer.frames_written
