import io

import numpy as np
import pytest

from vepipe.colorproc import ColorSpace, PixelFormat, VideoFrame


def make_y4m(frames_codes, width, height, chroma="420mpeg2", extra=""):
    """Build Y4M bytes from a list of per-frame code-plane lists."""
    header = f"YUV4MPEG2 W{width} H{height} F25:1 Ip A1:1 C{chroma}{extra}\n".encode()
    body = []
    for planes in frames_codes:
        body.append(b"FRAME\n")
        for p in planes:
            dtype = np.uint8 if p.dtype == np.uint8 else np.dtype("<u2")
            body.append(np.ascontiguousarray(p, dtype=dtype).tobytes())
    return header + b"".join(body)


def random_codes(rng, count, width, height, fmt=PixelFormat.YUV420, depth=8):
    cw, ch = (width // 2, height // 2) if fmt is PixelFormat.YUV420 else (width, height)
    dtype = np.uint8 if depth == 8 else np.uint16
    hi = 1 << depth
    return [[rng.integers(0, hi, (height, width), dtype=dtype),
             rng.integers(0, hi, (ch, cw), dtype=dtype),
             rng.integers(0, hi, (ch, cw), dtype=dtype)] for _ in range(count)]


def random_y4m(rng, count, width=8, height=6):
    return make_y4m(random_codes(rng, count, width, height), width, height)


def flat_frame(value, width=4, height=4, fmt=PixelFormat.YUV420, index=0,
               cs=ColorSpace.BT709):
    cw, ch = (width // 2, height // 2) if fmt is PixelFormat.YUV420 else (width, height)
    planes = [np.full((height, width), value, np.float32),
              np.full((ch, cw), 0.5, np.float32),
              np.full((ch, cw), 0.5, np.float32)]
    return VideoFrame(planes, width, height, fmt, cs, index)


def read_all(data):
    from vepipe.y4m import read_y4m
    header, frames = read_y4m(io.BytesIO(data))
    return header, list(frames)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS):
            terminalreporter.write_line(line)
