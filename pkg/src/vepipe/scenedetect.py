"""Scene boundaries: scene list files and a frame-difference detector."""

from dataclasses import dataclass

import numpy as np

from vepipe.errors import FormatMismatch, ParseError, RangeError

DEFAULT_THRESHOLD = 0.15


@dataclass(frozen=True)
class SceneList:
    """Sorted scene start indices. The first scene always starts at 0."""

    starts: tuple = (0,)

    def __post_init__(self):
        starts = tuple(self.starts)
        if not starts or starts[0] != 0:
            raise RangeError("scene list must start at frame 0")
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise RangeError(f"scene starts must be strictly increasing: {starts}")
        object.__setattr__(self, "starts", starts)

    @classmethod
    def from_indices(cls, indices):
        indices = set(indices)
        bad = [i for i in indices if i < 0]
        if bad:
            raise RangeError(f"negative scene start {min(bad)}")
        return cls(tuple(sorted(indices | {0})))

    def __contains__(self, index):
        return index in set(self.starts)


def parse_scene_list(text):
    """Parse one frame index per line; blank lines and ``#`` comments are skipped.

    >>> parse_scene_list("300\\n120\\n120\\n").starts
    (0, 120, 300)
    """
    if not isinstance(text, str):
        text = text.read()
    indices = []
    for line_no, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        try:
            value = int(s, 10)
        except ValueError:
            raise ParseError(line_no, line) from None
        if value < 0:
            raise RangeError(f"line {line_no}: negative frame index {value}")
        indices.append(value)
    return SceneList.from_indices(indices)


def scene_spans(scenes, total):
    """Split ``[0, total)`` into half-open ``(start, end)`` intervals at each scene start."""
    if total < 1:
        raise RangeError(f"total frame count must be positive, got {total}")
    starts = scenes.starts
    if starts[-1] >= total:
        raise RangeError(f"scene start {starts[-1]} beyond last frame {total - 1}")
    ends = starts[1:] + (total,)
    return list(zip(starts, ends))


def luma_mad(a, b):
    """Mean absolute luma difference of two frames, clipped to ``[0, 1]``."""
    la = np.clip(a.luma(), 0.0, 1.0)
    lb = np.clip(b.luma(), 0.0, 1.0)
    return float(np.mean(np.abs(la.astype(np.float64) - lb)))


class SceneChangeDetector:
    """Streaming hard-cut detector.

    Frame ``i > 0`` starts a new scene when the mean absolute luma difference
    to frame ``i - 1`` exceeds ``threshold``. Only the previous frame is kept.
    """

    def __init__(self, threshold=DEFAULT_THRESHOLD):
        if not 0.0 < threshold <= 1.0:
            raise ValueError(f"threshold must be in (0, 1], got {threshold}")
        self.threshold = threshold
        self._prev = None

    def is_scene_start(self, frame):
        prev, self._prev = self._prev, frame
        if prev is None:
            return True
        if not prev.same_layout(frame):
            raise FormatMismatch(
                f"frame {frame.frame_index} is {frame.format.value} "
                f"{frame.width}x{frame.height}, previous was "
                f"{prev.format.value} {prev.width}x{prev.height}")
        return luma_mad(prev, frame) > self.threshold


def detect_scene_changes(frames, threshold=DEFAULT_THRESHOLD):
    detector = SceneChangeDetector(threshold)
    return SceneList.from_indices(
        i for i, frame in enumerate(frames) if detector.is_scene_start(frame))
