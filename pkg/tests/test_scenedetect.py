import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import flat_frame
from vepipe.colorproc import PixelFormat, VideoFrame
from vepipe.errors import FormatMismatch, ParseError, RangeError
from vepipe.scenedetect import (
    SceneList,
    detect_scene_changes,
    parse_scene_list,
    scene_spans,
)


@pytest.mark.parametrize("text,starts", [
    ("0\n120\n300\n", (0, 120, 300)),
    ("", (0,)),
    ("300\n120\n120\n", (0, 120, 300)),
    ("# cuts\n\n  42  \n", (0, 42)),
])
def test_parse_scene_list(text, starts):
    assert parse_scene_list(text).starts == starts


def test_parse_from_stream():
    assert parse_scene_list(io.StringIO("5\n")).starts == (0, 5)


def test_parse_errors():
    with pytest.raises(ParseError) as info:
        parse_scene_list("10\nabc\n")
    assert info.value.line_no == 2
    with pytest.raises(RangeError):
        parse_scene_list("-3\n")


@pytest.mark.parametrize("starts,total,spans", [
    ((0, 120, 300), 450, [(0, 120), (120, 300), (300, 450)]),
    ((0,), 7, [(0, 7)]),
    ((0, 1, 2), 3, [(0, 1), (1, 2), (2, 3)]),
])
def test_scene_spans(starts, total, spans):
    assert scene_spans(SceneList(starts), total) == spans


def test_scene_spans_rejects_start_past_end():
    with pytest.raises(RangeError):
        scene_spans(SceneList((0, 5)), 5)


@given(st.integers(1, 200).flatmap(
    lambda t: st.tuples(st.just(t), st.sets(st.integers(0, t - 1)))))
def test_spans_partition(args):
    total, starts = args
    spans = scene_spans(SceneList.from_indices(starts), total)
    assert spans[0][0] == 0 and spans[-1][1] == total
    for (a, b), (c, _) in zip(spans, spans[1:]):
        assert b == c
    assert all(a < b for a, b in spans)


def test_constant_stream_is_one_scene():
    frames = [flat_frame(0.0, index=i) for i in range(10)]
    assert detect_scene_changes(frames, 0.1).starts == (0,)


def test_black_to_white_cut():
    frames = [flat_frame(0.0 if i < 5 else 1.0, index=i) for i in range(10)]
    assert detect_scene_changes(frames, 0.5).starts == (0, 5)


def test_ramp_below_threshold():
    # horizontal ramp shifted by 0.02 per frame: every sample moves by 0.02,
    # so the mean absolute difference is exactly 0.02 per step
    base = np.tile(np.linspace(0.0, 0.5, 8, dtype=np.float64), (4, 1))
    frames = []
    for i in range(10):
        y = (base + 0.02 * i).astype(np.float32)
        c = np.full((2, 4), 0.5, np.float32)
        frames.append(VideoFrame([y, c, c.copy()], 8, 4, PixelFormat.YUV420, frame_index=i))
    from vepipe.scenedetect import luma_mad
    assert luma_mad(frames[0], frames[1]) == pytest.approx(0.02, abs=1e-6)
    assert detect_scene_changes(frames, 0.1).starts == (0,)
    assert detect_scene_changes(frames, 0.01).starts == tuple(range(10))


def test_rgb_uses_weighted_luma():
    planes = [np.zeros((2, 2), np.float32) for _ in range(3)]
    black = VideoFrame(planes, 2, 2, PixelFormat.RGB)
    green = VideoFrame([planes[0], np.ones((2, 2), np.float32), planes[2]], 2, 2,
                       PixelFormat.RGB, frame_index=1)
    assert detect_scene_changes([black, green], 0.58).starts == (0, 1)
    assert detect_scene_changes([black, green], 0.59).starts == (0,)


def test_detection_is_repeatable():
    rng = np.random.default_rng(3)
    frames = [flat_frame(float(v), index=i) for i, v in enumerate(rng.random(30))]
    assert detect_scene_changes(frames, 0.3) == detect_scene_changes(frames, 0.3)


def test_format_change_mid_stream():
    frames = [flat_frame(0.0, 4, 4), flat_frame(0.0, 6, 4, index=1)]
    with pytest.raises(FormatMismatch):
        detect_scene_changes(frames)


@pytest.mark.parametrize("t", [0.0, -0.1, 1.5])
def test_threshold_range(t):
    with pytest.raises(ValueError):
        detect_scene_changes([], t)
