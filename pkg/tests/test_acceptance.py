"""Acceptance criteria, one test each, with their runtime budgets.

A pass/fail line per criterion is printed in the pytest terminal summary,
or to stdout when this file is run directly.
"""

import functools
import io
import itertools
import subprocess
import sys
import time

import numpy as np
import pytest

from conftest import make_y4m, random_codes
from planning_oracle import oracle_runs
from vepipe.backend import FeaturePyramid, IdentityBackend, blend_backend, identity_backend
from vepipe.colorproc import (
    ColorSpace,
    PixelFormat,
    Range,
    VideoFrame,
    chroma_down_420,
    chroma_up_420,
    dequantize_plane,
    quantize_plane,
    rgb_to_yuv444,
    yuv444_to_rgb,
)
from vepipe.dcnv2 import DeformConvParams, deform_conv2d
from vepipe.framestore import (
    PLAIN,
    SHARED,
    StoreLayout,
    advance_region,
    memory_footprint,
    shared_slot_frame,
    shared_slot_offset,
)
from vepipe.grouper import plan_scene, schedule_outputs
from vepipe.model_desc import NetworkDescriptor, NetworkFlags
from vepipe.pipeline import PipelineConfig, run_pipeline
from vepipe.scenedetect import SceneList, scene_spans
from vepipe.y4m import iter_raw_frames, read_header

RESULTS = []


def criterion(number, title, budget):
    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            t0 = time.perf_counter()
            ok = False
            try:
                fn(*args, **kwargs)
                elapsed = time.perf_counter() - t0
                assert elapsed < budget, f"took {elapsed:.2f}s, budget {budget}s"
                ok = True
            finally:
                elapsed = time.perf_counter() - t0
                RESULTS.append(
                    f"AC{number:>2} {'PASS' if ok else 'FAIL'}  {title}  "
                    f"({elapsed:.2f}s / {budget}s)")
        return run
    return wrap


def _run(data, backend, starts, **kw):
    out = io.BytesIO()
    stats = run_pipeline(PipelineConfig(io.BytesIO(data), out, backend=backend,
                                        scene_list=SceneList.from_indices(starts), **kw))
    return out.getvalue(), stats


def _codes(data):
    src = io.BytesIO(data)
    header = read_header(src)
    return header, [np.concatenate([p.ravel() for p in planes])
                    for _, planes in iter_raw_frames(src, header)]


def _random_scenes(rng, total):
    k = int(rng.integers(0, min(total, 12)))
    return sorted(set(rng.integers(0, total, k).tolist()) | {0})


@criterion(1, "n=3, b=2 reference slot layout and boundary copy", 1)
def test_ac01_reference_layout():
    layout = StoreLayout(3, 2, 2)
    by_offset = {shared_slot_offset(k, j, 0, layout): shared_slot_frame(k, j, 0, 3)
                 for k in range(4) for j in range(2)}
    assert [by_offset[o] for o in range(7)] == [0, 3, 6, 1, 4, 2, 5]
    c = advance_region(0, layout)
    assert by_offset[c.src] == 6 and by_offset[c.dst] == 5


@criterion(2, "layout lanes contiguous, no duplicates, one copy per batch", 10)
def test_ac02_layout_generality():
    for n, b, regions in itertools.product(range(1, 6), range(1, 6), (2, 3)):
        layout = StoreLayout(n, b, regions)
        store = np.full(layout.shared_slots, -1)
        for t in range(10):
            r, f0 = t % regions, t * n * b
            copies = 0
            if t:
                c = advance_region(t - 1, layout)
                store[c.dst] = store[c.src]
                copies += 1
            for k, j in itertools.product(range(n + 1), range(b)):
                if t and (k, j) == (0, 0):
                    continue
                store[shared_slot_offset(k, j, r, layout)] = f0 + j * n + k
            assert copies == (1 if t else 0)
            for k in range(n + 1):
                offs = [shared_slot_offset(k, j, r, layout) for j in range(b)]
                assert offs == list(range(offs[0], offs[0] + b))
                assert [store[o] for o in offs] == [f0 + j * n + k for j in range(b)]
            region = store[layout.base(r):layout.base(r) + n * b + 1]
            assert len(set(region.tolist())) == n * b + 1
            assert sorted(region.tolist()) == list(range(f0, f0 + n * b + 1))


@criterion(3, "shared working set n*b+1 vs plain b*(n+1), formula and live run", 10)
def test_ac03_memory_saving():
    flags = NetworkFlags(True, True)
    for n, b in itertools.product(range(1, 6), range(1, 6)):
        layout = StoreLayout(n, b)
        shared, plain = memory_footprint(layout, SHARED), memory_footprint(layout, PLAIN)
        assert (shared, plain, plain - shared) == (n * b + 1, b * (n + 1), b - 1)
        frames = 3 * n * b + 2
        data = make_y4m(random_codes(np.random.default_rng(n * 10 + b), frames, 2, 2), 2, 2)
        _, stats = _run(data, identity_backend(n, flags, batch=b), [0])
        assert stats.shared_batches >= 2
        assert set(stats.shared_region_items) == {shared}
        assert stats.store_slots == layout.shared_slots < layout.plain_slots
        assert stats.region_copies == stats.shared_batches - 1


@criterion(4, "run planning agrees with brute-force grouping oracle", 30)
def test_ac04_grouping_oracle():
    for m, n, extra, interp in itertools.product(range(1, 41), range(1, 7), (0, 1), (0, 1)):
        d = NetworkDescriptor(n=n, flags=NetworkFlags(bool(interp), bool(extra)))
        plan = plan_scene(m, d)
        assert [(r.inputs, r.fresh_positions) for r in plan.runs] == oracle_runs(m, n, extra)
        fresh = [f for r in plan.runs for f in range(r.fresh_start, r.fresh_start + r.fresh_count)]
        assert fresh == list(range(m))
        assert len(plan.runs) == -(-m // n)
        assert schedule_outputs(plan, d).count == m * (2 if interp else 1)


@criterion(5, "identity backend output is byte-identical to input", 60)
def test_ac05_identity_end_to_end():
    rng = np.random.default_rng(5)
    for n, b in itertools.product((1, 2, 3), (1, 2, 4)):
        for extra in (False, True):
            total = int(rng.integers(1, 201))
            data = make_y4m(random_codes(rng, total, 8, 6), 8, 6)
            out, stats = _run(data, identity_backend(n, NetworkFlags(extra_frame=extra), batch=b),
                              _random_scenes(rng, total))
            assert out == data
            assert stats.frames_out == total


@criterion(6, "interpolation emits 2F frames, doubled fps, scene-end hold", 60)
def test_ac06_interpolation_accounting():
    rng = np.random.default_rng(6)
    for trial in range(12):
        n, b = int(rng.integers(1, 5)), int(rng.integers(1, 4))
        double = bool(trial % 2)
        total = int(rng.integers(1, 120))
        starts = _random_scenes(rng, total)
        data = make_y4m(random_codes(rng, total, 4, 4), 4, 4)
        out, stats = _run(data, blend_backend(n, NetworkFlags(True, True, double), batch=b), starts)
        header, frames = _codes(out)
        _, inputs = _codes(data)
        assert len(frames) == 2 * total
        assert header.fps == (50, 1)
        for _, end in scene_spans(SceneList.from_indices(starts), total):
            np.testing.assert_array_equal(frames[2 * (end - 1) + 1], inputs[end - 1])


class _CountingIdentity(IdentityBackend):
    def __init__(self, d):
        super().__init__(identity_backend(d.n, d.flags, batch=d.batch).descriptor)
        self.calls = 0

    def extract(self, frame):
        self.calls += 1
        return super().extract(frame)


@criterion(7, "exactly F extract calls per stream pass", 10)
def test_ac07_extract_cache():
    rng = np.random.default_rng(7)
    for n, b, extra in itertools.product((1, 3, 4), (1, 2, 3), (False, True)):
        total = int(rng.integers(1, 80))
        d = NetworkDescriptor(n=n, flags=NetworkFlags(extra, extra), batch=b)
        be = _CountingIdentity(d)
        data = make_y4m(random_codes(rng, total, 2, 2), 2, 2)
        _, stats = _run(data, be, _random_scenes(rng, total))
        assert be.calls == stats.extract_calls == total


def _direct_conv(x, w, stride, pad, groups):
    n, c, h, wd = x.shape
    co, cg, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wd + 2 * pad - kw) // stride + 1
    out = np.zeros((n, co, ho, wo))
    for o in range(co):
        g = o // (co // groups)
        for ci, ky, kx in itertools.product(range(cg), range(kh), range(kw)):
            patch = xp[:, g * cg + ci, ky:ky + stride * (ho - 1) + 1:stride,
                       kx:kx + stride * (wo - 1) + 1:stride]
            out[:, o] += w[o, ci, ky, kx] * patch
    return out


@criterion(8, "DCNv2 with zero offsets equals convolution; bilinear ramp", 30)
def test_ac08_dcn_reduction():
    rng = np.random.default_rng(8)
    for g, dg, k, s, _ in itertools.product((1, 2), (1, 2), (1, 3), (1, 2), range(3)):
        cin, cout = 2 * int(rng.integers(1, 4)), 2 * int(rng.integers(1, 3))
        nb, h, wd = int(rng.integers(1, 3)), int(rng.integers(3, 12)), int(rng.integers(3, 12))
        p = DeformConvParams(cin, cout, (k, k), (s, s), (k // 2, k // 2), 1, g, dg)
        x = rng.standard_normal((nb, cin, h, wd)).astype(np.float32)
        w = rng.standard_normal((cout, cin // g, k, k)).astype(np.float32)
        ho, wo = p.output_size(h, wd)
        off = np.zeros((nb, 2 * dg * k * k, ho, wo), np.float32)
        mask = np.ones((nb, dg * k * k, ho, wo), np.float32)
        got = deform_conv2d(x, off, mask, w, None, p)
        want = _direct_conv(x.astype(np.float64), w.astype(np.float64), s, k // 2, g)
        assert np.abs(got - want).max() <= 1e-5
    h, wd = 7, 8
    ramp = (np.arange(h)[:, None] + np.arange(wd)[None, :]).astype(np.float64)
    out = deform_conv2d(ramp[None, None], np.full((1, 2, h, wd), 0.5), np.ones((1, 1, h, wd)),
                        np.ones((1, 1, 1, 1)), None, DeformConvParams(1, 1, (1, 1)))[0, 0]
    assert np.abs(out[:-1, :-1] - (ramp[:-1, :-1] + 1)).max() <= 1e-6


@criterion(9, "colour conversion round trips and fixed points", 10)
def test_ac09_color():
    rng = np.random.default_rng(9)
    for cs in ColorSpace:
        rgb = rng.random((3, 32, 32)).astype(np.float32)
        f = VideoFrame.from_planes(list(rgb), PixelFormat.RGB, cs)
        back = yuv444_to_rgb(rgb_to_yuv444(f))
        assert max(np.abs(a - b).max() for a, b in zip(back.planes, f.planes)) <= 1e-6

        codes = rng.integers(0, 256, (3, 64, 64)).astype(np.uint8)
        f = VideoFrame.from_planes([dequantize_plane(c, 8, Range.FULL) for c in codes],
                                   PixelFormat.RGB, cs)
        back = yuv444_to_rgb(rgb_to_yuv444(f))
        out = np.stack([quantize_plane(p, 8, Range.FULL) for p in back.planes])
        assert np.abs(out.astype(int) - codes).max() <= 1

        gray = np.linspace(0, 1, 257)[None]
        yuv = rgb_to_yuv444(VideoFrame.from_planes([gray, gray, gray], PixelFormat.RGB, cs))
        assert np.array_equal(yuv.planes[0], gray)
        assert np.all(yuv.planes[1] == 0.5) and np.all(yuv.planes[2] == 0.5)

    y = rng.random((16, 16)).astype(np.float32)
    f = VideoFrame.from_planes([y, np.full((16, 16), 0.3, np.float32),
                                np.full((16, 16), 0.7, np.float32)], PixelFormat.YUV444)
    up = chroma_up_420(chroma_down_420(f))
    assert all(np.array_equal(a, b) for a, b in zip(up.planes, f.planes))


@criterion(10, "CLI runs are deterministic; output order strictly increasing", 30)
def test_ac10_determinism_and_order(tmp_path):
    rng = np.random.default_rng(10)
    src = tmp_path / "in.y4m"
    src.write_bytes(make_y4m(random_codes(rng, 60, 8, 6), 8, 6))
    outputs = []
    for i in range(2):
        dst = tmp_path / f"out{i}.y4m"
        argv = [sys.executable, "-m", "vepipe.cli", "--model", "blend", "--in", str(src),
                "--out", str(dst), "--n", "3", "--batch", "2", "--interpolation",
                "--extra-frame"]
        res = subprocess.run(argv, capture_output=True, check=False)
        assert res.returncode == 0, res.stderr
        outputs.append(dst.read_bytes())
    assert outputs[0] == outputs[1]

    order = []
    data = src.read_bytes()
    _run(data, blend_backend(2, NetworkFlags(True, True, True), batch=3), [0, 11, 40],
         on_write=order.append)
    assert order == list(range(120))


if __name__ == "__main__":
    code = pytest.main([__file__, "-q", "-p", "no:cacheprovider"])
    sys.exit(code)
