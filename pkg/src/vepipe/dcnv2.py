"""Modulated deformable convolution (DCNv2), forward pass on the CPU.

Tensor conventions follow ``torchvision.ops.deform_conv2d``:

* ``input``  ``[N, Cin, H, W]``
* ``offset`` ``[N, 2 * dg * kh * kw, Hout, Wout]``. Channel
  ``2 * (g * kh * kw + t)`` is the row displacement ``dy`` and the next
  channel is ``dx``, for deform group ``g`` and kernel tap ``t = ky * kw + kx``.
* ``mask``   ``[N, dg * kh * kw, Hout, Wout]``, channel ``g * kh * kw + t``.
* ``weight`` ``[Cout, Cin / groups, kh, kw]``, ``bias`` ``[Cout]``.

Input channel ``c`` belongs to deform group ``c // (Cin / dg)``. Samples are
bilinearly interpolated; neighbours outside the image contribute zero.
"""

import math
from dataclasses import dataclass

import numpy as np

from vepipe.errors import ShapeError


def _pair(v):
    if isinstance(v, int):
        return (v, v)
    a, b = v
    return (int(a), int(b))


@dataclass(frozen=True)
class DeformConvParams:
    in_channels: int
    out_channels: int
    kernel: tuple = (3, 3)
    stride: tuple = (1, 1)
    padding: tuple = (0, 0)
    dilation: tuple = (1, 1)
    groups: int = 1
    deform_groups: int = 1

    def __post_init__(self):
        for name in ("kernel", "stride", "padding", "dilation"):
            object.__setattr__(self, name, _pair(getattr(self, name)))
        if self.in_channels % self.groups or self.out_channels % self.groups:
            raise ShapeError(
                f"channels ({self.in_channels}, {self.out_channels}) not divisible "
                f"by groups={self.groups}")
        if self.in_channels % self.deform_groups:
            raise ShapeError(
                f"in_channels={self.in_channels} not divisible by "
                f"deform_groups={self.deform_groups}")

    def output_size(self, h, w):
        (kh, kw), (sh, sw), (ph, pw), (dh, dw) = (
            self.kernel, self.stride, self.padding, self.dilation)
        ho = (h + 2 * ph - dh * (kh - 1) - 1) // sh + 1
        wo = (w + 2 * pw - dw * (kw - 1) - 1) // sw + 1
        return ho, wo


def bilinear_sample(plane, y, x):
    """Sample ``plane`` at fractional ``(y, x)``; out-of-image neighbours read as 0."""
    h, w = plane.shape
    y0, x0 = math.floor(y), math.floor(x)
    ly, lx = y - y0, x - x0
    total = 0.0
    for yy, wy in ((y0, 1.0 - ly), (y0 + 1, ly)):
        if not 0 <= yy < h or wy == 0.0:
            continue
        for xx, wx in ((x0, 1.0 - lx), (x0 + 1, lx)):
            if 0 <= xx < w and wx != 0.0:
                total += wy * wx * float(plane[yy, xx])
    return total


def _bilinear_gather(img, py, px):
    """Vectorized bilinear sampling.

    ``img`` is ``[N, C, H, W]``; ``py``/``px`` are ``[N, P]`` sample
    coordinates. Returns ``[N, C, P]``.
    """
    n, c, h, w = img.shape
    y0 = np.floor(py)
    x0 = np.floor(px)
    ly = py - y0
    lx = px - x0
    y0 = y0.astype(np.intp)
    x0 = x0.astype(np.intp)
    flat = img.reshape(n, c, h * w)
    out = np.zeros((n, c, py.shape[1]), dtype=img.dtype)
    for dy, wy in ((0, 1.0 - ly), (1, ly)):
        yy = y0 + dy
        for dx, wx in ((0, 1.0 - lx), (1, lx)):
            xx = x0 + dx
            valid = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
            idx = np.where(valid, yy * w + xx, 0)
            wgt = np.where(valid, wy * wx, 0.0).astype(img.dtype)
            vals = np.take_along_axis(flat, np.broadcast_to(idx[:, None, :], (n, c, idx.shape[1])), axis=2)
            out += vals * wgt[:, None, :]
    return out


def _check_shapes(x, offset, mask, weight, bias, p):
    if x.ndim != 4:
        raise ShapeError(f"input must be 4-D, got shape {x.shape}")
    n, cin, h, w = x.shape
    kh, kw = p.kernel
    if cin != p.in_channels:
        raise ShapeError(f"input has {cin} channels, params say {p.in_channels}")
    ho, wo = p.output_size(h, w)
    if ho < 1 or wo < 1:
        raise ShapeError(f"input {h}x{w} too small for kernel {p.kernel}")
    k = kh * kw
    dg = p.deform_groups
    if offset.shape != (n, 2 * dg * k, ho, wo):
        raise ShapeError(f"offset shape {offset.shape}, expected {(n, 2 * dg * k, ho, wo)}")
    if mask is not None and mask.shape != (n, dg * k, ho, wo):
        raise ShapeError(f"mask shape {mask.shape}, expected {(n, dg * k, ho, wo)}")
    expected_w = (p.out_channels, cin // p.groups, kh, kw)
    if weight.shape != expected_w:
        raise ShapeError(f"weight shape {weight.shape}, expected {expected_w}")
    if bias is not None and bias.shape != (p.out_channels,):
        raise ShapeError(f"bias shape {bias.shape}, expected {(p.out_channels,)}")
    return n, cin, h, w, ho, wo


def deform_conv2d(x, offset, mask, weight, bias, params):
    """Modulated deformable convolution.

    ``mask=None`` means an all-ones mask (plain DCNv1 behaviour); ``bias=None``
    means zero bias.

    Returns:
        ``[N, Cout, Hout, Wout]`` array in the dtype of ``x``.
    """
    x = np.asarray(x)
    offset = np.asarray(offset)
    weight = np.asarray(weight)
    n, cin, h, w, ho, wo = _check_shapes(x, offset, mask, weight, bias, params)
    (kh, kw), (sh, sw), (ph, pw), (dh, dw) = (
        params.kernel, params.stride, params.padding, params.dilation)
    k = kh * kw
    dg, g = params.deform_groups, params.groups
    cpg_def = cin // dg
    dtype = np.result_type(x.dtype, np.float32)
    x = x.astype(dtype, copy=False)

    base_y = (np.arange(ho) * sh - ph)[:, None]
    base_x = (np.arange(wo) * sw - pw)[None, :]
    off = offset.reshape(n, dg, k, 2, ho, wo).astype(dtype, copy=False)
    msk = None if mask is None else np.asarray(mask).reshape(n, dg, k, ho, wo).astype(dtype, copy=False)

    # columns[n, ci, t, ho*wo]: modulated samples feeding tap t
    cols = np.empty((n, cin, k, ho * wo), dtype=dtype)
    for gi in range(dg):
        chans = slice(gi * cpg_def, (gi + 1) * cpg_def)
        for t in range(k):
            ky, kx = divmod(t, kw)
            py = (base_y + ky * dh + off[:, gi, t, 0]).reshape(n, -1)
            px = (base_x + kx * dw + off[:, gi, t, 1]).reshape(n, -1)
            s = _bilinear_gather(x[:, chans], py, px)
            if msk is not None:
                s *= msk[:, gi, t].reshape(n, 1, -1)
            cols[:, chans, t] = s

    cout = params.out_channels
    cin_g, cout_g = cin // g, cout // g
    out = np.empty((n, cout, ho * wo), dtype=dtype)
    wmat = weight.reshape(cout, cin_g, k).astype(dtype, copy=False)
    for gi in range(g):
        c_in = cols[:, gi * cin_g:(gi + 1) * cin_g]
        w_g = wmat[gi * cout_g:(gi + 1) * cout_g]
        out[:, gi * cout_g:(gi + 1) * cout_g] = np.einsum("ock,nckp->nop", w_g, c_in)
    if bias is not None:
        out += np.asarray(bias, dtype=dtype)[None, :, None]
    return out.reshape(n, cout, ho, wo)
