"""Spatial ops on (N, C, H, W) tensors: conv2d, conv_transpose2d, instance_norm.

Convolutions run as im2col + one sgemm; their input gradients are expressed
as convolutions again (dilate upstream grad, flip kernels), so everything
stays on the BLAS fast path.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .tensor import DimensionError, Tensor, _apply, register_op


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int):
    """Window-unfold a padded (N,C,H,W) array into (C*kh*kw, N*Ho*Wo)."""
    N, C = xp.shape[0], xp.shape[1]
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]
    Ho, Wo = win.shape[2], win.shape[3]
    cols = np.ascontiguousarray(win.transpose(1, 4, 5, 0, 2, 3)).reshape(
        C * kh * kw, N * Ho * Wo
    )
    return cols, Ho, Wo


def _conv_raw(xp: np.ndarray, w: np.ndarray, stride: int):
    """Valid cross-correlation of padded input with w (Cout,Cin,kh,kw)."""
    Cout, Cin, kh, kw = w.shape
    cols, Ho, Wo = _im2col(xp, kh, kw, stride)
    N = xp.shape[0]
    out = (w.reshape(Cout, -1) @ cols).reshape(Cout, N, Ho, Wo)
    if N > 1:
        out = np.ascontiguousarray(out.transpose(1, 0, 2, 3))
    else:
        out = out.reshape(N, Cout, Ho, Wo)
    return out, cols


def _dilate_pad(x: np.ndarray, stride: int, pt: int, pb: int, pl: int, pr: int) -> np.ndarray:
    """Insert (stride-1) zeros between pixels, then zero-pad, in one buffer."""
    if stride == 1 and pt == pb == pl == pr == 0:
        return x
    N, C, H, W = x.shape
    Hd, Wd = (H - 1) * stride + 1, (W - 1) * stride + 1
    buf = np.zeros((N, C, Hd + pt + pb, Wd + pl + pr), dtype=x.dtype)
    buf[:, :, pt : pt + Hd : stride, pl : pl + Wd : stride] = x
    return buf


def _pad_zeros(x: np.ndarray, pt: int, pb: int, pl: int, pr: int) -> np.ndarray:
    return _dilate_pad(x, 1, pt, pb, pl, pr)


def _conv_input_grad(g: np.ndarray, w: np.ndarray, stride: int, in_hw, pad: int):
    """Gradient wrt the *unpadded* conv2d input."""
    H, W = in_hw
    kh, kw = w.shape[2], w.shape[3]
    Hp, Wp = H + 2 * pad, W + 2 * pad
    gd = _dilate_pad(g, stride, kh - 1, kh - 1, kw - 1, kw - 1)
    w_flip = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    dxp, _ = _conv_raw(gd, w_flip, 1)
    # windows that never fit at the bottom/right edge receive zero gradient
    rh, rw = Hp - dxp.shape[2], Wp - dxp.shape[3]
    if rh or rw:
        dxp = _pad_zeros(dxp, 0, rh, 0, rw)
    if pad:
        dxp = dxp[:, :, pad : pad + H, pad : pad + W]
    return dxp


def conv2d(
    x: Tensor,
    w: Tensor,
    b: Optional[Tensor] = None,
    stride: int = 1,
    padding: int = 0,
) -> Tensor:
    """Cross-correlation; weight (Cout,Cin,kh,kw), zero padding."""
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise DimensionError(f"conv2d: need 4-d input/weight, got {x.shape} and {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise DimensionError(f"conv2d: channel mismatch, input {x.shape} vs weight {w.shape}")
    xp = _pad_zeros(x.data, padding, padding, padding, padding)
    out, cols = _conv_raw(xp, w.data, stride)
    if b is not None:
        out = out + b.data.reshape(1, -1, 1, 1)
    inputs = (x, w) if b is None else (x, w, b)
    ctx = {
        "cols": cols,
        "w": w.data,
        "stride": stride,
        "pad": padding,
        "in_hw": (x.shape[2], x.shape[3]),
        "wshape": w.shape,
    }
    return _apply("conv2d", inputs, out, ctx)


def _grad_mat(g: np.ndarray):
    """(N,Cout,Ho,Wo) grad as a (Cout, N*Ho*Wo) matrix."""
    N, Cout = g.shape[0], g.shape[1]
    if N > 1:
        return np.ascontiguousarray(g.transpose(1, 0, 2, 3)).reshape(Cout, -1)
    return g.reshape(Cout, -1)


@register_op("conv2d")
def _conv2d_bw(ctx, g):
    needs = ctx["needs"]
    gm = _grad_mat(g)
    dw = (gm @ ctx["cols"].T).reshape(ctx["wshape"]) if needs[1] else None
    dx = (
        _conv_input_grad(g, ctx["w"], ctx["stride"], ctx["in_hw"], ctx["pad"])
        if needs[0]
        else None
    )
    db = gm.sum(axis=1, dtype=np.float64).astype(np.float32) if len(needs) > 2 else None
    return [dx, dw, db]


def conv_transpose2d(
    x: Tensor,
    w: Tensor,
    b: Optional[Tensor] = None,
    stride: int = 2,
    padding: int = 1,
    output_padding: int = 1,
) -> Tensor:
    """Transposed conv; weight (Cin,Cout,kh,kw), torch-style geometry."""
    if x.shape[1] != w.shape[0]:
        raise DimensionError(
            f"conv_transpose2d: channel mismatch, input {x.shape} vs weight {w.shape}"
        )
    kh, kw = w.shape[2], w.shape[3]
    p = kh - 1 - padding
    if p < 0:
        raise DimensionError("conv_transpose2d: padding larger than kernel-1")
    xd = _dilate_pad(x.data, stride, p, p + output_padding, p, p + output_padding)
    w_flip = np.ascontiguousarray(w.data[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    out, cols = _conv_raw(xd, w_flip, 1)
    if b is not None:
        out = out + b.data.reshape(1, -1, 1, 1)
    inputs = (x, w) if b is None else (x, w, b)
    ctx = {
        "cols": cols,
        "w": w.data,
        "stride": stride,
        "p": p,
        "op": output_padding,
        "in_hw": (x.shape[2], x.shape[3]),
        "wshape": w.shape,
    }
    return _apply("conv_transpose2d", inputs, out, ctx)


@register_op("conv_transpose2d")
def _convt_bw(ctx, g):
    needs = ctx["needs"]
    Cout = g.shape[1]
    stride, p = ctx["stride"], ctx["p"]
    H, W = ctx["in_hw"]
    Cin, _, kh, kw = ctx["wshape"]
    gm = _grad_mat(g)
    dw = None
    if needs[1]:
        # weight grad against the flipped stride-1 kernel, then undo flip/transpose
        dwf = (gm @ ctx["cols"].T).reshape(Cout, Cin, kh, kw)
        dw = np.ascontiguousarray(dwf.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1])
    dx = None
    if needs[0]:
        # full stride-1 conv of g with the unflipped kernel
        # ((Cin,Cout,kh,kw) maps Cout grad channels -> Cin), crop, undilate
        gp = _pad_zeros(g, kh - 1, kh - 1, kw - 1, kw - 1)
        dxd, _ = _conv_raw(gp, ctx["w"], 1)
        Hd, Wd = (H - 1) * stride + 1, (W - 1) * stride + 1
        dx = dxd[:, :, p : p + Hd, p : p + Wd][:, :, ::stride, ::stride]
    db = gm.sum(axis=1, dtype=np.float64).astype(np.float32) if len(needs) > 2 else None
    return [dx, dw, db]


def instance_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-(sample, channel) normalization over H,W with affine params (C,)."""
    if x.data.ndim != 4:
        raise DimensionError(f"instance_norm: need 4-d input, got {x.shape}")
    # statistics accumulate in float64
    mu = x.data.mean(axis=(2, 3), keepdims=True, dtype=np.float64)
    var = (x.data * x.data).mean(axis=(2, 3), keepdims=True, dtype=np.float64) - mu * mu
    var = np.maximum(var, 0.0)
    s = np.sqrt(var + eps).astype(np.float32)
    xhat = (x.data - mu.astype(np.float32)) / s
    out = xhat * gamma.data.reshape(1, -1, 1, 1) + beta.data.reshape(1, -1, 1, 1)
    ctx = {"xhat": xhat, "s": s, "gamma": gamma.data}
    return _apply("instance_norm", (x, gamma, beta), out, ctx)


@register_op("instance_norm")
def _in_bw(ctx, g):
    needs = ctx["needs"]
    xhat, s, gamma = ctx["xhat"], ctx["s"], ctx["gamma"]
    dgamma = (g * xhat).sum(axis=(0, 2, 3), dtype=np.float64).astype(np.float32) if needs[1] else None
    dbeta = g.sum(axis=(0, 2, 3), dtype=np.float64).astype(np.float32) if needs[2] else None
    dx = None
    if needs[0]:
        dxhat = g * gamma.reshape(1, -1, 1, 1)
        m1 = dxhat.mean(axis=(2, 3), keepdims=True, dtype=np.float64).astype(np.float32)
        m2 = (dxhat * xhat).mean(axis=(2, 3), keepdims=True, dtype=np.float64).astype(np.float32)
        dx = (dxhat - m1 - xhat * m2) / s
    return [dx, dgamma, dbeta]
