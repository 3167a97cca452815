"""Functional building blocks evaluated against a :class:`ModelParams` store.

Every layer looks its weights up by dotted path, so the same code serves
float32 training, float64 gradient checks and meta-device FLOP counting.
"""
from __future__ import annotations

import contextlib
from collections.abc import Mapping

import torch
import torch.nn.functional as F

# path -> (shape, init kind); kinds are "kaiming", "xavier", "zeros", "ones"
ParamDecl = dict[str, tuple[tuple[int, ...], str]]

_flop_counter: list[int] | None = None


@contextlib.contextmanager
def count_flops():
    """Collect 2*k*k*C_in*C_out*H_out*W_out for every conv executed inside the block.

    Yields a one-element list whose entry is the running total.
    """
    global _flop_counter
    prev, _flop_counter = _flop_counter, [0]
    try:
        yield _flop_counter
    finally:
        _flop_counter = prev


def conv_decl(path: str, c_in: int, c_out: int, k: int, bias: bool = True, init: str = "kaiming") -> ParamDecl:
    decl = {f"{path}.weight": ((c_out, c_in, k, k), init)}
    if bias:
        decl[f"{path}.bias"] = ((c_out,), "zeros")
    return decl


def norm_decl(path: str, c: int) -> ParamDecl:
    return {f"{path}.gamma": ((c,), "ones"), f"{path}.beta": ((c,), "zeros")}


def conv2d(x: torch.Tensor, params: Mapping, path: str, stride: int = 1, padding: int = 0,
           dilation: int = 1) -> torch.Tensor:
    w = params[f"{path}.weight"]
    b = params.get(f"{path}.bias") if f"{path}.bias" in params else None
    y = F.conv2d(x, w, b, stride=stride, padding=padding, dilation=dilation)
    if _flop_counter is not None:
        c_out, c_in, kh, kw = w.shape
        _flop_counter[0] += 2 * kh * kw * c_in * c_out * y.shape[-2] * y.shape[-1] * y.shape[0]
    return y


def instance_norm(x: torch.Tensor, params: Mapping, path: str, eps: float = 1e-5) -> torch.Tensor:
    """Per-instance normalisation over (C, H, W) followed by a per-channel affine map."""
    y = F.group_norm(x, 1, eps=eps)
    return y * params[f"{path}.gamma"][:, None, None] + params[f"{path}.beta"][:, None, None]


def upsample(x: torch.Tensor, size: tuple[int, int]) -> torch.Tensor:
    """Bilinear resize with half-pixel (align_corners=False) sampling."""
    if tuple(x.shape[-2:]) == tuple(size):
        return x
    return F.interpolate(x, size=tuple(size), mode="bilinear", align_corners=False)


def open_sigmoid(x: torch.Tensor) -> torch.Tensor:
    """Sigmoid kept strictly inside (0, 1) even where it saturates in floating point."""
    eps = torch.finfo(x.dtype).eps
    return torch.sigmoid(x).clamp(eps, 1.0 - eps)


def conv_norm_act_decl(path: str, c_in: int, c_out: int, k: int = 3) -> ParamDecl:
    return {**conv_decl(f"{path}.conv", c_in, c_out, k, bias=False), **norm_decl(f"{path}.norm", c_out)}


def conv_norm_act(x, params, path, stride=1, relu=True):
    k = params[f"{path}.conv.weight"].shape[-1]
    y = instance_norm(conv2d(x, params, f"{path}.conv", stride=stride, padding=k // 2), params, f"{path}.norm")
    return F.relu(y) if relu else y


def residual_block_decl(path: str, c: int) -> ParamDecl:
    return {**conv_norm_act_decl(f"{path}.a", c, c), **conv_norm_act_decl(f"{path}.b", c, c)}


def residual_block(x, params, path):
    y = conv_norm_act(x, params, f"{path}.a")
    y = conv_norm_act(y, params, f"{path}.b", relu=False)
    return F.relu(x + y)
