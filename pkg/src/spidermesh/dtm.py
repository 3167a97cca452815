"""Demand-guided target masking: cross-modal fusion driven by a learned demand map.

Each modality first re-weights its channels (denoising), then computes a
spatial demand map from its own denoised features and pulls in the other
modality's denoised features where that demand is high.
"""
from __future__ import annotations

import torch
import torch.nn.functional as F

from .errors import ShapeMismatchError
from .layers import ParamDecl, conv2d, conv_decl, open_sigmoid

SA_KERNEL = 7


def bottleneck_width(channels: int, reduction: int) -> int:
    return max(1, channels // reduction)


def channel_attention_decl(path: str, channels: int, reduction: int) -> ParamDecl:
    hidden = bottleneck_width(channels, reduction)
    return {
        **conv_decl(f"{path}.fc1", channels, hidden, 1),
        **conv_decl(f"{path}.fc2", hidden, channels, 1, init="xavier"),
    }


def spatial_attention_decl(path: str) -> ParamDecl:
    return conv_decl(f"{path}.conv", 2, 1, SA_KERNEL, init="xavier")


def modality_decl(path: str, channels: int, reduction: int) -> ParamDecl:
    return {**channel_attention_decl(f"{path}.ca", channels, reduction), **spatial_attention_decl(f"{path}.sa")}


def dtm_decl(path: str, channels: int, reduction: int) -> ParamDecl:
    return {**modality_decl(f"{path}.rgb", channels, reduction),
            **modality_decl(f"{path}.thermal", channels, reduction)}


def channel_attention(f: torch.Tensor, params, path: str) -> torch.Tensor:
    """N x C x 1 x 1 weights in (0, 1) from spatial max- and mean-pooled statistics.

    Both pooled vectors pass through the same two-layer bottleneck.
    """
    def mlp(v):
        return conv2d(F.relu(conv2d(v, params, f"{path}.fc1")), params, f"{path}.fc2")

    mx = torch.amax(f, dim=(2, 3), keepdim=True)
    mean = torch.mean(f, dim=(2, 3), keepdim=True)
    return open_sigmoid(mlp(mx) + mlp(mean))


def spatial_attention(f: torch.Tensor, params, path: str) -> torch.Tensor:
    """N x 1 x H x W map in (0, 1): channel max and mean, 7x7 conv, sigmoid."""
    stats = torch.cat([torch.amax(f, dim=1, keepdim=True), torch.mean(f, dim=1, keepdim=True)], dim=1)
    return open_sigmoid(conv2d(stats, params, f"{path}.conv", padding=SA_KERNEL // 2))


def channel_denoise(f: torch.Tensor, params, path: str) -> torch.Tensor:
    return channel_attention(f, params, f"{path}.ca") * f


def demand_map(fc: torch.Tensor, params, path: str) -> torch.Tensor:
    return spatial_attention(fc, params, f"{path}.sa")


def demand_guided_fuse(fc_self: torch.Tensor, fc_other: torch.Tensor, params, path: str,
                       record: list | None = None) -> torch.Tensor:
    """``fc_self + demand(fc_self) * fc_other``; the demand map uses ``path``'s SA weights."""
    if fc_self.shape != fc_other.shape:
        raise ShapeMismatchError(f"{tuple(fc_self.shape)} vs {tuple(fc_other.shape)}", "fc_other")
    m = demand_map(fc_self, params, path)
    if record is not None:
        record.append(m.detach())
    return fc_self + m * fc_other


def multimodal_sum(f_rgb: torch.Tensor, f_the: torch.Tensor) -> torch.Tensor:
    if f_rgb.shape != f_the.shape:
        raise ShapeMismatchError(f"{tuple(f_rgb.shape)} vs {tuple(f_the.shape)}", "f_the")
    return f_rgb + f_the


def dtm_forward(f_rgb: torch.Tensor, f_the: torch.Tensor, params, path: str,
                demand_maps: dict | None = None):
    """Return ``(f_rgb', f_the', f_m)`` for one encoder stage.

    ``f_m`` sums the raw inputs, before any denoising.  When ``demand_maps`` is
    a dict, the two demand maps are stored under ``"rgb"`` and ``"thermal"``.
    """
    if f_rgb.shape != f_the.shape:
        raise ShapeMismatchError(f"{tuple(f_rgb.shape)} vs {tuple(f_the.shape)}", "f_the")
    fc_rgb = channel_denoise(f_rgb, params, f"{path}.rgb")
    fc_the = channel_denoise(f_the, params, f"{path}.thermal")
    rec_rgb, rec_the = ([], []) if demand_maps is not None else (None, None)
    out_rgb = demand_guided_fuse(fc_rgb, fc_the, params, f"{path}.rgb", rec_rgb)
    out_the = demand_guided_fuse(fc_the, fc_rgb, params, f"{path}.thermal", rec_the)
    if demand_maps is not None:
        demand_maps["rgb"], demand_maps["thermal"] = rec_rgb[0], rec_the[0]
    return out_rgb, out_the, multimodal_sum(f_rgb, f_the)
