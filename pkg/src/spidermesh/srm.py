"""Spatial-aware recursive meshing decoder.

ASPP on the deepest fused feature, then three refinement steps that
upsample, gate a channel-reduced multimodal skip with a spatial mask computed
from the upsampled feature, concatenate and fuse.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import torch
import torch.nn.functional as F

from .datamodel import FeatureMap, ModelConfig
from .dtm import spatial_attention, spatial_attention_decl
from .errors import ScaleMismatchError, ValidationError
from .layers import ParamDecl, conv2d, conv_decl, upsample


@dataclass(frozen=True)
class AsppSpec:
    dilations: tuple[int, ...] = (2, 4, 8)
    out_channels: int = 256

    @classmethod
    def from_config(cls, cfg: ModelConfig) -> "AsppSpec":
        return cls(cfg.aspp_dilations, cfg.aspp_channels)


def aspp_decl(path: str, c_in: int, spec: AsppSpec) -> ParamDecl:
    c = spec.out_channels
    decl = conv_decl(f"{path}.b0", c_in, c, 1)
    for j, _ in enumerate(spec.dilations, start=1):
        decl.update(conv_decl(f"{path}.b{j}", c_in, c, 3))
    decl.update(conv_decl(f"{path}.proj", c * (len(spec.dilations) + 1), c, 1, init="xavier"))
    return decl


def refine_decl(path: str, c_u: int, c_m: int, c_red: int) -> ParamDecl:
    return {
        **conv_decl(f"{path}.reduce", c_m, c_red, 1, init="xavier"),
        **spatial_attention_decl(f"{path}.sa"),
        **conv_decl(f"{path}.fuse", c_u + c_red, c_u, 3),
    }


def srm_decl(path: str, cfg: ModelConfig) -> ParamDecl:
    spec = AsppSpec.from_config(cfg)
    decl = aspp_decl(f"{path}.aspp", cfg.stage_channels[4], spec)
    for i in (3, 2, 1):
        decl.update(refine_decl(f"{path}.refine{i}", spec.out_channels, cfg.stage_channels[i], cfg.reduced_channels))
    return decl


def aspp(f: torch.Tensor, spec: AsppSpec, params, path: str) -> torch.Tensor:
    """One 1x1 branch plus a 3x3 atrous branch per dilation, concatenated and projected."""
    if len(spec.dilations) == 0:
        raise ValidationError("no dilations", "dilations")
    branches = [F.relu(conv2d(f, params, f"{path}.b0"))]
    for j, d in enumerate(spec.dilations, start=1):
        branches.append(F.relu(conv2d(f, params, f"{path}.b{j}", padding=d, dilation=d)))
    return conv2d(torch.cat(branches, dim=1), params, f"{path}.proj")


def _check_parent(coarse: tuple[int, int], fine: tuple[int, int], what: str) -> None:
    # a stride-2 stage maps n -> ceil(n/2); invert that relation
    if any((n + 1) // 2 != m for n, m in zip(fine, coarse)):
        raise ScaleMismatchError(f"{tuple(fine)} is not the 2x parent scale of {tuple(coarse)}", what)


def refine_step(f_u: torch.Tensor, f_m: torch.Tensor, params, path: str,
                masks: list | None = None) -> torch.Tensor:
    """One meshing step: concat(Up(f_u), reduce(f_m) * SA(Up(f_u))) -> 3x3 fuse conv."""
    _check_parent(f_u.shape[-2:], f_m.shape[-2:], "f_m")
    up = upsample(f_u, f_m.shape[-2:])
    mask = spatial_attention(up, params, f"{path}.sa")
    if masks is not None:
        masks.append(mask.detach())
    skip = conv2d(f_m, params, f"{path}.reduce") * mask
    return F.relu(conv2d(torch.cat([up, skip], dim=1), params, f"{path}.fuse", padding=1))


def srm_decode(f4: torch.Tensor, f_m: Sequence[torch.Tensor | FeatureMap], params, path: str,
               spec: AsppSpec, out_size: tuple[int, int] | None = None,
               masks: list | None = None) -> torch.Tensor:
    """Decode the deepest feature by meshing with ``f_m = [f_m1, f_m2, f_m3]`` from fine to coarse.

    Refinement runs 3 -> 2 -> 1; the result is upsampled to ``out_size``
    (default: 4x the ``f_m1`` resolution).
    """
    skips = [m.data if isinstance(m, FeatureMap) else m for m in f_m]
    if len(skips) != 3:
        raise ScaleMismatchError(f"expected 3 skip features, got {len(skips)}", "f_m")
    f_u = aspp(f4, spec, params, f"{path}.aspp")
    for i in (3, 2, 1):
        f_u = refine_step(f_u, skips[i - 1], params, f"{path}.refine{i}", masks)
    if out_size is None:
        out_size = tuple(4 * n for n in skips[0].shape[-2:])
    return upsample(f_u, out_size)
