"""Dual-branch five-stage encoder with a fusion module after every stage."""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple

import torch

from . import dtm
from .datamodel import FeatureMap, FeaturePyramid, ModelConfig
from .errors import ChannelMismatchError, ValidationError
from .layers import ParamDecl, conv_norm_act, conv_norm_act_decl, residual_block, residual_block_decl

BRANCHES = ("rgb", "thermal")
IN_CHANNELS = {"rgb": 3, "thermal": 1}
# stages whose summed raw features feed the decoder skips
SKIP_STAGES = (1, 2, 3)


@dataclass(frozen=True)
class StageSpec:
    in_channels: int
    out_channels: int
    block_count: int = 1
    downsample: int = 2

    def __post_init__(self):
        if self.block_count < 1:
            raise ValidationError("block_count must be >= 1", "block_count")
        if self.downsample != 2:
            raise ValidationError("stages always halve the resolution", "downsample")


def stage_specs(cfg: ModelConfig, branch: str) -> list[StageSpec]:
    widths = (IN_CHANNELS[branch],) + cfg.stage_channels
    return [StageSpec(widths[i], widths[i + 1], cfg.block_counts[i]) for i in range(5)]


def stage_decl(path: str, spec: StageSpec) -> ParamDecl:
    decl = conv_norm_act_decl(f"{path}.down", spec.in_channels, spec.out_channels)
    for b in range(1, spec.block_count):
        decl.update(residual_block_decl(f"{path}.block{b}", spec.out_channels))
    return decl


def encoder_decl(cfg: ModelConfig) -> ParamDecl:
    decl: ParamDecl = {}
    for branch in BRANCHES:
        for i, spec in enumerate(stage_specs(cfg, branch)):
            decl.update(stage_decl(f"{branch}.encoder.stage{i}", spec))
    if cfg.use_dtm:
        for i, c in enumerate(cfg.stage_channels):
            decl.update(dtm.dtm_decl(f"dtm.stage{i}", c, cfg.ca_reduction))
    return decl


def encode_stage(x: torch.Tensor, spec: StageSpec, params, path: str) -> torch.Tensor:
    """Strided 3x3 conv block (ceil(h/2) x ceil(w/2) output), then residual blocks."""
    if x.shape[1] != spec.in_channels:
        raise ChannelMismatchError(f"expected {spec.in_channels} channels, got {x.shape[1]}", path)
    y = conv_norm_act(x, params, f"{path}.down", stride=2)
    for b in range(1, spec.block_count):
        y = residual_block(y, params, f"{path}.block{b}")
    return y


class EncoderOutput(NamedTuple):
    rgb: FeaturePyramid
    thermal: FeaturePyramid
    multimodal: list[FeatureMap]  # stages 1..3 (scales 1/4, 1/8, 1/16)
    demand_maps: list[dict]


def dual_encode(rgb: torch.Tensor, thermal: torch.Tensor, params, cfg: ModelConfig,
                keep_demand_maps: bool = False) -> EncoderOutput:
    """Run both branches stage by stage, fusing after each stage.

    The fused (refined) features are what the next stage consumes.  With
    ``cfg.use_dtm`` off the branches stay independent.
    """
    if rgb.shape[1] != 3:
        raise ChannelMismatchError(f"rgb input needs 3 channels, got {rgb.shape[1]}", "rgb")
    if thermal.shape[1] != 1:
        raise ChannelMismatchError(f"thermal input needs 1 channel, got {thermal.shape[1]}", "thermal")
    specs = {b: stage_specs(cfg, b) for b in BRANCHES}
    x_rgb, x_the = rgb, thermal
    pyr_rgb, pyr_the, multimodal, demand = [], [], [], []
    for i in range(5):
        f_rgb = encode_stage(x_rgb, specs["rgb"][i], params, f"rgb.encoder.stage{i}")
        f_the = encode_stage(x_the, specs["thermal"][i], params, f"thermal.encoder.stage{i}")
        if cfg.use_dtm:
            maps = {} if keep_demand_maps else None
            x_rgb, x_the, f_m = dtm.dtm_forward(f_rgb, f_the, params, f"dtm.stage{i}", maps)
            if maps is not None:
                demand.append(maps)
        else:
            x_rgb, x_the = f_rgb, f_the
            f_m = dtm.multimodal_sum(f_rgb, f_the) if i in SKIP_STAGES else None
        scale = Fraction(1, 2 ** (i + 1))
        pyr_rgb.append(FeatureMap(x_rgb, scale))
        pyr_the.append(FeatureMap(x_the, scale))
        if i in SKIP_STAGES:
            multimodal.append(FeatureMap(f_m, scale))
    return EncoderOutput(FeaturePyramid(tuple(pyr_rgb)), FeaturePyramid(tuple(pyr_the)), multimodal, demand)
