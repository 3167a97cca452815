"""Classifier heads, the full forward pass and label prediction."""
from __future__ import annotations

from typing import NamedTuple

import numpy as np
import torch

from .datamodel import ModelConfig, RgbtSample
from .encoder import dual_encode
from .layers import ParamDecl, conv2d, conv_decl, upsample
from .srm import AsppSpec, srm_decode


def head_decl(cfg: ModelConfig) -> ParamDecl:
    c = cfg.aspp_channels if cfg.use_srm else cfg.stage_channels[4]
    return {**conv_decl("rgb.head", c, cfg.num_classes, 1, init="xavier"),
            **conv_decl("thermal.head", c, cfg.num_classes, 1, init="xavier")}


def classify(fe: torch.Tensor, params, path: str) -> torch.Tensor:
    """1x1 conv from feature channels to class logits."""
    return conv2d(fe, params, path)


class Outputs(NamedTuple):
    main: torch.Tensor  # N x K x H x W, RGB branch fed with both enhanced features
    aux: torch.Tensor  # N x K x H x W, thermal branch alone
    demand_maps: list | None = None
    masks: list | None = None


def forward(params, rgb: torch.Tensor, thermal: torch.Tensor, cfg: ModelConfig,
            keep_maps: bool = False) -> Outputs:
    """Batched forward pass on N x 3 x H x W and N x 1 x H x W inputs."""
    size = tuple(rgb.shape[-2:])
    enc = dual_encode(rgb, thermal, params, cfg, keep_demand_maps=keep_maps)
    masks = [] if keep_maps else None
    if cfg.use_srm:
        spec = AsppSpec.from_config(cfg)
        fe_rgb = srm_decode(enc.rgb[4].data, enc.multimodal, params, "rgb.srm", spec, size, masks)
        fe_the = srm_decode(enc.thermal[4].data, enc.multimodal, params, "thermal.srm", spec, size, masks)
    else:
        # plain decoder: bilinear upsampling of the deepest features
        fe_rgb = upsample(enc.rgb[4].data, size)
        fe_the = upsample(enc.thermal[4].data, size)
    main = classify(fe_rgb + fe_the, params, "rgb.head")
    aux = classify(fe_the, params, "thermal.head")
    return Outputs(main, aux, enc.demand_maps if keep_maps else None, masks)


def sample_tensors(sample: RgbtSample, dtype=torch.float32) -> tuple[torch.Tensor, torch.Tensor]:
    rgb = torch.from_numpy(np.array(sample.rgb.transpose(2, 0, 1))).to(dtype)[None]
    thermal = torch.from_numpy(np.array(sample.thermal.transpose(2, 0, 1))).to(dtype)[None]
    return rgb, thermal


def forward_full(sample: RgbtSample, params, cfg: ModelConfig) -> tuple[np.ndarray, np.ndarray]:
    """Run one sample and return channel-last ``(H x W x K main, H x W x K aux)`` logits."""
    dtype = next(iter(params.values())).dtype
    rgb, thermal = sample_tensors(sample, dtype)
    with torch.no_grad():
        out = forward(params, rgb, thermal, cfg)
    return (out.main[0].permute(1, 2, 0).numpy(), out.aux[0].permute(1, 2, 0).numpy())


def predict_labels(logits):
    """Per-pixel argmax over the class axis; ties go to the lowest index.

    numpy input is channel-last (... x K); torch input is N x K x H x W.
    """
    if isinstance(logits, torch.Tensor):
        return torch.argmax(logits, dim=1)
    return np.argmax(np.asarray(logits), axis=-1)
