"""Supervised, cross-modal pseudo-supervised and combined training losses."""
from __future__ import annotations

import math

import numpy as np
import torch
import torch.nn.functional as F

from .augment import sample_rect
from .datamodel import IGNORE_INDEX, Batch, ModelConfig
from .errors import MissingLabelError, NonFiniteValueError, ShapeMismatchError
from .heads import forward, predict_labels


def ce_loss(logits: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean cross-entropy over non-ignored pixels; 0 when every pixel is ignored.

    ``logits`` is N x K x H x W, ``target`` N x H x W.
    """
    if logits.dim() != 4 or target.shape != (logits.shape[0],) + tuple(logits.shape[2:]):
        raise ShapeMismatchError(f"logits {tuple(logits.shape)} vs target {tuple(target.shape)}", "target")
    target = target.long()
    if not bool((target != IGNORE_INDEX).any()):
        return logits.sum() * 0.0
    return F.cross_entropy(logits, target, ignore_index=IGNORE_INDEX)


def supervised_loss(batch: Batch, params, cfg: ModelConfig) -> torch.Tensor:
    """CE of the main (RGB) head plus CE of the auxiliary (thermal) head against the label."""
    if batch.label is None:
        raise MissingLabelError("supervised loss needs labelled samples")
    out = forward(params, batch.rgb, batch.thermal, cfg)
    return ce_loss(out.main, batch.label) + ce_loss(out.aux, batch.label)


def pseudo_labels(batch: Batch, params, cfg: ModelConfig) -> tuple[torch.Tensor, torch.Tensor]:
    """Argmax labels of the RGB (main) and thermal (aux) heads, computed without gradient."""
    with torch.no_grad():
        out = forward(params, batch.rgb, batch.thermal, cfg)
        return predict_labels(out.main), predict_labels(out.aux)


def mask_rgb(rgb: torch.Tensor, rng: np.random.Generator, a_min: float, a_max: float,
             fill: float = 0.0) -> torch.Tensor:
    """Black out one random rectangle per image of an N x 3 x H x W batch."""
    out = rgb.clone()
    h, w = rgb.shape[-2:]
    for n in range(rgb.shape[0]):
        rows, cols = sample_rect(rng, h, w, a_min, a_max, fill).slices()
        out[n, :, rows, cols] = fill
    return out


def cross_pseudo_terms(main: torch.Tensor, aux: torch.Tensor, y_rgb: torch.Tensor,
                       y_the: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Each head is supervised by the *other* head's pseudo label."""
    return ce_loss(main, y_the), ce_loss(aux, y_rgb)


def unsupervised_loss(batch: Batch, params, cfg: ModelConfig, rng: np.random.Generator,
                      a_min: float = 0.1, a_max: float = 0.4) -> torch.Tensor:
    """Cross-modal pseudo supervision on an unlabelled batch.

    ``batch`` is expected to carry weak augmentation only.  Pseudo labels come
    from that batch; the supervised prediction sees the RGB input with one
    M-CutOut rectangle per image and the thermal input unchanged.
    """
    y_rgb, y_the = pseudo_labels(batch, params, cfg)
    out = forward(params, mask_rgb(batch.rgb, rng, a_min, a_max), batch.thermal, cfg)
    t_rgb, t_the = cross_pseudo_terms(out.main, out.aux, y_rgb, y_the)
    return t_rgb + t_the


def total_loss(l_s, l_u):
    """Unweighted sum of the supervised and unsupervised objectives."""
    for name, v in (("l_s", l_s), ("l_u", l_u)):
        x = float(v.detach() if isinstance(v, torch.Tensor) else v)
        if not math.isfinite(x):
            raise NonFiniteValueError(f"got {x}", name)
    return l_s + l_u
