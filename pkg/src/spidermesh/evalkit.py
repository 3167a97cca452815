"""Confusion-matrix metrics, modality-dropout robustness and FLOP estimates."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch

from .datamodel import IGNORE_INDEX, Batch, ModelConfig, ModelParams, RgbtSample
from .errors import AllClassesUndefinedError, ShapeMismatchError, ValidationError
from .heads import forward, predict_labels
from .layers import count_flops
from .model import param_decl

MODALITY_MODES = ("both", "rgb-only", "thermal-only")


@dataclass
class ConfusionMatrix:
    """K x K pixel counts; rows are ground truth, columns are predictions."""

    num_classes: int
    counts: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.counts is None:
            self.counts = np.zeros((self.num_classes, self.num_classes), dtype=np.int64)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def accumulate(cm: ConfusionMatrix, pred, gt) -> None:
    """Add one count at ``[gt, pred]`` for every pixel whose ground truth is not ignored."""
    pred = np.asarray(pred).astype(np.int64)
    gt = np.asarray(gt).astype(np.int64)
    if pred.shape != gt.shape:
        raise ShapeMismatchError(f"pred {pred.shape} vs gt {gt.shape}", "pred")
    keep = gt != IGNORE_INDEX
    k = cm.num_classes
    g, p = gt[keep], pred[keep]
    if g.size and (g.min() < 0 or g.max() >= k or p.min() < 0 or p.max() >= k):
        raise ValidationError(f"class id outside 0..{k - 1}", "pred" if p.size and (p.min() < 0 or p.max() >= k) else "gt")
    cm.counts += np.bincount(g * k + p, minlength=k * k).reshape(k, k)


def miou(cm: ConfusionMatrix) -> tuple[list[float | None], float]:
    """Per-class IoU (``None`` where a class never occurs) and their mean over defined classes."""
    c = cm.counts.astype(np.float64)
    inter = np.diag(c)
    union = c.sum(axis=0) + c.sum(axis=1) - inter
    per_class = [float(i / u) if u > 0 else None for i, u in zip(inter, union)]
    defined = [v for v in per_class if v is not None]
    if not defined:
        raise AllClassesUndefinedError("no class occurs in predictions or ground truth")
    return per_class, float(np.mean(defined))


def drop_modality(batch: Batch, mode: str) -> Batch:
    """Zero the input of the modality the mode drops."""
    if mode not in MODALITY_MODES:
        raise ValidationError(f"unknown mode {mode!r}", "mode")
    if mode == "rgb-only":
        return Batch(batch.rgb, torch.zeros_like(batch.thermal), batch.label)
    if mode == "thermal-only":
        return Batch(torch.zeros_like(batch.rgb), batch.thermal, batch.label)
    return batch


@dataclass
class EvalResult:
    main: ConfusionMatrix
    aux: ConfusionMatrix
    finite: bool = True

    @property
    def miou_main(self) -> float:
        return miou(self.main)[1]

    @property
    def miou_aux(self) -> float:
        return miou(self.aux)[1]


def evaluate(params: ModelParams, cfg: ModelConfig, samples: Sequence[RgbtSample], mode: str = "both",
             batch_size: int = 8) -> EvalResult:
    """Confusion matrices of both heads over ``samples`` with the given modality mode."""
    dtype = next(iter(params.values())).dtype
    res = EvalResult(ConfusionMatrix(cfg.num_classes), ConfusionMatrix(cfg.num_classes))
    with torch.no_grad():
        for i in range(0, len(samples), batch_size):
            batch = drop_modality(Batch.from_samples(samples[i:i + batch_size], dtype), mode)
            out = forward(params, batch.rgb, batch.thermal, cfg)
            res.finite &= bool(torch.isfinite(out.main).all() and torch.isfinite(out.aux).all())
            gt = batch.label.numpy()
            accumulate(res.main, predict_labels(out.main).numpy(), gt)
            accumulate(res.aux, predict_labels(out.aux).numpy(), gt)
    return res


def robustness_eval(params: ModelParams, cfg: ModelConfig, dataset: Sequence[RgbtSample],
                    mode: str = "both") -> dict[str, float]:
    """mIoU of both heads with the dropped modality's input set to zero."""
    res = evaluate(params, cfg, dataset, mode)
    return {"main": res.miou_main, "aux": res.miou_aux, "finite": res.finite}


def estimate_flops(cfg: ModelConfig, input_size: tuple[int, int] | None = None) -> int:
    """Multiply-add count (2 * k^2 * C_in * C_out * H_out * W_out per conv) for one sample.

    The network is traced on the meta device, so only shapes are computed.
    """
    h, w = input_size or cfg.input_size
    params = ModelParams({p: torch.empty(shape, device="meta") for p, (shape, _) in param_decl(cfg).items()})
    rgb = torch.empty((1, 3, h, w), device="meta")
    thermal = torch.empty((1, 1, h, w), device="meta")
    with count_flops() as total, torch.no_grad():
        forward(params, rgb, thermal, cfg)
    return total[0]
