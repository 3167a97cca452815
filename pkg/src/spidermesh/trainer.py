"""SGD training loop, learning-rate schedule and the ablation driver."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
import torch

from .augment import AugmentConfig, augment_pipeline, hflip
from .datamodel import Batch, ModelConfig, ModelParams, RgbtSample
from .errors import DivergenceError, EmptyDatasetError, MissingLabelError, NonFiniteValueError, ValidationError
from .evalkit import evaluate
from .model import init_params
from .objectives import supervised_loss, total_loss, unsupervised_loss

log = logging.getLogger(__name__)

VARIANTS = ("baseline", "+dtm", "+srm", "+mcutout-full")
MODES = ("supervised", "semi")


@dataclass(frozen=True)
class TrainConfig:
    lr0: float = 1e-2
    momentum: float = 0.9
    weight_decay: float = 5e-4
    epochs: int = 200
    batch_size: int = 6
    decay_gamma: float = 0.95
    seed: int = 0
    mode: str = "supervised"
    variant: str = "+mcutout-full"
    unlabeled_frac: float = 0.5
    max_steps: int | None = None

    def __post_init__(self):
        if not self.lr0 > 0:
            raise ValidationError("must be positive", "lr0")
        if not 0 <= self.momentum < 1:
            raise ValidationError("must lie in [0, 1)", "momentum")
        if not 0 < self.decay_gamma <= 1:
            raise ValidationError("must lie in (0, 1]", "decay_gamma")
        if self.mode not in MODES:
            raise ValidationError(f"unknown mode {self.mode!r}", "mode")
        if self.variant not in VARIANTS:
            raise ValidationError(f"unknown variant {self.variant!r}", "variant")
        if self.batch_size < 1:
            raise ValidationError("must be >= 1", "batch_size")

    def replace(self, **changes) -> "TrainConfig":
        return replace(self, **changes)


def apply_variant(variant: str, model_cfg: ModelConfig, aug: AugmentConfig) -> tuple[ModelConfig, AugmentConfig]:
    """Switch the architecture and augmentation pieces an ablation variant enables."""
    if variant not in VARIANTS:
        raise ValidationError(f"unknown variant {variant!r}", "variant")
    rank = VARIANTS.index(variant)
    model_cfg = model_cfg.replace(use_dtm=rank >= 1, use_srm=rank >= 2)
    if rank < 3:
        aug = replace(aug, mcutout_prob=0.0)
    return model_cfg, aug


@dataclass
class OptimizerState:
    velocity: ModelParams
    step: int = 0


def sgd_step(params: ModelParams, grads: dict | ModelParams, state: OptimizerState, cfg: TrainConfig,
             lr: float | None = None) -> None:
    """In place: g' = g + wd*w; v = momentum*v + g'; w -= lr*v."""
    lr = cfg.lr0 if lr is None else lr
    for path, w in params.items():
        g = grads[path]
        if not bool(torch.isfinite(g).all()):
            raise NonFiniteValueError("non-finite gradient", path)
        with torch.no_grad():
            v = state.velocity[path]
            v.mul_(cfg.momentum).add_(g + cfg.weight_decay * w)
            w.sub_(lr * v)
    state.step += 1


def lr_at(epoch: int, cfg: TrainConfig) -> float:
    return cfg.lr0 * cfg.decay_gamma ** epoch


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    l_s: float
    l_u: float
    val_miou: float

    def line(self) -> str:
        return f"epoch={self.epoch} lr={self.lr:.6g} l_s={self.l_s:.6f} l_u={self.l_u:.6f} val_miou={self.val_miou:.6f}"


@dataclass
class TrainState:
    """Everything needed to continue a run exactly where it stopped."""

    params: ModelParams
    optimizer: OptimizerState
    rng: np.random.Generator
    epoch: int = 0
    best_params: ModelParams | None = None
    best_miou: float = -math.inf
    history: list[EpochRecord] = field(default_factory=list)
    step_losses: list[float] = field(default_factory=list)

    @classmethod
    def fresh(cls, model_cfg: ModelConfig, cfg: TrainConfig, params: ModelParams | None = None) -> "TrainState":
        if params is None:
            params = init_params(model_cfg, seed=cfg.seed)
        params = params.clone()
        return cls(params, OptimizerState(params.zeros_like()), np.random.default_rng(cfg.seed + 1))


def hide_labels(samples: Sequence[RgbtSample], frac: float, seed: int = 0
                ) -> tuple[list[RgbtSample], list[RgbtSample]]:
    """Split into ``(labelled, unlabelled)``, dropping the labels of a random ``frac`` of samples.

    Samples that already lack a label always land in the unlabelled part.
    """
    if not 0 <= frac < 1:
        raise ValidationError("must lie in [0, 1)", "unlabeled_frac")
    have = [s for s in samples if s.label is not None]
    rng = np.random.default_rng(seed)
    hidden = set(rng.choice(len(have), size=int(round(frac * len(have))), replace=False).tolist())
    labeled = [s for i, s in enumerate(have) if i not in hidden]
    unlabeled = [s.replace(label=None) for i, s in enumerate(have) if i in hidden]
    unlabeled += [s for s in samples if s.label is None]
    return labeled, unlabeled


def _weak(s: RgbtSample, rng: np.random.Generator) -> RgbtSample:
    return hflip(s) if rng.random() < 0.5 else s


def train(labeled: Sequence[RgbtSample], unlabeled: Sequence[RgbtSample] | None, cfg: TrainConfig,
          model_cfg: ModelConfig, aug: AugmentConfig = AugmentConfig(), val: Sequence[RgbtSample] | None = None,
          params: ModelParams | None = None, state: TrainState | None = None, until_epoch: int | None = None,
          on_epoch: Callable[[TrainState], None] | None = None) -> TrainState:
    """Train for ``cfg.epochs`` epochs (or up to ``until_epoch``), resuming from ``state`` if given.

    Each step draws one labelled batch; in semi mode it also draws one
    unlabelled batch and adds the cross-modal pseudo-supervision loss.
    ``model_cfg`` and ``aug`` are used as given; see :func:`apply_variant`.
    """
    if len(labeled) == 0:
        raise EmptyDatasetError("no labelled samples")
    if any(s.label is None for s in labeled):
        raise MissingLabelError("labelled split contains samples without labels")
    if cfg.mode == "semi" and not unlabeled:
        raise EmptyDatasetError("semi mode needs unlabelled samples")
    if state is None:
        state = TrainState.fresh(model_cfg, cfg, params)
    p, rng = state.params, state.rng
    p.requires_grad_(True)
    dtype = next(iter(p.values())).dtype
    last_epoch = cfg.epochs if until_epoch is None else min(until_epoch, cfg.epochs)
    bs = min(cfg.batch_size, len(labeled))
    while state.epoch < last_epoch:
        if cfg.max_steps is not None and state.optimizer.step >= cfg.max_steps:
            break
        lr = lr_at(state.epoch, cfg)
        order = rng.permutation(len(labeled))
        sum_s = sum_u = 0.0
        n_steps = 0
        for start in range(0, len(order) - bs + 1, bs):
            if cfg.max_steps is not None and state.optimizer.step >= cfg.max_steps:
                break
            samples = [augment_pipeline(labeled[i], rng, aug) for i in order[start:start + bs]]
            l_s = supervised_loss(Batch.from_samples(samples, dtype), p, model_cfg)
            l_u = torch.zeros((), dtype=dtype)
            if cfg.mode == "semi":
                idx = rng.choice(len(unlabeled), size=min(bs, len(unlabeled)), replace=False)
                weak = Batch.from_samples([_weak(unlabeled[i], rng) for i in idx], dtype)
                l_u = unsupervised_loss(weak, p, model_cfg, rng, aug.area_min, aug.area_max)
            try:
                loss = total_loss(l_s, l_u)
            except NonFiniteValueError as exc:
                raise DivergenceError(
                    f"non-finite loss at epoch {state.epoch} step {state.optimizer.step}: "
                    f"l_s={float(l_s.detach())} l_u={float(l_u.detach())}"
                ) from exc
            grads = torch.autograd.grad(loss, list(p.values()))
            sgd_step(p, dict(zip(p.keys(), grads)), state.optimizer, cfg, lr)
            state.step_losses.append(float(loss.detach()))
            sum_s += float(l_s.detach())
            sum_u += float(l_u.detach())
            n_steps += 1
        val_miou = math.nan
        if val:
            val_miou = evaluate(p, model_cfg, val).miou_main
            if val_miou > state.best_miou:
                state.best_miou, state.best_params = val_miou, p.clone()
        rec = EpochRecord(state.epoch, lr, sum_s / max(n_steps, 1), sum_u / max(n_steps, 1), val_miou)
        state.history.append(rec)
        state.epoch += 1
        log.info(rec.line())
        if on_epoch is not None:
            on_epoch(state)
    p.requires_grad_(False)
    return state


@dataclass
class AblationRow:
    variant: str
    per_seed: list[float]

    @property
    def mean(self) -> float:
        return float(np.mean(self.per_seed))


def run_ablation(train_set: Sequence[RgbtSample], val_set: Sequence[RgbtSample], model_cfg: ModelConfig,
                 cfg: TrainConfig, aug: AugmentConfig = AugmentConfig(), variants: Sequence[str] = VARIANTS,
                 seeds: Sequence[int] = (0, 1, 2)) -> list[AblationRow]:
    """Train every variant once per seed on the same data; report best validation mIoU of the main head."""
    rows = []
    for variant in variants:
        m_cfg, a_cfg = apply_variant(variant, model_cfg, aug)
        scores = []
        for seed in seeds:
            state = train(train_set, None, cfg.replace(seed=seed, variant=variant, mode="supervised"),
                          m_cfg, a_cfg, val=val_set)
            scores.append(state.best_miou)
            log.info("variant=%s seed=%d val_miou=%.4f", variant, seed, state.best_miou)
        rows.append(AblationRow(variant, scores))
    return rows


def format_table(rows: Sequence[AblationRow]) -> str:
    lines = [f"{'variant':<16}{'mean mIoU':>10}  per-seed"]
    for r in rows:
        lines.append(f"{r.variant:<16}{100 * r.mean:>10.2f}  " + " ".join(f"{100 * v:.2f}" for v in r.per_seed))
    return "\n".join(lines)
