"""Central finite-difference checks of autograd gradients at float64.

For a scalar function of named tensors, every (or a random subset of)
entry is nudged by +-eps and ``(f(x+eps) - f(x-eps)) / 2eps`` is compared
with the autograd gradient.  The error of one tensor is
``max|analytic - numeric| / max(max|analytic|, max|numeric|)`` over the
checked entries, where the denominator also includes the largest analytic
entry of the whole tensor.  ``global_error`` applies the same formula to all
tensors of a case at once, which stays meaningful for parameter groups whose
gradient is orders of magnitude below the rest (there float64 roundoff in the
loss, roughly 1e-10 / eps, dominates a per-tensor ratio).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np
import torch

from .datamodel import Batch, ModelConfig, ModelParams
from .dtm import dtm_decl, dtm_forward
from .encoder import StageSpec, encode_stage, stage_decl
from .heads import classify
from .layers import conv_decl
from .model import init_params, _init_array
from .objectives import supervised_loss
from .srm import AsppSpec, aspp, aspp_decl, refine_decl, refine_step, srm_decl, srm_decode

DTYPE = torch.float64


@dataclass
class GradCheckResult:
    case: str
    errors: dict[str, float]
    checked: int
    global_error: float = 0.0

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    def passed(self, tol: float, per_tensor: bool = False) -> bool:
        return (self.max_error if per_tensor else self.global_error) <= tol


def check_gradients(fn: Callable[[Mapping[str, torch.Tensor]], torch.Tensor],
                    tensors: Mapping[str, torch.Tensor], eps: float = 1e-6,
                    max_entries: int | None = None, seed: int = 0, case: str = "") -> GradCheckResult:
    """Compare autograd and central differences for every tensor in ``tensors``.

    ``max_entries`` caps the number of entries probed per tensor (chosen at
    random); ``None`` probes all of them.
    """
    rng = np.random.default_rng(seed)
    leaves = {k: v.detach().clone().to(DTYPE).requires_grad_(True) for k, v in tensors.items()}
    analytic = torch.autograd.grad(fn(leaves), list(leaves.values()), allow_unused=True)
    errors, checked = {}, 0
    diff_max = scale_max = 0.0
    with torch.no_grad():
        for (name, t), g in zip(leaves.items(), analytic):
            g = torch.zeros_like(t) if g is None else g
            flat, gflat = t.view(-1), g.reshape(-1)
            n = flat.numel()
            idx = np.arange(n) if max_entries is None or n <= max_entries else rng.choice(n, max_entries, replace=False)
            num = np.empty(len(idx))
            for j, i in enumerate(idx):
                orig = flat[i].item()
                flat[i] = orig + eps
                hi = fn(leaves).item()
                flat[i] = orig - eps
                lo = fn(leaves).item()
                flat[i] = orig
                num[j] = (hi - lo) / (2 * eps)
            ana = gflat[torch.as_tensor(idx)].numpy()
            diff = float(np.abs(ana - num).max(initial=0.0))
            scale = max(float(g.abs().max()) if n else 0.0, np.abs(num).max(initial=0.0))
            errors[name] = 0.0 if scale == 0 else diff / scale
            diff_max, scale_max = max(diff_max, diff), max(scale_max, scale)
            checked += len(idx)
    return GradCheckResult(case, errors, checked, 0.0 if scale_max == 0 else diff_max / scale_max)


def _params(decl, seed: int) -> dict[str, torch.Tensor]:
    rng = np.random.default_rng(seed)
    out = {}
    for path, (shape, kind) in decl.items():
        # biases and affine terms get random values too so every path is exercised
        base = _init_array(shape, "xavier" if kind in ("zeros", "ones") and len(shape) > 1 else kind, rng)
        if kind in ("zeros", "ones"):
            base = base + rng.normal(0, 0.3, size=shape)
        out[path] = torch.from_numpy(np.asarray(base, dtype=np.float64))
    return out


def _projection(fn, out_shape, seed):
    w = torch.from_numpy(np.random.default_rng(seed + 99).normal(size=out_shape))

    def loss(t):
        return (fn(t) * w).sum()
    return loss


def _split(t: Mapping[str, torch.Tensor]):
    x = {k: v for k, v in t.items() if k.startswith("input.")}
    return x, ModelParams({k: v for k, v in t.items() if not k.startswith("input.")})


def case_encode_stage(seed=0, eps=1e-6, max_entries=None):
    rng = np.random.default_rng(seed)
    spec = StageSpec(3, 4, block_count=2)
    t = {**_params(stage_decl("s", spec), seed), "input.x": torch.from_numpy(rng.normal(size=(1, 3, 8, 8)))}

    def f(t):
        x, p = _split(t)
        return encode_stage(x["input.x"], spec, p, "s")
    return check_gradients(_projection(f, (1, 4, 4, 4), seed), t, eps, max_entries, seed, "encode_stage")


def case_dtm_forward(seed=0, eps=1e-6, max_entries=None):
    rng = np.random.default_rng(seed)
    c, h = 8, 8
    t = {**_params(dtm_decl("d", c, 4), seed),
         "input.rgb": torch.from_numpy(rng.normal(size=(1, c, h, h))),
         "input.thermal": torch.from_numpy(rng.normal(size=(1, c, h, h)))}
    w = [torch.from_numpy(rng.normal(size=(1, c, h, h))) for _ in range(3)]

    def loss(t):
        x, p = _split(t)
        outs = dtm_forward(x["input.rgb"], x["input.thermal"], p, "d")
        return sum((o * wi).sum() for o, wi in zip(outs, w))
    return check_gradients(loss, t, eps, max_entries, seed, "dtm_forward")


def case_aspp(seed=0, eps=1e-6, max_entries=None):
    rng = np.random.default_rng(seed)
    spec = AsppSpec((2, 4, 8), 6)
    t = {**_params(aspp_decl("a", 5, spec), seed), "input.x": torch.from_numpy(rng.normal(size=(1, 5, 4, 4)))}

    def f(t):
        x, p = _split(t)
        return aspp(x["input.x"], spec, p, "a")
    return check_gradients(_projection(f, (1, 6, 4, 4), seed), t, eps, max_entries, seed, "aspp")


def case_refine_step(seed=0, eps=1e-6, max_entries=None):
    rng = np.random.default_rng(seed)
    t = {**_params(refine_decl("r", 6, 5, 3), seed),
         "input.f_u": torch.from_numpy(rng.normal(size=(1, 6, 4, 4))),
         "input.f_m": torch.from_numpy(rng.normal(size=(1, 5, 8, 8)))}

    def f(t):
        x, p = _split(t)
        return refine_step(x["input.f_u"], x["input.f_m"], p, "r")
    return check_gradients(_projection(f, (1, 6, 8, 8), seed), t, eps, max_entries, seed, "refine_step")


def _small_cfg() -> ModelConfig:
    return ModelConfig(num_classes=3, stage_channels=(4, 4, 6, 6, 8), aspp_channels=8, ca_reduction=2)


def case_srm_decode(seed=0, eps=1e-6, max_entries=None):
    rng = np.random.default_rng(seed)
    cfg = _small_cfg()
    sc = cfg.stage_channels
    t = {**_params(srm_decl("srm", cfg), seed),
         "input.f4": torch.from_numpy(rng.normal(size=(1, sc[4], 1, 1))),
         "input.f_m1": torch.from_numpy(rng.normal(size=(1, sc[1], 8, 8))),
         "input.f_m2": torch.from_numpy(rng.normal(size=(1, sc[2], 4, 4))),
         "input.f_m3": torch.from_numpy(rng.normal(size=(1, sc[3], 2, 2)))}
    spec = AsppSpec.from_config(cfg)

    def f(t):
        x, p = _split(t)
        return srm_decode(x["input.f4"], [x["input.f_m1"], x["input.f_m2"], x["input.f_m3"]], p, "srm", spec)
    return check_gradients(_projection(f, (1, 8, 32, 32), seed), t, eps, max_entries, seed, "srm_decode")


def case_classify(seed=0, eps=1e-6, max_entries=None):
    rng = np.random.default_rng(seed)
    t = {**_params(conv_decl("head", 6, 4, 1), seed), "input.fe": torch.from_numpy(rng.normal(size=(1, 6, 8, 8)))}

    def f(t):
        x, p = _split(t)
        return classify(x["input.fe"], p, "head")
    return check_gradients(_projection(f, (1, 4, 8, 8), seed), t, eps, max_entries, seed, "classify")


def case_supervised_loss(seed=0, eps=1e-6, max_entries=4, size=8):
    rng = np.random.default_rng(seed)
    cfg = _small_cfg()
    params = init_params(cfg, seed, DTYPE)
    perturbed = _params({k: (tuple(v.shape), "zeros") for k, v in params.items() if v.dim() == 1}, seed)
    t = {**params, **{k: params[k] + 0.3 * (perturbed[k] - perturbed[k].mean()) for k in perturbed}}
    label = torch.from_numpy(rng.integers(0, cfg.num_classes, size=(2, size, size)))
    rgb = torch.from_numpy(rng.uniform(size=(2, 3, size, size)))
    thermal = torch.from_numpy(rng.uniform(size=(2, 1, size, size)))

    def loss(t):
        return supervised_loss(Batch(rgb, thermal, label), ModelParams(t), cfg)
    return check_gradients(loss, t, eps, max_entries, seed, "supervised_loss")


CASES = {
    "encode_stage": case_encode_stage,
    "dtm_forward": case_dtm_forward,
    "aspp": case_aspp,
    "refine_step": case_refine_step,
    "srm_decode": case_srm_decode,
    "classify": case_classify,
    "supervised_loss": case_supervised_loss,
}


def run_suite(eps: float = 1e-6, seed: int = 0) -> list[GradCheckResult]:
    return [case(seed=seed, eps=eps) for case in CASES.values()]
