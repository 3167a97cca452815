"""Parameter declaration and initialisation for the whole network."""
from __future__ import annotations

import math

import numpy as np
import torch

from .datamodel import ModelConfig, ModelParams
from .encoder import encoder_decl
from .heads import head_decl
from .layers import ParamDecl
from .srm import srm_decl


def param_decl(cfg: ModelConfig) -> ParamDecl:
    decl = encoder_decl(cfg)
    if cfg.use_srm:
        decl.update(srm_decl("rgb.srm", cfg))
        decl.update(srm_decl("thermal.srm", cfg))
    decl.update(head_decl(cfg))
    return decl


def _init_array(shape, kind, rng: np.random.Generator) -> np.ndarray:
    if kind == "zeros":
        return np.zeros(shape)
    if kind == "ones":
        return np.ones(shape)
    fan_in = int(np.prod(shape[1:]))
    if kind == "kaiming":
        return rng.normal(0.0, math.sqrt(2.0 / fan_in), size=shape)
    if kind == "xavier":
        fan_out = shape[0] * int(np.prod(shape[2:]))
        return rng.normal(0.0, math.sqrt(2.0 / (fan_in + fan_out)), size=shape)
    raise ValueError(f"unknown init {kind!r}")


def init_params(cfg: ModelConfig, seed: int = 0, dtype: torch.dtype = torch.float32) -> ModelParams:
    """Random initialisation; draws happen in declaration order so ``seed`` fixes everything."""
    rng = np.random.default_rng(seed)
    return ModelParams({
        path: torch.from_numpy(_init_array(shape, kind, rng)).to(dtype)
        for path, (shape, kind) in param_decl(cfg).items()
    })


def check_params(params: ModelParams, cfg: ModelConfig) -> None:
    """Raise ValueError unless ``params`` holds exactly the tensors ``cfg`` declares."""
    decl = param_decl(cfg)
    missing = sorted(set(decl) - set(params))
    extra = sorted(set(params) - set(decl))
    if missing or extra:
        raise ValueError(f"parameter set mismatch: missing={missing[:5]} extra={extra[:5]}")
    for path, (shape, _) in decl.items():
        if tuple(params[path].shape) != shape:
            raise ValueError(f"{path}: shape {tuple(params[path].shape)} != {shape}")
