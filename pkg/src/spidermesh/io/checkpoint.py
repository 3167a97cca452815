"""Bit-exact checkpoint container.

File layout::

    SPIDERMESH-CHECKPOINT\\n
    <one-line JSON header>\\n
    <little-endian array blobs, concatenated>
    <32-byte SHA-256 of everything above>

The header lists every array as ``{name, dtype, shape, offset, nbytes}`` with
offsets relative to the start of the blob section, plus the model
configuration, epoch, RNG state and free-form metadata.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from ..datamodel import ModelConfig, ModelParams
from ..errors import CheckpointError, CorruptPayloadError, VersionMismatchError
from ..trainer import EpochRecord, OptimizerState, TrainConfig, TrainState

MAGIC = b"SPIDERMESH-CHECKPOINT\n"
FORMAT_VERSION = 1
_DIGEST = 32


@dataclass
class Checkpoint:
    model_config: ModelConfig
    params: ModelParams
    optimizer: OptimizerState | None = None
    epoch: int = 0
    rng_state: dict | None = None
    extras: dict[str, ModelParams] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)
    version: int = FORMAT_VERSION


def _groups(ckpt: Checkpoint) -> dict[str, ModelParams]:
    groups = {"params": ckpt.params}
    if ckpt.optimizer is not None:
        groups["optimizer"] = ckpt.optimizer.velocity
    groups.update({f"extra.{k}": v for k, v in ckpt.extras.items()})
    return groups


def encode(ckpt: Checkpoint) -> bytes:
    arrays, blobs, offset = [], [], 0
    for group, params in _groups(ckpt).items():
        for name, t in params.items():
            a = t.detach().cpu().numpy()
            a = a.astype(a.dtype.newbyteorder("<"), copy=False)
            raw = a.tobytes(order="C")
            arrays.append({"group": group, "name": name, "dtype": a.dtype.str, "shape": list(a.shape),
                           "offset": offset, "nbytes": len(raw)})
            blobs.append(raw)
            offset += len(raw)
    header = {
        "version": ckpt.version,
        "model_config": dataclasses.asdict(ckpt.model_config),
        "epoch": ckpt.epoch,
        "optimizer_step": None if ckpt.optimizer is None else ckpt.optimizer.step,
        "rng_state": ckpt.rng_state,
        "meta": ckpt.meta,
        "arrays": arrays,
    }
    body = MAGIC + json.dumps(header, sort_keys=True).encode() + b"\n" + b"".join(blobs)
    return body + hashlib.sha256(body).digest()


def decode(data: bytes) -> Checkpoint:
    if not data.startswith(MAGIC):
        raise CorruptPayloadError("not a checkpoint file (bad magic)")
    if len(data) < len(MAGIC) + _DIGEST:
        raise CorruptPayloadError("file truncated")
    body, digest = data[:-_DIGEST], data[-_DIGEST:]
    if hashlib.sha256(body).digest() != digest:
        raise CorruptPayloadError("checksum mismatch (truncated or modified file)")
    end = body.index(b"\n", len(MAGIC))
    header = json.loads(body[len(MAGIC):end])
    if header.get("version") != FORMAT_VERSION:
        raise VersionMismatchError(f"checkpoint version {header.get('version')}, expected {FORMAT_VERSION}")
    blob = memoryview(body)[end + 1:]
    groups: dict[str, ModelParams] = {}
    for rec in header["arrays"]:
        raw = blob[rec["offset"]:rec["offset"] + rec["nbytes"]]
        a = np.frombuffer(raw, dtype=np.dtype(rec["dtype"])).reshape(rec["shape"])
        a = a.astype(a.dtype.newbyteorder("="))
        groups.setdefault(rec["group"], ModelParams())[rec["name"]] = torch.from_numpy(a.copy())
    cfg = header["model_config"]
    opt = None
    if header["optimizer_step"] is not None:
        opt = OptimizerState(groups.get("optimizer", ModelParams()), header["optimizer_step"])
    return Checkpoint(
        model_config=ModelConfig(**cfg),
        params=groups.get("params", ModelParams()),
        optimizer=opt,
        epoch=header["epoch"],
        rng_state=header["rng_state"],
        extras={k[len("extra."):]: v for k, v in groups.items() if k.startswith("extra.")},
        meta=header["meta"],
        version=header["version"],
    )


def save_checkpoint(ckpt: Checkpoint, path: str | os.PathLike) -> None:
    """Write atomically: a temporary file in the target directory, then rename."""
    path = Path(path)
    data = encode(ckpt)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except OSError as exc:
        raise CheckpointError(f"cannot write checkpoint {path}: {exc}") from exc


def load_checkpoint(path: str | os.PathLike) -> Checkpoint:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    return decode(data)


def from_train_state(state: TrainState, model_cfg: ModelConfig, cfg: TrainConfig | None = None) -> Checkpoint:
    extras = {} if state.best_params is None else {"best": state.best_params}
    meta = {
        "best_miou": state.best_miou,
        "history": [dataclasses.asdict(r) for r in state.history],
        "step_losses": state.step_losses,
    }
    if cfg is not None:
        meta["train_config"] = dataclasses.asdict(cfg)
    return Checkpoint(model_cfg, state.params.clone(),
                      OptimizerState(state.optimizer.velocity.clone(), state.optimizer.step),
                      state.epoch, state.rng.bit_generator.state, extras, meta)


def to_train_state(ckpt: Checkpoint) -> TrainState:
    """Rebuild the exact training state a checkpoint was taken from."""
    rng = np.random.default_rng()
    rng.bit_generator.state = ckpt.rng_state
    history = [EpochRecord(**r) for r in ckpt.meta.get("history", [])]
    return TrainState(
        params=ckpt.params.clone(),
        optimizer=OptimizerState(ckpt.optimizer.velocity.clone(), ckpt.optimizer.step),
        rng=rng,
        epoch=ckpt.epoch,
        best_params=ckpt.extras["best"].clone() if "best" in ckpt.extras else None,
        best_miou=float(ckpt.meta.get("best_miou", -math.inf)),
        history=history,
        step_losses=list(ckpt.meta.get("step_losses", [])),
    )
