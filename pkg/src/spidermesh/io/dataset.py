"""On-disk dataset layout.

    root/
      rgb/<id>.png       8-bit, 3 channels
      thermal/<id>.png   16-bit, single channel
      labels/<id>.png    8-bit, single channel, 255 = ignore (optional per id)
      train.txt val.txt test.txt   one id per line
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

from ..datamodel import RgbtSample
from ..errors import DatasetError, MissingFileError, SizeMismatchError, UndecodableImageError
from .synth import SynthSpec, synthesize, split_ids

SPLITS = ("train", "val", "test")
THERMAL_MAX = 65535


@dataclass(frozen=True)
class DatasetLayout:
    root: Path

    def rgb(self, sid: str) -> Path:
        return self.root / "rgb" / f"{sid}.png"

    def thermal(self, sid: str) -> Path:
        return self.root / "thermal" / f"{sid}.png"

    def label(self, sid: str) -> Path:
        return self.root / "labels" / f"{sid}.png"

    def split_file(self, split: str) -> Path:
        return self.root / f"{split}.txt"

    def ids(self, split: str) -> list[str]:
        path = self.split_file(split)
        if not path.exists():
            raise MissingFileError(f"split file not found: {path}")
        return [line.strip() for line in path.read_text().splitlines() if line.strip()]


def quantize_rgb(a: np.ndarray) -> np.ndarray:
    return np.round(np.clip(a, 0, 1) * 255).astype(np.uint8)


def quantize_thermal(a: np.ndarray) -> np.ndarray:
    return np.round(np.clip(a, 0, 1) * THERMAL_MAX).astype(np.uint16)


def write_sample(layout: DatasetLayout, s: RgbtSample, with_label: bool = True) -> None:
    try:
        Image.fromarray(quantize_rgb(s.rgb), mode="RGB").save(layout.rgb(s.id))
        Image.fromarray(quantize_thermal(s.thermal[..., 0])).save(layout.thermal(s.id))
        if with_label and s.label is not None:
            Image.fromarray(s.label.astype(np.uint8), mode="L").save(layout.label(s.id))
    except OSError as exc:
        raise DatasetError(f"cannot write sample {s.id}: {exc}") from exc


def write_dataset(root: str | os.PathLike, splits: Mapping[str, Sequence[RgbtSample]]) -> DatasetLayout:
    layout = DatasetLayout(Path(root))
    try:
        for sub in ("rgb", "thermal", "labels"):
            (layout.root / sub).mkdir(parents=True, exist_ok=True)
        for split in SPLITS:
            samples = splits.get(split, [])
            for s in samples:
                write_sample(layout, s)
            layout.split_file(split).write_text("".join(f"{s.id}\n" for s in samples))
    except OSError as exc:
        raise DatasetError(f"cannot write dataset under {root}: {exc}") from exc
    return layout


def generate_synthetic(spec: SynthSpec, root: str | os.PathLike) -> DatasetLayout:
    samples = synthesize(spec)
    by_id = {s.id: s for s in samples}
    splits = {name: [by_id[i] for i in ids] for name, ids in split_ids(spec, list(by_id)).items()}
    return write_dataset(root, splits)


def _read(path: Path) -> np.ndarray:
    if not path.exists():
        raise MissingFileError(f"missing file: {path}")
    try:
        with Image.open(path) as im:
            return np.array(im)
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise UndecodableImageError(f"cannot decode {path}: {exc}") from exc


def decode_thermal(raw: np.ndarray) -> np.ndarray:
    if raw.ndim == 3:
        raw = raw[..., 0]
    maxval = 255.0 if raw.dtype == np.uint8 else float(THERMAL_MAX)
    return raw.astype(np.float64) / maxval


def load_sample(layout: DatasetLayout, sid: str) -> RgbtSample:
    rgb = _read(layout.rgb(sid))
    if rgb.ndim != 3 or rgb.shape[2] < 3:
        raise UndecodableImageError(f"{layout.rgb(sid)} is not a 3-channel image")
    thermal = decode_thermal(_read(layout.thermal(sid)))
    label = None
    if layout.label(sid).exists():
        label = _read(layout.label(sid)).astype(np.int64)
    if thermal.shape != rgb.shape[:2] or (label is not None and label.shape != rgb.shape[:2]):
        raise SizeMismatchError(
            f"sample {sid}: rgb {rgb.shape[:2]}, thermal {thermal.shape}, "
            f"label {None if label is None else label.shape}"
        )
    return RgbtSample(rgb[..., :3].astype(np.float64) / 255.0, thermal[..., None], label, sid)


def load_dataset(root: str | os.PathLike, split: str) -> list[RgbtSample]:
    """Samples of ``split`` in split-file order."""
    layout = DatasetLayout(Path(root))
    return [load_sample(layout, sid) for sid in layout.ids(split)]
