"""Import datasets stored as 4-channel RGB+thermal composites.

Expected source layout::

    src/images/<id>.png   4 channels, R G B T (8 or 16 bit)
    src/labels/<id>.png   single channel class ids (optional per id)
    src/train.txt ...     optional split files; without them every id goes to ``train``
"""
from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from ..datamodel import RgbtSample
from ..errors import MissingFileError, UndecodableImageError
from .dataset import SPLITS, DatasetLayout, _read, write_sample


def split_composite(raw: np.ndarray, sid: str = "") -> tuple[np.ndarray, np.ndarray]:
    """Normalised ``(H x W x 3 rgb, H x W x 1 thermal)`` from an H x W x 4 composite."""
    if raw.ndim != 3 or raw.shape[2] != 4:
        raise UndecodableImageError(f"{sid}: expected a 4-channel composite, got shape {raw.shape}")
    maxval = float(np.iinfo(raw.dtype).max) if raw.dtype.kind == "u" else 1.0
    a = raw.astype(np.float64) / maxval
    return a[..., :3], a[..., 3:4]


def convert_composites(src: str | os.PathLike, out: str | os.PathLike) -> dict[str, int]:
    """Convert every composite under ``src`` into the standard layout at ``out``.

    Returns the number of samples written per split.
    """
    src, layout = Path(src), DatasetLayout(Path(out))
    images = src / "images"
    if not images.is_dir():
        raise MissingFileError(f"no images/ directory under {src}")
    splits = {s: [l.strip() for l in (src / f"{s}.txt").read_text().splitlines() if l.strip()]
              for s in SPLITS if (src / f"{s}.txt").exists()}
    if not splits:
        splits = {"train": sorted(p.stem for p in images.glob("*.png"))}
    for sub in ("rgb", "thermal", "labels"):
        (layout.root / sub).mkdir(parents=True, exist_ok=True)
    counts = {}
    for split in SPLITS:
        ids = splits.get(split, [])
        for sid in ids:
            rgb, thermal = split_composite(_read(images / f"{sid}.png"), sid)
            label_path = src / "labels" / f"{sid}.png"
            label = _read(label_path).astype(np.int64) if label_path.exists() else None
            if label is not None and label.ndim == 3:
                label = label[..., 0]
            write_sample(layout, RgbtSample(rgb, thermal, label, sid))
        layout.split_file(split).write_text("".join(f"{sid}\n" for sid in ids))
        counts[split] = len(ids)
    return counts
