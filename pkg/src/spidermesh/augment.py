"""Training-time augmentation for aligned RGB-thermal samples.

Geometric transforms build one index map and apply it to rgb, thermal and
label alike.  M-CutOut blacks out a rectangle of the RGB image only; plain
CutOut blacks out the same rectangle in both modalities.  Labels are never
masked.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datamodel import RgbtSample
from .errors import CropLargerThanImageError, InvalidRangeError


@dataclass(frozen=True)
class CutoutMask:
    top: int
    left: int
    height: int
    width: int
    fill: float = 0.0

    @property
    def area(self) -> int:
        return self.height * self.width

    def slices(self) -> tuple[slice, slice]:
        return slice(self.top, self.top + self.height), slice(self.left, self.left + self.width)


@dataclass(frozen=True)
class AugmentConfig:
    flip_prob: float = 0.5
    crop_prob: float = 0.0
    crop_size: tuple[int, int] | None = None
    mcutout_prob: float = 0.5
    cutout_prob: float = 0.0
    area_min: float = 0.1
    area_max: float = 0.4
    fill: float = 0.0


def sample_rect(rng: np.random.Generator, height: int, width: int, a_min: float, a_max: float,
                fill: float = 0.0) -> CutoutMask:
    """Draw a rectangle whose area ratio lies in [a_min, a_max], placed uniformly.

    The height is drawn uniformly among heights admitting a valid width, then
    the width uniformly among valid widths.
    """
    if not (0.0 <= a_min <= a_max < 1.0):
        raise InvalidRangeError(f"need 0 <= a_min <= a_max < 1, got [{a_min}, {a_max}]", "area")
    total = height * width
    lo, hi = a_min * total, a_max * total
    if hi < 1:
        if lo > 0:
            raise InvalidRangeError(f"no rectangle of area in [{lo:.2f}, {hi:.2f}] pixels", "area")
        return CutoutMask(0, 0, 0, 0, fill)
    options = []
    for h in range(1, height + 1):
        w_lo = max(1, int(np.ceil(lo / h - 1e-12)))
        w_hi = min(width, int(np.floor(hi / h + 1e-12)))
        if w_lo <= w_hi:
            options.append((h, w_lo, w_hi))
    if not options:
        raise InvalidRangeError(f"no rectangle of area in [{lo:.2f}, {hi:.2f}] pixels", "area")
    h, w_lo, w_hi = options[rng.integers(len(options))]
    w = int(rng.integers(w_lo, w_hi + 1))
    top = int(rng.integers(0, height - h + 1))
    left = int(rng.integers(0, width - w + 1))
    return CutoutMask(top, left, h, w, fill)


def _blackout(a: np.ndarray, mask: CutoutMask) -> np.ndarray:
    out = a.copy()
    out[mask.slices()] = mask.fill
    return out


def m_cutout(s: RgbtSample, rng: np.random.Generator, a_min: float = 0.1, a_max: float = 0.4,
             fill: float = 0.0) -> tuple[RgbtSample, CutoutMask]:
    """Mask one random rectangle of the RGB image; thermal and label stay untouched."""
    mask = sample_rect(rng, *s.size, a_min, a_max, fill)
    return s.replace(rgb=_blackout(s.rgb, mask)), mask


def cutout(s: RgbtSample, rng: np.random.Generator, a_min: float = 0.1, a_max: float = 0.4,
           fill: float = 0.0) -> RgbtSample:
    """Mask the same random rectangle in both modalities."""
    mask = sample_rect(rng, *s.size, a_min, a_max, fill)
    return s.replace(rgb=_blackout(s.rgb, mask), thermal=_blackout(s.thermal, mask))


def remap(s: RgbtSample, rows: np.ndarray, cols: np.ndarray) -> RgbtSample:
    """Gather every plane at ``(rows[i], cols[j])``."""
    ix = np.ix_(rows, cols)
    return s.replace(
        rgb=s.rgb[ix],
        thermal=s.thermal[ix],
        label=None if s.label is None else s.label[ix],
    )


def hflip(s: RgbtSample) -> RgbtSample:
    h, w = s.size
    return remap(s, np.arange(h), np.arange(w)[::-1])


def nearest_index(n_out: int, start: int, n_in: int) -> np.ndarray:
    """Source indices for a nearest-neighbour resize of ``n_in`` pixels to ``n_out``."""
    idx = np.floor((np.arange(n_out) + 0.5) * n_in / n_out).astype(np.int64)
    return start + np.minimum(idx, n_in - 1)


def random_crop_resize(s: RgbtSample, rng: np.random.Generator, crop_size: tuple[int, int]) -> RgbtSample:
    h, w = s.size
    ch, cw = crop_size
    if ch > h or cw > w:
        raise CropLargerThanImageError(f"crop {crop_size} exceeds image {(h, w)}", "crop_size")
    top = int(rng.integers(0, h - ch + 1))
    left = int(rng.integers(0, w - cw + 1))
    return remap(s, nearest_index(h, top, ch), nearest_index(w, left, cw))


def augment_pipeline(s: RgbtSample, rng: np.random.Generator, cfg: AugmentConfig) -> RgbtSample:
    """Flip, crop-and-resize-back, then the CutOut variants, each with its own probability.

    The four coin flips are drawn up front, one per stage.
    """
    if cfg.crop_size is not None and (cfg.crop_size[0] > s.size[0] or cfg.crop_size[1] > s.size[1]):
        raise CropLargerThanImageError(f"crop {cfg.crop_size} exceeds image {s.size}", "crop_size")
    u = rng.random(4)
    if u[0] < cfg.flip_prob:
        s = hflip(s)
    if cfg.crop_size is not None and u[1] < cfg.crop_prob:
        s = random_crop_resize(s, rng, cfg.crop_size)
    if u[2] < cfg.mcutout_prob:
        s, _ = m_cutout(s, rng, cfg.area_min, cfg.area_max, cfg.fill)
    if u[3] < cfg.cutout_prob:
        s = cutout(s, rng, cfg.area_min, cfg.area_max, cfg.fill)
    return s
