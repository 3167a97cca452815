"""Synthetic RGB-thermal scenes with known regional complementarity.

Each scene is a textured background with a few overlapping shapes.  Every
class has a fixed colour and a fixed thermal intensity.  The thermal image is
blurred (thermal optics are soft) while the RGB image is sharp, and with some
probability a rectangle of the RGB image is darkened to simulate an
optically-impaired region.  Thermal is never impaired.

With ``class_layout="crossed"`` colour and temperature no longer identify the
class on their own: an object of foreground class ``c`` takes colour ``i`` at
random and temperature ``(c - 1 - i) mod (K - 1)``, so only the pair does.
No sum of a colour-only score and a temperature-only score can separate
these classes, which makes the layout a probe for cross-modal interaction.
"""
from __future__ import annotations

import colorsys
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from ..datamodel import RgbtSample
from ..errors import ValidationError

BACKGROUND_THERMAL = 0.2
CLASS_LAYOUTS = ("distinct", "crossed")


@dataclass(frozen=True)
class SynthSpec:
    num_samples: int = 64
    size: tuple[int, int] = (64, 64)
    num_classes: int = 4
    shapes_per_image: tuple[int, int] = (2, 5)
    shape_scale: tuple[float, float] = (0.1, 0.3)
    impair_prob: float = 0.0
    impair_area: tuple[float, float] = (0.1, 0.4)
    impair_level: float = 0.1
    noise_std: float = 0.05
    thermal_noise_std: float = 0.08
    thermal_blur: float = 1.5
    seed: int = 0
    val_frac: float = 0.25
    test_frac: float = 0.0
    class_layout: str = "distinct"

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValidationError("need at least 2 classes", "num_classes")
        if not 0 <= self.impair_prob <= 1:
            raise ValidationError("probability outside [0, 1]", "impair_prob")
        lo, hi = self.impair_area
        if not 0 <= lo <= hi <= 1:
            raise ValidationError("area range outside [0, 1]", "impair_area")
        if self.num_samples < 1:
            raise ValidationError("need at least one sample", "num_samples")
        if self.val_frac < 0 or self.test_frac < 0 or self.val_frac + self.test_frac >= 1:
            raise ValidationError("split fractions must leave a training split", "val_frac")
        if self.class_layout not in CLASS_LAYOUTS:
            raise ValidationError(f"unknown layout {self.class_layout!r}", "class_layout")


def class_colors(k: int) -> np.ndarray:
    """Fully saturated hues spread around the colour wheel, one per foreground class."""
    out = np.zeros((k, 3))
    out[0] = (0.45, 0.45, 0.45)
    for c in range(1, k):
        out[c] = colorsys.hsv_to_rgb((c - 1) / (k - 1), 0.85, 0.9)
    return out


def class_thermal(k: int) -> np.ndarray:
    out = np.full(k, BACKGROUND_THERMAL)
    out[1:] = np.linspace(0.45, 0.95, k - 1) if k > 2 else 0.8
    return out


def _shape_mask(rng: np.random.Generator, h: int, w: int, scale=(0.1, 0.3)) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w]
    cy, cx = rng.uniform(0, h), rng.uniform(0, w)
    ry, rx = rng.uniform(*scale) * h, rng.uniform(*scale) * w
    kind = rng.integers(3)
    if kind == 0:
        return (np.abs(yy - cy) <= ry) & (np.abs(xx - cx) <= rx)
    if kind == 1:
        return ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
    # isosceles triangle pointing up
    t = (yy - (cy - ry)) / (2 * ry)
    return (t >= 0) & (t <= 1) & (np.abs(xx - cx) <= t * rx)


def _texture(rng: np.random.Generator, h: int, w: int, n_waves: int = 3) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w] / max(h, w)
    tex = np.zeros((h, w))
    for _ in range(n_waves):
        fy, fx = rng.uniform(1, 6, size=2)
        tex += np.sin(2 * np.pi * (fy * yy + fx * xx) + rng.uniform(0, 2 * np.pi))
    return tex / n_waves


def render_scene(spec: SynthSpec, rng: np.random.Generator, idx: int = 0) -> RgbtSample:
    h, w = spec.size
    k = spec.num_classes
    colors, temps = class_colors(k), class_thermal(k)
    label = np.zeros((h, w), dtype=np.int64)
    # appearance index per pixel: which colour and which temperature is shown
    col_idx = np.zeros((h, w), dtype=np.int64)
    tmp_idx = np.zeros((h, w), dtype=np.int64)
    lo, hi = spec.shapes_per_image
    for _ in range(int(rng.integers(lo, hi + 1))):
        m = _shape_mask(rng, h, w, spec.shape_scale)
        c = int(rng.integers(1, k))
        i = j = c
        if spec.class_layout == "crossed":
            i = int(rng.integers(1, k))
            j = 1 + (c - 1 - (i - 1)) % (k - 1)
        label[m], col_idx[m], tmp_idx[m] = c, i, j

    rgb = colors[col_idx].copy()
    bg = label == 0
    tint = rng.uniform(-0.15, 0.15, size=3)
    rgb[bg] += tint + 0.15 * _texture(rng, h, w)[bg][:, None]
    rgb += rng.normal(0.0, spec.noise_std, size=rgb.shape)

    thermal = temps[tmp_idx] + 0.05 * _texture(rng, h, w) * bg
    if spec.thermal_blur > 0:
        thermal = gaussian_filter(thermal, spec.thermal_blur, mode="nearest")
    thermal = thermal + rng.normal(0.0, spec.thermal_noise_std, size=thermal.shape)

    if rng.random() < spec.impair_prob:
        a = rng.uniform(*spec.impair_area)
        aspect = np.exp(rng.uniform(-0.5, 0.5))
        rh = int(np.clip(round(np.sqrt(a * h * w * aspect)), 1, h))
        rw = int(np.clip(round(a * h * w / rh), 1, w))
        top, left = int(rng.integers(0, h - rh + 1)), int(rng.integers(0, w - rw + 1))
        region = (slice(top, top + rh), slice(left, left + rw))
        rgb[region] = spec.impair_level * rgb[region] + rng.normal(0.0, spec.noise_std / 2, size=(rh, rw, 3))

    return RgbtSample(
        rgb=np.clip(rgb, 0.0, 1.0),
        thermal=np.clip(thermal, 0.0, 1.0)[..., None],
        label=label,
        id=f"synth_{idx:05d}",
    )


def synthesize(spec: SynthSpec) -> list[RgbtSample]:
    """All samples of ``spec``, generated in memory; a pure function of ``spec``."""
    rng = np.random.default_rng(spec.seed)
    return [render_scene(spec, rng, i) for i in range(spec.num_samples)]


def split_ids(spec: SynthSpec, ids: list[str]) -> dict[str, list[str]]:
    n = len(ids)
    n_val = int(round(spec.val_frac * n))
    n_test = int(round(spec.test_frac * n))
    n_train = n - n_val - n_test
    return {"train": ids[:n_train], "val": ids[n_train:n_train + n_val], "test": ids[n_train + n_val:]}


def synthesize_splits(spec: SynthSpec) -> dict[str, list[RgbtSample]]:
    samples = synthesize(spec)
    by_id = {s.id: s for s in samples}
    return {name: [by_id[i] for i in ids] for name, ids in split_ids(spec, [s.id for s in samples]).items()}
