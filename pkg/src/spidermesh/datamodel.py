"""Shared records: samples, feature maps, configuration and parameter stores.

Arrays on the sample side are numpy, channel-last (H x W x C) and normalised
to [0, 1].  Everything that flows through the network is a torch tensor in
N x C x H x W layout; shapes in docstrings still read channel-last when they
describe a single record.
"""
from __future__ import annotations

from collections import OrderedDict
from collections.abc import Iterator, Mapping, MutableMapping
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np
import torch

from .errors import (
    DimensionMismatchError,
    MissingParameterError,
    NonFiniteValueError,
    OutOfRangeLabelError,
    ValidationError,
)

IGNORE_INDEX = 255

BACKBONES = {
    # kind: (stage channels, blocks per stage)
    "tiny": ((8, 16, 32, 64, 64), (1, 1, 1, 1, 1)),
    "residual-small": ((32, 64, 128, 256, 512), (1, 2, 2, 2, 2)),
    "residual-large": ((64, 128, 256, 512, 1024), (1, 3, 4, 6, 3)),
}


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class RgbtSample:
    """One aligned RGB-thermal pair with an optional label map.

    ``rgb`` is H x W x 3, ``thermal`` H x W x 1, both float in [0, 1].
    ``label`` is H x W integer with ``IGNORE_INDEX`` for unlabelled pixels,
    or ``None`` for an unlabelled sample.  Arrays are made read-only.
    """

    rgb: np.ndarray
    thermal: np.ndarray
    label: np.ndarray | None = None
    id: str = ""

    def __post_init__(self):
        rgb = np.asarray(self.rgb, dtype=np.float64)
        thermal = np.asarray(self.thermal, dtype=np.float64)
        if thermal.ndim == 2:
            thermal = thermal[..., None]
        object.__setattr__(self, "rgb", _frozen(rgb))
        object.__setattr__(self, "thermal", _frozen(thermal))
        if self.label is not None:
            object.__setattr__(self, "label", _frozen(np.asarray(self.label, dtype=np.int64)))

    @property
    def size(self) -> tuple[int, int]:
        return self.rgb.shape[0], self.rgb.shape[1]

    def replace(self, **changes) -> "RgbtSample":
        return replace(self, **changes)


def validate_sample(s: RgbtSample, k: int) -> None:
    """Raise if ``s`` breaks any RgbtSample invariant for ``k`` classes."""
    if s.rgb.ndim != 3 or s.rgb.shape[2] != 3:
        raise DimensionMismatchError(f"expected H x W x 3, got {s.rgb.shape}", "rgb")
    if s.thermal.ndim != 3 or s.thermal.shape[2] != 1:
        raise DimensionMismatchError(f"expected H x W x 1, got {s.thermal.shape}", "thermal")
    if s.thermal.shape[:2] != s.rgb.shape[:2]:
        raise DimensionMismatchError(
            f"spatial size {s.thermal.shape[:2]} differs from rgb {s.rgb.shape[:2]}", "thermal"
        )
    for name in ("rgb", "thermal"):
        if not np.all(np.isfinite(getattr(s, name))):
            raise NonFiniteValueError("contains NaN or Inf", name)
    if s.label is not None:
        if s.label.shape != s.rgb.shape[:2]:
            raise DimensionMismatchError(
                f"shape {s.label.shape} differs from rgb {s.rgb.shape[:2]}", "label"
            )
        bad = (s.label != IGNORE_INDEX) & ((s.label < 0) | (s.label >= k))
        if bad.any():
            raise OutOfRangeLabelError(
                f"value {int(s.label[bad][0])} outside 0..{k - 1} (and not {IGNORE_INDEX})", "label"
            )


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """A feature tensor (N x C x h x w) tagged with its scale relative to the input."""

    data: torch.Tensor
    scale: Fraction = Fraction(1)

    @property
    def channels(self) -> int:
        return self.data.shape[1]

    @property
    def spatial(self) -> tuple[int, int]:
        return tuple(self.data.shape[-2:])


@dataclass(frozen=True, eq=False)
class FeaturePyramid:
    """Five stage outputs of one branch, at scales 1/2 ... 1/32."""

    stages: tuple[FeatureMap, ...]

    def __getitem__(self, i: int) -> FeatureMap:
        return self.stages[i]

    def __len__(self) -> int:
        return len(self.stages)


@dataclass(frozen=True)
class ModelConfig:
    num_classes: int = 4
    stage_channels: tuple[int, ...] | None = None
    aspp_channels: int = 256
    aspp_dilations: tuple[int, ...] = (2, 4, 8)
    ca_reduction: int = 16
    input_size: tuple[int, int] = (64, 64)
    backbone_kind: str = "tiny"
    use_dtm: bool = True
    use_srm: bool = True

    def __post_init__(self):
        if self.backbone_kind not in BACKBONES:
            raise ValidationError(f"unknown backbone {self.backbone_kind!r}", "backbone_kind")
        if self.stage_channels is None:
            object.__setattr__(self, "stage_channels", BACKBONES[self.backbone_kind][0])
        object.__setattr__(self, "stage_channels", tuple(int(c) for c in self.stage_channels))
        object.__setattr__(self, "aspp_dilations", tuple(int(d) for d in self.aspp_dilations))
        object.__setattr__(self, "input_size", tuple(int(v) for v in self.input_size))
        if self.num_classes < 2:
            raise ValidationError("need at least 2 classes", "num_classes")
        if len(self.stage_channels) != 5:
            raise ValidationError("need exactly 5 stage widths", "stage_channels")
        if not self.aspp_dilations:
            raise ValidationError("at least one dilation required", "aspp_dilations")
        if self.aspp_channels < 4:
            raise ValidationError("must be >= 4", "aspp_channels")

    @property
    def block_counts(self) -> tuple[int, ...]:
        return BACKBONES[self.backbone_kind][1]

    @property
    def reduced_channels(self) -> int:
        """Width of the channel-reduced multimodal skip inside each refinement step."""
        return max(1, self.aspp_channels // 4)

    def replace(self, **changes) -> "ModelConfig":
        return replace(self, **changes)


class ModelParams(MutableMapping):
    """Ordered mapping from dotted paths (``rgb.srm.aspp.proj.weight``) to tensors.

    Lookup of an absent path raises :class:`MissingParameterError`.
    """

    def __init__(self, entries: Mapping[str, torch.Tensor] | None = None):
        self._entries: OrderedDict[str, torch.Tensor] = OrderedDict()
        if entries:
            for k, v in entries.items():
                self[k] = v

    def __getitem__(self, path: str) -> torch.Tensor:
        try:
            return self._entries[path]
        except KeyError:
            raise MissingParameterError(path) from None

    def __setitem__(self, path: str, value) -> None:
        if not isinstance(value, torch.Tensor):
            value = torch.as_tensor(np.asarray(value))
        self._entries[path] = value

    def __delitem__(self, path: str) -> None:
        del self._entries[path]

    def __iter__(self) -> Iterator[str]:
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __repr__(self) -> str:
        return f"ModelParams({len(self)} tensors, {self.numel()} values)"

    def numel(self) -> int:
        return sum(v.numel() for v in self._entries.values())

    def shapes(self) -> dict[str, tuple[int, ...]]:
        return {k: tuple(v.shape) for k, v in self._entries.items()}

    def subtree(self, prefix: str) -> "ModelParams":
        p = prefix.rstrip(".") + "."
        return ModelParams({k: v for k, v in self.items() if k.startswith(p)})

    def clone(self) -> "ModelParams":
        return ModelParams({k: v.detach().clone() for k, v in self.items()})

    def to(self, dtype: torch.dtype) -> "ModelParams":
        return ModelParams({k: v.detach().to(dtype).clone() for k, v in self.items()})

    def requires_grad_(self, flag: bool = True) -> "ModelParams":
        for v in self._entries.values():
            v.requires_grad_(flag)
        return self

    def zeros_like(self) -> "ModelParams":
        return ModelParams({k: torch.zeros_like(v.detach()) for k, v in self.items()})

    def numpy(self) -> dict[str, np.ndarray]:
        return {k: v.detach().cpu().numpy() for k, v in self.items()}

    def equal(self, other: "ModelParams") -> bool:
        """Bit-exact comparison of paths, dtypes, shapes and values."""
        if list(self) != list(other):
            return False
        return all(
            a.dtype == b.dtype and a.shape == b.shape and torch.equal(a, b)
            for a, b in zip(self.values(), other.values())
        )


@dataclass
class LossReport:
    l_s: float = 0.0
    l_u: float = 0.0
    total: float = field(init=False)

    def __post_init__(self):
        self.total = self.l_s + self.l_u


@dataclass(frozen=True, eq=False)
class Batch:
    """Stacked tensors for a list of samples: rgb N x 3 x H x W, thermal N x 1 x H x W, label N x H x W."""

    rgb: torch.Tensor
    thermal: torch.Tensor
    label: torch.Tensor | None = None

    @classmethod
    def from_samples(cls, samples, dtype: torch.dtype = torch.float32) -> "Batch":
        rgb = torch.from_numpy(np.stack([s.rgb.transpose(2, 0, 1) for s in samples])).to(dtype)
        thermal = torch.from_numpy(np.stack([s.thermal.transpose(2, 0, 1) for s in samples])).to(dtype)
        label = None
        if all(s.label is not None for s in samples):
            label = torch.from_numpy(np.stack([s.label for s in samples]))
        return cls(rgb, thermal, label)

    def __len__(self) -> int:
        return self.rgb.shape[0]
