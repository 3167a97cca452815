import numpy as np
import pytest
import torch

from spidermesh.datamodel import (IGNORE_INDEX, Batch, ModelConfig, ModelParams, RgbtSample, LossReport,
                                  validate_sample)
from spidermesh.errors import (DimensionMismatchError, MissingParameterError, NonFiniteValueError,
                               OutOfRangeLabelError, ValidationError)


def make(h=4, w=5, k=3, seed=0):
    r = np.random.default_rng(seed)
    return RgbtSample(r.uniform(size=(h, w, 3)), r.uniform(size=(h, w, 1)), r.integers(0, k, size=(h, w)), "s")


def test_valid_sample_passes():
    validate_sample(make(), 3)


def test_thermal_2d_is_expanded():
    s = RgbtSample(np.zeros((2, 2, 3)), np.zeros((2, 2)))
    assert s.thermal.shape == (2, 2, 1)


def test_arrays_are_read_only():
    s = make()
    with pytest.raises(ValueError):
        s.rgb[0, 0, 0] = 1.0


def test_ignore_label_is_allowed():
    s = make()
    lab = s.label.copy()
    lab[0, 0] = IGNORE_INDEX
    validate_sample(s.replace(label=lab), 3)


@pytest.mark.parametrize("mutate, err", [
    (lambda s: s.replace(rgb=s.rgb[..., :2]), DimensionMismatchError),
    (lambda s: s.replace(thermal=np.zeros((4, 5, 2))), DimensionMismatchError),
    (lambda s: s.replace(thermal=np.zeros((3, 5, 1))), DimensionMismatchError),
    (lambda s: s.replace(label=np.zeros((4, 4), dtype=int)), DimensionMismatchError),
    (lambda s: s.replace(label=np.full((4, 5), 3)), OutOfRangeLabelError),
    (lambda s: s.replace(label=np.full((4, 5), -1)), OutOfRangeLabelError),
])
def test_each_single_mutation_is_rejected(mutate, err):
    with pytest.raises(err):
        validate_sample(mutate(make()), 3)


@pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
@pytest.mark.parametrize("plane", ["rgb", "thermal"])
def test_non_finite_rejected(bad, plane):
    s = make()
    a = getattr(s, plane).copy()
    a[1, 1, 0] = bad
    with pytest.raises(NonFiniteValueError) as e:
        validate_sample(s.replace(**{plane: a}), 3)
    assert e.value.field == plane


def test_model_config_validation():
    with pytest.raises(ValidationError):
        ModelConfig(num_classes=1)
    with pytest.raises(ValidationError):
        ModelConfig(backbone_kind="nope")
    cfg = ModelConfig(aspp_channels=256)
    assert cfg.reduced_channels == 64
    assert cfg.stage_channels == (8, 16, 32, 64, 64)


def test_model_params_helpers():
    p = ModelParams({"a.w": torch.ones(2, 3), "b.w": torch.zeros(4)})
    assert p.numel() == 10
    assert p.subtree("a").shapes() == {"a.w": (2, 3)}
    q = p.clone()
    assert q.equal(p)
    q["a.w"][0, 0] = 2.0
    assert not q.equal(p)
    with pytest.raises(MissingParameterError):
        p["missing"]


def test_loss_report_total():
    assert LossReport(1.5, 0.25).total == 1.75


def test_batch_from_samples_layout():
    b = Batch.from_samples([make(seed=0), make(seed=1)], torch.float64)
    assert b.rgb.shape == (2, 3, 4, 5) and b.thermal.shape == (2, 1, 4, 5) and b.label.shape == (2, 4, 5)
    assert np.array_equal(b.rgb[1].permute(1, 2, 0).numpy(), make(seed=1).rgb)
