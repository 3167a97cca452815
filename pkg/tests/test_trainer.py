import math

import numpy as np
import pytest
import torch

from spidermesh.augment import AugmentConfig
from spidermesh.datamodel import ModelConfig, ModelParams
from spidermesh.errors import DivergenceError, EmptyDatasetError, MissingLabelError, NonFiniteValueError, \
    ValidationError
from spidermesh.trainer import (OptimizerState, TrainConfig, apply_variant, format_table, hide_labels, lr_at,
                                run_ablation, sgd_step, train)


def test_lr_schedule():
    cfg = TrainConfig(lr0=1e-2, decay_gamma=0.95)
    assert lr_at(0, cfg) == 1e-2
    assert math.isclose(lr_at(2, cfg), 9.025e-3, rel_tol=1e-12)


@pytest.mark.parametrize("momentum, wd, lr", [(0.9, 5e-4, 1e-2), (0.0, 0.0, 0.1), (0.5, 1e-2, 3e-3)])
def test_sgd_matches_hand_unroll(rng, momentum, wd, lr):
    w0 = rng.normal(size=(3, 2))
    grads = [rng.normal(size=(3, 2)) for _ in range(2)]
    # oracle, written out step by step
    v1 = grads[0] + wd * w0
    w1 = w0 - lr * v1
    v2 = momentum * v1 + grads[1] + wd * w1
    w2 = w1 - lr * v2
    cfg = TrainConfig(lr0=lr, momentum=momentum, weight_decay=wd)
    p = ModelParams({"w": torch.from_numpy(w0.copy())})
    st = OptimizerState(p.zeros_like())
    for g in grads:
        sgd_step(p, {"w": torch.from_numpy(g)}, st, cfg)
    assert np.max(np.abs(p["w"].numpy() - w2)) <= 1e-12
    assert st.step == 2


def test_sgd_rejects_nan():
    p = ModelParams({"w": torch.zeros(2)})
    with pytest.raises(NonFiniteValueError):
        sgd_step(p, {"w": torch.tensor([0.0, float("nan")])}, OptimizerState(p.zeros_like()), TrainConfig())


def test_config_validation():
    for bad in (dict(lr0=0), dict(momentum=1.0), dict(decay_gamma=0), dict(mode="x"), dict(variant="x")):
        with pytest.raises(ValidationError):
            TrainConfig(**bad)


def test_variants_are_cumulative():
    m, a = ModelConfig(), AugmentConfig()
    got = [apply_variant(v, m, a) for v in ("baseline", "+dtm", "+srm", "+mcutout-full")]
    assert [(c.use_dtm, c.use_srm, g.mcutout_prob > 0) for c, g in got] == [
        (False, False, False), (True, False, False), (True, True, False), (True, True, True)]


def test_hide_labels(synth_samples):
    lab, unl = hide_labels(synth_samples, 0.5, seed=0)
    assert len(lab) == len(unl) == 4
    assert all(s.label is None for s in unl) and all(s.label is not None for s in lab)
    assert {s.id for s in lab} | {s.id for s in unl} == {s.id for s in synth_samples}
    assert [s.id for s in hide_labels(synth_samples, 0.5, seed=0)[0]] == [s.id for s in lab]


def test_train_errors(synth_samples, small_cfg):
    with pytest.raises(EmptyDatasetError):
        train([], None, TrainConfig(epochs=1), small_cfg)
    with pytest.raises(MissingLabelError):
        train([synth_samples[0].replace(label=None)], None, TrainConfig(epochs=1), small_cfg)
    with pytest.raises(EmptyDatasetError):
        train(synth_samples, [], TrainConfig(epochs=1, mode="semi"), small_cfg)


def test_divergence_is_reported(synth_samples, small_cfg):
    with pytest.raises(DivergenceError):
        train(synth_samples, None, TrainConfig(epochs=3, lr0=1e12, batch_size=4), small_cfg)


def test_training_reduces_loss(synth_samples, small_cfg):
    cfg = TrainConfig(epochs=12, batch_size=4, decay_gamma=1.0)
    st = train(synth_samples, None, cfg, small_cfg, AugmentConfig(flip_prob=0, mcutout_prob=0), val=synth_samples)
    assert st.history[-1].l_s < st.history[0].l_s
    assert st.best_params is not None and st.best_miou == max(r.val_miou for r in st.history)
    assert st.epoch == 12 and len(st.step_losses) == 24


def test_semi_mode_records_unsupervised_loss(synth_samples, small_cfg):
    lab, unl = hide_labels(synth_samples, 0.5)
    st = train(lab, unl, TrainConfig(epochs=1, batch_size=2, mode="semi"), small_cfg)
    assert st.history[0].l_u > 0


def test_max_steps(synth_samples, small_cfg):
    st = train(synth_samples, None, TrainConfig(epochs=5, batch_size=2, max_steps=3), small_cfg)
    assert st.optimizer.step == 3


def test_ablation_table(synth_samples, small_cfg):
    rows = run_ablation(synth_samples[:4], synth_samples[4:], small_cfg, TrainConfig(epochs=1, batch_size=4),
                        variants=("baseline", "+dtm"), seeds=(0, 1))
    assert [r.variant for r in rows] == ["baseline", "+dtm"] and all(len(r.per_seed) == 2 for r in rows)
    text = format_table(rows)
    assert text.splitlines()[1].startswith("baseline")


def test_sgd_single_step_arithmetic():
    p = ModelParams({"w": torch.tensor([1.0], dtype=torch.float64)})
    sgd_step(p, {"w": torch.tensor([0.1], dtype=torch.float64)}, OptimizerState(p.zeros_like()),
             TrainConfig(lr0=0.01, momentum=0.0, weight_decay=0.0))
    assert abs(float(p["w"]) - 0.999) < 1e-15


def test_sgd_zero_gradient_is_fixed_point(rng):
    w = torch.from_numpy(rng.normal(size=(4,)))
    p = ModelParams({"w": w.clone()})
    st = OptimizerState(p.zeros_like())
    for _ in range(3):
        sgd_step(p, {"w": torch.zeros(4, dtype=torch.float64)}, st, TrainConfig(weight_decay=0.0))
    assert torch.equal(p["w"], w)


def test_lr_is_nonincreasing():
    cfg = TrainConfig(decay_gamma=0.95)
    lrs = [lr_at(e, cfg) for e in range(300)]
    assert all(a >= b for a, b in zip(lrs, lrs[1:]))


def test_fixed_seed_is_reproducible(synth_samples, small_cfg):
    cfg = TrainConfig(epochs=2, batch_size=4, seed=9)
    a = train(synth_samples, None, cfg, small_cfg)
    b = train(synth_samples, None, cfg, small_cfg)
    assert a.step_losses == b.step_losses and a.params.equal(b.params)


def test_epoch_record_line():
    from spidermesh.trainer import EpochRecord
    assert EpochRecord(3, 0.01, 1.5, 0.25, 0.5).line() == \
        "epoch=3 lr=0.01 l_s=1.500000 l_u=0.250000 val_miou=0.500000"
