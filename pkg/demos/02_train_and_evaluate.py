"""Train the full model on synthetic data, then drop each modality at test time.

The synthetic set darkens part of the RGB image in most samples, so the
thermal-only score is expected to stay closer to the two-modality score than
the rgb-only one.

    python3 demos/02_train_and_evaluate.py [EPOCHS]
"""
import logging
import sys

from spidermesh.augment import AugmentConfig
from spidermesh.datamodel import ModelConfig
from spidermesh.evalkit import miou, evaluate, robustness_eval
from spidermesh.io.synth import SynthSpec, synthesize_splits
from spidermesh.trainer import TrainConfig, train

logging.basicConfig(level=logging.INFO, format="%(message)s")
epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 40

splits = synthesize_splits(SynthSpec(num_samples=64, size=(64, 64), impair_prob=0.6, impair_area=(0.1, 1.0), seed=0))
model_cfg = ModelConfig(num_classes=4, aspp_channels=32)
cfg = TrainConfig(epochs=epochs, batch_size=8, decay_gamma=0.98)
state = train(splits["train"], None, cfg, model_cfg, AugmentConfig(), val=splits["val"])

params = state.best_params
per_class, mean = miou(evaluate(params, model_cfg, splits["val"]).main)
print("per-class IoU:", " ".join(f"{v:.3f}" for v in per_class))
print(f"val mIoU {mean:.3f}")
for mode in ("both", "rgb-only", "thermal-only"):
    r = robustness_eval(params, model_cfg, splits["val"], mode)
    print(f"{mode:>13}: main {r['main']:.3f}  aux {r['aux']:.3f}")
