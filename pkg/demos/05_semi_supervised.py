"""Hide half of the labels and let the two heads teach each other.

Compares training on the labelled half alone with semi mode, where the
unlabelled half contributes cross-modal pseudo-label losses.

    python3 demos/05_semi_supervised.py [EPOCHS]
"""
import sys

from spidermesh.augment import AugmentConfig
from spidermesh.datamodel import ModelConfig
from spidermesh.io.synth import SynthSpec, synthesize_splits
from spidermesh.trainer import TrainConfig, hide_labels, train

epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 120
splits = synthesize_splits(SynthSpec(num_samples=64, size=(64, 64), impair_prob=0.6, seed=0))
model_cfg = ModelConfig(num_classes=4, aspp_channels=32)
labeled, unlabeled = hide_labels(splits["train"], 0.5, seed=0)
print(f"{len(labeled)} labelled, {len(unlabeled)} unlabelled training samples")

for mode in ("supervised", "semi"):
    cfg = TrainConfig(epochs=epochs, batch_size=8, decay_gamma=0.98, mode=mode)
    state = train(labeled, unlabeled if mode == "semi" else None, cfg, model_cfg, AugmentConfig(),
                  val=splits["val"])
    print(f"{mode:>10}: best val mIoU {state.best_miou:.3f}")
