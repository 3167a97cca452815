"""Add the components one at a time and compare validation mIoU.

Runs the four cumulative variants (baseline, +dtm, +srm, +mcutout-full)
over three seeds on the synthetic set where classes are defined jointly by
colour and temperature.  This is the same setup as the ablation acceptance
check and takes roughly 15 minutes on one core.

    python3 demos/04_ablation.py [EPOCHS]
"""
import sys

from spidermesh.augment import AugmentConfig
from spidermesh.datamodel import ModelConfig
from spidermesh.io.synth import SynthSpec, synthesize_splits
from spidermesh.trainer import TrainConfig, format_table, run_ablation

epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 60
spec = SynthSpec(num_samples=64, size=(64, 64), num_classes=3, impair_prob=0.6, class_layout="crossed",
                 shape_scale=(0.2, 0.4), shapes_per_image=(1, 3), seed=0)
splits = synthesize_splits(spec)
rows = run_ablation(splits["train"], splits["val"], ModelConfig(num_classes=3, aspp_channels=32),
                    TrainConfig(epochs=epochs, batch_size=8, decay_gamma=0.98), AugmentConfig())
print(format_table(rows))
