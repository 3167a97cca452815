"""Where does each branch ask for help from the other modality?

Trains briefly, then saves the per-stage demand maps for one validation
image next to its RGB input.  Bright pixels mean the branch pulls in more of
the other modality's features there.

    python3 demos/03_demand_maps.py [OUT_DIR]
"""
import sys
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from spidermesh.datamodel import ModelConfig
from spidermesh.heads import forward, sample_tensors
from spidermesh.io.synth import SynthSpec, synthesize_splits
from spidermesh.trainer import TrainConfig, train

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out/demand_maps")
out.mkdir(parents=True, exist_ok=True)

splits = synthesize_splits(SynthSpec(num_samples=48, size=(64, 64), impair_prob=1.0, seed=1))
cfg = ModelConfig(num_classes=4, aspp_channels=32)
state = train(splits["train"], None, TrainConfig(epochs=30, batch_size=8), cfg)

sample = splits["val"][0]
with torch.no_grad():
    res = forward(state.params, *sample_tensors(sample), cfg, keep_maps=True)

Image.fromarray(np.round(255 * sample.rgb).astype(np.uint8)).save(out / "rgb.png")
for i, maps in enumerate(res.demand_maps):
    for branch, m in maps.items():
        a = m[0, 0].numpy()
        # nearest upscale so every stage shows at input size
        big = np.kron(a, np.ones((2 ** (i + 1), 2 ** (i + 1))))
        Image.fromarray(np.round(255 * big).astype(np.uint8), mode="L").save(out / f"stage{i}_{branch}.png")
        print(f"stage {i} {branch:>7}: mean demand {a.mean():.3f}  range [{a.min():.3f}, {a.max():.3f}]")
print(f"maps written to {out}")
