"""A look at the synthetic RGB-thermal scenes used throughout the tests.

Writes a small dataset to disk, reloads it, and saves a preview strip
(rgb | thermal | label) for the first few samples.

    python3 demos/01_synthetic_data.py [OUT_DIR]
"""
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from spidermesh.io.dataset import generate_synthetic, load_dataset
from spidermesh.io.synth import SynthSpec, class_colors

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out/synthetic")
spec = SynthSpec(num_samples=16, size=(64, 64), num_classes=4, impair_prob=0.6, seed=0)
generate_synthetic(spec, out)

samples = load_dataset(out, "train")
print(f"{len(samples)} training samples of size {samples[0].size}")

# class balance over the split
counts = np.bincount(np.concatenate([s.label.ravel() for s in samples]), minlength=spec.num_classes)
for k, n in enumerate(counts):
    print(f"  class {k}: {n / counts.sum():6.1%} of pixels")

# where RGB was darkened the mean brightness drops, thermal is untouched
palette = class_colors(spec.num_classes)
rows = []
for s in samples[:4]:
    thermal = np.repeat(s.thermal, 3, axis=-1)
    label = palette[s.label]
    rows.append(np.concatenate([s.rgb, thermal, label], axis=1))
preview = np.round(255 * np.concatenate(rows, axis=0)).astype(np.uint8)
Image.fromarray(preview).save(out / "preview.png")
print(f"preview written to {out / 'preview.png'}")
