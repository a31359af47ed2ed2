"""Where the parameter-free attention gate looks on a synthetic image.

Each class in the synthetic set differs from the others only inside a small
patch. The gate sigmoid(channel_max * channel_mean) is printed as a coarse
character map, with the class patch outlined for comparison.

Run: python3 demos/02_attention_gate.py
"""
import tempfile

import numpy as np

from saliency_hash import Tensor
from saliency_hash.attention import attention_gate
from saliency_hash.data import SyntheticSpec, load_dataset, gen_synthetic, patch_layout

spec = SyntheticSpec(classes=2, per_class=1, shape=(3, 24, 24), patch=6, contrast=0.4, seed=4)
with tempfile.TemporaryDirectory() as tmp:
    ds = load_dataset(gen_synthetic(spec, tmp))

top, left = patch_layout(spec)[0]
image = ds.images[:1].astype(np.float64)
# standardize each channel, as a feature map after batch norm would be
features = (image - image.mean(axis=(2, 3), keepdims=True)) / image.std(axis=(2, 3), keepdims=True)
gate = attention_gate(Tensor(features)).data[0, 0]

shades = " .:-=+*#%@"
for i, row in enumerate(gate):
    cells = []
    for j, g in enumerate(row):
        ch = shades[min(int(g * len(shades)), len(shades) - 1)]
        inside = top <= i < top + spec.patch and left <= j < left + spec.patch
        cells.append(f"[{ch}]" if inside else f" {ch} ")
    print("".join(cells))
inside = gate[top:top + spec.patch, left:left + spec.patch].mean()
print(f"mean gate inside the patch {inside:.3f}, over the whole image {gate.mean():.3f}")
