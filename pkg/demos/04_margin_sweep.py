"""mAP@10 over a grid of margin ratios r and code lengths K.

The contrastive margin is r * K, so r=0.5 asks dissimilar codes to differ in
at least half their bits. Uses a small dataset and one epoch per cell; the
command-line equivalent is

    saliency-hash sweep --queries data/query.csv --r 0.3,0.5,0.7 --k 12,24,36,48

Run: python3 demos/04_margin_sweep.py
"""
import tempfile

from saliency_hash.data import SyntheticSpec, gen_synthetic, load_dataset, split_manifest
from saliency_hash.pipeline import RunConfig, format_sweep_table, sweep

with tempfile.TemporaryDirectory() as tmp:
    manifest = gen_synthetic(SyntheticSpec(classes=4, per_class=40, shape=(3, 16, 16), seed=7), tmp)
    g, q = split_manifest(manifest, seed=0)
    gallery, queries = load_dataset(g), load_dataset(q)

rows = sweep(RunConfig(epochs=2, batch=10, seed=3, widths=(8, 16)), gallery, queries,
             [0.3, 0.5, 0.7], [12, 24, 36, 48])
print(format_sweep_table(rows))
