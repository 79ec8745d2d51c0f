"""
Stylization, de-stylization and sampling new styles
===================================================

A trained model offers two ways to pick a style code:

* **encode** a reference glyph of the target font (its style mean), or
* **sample** ``z = y*1 + eps`` from the prior of font label ``y`` - no
  reference image needed, and different ``eps`` give small style variations.

De-stylization maps any glyph back to the standard font using the standard
font's prior mean (all zeros), so it also works for fonts never seen in
training.

Run after demo_02:  python demos/demo_03_stylize_and_sample.py
"""

import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from fontgan.glyphdata import GlyphDataset
from fontgan.inference import destylize, prior_style, reference_style, stylize
from fontgan.networks import load_checkpoint
from _common import OUT

ds = GlyphDataset.load(OUT / "dataset")
model, meta = load_checkpoint(OUT / "model" / "best.pt")
print("fonts known to the checkpoint:", {f["label"]: f["name"] for f in meta["fonts"]})

test_ids = ds.manifest.test
sources = np.stack([ds.glyph(0, g).pixels for g in test_ids])
y = ds.target_labels[0]
ref_id = sorted(ds.manifest.train)[0]

# %%
# Encode path: the style comes from one reference glyph of font y.
style = reference_style(model, ds.glyph(y, ref_id).pixels)
encoded = stylize(model, sources, style)

# %%
# Sample path: four draws from the prior of font y, same content.
samples = [stylize(model, sources, prior_style(y, 1, seed=s)) for s in range(4)]

# %%
# De-stylize the real target-font glyphs back to the standard font.
targets = np.stack([ds.glyph(y, g).pixels for g in test_ids])
restored = destylize(model, targets)

rows = [("standard", sources), ("encode", encoded)] + [(f"sample {i}", s) for i, s in enumerate(samples)] + \
       [(ds.font(y).name, targets), ("de-stylized", restored)]
fig, axes = plt.subplots(len(rows), len(test_ids), figsize=(1.2 * len(test_ids), 1.2 * len(rows)), squeeze=False)
for (name, images), ax_row in zip(rows, axes):
    for ax, img in zip(ax_row, images):
        ax.imshow(img, cmap="gray", vmin=-1, vmax=1)
        ax.axis("off")
    ax_row[0].set_title(name, fontsize=7, loc="left")
fig.savefig(OUT / "03_translation.png", dpi=100)
print("wrote", OUT / "03_translation.png")
