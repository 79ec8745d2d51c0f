"""
Rendering fonts into a paired glyph dataset
===========================================

Every font is rasterized into 64x64 grayscale glyphs (ink = -1, background = +1),
centred on the ink bounding box with the em box as the common scale. The
first font is the *standard* font (label 0); each other font gets the next
label. Characters are split into disjoint train/test sets once, for all
fonts.

Run:  python demos/demo_01_glyph_dataset.py
Set FONTGAN_DEMO_FONTS=std.ttf:a.ttf:b.ttf to use your own (e.g. CJK) fonts
together with FONTGAN_DEMO_TEXT for the characters.
"""

import os

import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from fontgan.glyphdata import FontLabel, GlyphDataset, build_dataset, charset_from_text, sample_batch
from _common import OUT, demo_fonts

# %%
# Build the dataset: the standard font first, then the styled fonts.
text = os.environ.get("FONTGAN_DEMO_TEXT", "ABDEFGHKMNPRSWabdefghkmnprsw")
fonts = demo_fonts()
entries = [(path, FontLabel(y, path.stem)) for y, path in enumerate(fonts)]
root = OUT / "dataset"
manifest = build_dataset(entries, charset_from_text(text), root, split_ratio=0.8, seed=0)
print(f"{len(manifest.fonts)} fonts, train {len(manifest.train)} / test {len(manifest.test)} characters")
print("excluded (missing in some font):", manifest.excluded)

# %%
# The split is disjoint by construction and stored in manifest.json.
assert not set(manifest.train) & set(manifest.test)

# %%
# Show every font for the first few characters.
ds = GlyphDataset.load(root)
ids = manifest.charset[:8]
fig, axes = plt.subplots(len(ds.labels), len(ids), figsize=(len(ids), len(ds.labels)))
for row, y in zip(axes, ds.labels):
    for ax, gid in zip(row, ids):
        ax.imshow(ds.glyph(y, gid).pixels, cmap="gray", vmin=-1, vmax=1)
        ax.axis("off")
    row[0].set_title(ds.font(y).name, fontsize=7, loc="left")
fig.savefig(OUT / "01_fonts.png", dpi=100)

# %%
# A training tuple pairs character A in the standard font with character B in
# a target font; the references are the swapped ground truths.
batch = sample_batch(ds, 3, "train", np.random.default_rng(0))
for s in batch:
    print(f"X={s.source.char.char!r}@{s.source.font.name}  Y={s.target.char.char!r}@{s.target.font.name}"
          f"  -> fake_Y should look like {s.target_ref.char.char!r}@{s.target_ref.font.name}")
print("wrote", OUT / "01_fonts.png")
