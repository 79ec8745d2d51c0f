"""
Training a toy model
====================

The training graph encodes a standard-font glyph X and a styled glyph Y into
content codes and style distributions, swaps them and decodes:
``fake_Y = G_Y(content(X), style(Y))`` and ``fake_X = G_X(content(Y), style(X))``.
Style distributions are pulled towards N(y*1, I), so a code sampled from
the prior of font y also renders in font y.

This demo first pre-trains the content prior (two simple fonts), then
trains the main model for a few epochs and plots every logged loss term.
It runs on a CPU in a few minutes; raise ``EPOCHS`` for nicer glyphs.

Run after demo_01:  python demos/demo_02_train_toy.py
"""

import os

from fontgan.cli import plot_losses
from fontgan.glyphdata import CharacterSpec, FontLabel, GlyphDataset, build_dataset
from fontgan.metrics import style_label_error
from fontgan.networks import init_params
from fontgan.training import TrainConfig, pretrain_cpm, train
from _common import OUT

EPOCHS = int(os.environ.get("FONTGAN_DEMO_EPOCHS", "4"))
ds = GlyphDataset.load(OUT / "dataset")

# %%
# Stage one: the content prior. Train the whole graph on the standard font and
# one simple font only, then freeze its content encoder.
pair_root = OUT / "cpm_dataset"
fonts = [(f.file, FontLabel(i, f.name)) for i, f in enumerate(ds.manifest.fonts[:2])]
charset = [CharacterSpec.from_glyph_id(g) for g in ds.manifest.charset]
build_dataset(fonts, charset, pair_root, split_ratio=0.8, seed=0)
cpm_config = TrainConfig(epochs=1, batch_size=4, steps_per_epoch=15, checkpoint_dir=str(OUT / "cpm"))
cpm = pretrain_cpm(pair_root, cpm_config)
print("content prior ready:", cpm.meta["fonts"])

# %%
# Stage two: main training with both the style prior and the content prior.
config = TrainConfig(epochs=EPOCHS, batch_size=4, steps_per_epoch=25, checkpoint_dir=str(OUT / "model"))
before = style_label_error(init_params(config.seed), ds)
result = train(ds, config, cpm=cpm)
after = style_label_error(result.model, ds)
first, last = result.records[0], result.records[-1]
print(f"pixel term {first['pixel']:.3f} -> {last['pixel']:.3f} over {len(result.records)} steps")
for y in before:
    print(f"font {y}: mean |mu - y| {before[y]:.3f} -> {after[y]:.3f}")

# %%
# Every term of the objective is logged per step; the lower panel checks that
# the logged total equals the weighted sum of its parts.
fig, terms = plot_losses(result.records, config.weights)
fig.savefig(OUT / "02_losses.png", dpi=100)
print("checkpoint:", result.checkpoint, "| plot:", OUT / "02_losses.png")
