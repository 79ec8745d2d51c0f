"""
Measuring glyph quality
=======================

Four numbers describe a generated glyph against its ground truth:

* **MS-SSIM** (higher is better): 3-scale structural similarity; 64x64 glyphs
  leave room for only three halvings of an 11x11 window.
* **LD** (lower is better): mean length of a dense descriptor flow from the
  reference to the output, over the reference's ink - how far strokes moved.
* **L1** (lower is better): mean absolute pixel difference on a [0, 1] scale.
* **OCR** (higher is better): accuracy of a small classifier trained on the
  standard font, applied to de-stylized output. It is a project-internal
  proxy, not a general OCR engine.

Run after demo_02:  python demos/demo_04_metrics.py
"""

import numpy as np

from fontgan.glyphdata import GlyphDataset
from fontgan.metrics import OcrConfig, evaluate, l1_metric, local_distortion, ms_ssim, train_ocr_proxy
from fontgan.networks import init_params, save_checkpoint
from _common import OUT

ds = GlyphDataset.load(OUT / "dataset")
a = ds.glyph(0, ds.manifest.train[0]).pixels

# %%
# Sanity first: identity and a pure translation.
shifted = np.ones_like(a)
shifted[:, 3:] = a[:, :-3]
print(f"identity: ms_ssim={ms_ssim(a, a):.6f} ld={local_distortion(a, a):.3f} l1={l1_metric(a, a):.3f}")
print(f"3 px shift: ms_ssim={ms_ssim(a, shifted):.3f} ld={local_distortion(a, shifted):.3f} "
      f"l1={l1_metric(a, shifted):.3f}")

# %%
# The OCR proxy is trained on the standard font of the dataset and must read
# its clean glyphs essentially perfectly before it is accepted.
ocr = train_ocr_proxy(ds, OcrConfig(seed=0))
print(f"OCR proxy clean accuracy {ocr.clean_accuracy:.3f} over {len(ocr.charset)} characters")

# %%
# Evaluate the demo model and an untrained one on the held-out characters.
untrained = OUT / "untrained.pt"
save_checkpoint(untrained, init_params(0), {"config_hash": "untrained"})
for name, ckpt in (("trained", OUT / "model" / "best.pt"), ("untrained", untrained)):
    report = evaluate(ckpt, ds, "test", ocr)
    report.save(OUT / f"04_eval_{name}.json")
    print(f"\n== {name} ==")
    print(report.table("stylization"))
    print(report.table("destylization"))
