"""
Quantitative evaluation over a dataset split, both translation directions.

Stylization takes its style from one fixed reference glyph per target font
(the first training-split character) and uses the style mean, not a sample.
De-stylization uses the standard-font prior mean as its style code.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from ..inference import destylize, reference_style, stylize
from ..networks import FontGAN, load_checkpoint
from .distortion import DegenerateGlyphWarning, local_distortion
from .ocr import OcrProxy
from .ssim import ms_ssim

DIRECTIONS = ("stylization", "destylization")
OCR_NOTE = ("ocr_acc comes from a classifier trained on the standard font; "
            "it is not comparable to accuracies of a general OCR engine")


@dataclass
class MetricSummary:
    ms_ssim: float = float("nan")
    ld: float = float("nan")
    l1: float = float("nan")
    ocr_acc: float | None = None
    n: int = 0


@dataclass
class EvalReport:
    per_font: dict[str, dict[int, MetricSummary]] = field(default_factory=dict)
    overall: dict[str, MetricSummary] = field(default_factory=dict)
    skipped: int = 0
    degenerate: int = 0
    split: str = "test"
    note: str = OCR_NOTE

    def to_dict(self) -> dict:
        return {
            "split": self.split,
            "skipped": self.skipped,
            "degenerate": self.degenerate,
            "note": self.note,
            "overall": {d: asdict(s) for d, s in self.overall.items()},
            "per_font": {d: {str(y): asdict(s) for y, s in fonts.items()} for d, fonts in self.per_font.items()},
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "EvalReport":
        d = json.loads(Path(path).read_text())
        return cls(
            per_font={k: {int(y): MetricSummary(**s) for y, s in v.items()} for k, v in d["per_font"].items()},
            overall={k: MetricSummary(**s) for k, s in d["overall"].items()},
            skipped=d["skipped"], degenerate=d["degenerate"], split=d["split"], note=d["note"],
        )

    def table(self, direction: str) -> str:
        """Metric rows by font columns, laid out like the usual comparison tables."""
        fonts = sorted(self.per_font.get(direction, {}))
        cols = [f"y={y}" for y in fonts] + ["all"]
        summaries = [self.per_font[direction][y] for y in fonts] + [self.overall[direction]]
        rows = [("MS-SSIM", "ms_ssim"), ("LD", "ld"), ("L1 loss", "l1")]
        if direction == "destylization":
            rows.append(("OCR", "ocr_acc"))
        width = max(9, *(len(c) for c in cols))
        lines = [f"{direction} (n={self.overall[direction].n})",
                 "Metric   | " + " ".join(c.rjust(width) for c in cols)]
        lines.append("-" * len(lines[-1]))
        for label, attr in rows:
            vals = [getattr(s, attr) for s in summaries]
            cells = ["-".rjust(width) if v is None else f"{v:.4f}".rjust(width) for v in vals]
            lines.append(f"{label:<8} | " + " ".join(cells))
        return "\n".join(lines)


@dataclass
class Sample:
    direction: str
    font: int
    glyph_id: str
    output: np.ndarray
    reference: np.ndarray


def l1_metric(a, b) -> float:
    """Mean absolute difference of two [-1, 1] glyphs on the [0, 1] scale."""
    a = np.asarray(getattr(a, "pixels", a), dtype=np.float64)
    b = np.asarray(getattr(b, "pixels", b), dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.mean(np.abs(a - b)) / 2.0)


def _summarize(rows: list[dict], with_ocr: bool) -> MetricSummary:
    if not rows:
        return MetricSummary(ocr_acc=None)
    s = MetricSummary(
        ms_ssim=float(np.mean([r["ms_ssim"] for r in rows])),
        ld=float(np.mean([r["ld"] for r in rows])),
        l1=float(np.mean([r["l1"] for r in rows])),
        n=len(rows),
    )
    if with_ocr:
        s.ocr_acc = float(np.mean([r["ocr"] for r in rows]))
    return s


def score_samples(samples: list[Sample], ocr: OcrProxy | None = None, split: str = "test",
                  skipped: int = 0) -> EvalReport:
    """Compute all metrics for generated/reference pairs and aggregate them."""
    rows: dict[str, dict[int, list[dict]]] = {d: {} for d in DIRECTIONS}
    degenerate = 0
    ocr_hits = {}
    if ocr is not None:
        des = [s for s in samples if s.direction == "destylization"]
        if des:
            preds = ocr.predict(np.stack([s.output for s in des]))
            ocr_hits = {id(s): p == s.glyph_id for s, p in zip(des, preds)}
    for s in samples:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateGlyphWarning)
            ld, flagged = local_distortion(s.reference, s.output, return_flag=True)
        degenerate += flagged
        row = {"ms_ssim": ms_ssim(s.output, s.reference), "ld": ld, "l1": l1_metric(s.output, s.reference)}
        if id(s) in ocr_hits:
            row["ocr"] = float(ocr_hits[id(s)])
        rows[s.direction].setdefault(s.font, []).append(row)

    report = EvalReport(skipped=skipped, degenerate=degenerate, split=split)
    for d in DIRECTIONS:
        with_ocr = d == "destylization" and ocr is not None
        report.per_font[d] = {y: _summarize(r, with_ocr) for y, r in sorted(rows[d].items())}
        report.overall[d] = _summarize([r for rs in rows[d].values() for r in rs], with_ocr)
    return report


def style_references(dataset) -> dict[int, str]:
    """Fixed style reference per font: its first training-split character."""
    ref = sorted(dataset.manifest.train)[0]
    return {y: ref for y in dataset.labels}


def generate_samples(model: FontGAN, dataset, split: str = "test", fonts=None,
                     references: dict[int, str] | None = None) -> tuple[list[Sample], int]:
    fonts = list(fonts) if fonts is not None else dataset.target_labels
    references = references or style_references(dataset)
    ids = dataset.manifest.split(split)
    samples, skipped = [], 0
    for y in fonts:
        present = [g for g in ids if (0, g) in dataset.images and (y, g) in dataset.images]
        skipped += len(ids) - len(present)
        if not present or (y, references[y]) not in dataset.images:
            skipped += len(present)
            continue
        style = reference_style(model, dataset.glyph(y, references[y]).pixels)
        sources = np.stack([dataset.glyph(0, g).pixels for g in present])
        targets = np.stack([dataset.glyph(y, g).pixels for g in present])
        for g, out, ref in zip(present, stylize(model, sources, style), targets):
            samples.append(Sample("stylization", y, g, out, ref))
        for g, out, ref in zip(present, destylize(model, targets), sources):
            samples.append(Sample("destylization", y, g, out, ref))
    return samples, skipped


def evaluate(checkpoint, dataset, split: str = "test", ocr: OcrProxy | None = None, fonts=None) -> EvalReport:
    """Run both directions over ``split`` and score them.

    ``checkpoint`` is a path or an in-memory FontGAN; it is never modified.
    """
    model = checkpoint if isinstance(checkpoint, FontGAN) else load_checkpoint(checkpoint)[0]
    samples, skipped = generate_samples(model, dataset, split, fonts)
    return score_samples(samples, ocr, split, skipped)


@torch.no_grad()
def style_label_error(model: FontGAN, dataset, split: str = "train") -> dict[int, float]:
    """Per font, the mean over glyphs of mean_i |mu_i - y|."""
    out = {}
    for y in dataset.labels:
        x = torch.from_numpy(np.stack([dataset.glyph(y, g).pixels for g in dataset.manifest.split(split)]))[:, None]
        mu = model.E_f(x).mu
        out[y] = float((mu - y).abs().mean())
    return out
