"""
Character classifier used as a stand-in OCR engine.

It is trained on standard-font glyphs only (random +-2 px shifts, +-10%
scale), since de-stylized output should look like the standard font.
Accuracies it reports are internal to this project and not comparable to a
commercial OCR engine.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

OCR_FORMAT = "fontgan-ocr"


class OcrRejectedError(RuntimeError):
    def __init__(self, accuracy: float, threshold: float, wrong: list[str]):
        self.accuracy = accuracy
        self.threshold = threshold
        self.wrong = wrong
        super().__init__(f"OCR proxy clean accuracy {accuracy:.4f} < {threshold}; misread: {wrong[:20]}")


@dataclass
class OcrConfig:
    steps: int = 600
    batch_size: int = 64
    lr: float = 1e-3
    seed: int = 0
    max_shift: float = 2.0
    max_scale: float = 0.10
    threshold: float = 0.99


class GlyphClassifier(nn.Module):
    def __init__(self, n_classes: int):
        super().__init__()
        # glyph identity survives a 2x downsampling; it quarters the cost
        self.features = nn.Sequential(
            nn.AvgPool2d(2),
            nn.Conv2d(1, 32, 3, padding=1), nn.ReLU(), nn.MaxPool2d(2),
            nn.Conv2d(32, 64, 3, padding=1), nn.ReLU(), nn.MaxPool2d(2),
            nn.Conv2d(64, 128, 3, padding=1), nn.ReLU(), nn.MaxPool2d(2),
            nn.Conv2d(128, 128, 3, padding=1), nn.ReLU(),
        )
        self.head = nn.Linear(128 * 4 * 4, n_classes)

    def forward(self, x):
        return self.head(self.features(x).flatten(1))


def augment(images: torch.Tensor, generator: torch.Generator, max_shift: float, max_scale: float) -> torch.Tensor:
    """Random shift/scale, filling uncovered area with background (+1)."""
    b, _, h, w = images.shape
    scale = 1 + (torch.rand(b, generator=generator) * 2 - 1) * max_scale
    shift = (torch.rand(b, 2, generator=generator) * 2 - 1) * max_shift * 2 / torch.tensor([w, h])
    theta = torch.zeros(b, 2, 3)
    theta[:, 0, 0] = 1 / scale
    theta[:, 1, 1] = 1 / scale
    theta[:, :, 2] = -shift / scale[:, None]
    grid = F.affine_grid(theta, images.shape, align_corners=False)
    return F.grid_sample(images - 1, grid, align_corners=False, padding_mode="zeros") + 1


class OcrProxy:
    def __init__(self, model: GlyphClassifier, charset: list[str], meta: dict | None = None):
        self.model = model.eval()
        self.charset = list(charset)
        self.meta = dict(meta or {})
        self._index = {g: i for i, g in enumerate(self.charset)}

    @property
    def clean_accuracy(self) -> float | None:
        return self.meta.get("clean_accuracy")

    def predict(self, images) -> list[str]:
        x = torch.as_tensor(np.asarray(images, dtype=np.float32))
        if x.dim() == 2:
            x = x[None]
        if x.dim() == 3:
            x = x[:, None]
        with torch.no_grad():
            idx = self.model(x).argmax(1)
        return [self.charset[i] for i in idx.tolist()]

    def accuracy(self, images, glyph_ids) -> float:
        pred = self.predict(images)
        return float(np.mean([p == g for p, g in zip(pred, glyph_ids)])) if pred else float("nan")

    def save(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        blob = {"format": OCR_FORMAT, "version": 1, "charset": self.charset, "meta": self.meta,
                "state": self.model.state_dict()}
        tmp = path.with_name(path.name + ".tmp")
        torch.save(blob, tmp)
        tmp.replace(path)

    @classmethod
    def load(cls, path) -> "OcrProxy":
        blob = torch.load(Path(path), map_location="cpu", weights_only=False)
        if blob.get("format") != OCR_FORMAT:
            raise ValueError(f"{path}: not an OCR proxy artifact")
        model = GlyphClassifier(len(blob["charset"]))
        model.load_state_dict(blob["state"])
        return cls(model, blob["charset"], blob["meta"])


def train_ocr_proxy(dataset, config: OcrConfig | None = None) -> OcrProxy:
    """Fit the classifier on every standard-font glyph of ``dataset``.

    Raises:
        OcrRejectedError: accuracy on the clean glyphs is below ``config.threshold``.
    """
    config = config or OcrConfig()
    charset = list(dataset.manifest.charset)
    clean = torch.from_numpy(np.stack([dataset.glyph(0, g).pixels for g in charset]))[:, None]
    targets = torch.arange(len(charset))

    torch_gen = torch.Generator().manual_seed(config.seed)
    init = torch.Generator().manual_seed(config.seed + 1)
    model = GlyphClassifier(len(charset))
    for m in model.modules():
        if isinstance(m, (nn.Conv2d, nn.Linear)):
            with torch.no_grad():
                bound = (1.0 / m.weight[0].numel()) ** 0.5
                m.weight.uniform_(-bound, bound, generator=init)
                m.bias.zero_()
    opt = torch.optim.Adam(model.parameters(), lr=config.lr)
    model.train()
    for _ in range(config.steps):
        idx = torch.randint(len(charset), (config.batch_size,), generator=torch_gen)
        x = augment(clean[idx], torch_gen, config.max_shift, config.max_scale)
        loss = F.cross_entropy(model(x), targets[idx])
        opt.zero_grad()
        loss.backward()
        opt.step()

    proxy = OcrProxy(model, charset)
    pred = proxy.predict(clean[:, 0].numpy())
    acc = float(np.mean([p == g for p, g in zip(pred, charset)]))
    proxy.meta.update({"clean_accuracy": acc, "config": asdict(config), "n_classes": len(charset),
                       "source_font": dataset.font(0).name})
    if acc < config.threshold:
        raise OcrRejectedError(acc, config.threshold, [g for p, g in zip(pred, charset) if p != g])
    return proxy
