"""
Glyph rendering, dataset layout and paired batch sampling.

A dataset directory looks like::

    root/
      manifest.json
      <font name>/<glyph_id>.png     # 8-bit grayscale, lossless

Pixels are stored as uint8 and mapped to float with ``v / 127.5 - 1`` so
that background (255) is +1 and full ink (0) is -1. Because the float view
is a pure function of the stored bytes, save/load round trips are exact.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image, ImageDraw, ImageFont

log = logging.getLogger(__name__)

IMAGE_SIZE = 64
MARGIN = 0.08
SUPERSAMPLE = 4
MANIFEST_NAME = "manifest.json"
MANIFEST_VERSION = 1

# Small default charset for desk-scale runs. Frequent simplified characters.
DEMO_CHARSET = (
    "一二三十人大小山口日月木水火土上下中天王目田白石立文方心手子女"
    "力工门马牛羊鸟鱼米竹车雨云风电金言见走足耳头面身衣食字学生先问"
    "东西南北左右前后多少长高来去出入开关书画花草林森明早晚春夏秋冬"
)


class GlyphDataError(Exception):
    """Base class for dataset construction and loading errors."""


class FontReadError(GlyphDataError):
    """The font file cannot be opened or parsed."""


class MissingGlyphError(GlyphDataError):
    def __init__(self, font_file, codepoints):
        self.font_file = str(font_file)
        self.codepoints = sorted(codepoints)
        listed = ", ".join(f"U+{cp:04X}" for cp in self.codepoints)
        super().__init__(f"{self.font_file}: no glyph for {listed}")


@dataclass(frozen=True, order=True)
class CharacterSpec:
    codepoint: int

    def __post_init__(self):
        cp = self.codepoint
        if not (0 <= cp <= 0x10FFFF) or 0xD800 <= cp <= 0xDFFF:
            raise ValueError(f"not a Unicode scalar value: {cp!r}")

    @property
    def glyph_id(self) -> str:
        return f"{self.codepoint:04x}"

    @property
    def char(self) -> str:
        return chr(self.codepoint)

    @classmethod
    def from_glyph_id(cls, glyph_id: str) -> "CharacterSpec":
        return cls(int(glyph_id, 16))


def charset_from_text(text: str) -> list[CharacterSpec]:
    """Unique characters of ``text`` in first-seen order, whitespace dropped."""
    seen = dict.fromkeys(c for c in text if not c.isspace())
    return [CharacterSpec(ord(c)) for c in seen]


@dataclass(frozen=True)
class FontLabel:
    y: int
    name: str

    def __post_init__(self):
        if self.y < 0:
            raise ValueError(f"font label must be non-negative, got {self.y}")

    @property
    def is_source(self) -> bool:
        return self.y == 0


@dataclass
class GlyphImage:
    pixels: np.ndarray  # (64, 64) float32 in [-1, 1]
    font: FontLabel
    char: CharacterSpec

    def __post_init__(self):
        if self.pixels.shape != (IMAGE_SIZE, IMAGE_SIZE):
            raise ValueError(f"glyph must be {IMAGE_SIZE}x{IMAGE_SIZE}, got {self.pixels.shape}")


@dataclass
class PairedSample:
    """One training tuple.

    ``source`` is character A in the standard font, ``target`` character B in
    a styled font; the two refs are the ground truth for the swapped outputs.
    """

    source: GlyphImage
    target: GlyphImage
    source_ref: GlyphImage
    target_ref: GlyphImage

    def check(self) -> None:
        """Raise ValueError unless the four glyphs form a consistent exchange pair."""
        if self.source.char != self.target_ref.char or self.target.char != self.source_ref.char:
            raise ValueError(f"inconsistent characters in pair {self.source.char} / {self.target.char}")
        if not self.source.font.y == self.source_ref.font.y == 0:
            raise ValueError("source glyphs must come from the standard font (y=0)")
        if not self.target.font.y == self.target_ref.font.y > 0:
            raise ValueError("target glyphs must share one non-standard font")


def to_float(raw: np.ndarray) -> np.ndarray:
    return raw.astype(np.float32) / np.float32(127.5) - np.float32(1.0)


def to_uint8(pixels: np.ndarray) -> np.ndarray:
    """Inverse of :func:`to_float` for values on the uint8 lattice."""
    return np.clip(np.rint((np.asarray(pixels, np.float64) + 1.0) * 127.5), 0, 255).astype(np.uint8)


# --------------------------------------------------------------------------
# rendering
# --------------------------------------------------------------------------

def font_coverage(font_file) -> set[int]:
    from fontTools.ttLib import TTFont, TTLibError

    try:
        with TTFont(str(font_file), lazy=True, fontNumber=0) as tt:
            cmap = tt.getBestCmap() or {}
    except (OSError, TTLibError, AssertionError) as exc:
        raise FontReadError(f"cannot read font {font_file}: {exc}") from exc
    return set(cmap)


def _load_font(font_file, px: int) -> ImageFont.FreeTypeFont:
    try:
        return ImageFont.truetype(str(font_file), px)
    except OSError as exc:
        raise FontReadError(f"cannot read font {font_file}: {exc}") from exc


def render_glyph_raw(font: ImageFont.FreeTypeFont, ch: str, size: int = IMAGE_SIZE) -> np.ndarray:
    """Rasterize one character to a (size, size) uint8 array, 255 = background.

    The font is scaled so the em box fills the canvas minus the margin; the
    ink bounding box is centred. Anti-aliasing comes from supersampling.
    """
    big = size * SUPERSAMPLE
    canvas = Image.new("L", (big, big), 0)
    draw = ImageDraw.Draw(canvas)
    bbox = draw.textbbox((0, 0), ch, font=font)
    if bbox[2] <= bbox[0] or bbox[3] <= bbox[1]:
        return np.full((size, size), 255, np.uint8)
    # centre of ink box -> centre of canvas
    ox = big / 2 - (bbox[0] + bbox[2]) / 2
    oy = big / 2 - (bbox[1] + bbox[3]) / 2
    draw.text((round(ox), round(oy)), ch, fill=255, font=font)
    ink = np.asarray(canvas, np.float64)
    if not ink.any():
        return np.full((size, size), 255, np.uint8)
    # box-filter downsample
    ink = ink.reshape(size, SUPERSAMPLE, size, SUPERSAMPLE).mean(axis=(1, 3))
    return (255 - np.rint(ink)).astype(np.uint8)


def render_font(font_file, charset: Sequence[CharacterSpec], size: int = IMAGE_SIZE,
                label: FontLabel | None = None) -> list[GlyphImage]:
    """Render every character of ``charset`` in one font.

    Raises:
        FontReadError: the file is not a readable outline font.
        MissingGlyphError: some characters have no glyph; ``codepoints`` lists them.
    """
    coverage = font_coverage(font_file)
    missing = [c.codepoint for c in charset if c.codepoint not in coverage]
    if missing:
        raise MissingGlyphError(font_file, missing)
    font = _load_font(font_file, round(size * SUPERSAMPLE * (1 - 2 * MARGIN)))
    label = label or FontLabel(0, Path(font_file).stem)
    return [GlyphImage(to_float(render_glyph_raw(font, c.char, size)), label, c) for c in charset]


# --------------------------------------------------------------------------
# dataset construction
# --------------------------------------------------------------------------

@dataclass
class FontEntry:
    name: str
    label: int
    file: str = ""


@dataclass
class DatasetManifest:
    fonts: list[FontEntry]
    charset: list[str]  # glyph ids, renderable in every font
    train: list[str]
    test: list[str]
    excluded: list[str] = field(default_factory=list)
    seed: int = 0
    split_ratio: float = 0.8
    content_hash: str = ""
    version: int = MANIFEST_VERSION

    def font_by_label(self, y: int) -> FontEntry:
        for f in self.fonts:
            if f.label == y:
                return f
        raise KeyError(f"no font with label {y}; known labels: {self.labels}")

    @property
    def labels(self) -> list[int]:
        return sorted(f.label for f in self.fonts)

    def split(self, name: str) -> list[str]:
        if name not in ("train", "test"):
            raise ValueError(f"unknown split {name!r}")
        return list(getattr(self, name))

    def to_json(self) -> str:
        d = {
            "version": self.version,
            "fonts": [vars(f) for f in self.fonts],
            "charset": self.charset,
            "train": self.train,
            "test": self.test,
            "excluded": self.excluded,
            "seed": self.seed,
            "split_ratio": self.split_ratio,
            "content_hash": self.content_hash,
        }
        return json.dumps(d, indent=2, ensure_ascii=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "DatasetManifest":
        d = json.loads(text)
        if d.get("version") != MANIFEST_VERSION:
            raise GlyphDataError(f"unsupported manifest version {d.get('version')!r}")
        d.pop("version")
        d["fonts"] = [FontEntry(**f) for f in d["fonts"]]
        return cls(**d)

    @classmethod
    def load(cls, root) -> "DatasetManifest":
        path = Path(root) / MANIFEST_NAME
        if not path.exists():
            raise GlyphDataError(f"no dataset manifest at {path}")
        return cls.from_json(path.read_text(encoding="utf-8"))


def split_characters(glyph_ids: Iterable[str], split_ratio: float, seed: int) -> tuple[list[str], list[str]]:
    """Deterministic character-level train/test split."""
    if not 0 < split_ratio < 1:
        raise ValueError(f"split_ratio must be in (0, 1), got {split_ratio}")
    ids = sorted(set(glyph_ids))
    if not ids:
        raise ValueError("empty charset")
    n_train = int(round(split_ratio * len(ids)))
    n_train = min(max(n_train, 1), len(ids) - 1) if len(ids) > 1 else 1
    order = np.random.default_rng(seed).permutation(len(ids))
    train = sorted(ids[i] for i in order[:n_train])
    test = sorted(ids[i] for i in order[n_train:])
    return train, test


def _save_png(path: Path, raw: np.ndarray) -> None:
    tmp = path.with_suffix(".tmp.png")
    Image.fromarray(raw, mode="L").save(tmp, format="PNG")
    os.replace(tmp, path)


def _load_png(path: Path) -> np.ndarray:
    with Image.open(path) as im:
        if im.mode != "L" or im.size != (IMAGE_SIZE, IMAGE_SIZE):
            raise GlyphDataError(f"{path}: expected {IMAGE_SIZE}x{IMAGE_SIZE} grayscale")
        return np.array(im, dtype=np.uint8)


def save_glyph(path, glyph: GlyphImage | np.ndarray) -> None:
    pixels = glyph.pixels if isinstance(glyph, GlyphImage) else glyph
    _save_png(Path(path), to_uint8(pixels))


def load_glyph(path) -> np.ndarray:
    return to_float(_load_png(Path(path)))


def build_dataset(fonts: Sequence[tuple[str | os.PathLike, FontLabel]], charset: Sequence[CharacterSpec],
                  root, split_ratio: float = 0.8, seed: int = 0) -> DatasetManifest:
    """Render all fonts over ``charset`` into ``root`` and write the manifest.

    Characters missing from any font are dropped from both splits (logged
    once each). The split is over characters and shared by every font.
    """
    if not charset:
        raise GlyphDataError("charset is empty")
    labels = [lab.y for _, lab in fonts]
    if len(set(labels)) != len(labels):
        raise GlyphDataError(f"duplicate font labels: {sorted(labels)}")
    if sorted(labels) != list(range(len(labels))):
        raise GlyphDataError(f"font labels must be contiguous 0..n, got {sorted(labels)}")
    names = [lab.name for _, lab in fonts]
    if len(set(names)) != len(names):
        raise GlyphDataError(f"duplicate font names: {names}")

    charset = sorted(set(charset))
    excluded: set[int] = set()
    for font_file, _ in fonts:
        cov = font_coverage(font_file)
        excluded |= {c.codepoint for c in charset if c.codepoint not in cov}
    for cp in sorted(excluded):
        log.warning("excluding U+%04X: missing from at least one font", cp)
    kept = [c for c in charset if c.codepoint not in excluded]
    if len(kept) < 2:
        raise GlyphDataError("fewer than two characters are renderable in every font")
    train, test = split_characters((c.glyph_id for c in kept), split_ratio, seed)

    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    digest = hashlib.sha256()
    entries = []
    for font_file, label in sorted(fonts, key=lambda f: f[1].y):
        out = root / label.name
        out.mkdir(exist_ok=True)
        for g in render_font(font_file, kept, label=label):
            raw = to_uint8(g.pixels)
            _save_png(out / f"{g.char.glyph_id}.png", raw)
            digest.update(f"{label.y}:{g.char.glyph_id}:".encode())
            digest.update(raw.tobytes())
        entries.append(FontEntry(label.name, label.y, str(font_file)))

    manifest = DatasetManifest(
        fonts=entries,
        charset=[c.glyph_id for c in kept],
        train=train,
        test=test,
        excluded=[f"{cp:04x}" for cp in sorted(excluded)],
        seed=seed,
        split_ratio=split_ratio,
        content_hash=digest.hexdigest(),
    )
    tmp = root / (MANIFEST_NAME + ".tmp")
    tmp.write_text(manifest.to_json(), encoding="utf-8")
    os.replace(tmp, root / MANIFEST_NAME)
    return manifest


# --------------------------------------------------------------------------
# loading and sampling
# --------------------------------------------------------------------------

class GlyphDataset:
    """All glyphs of a dataset directory, held in memory as uint8."""

    def __init__(self, manifest: DatasetManifest, images: dict[tuple[int, str], np.ndarray], root=None):
        self.manifest = manifest
        self.images = images
        self.root = Path(root) if root is not None else None
        self._labels = {f.label: FontLabel(f.label, f.name) for f in manifest.fonts}

    @classmethod
    def load(cls, root) -> "GlyphDataset":
        root = Path(root)
        manifest = DatasetManifest.load(root)
        images = {}
        for f in manifest.fonts:
            for gid in manifest.charset:
                images[f.label, gid] = _load_png(root / f.name / f"{gid}.png")
        return cls(manifest, images, root)

    @property
    def labels(self) -> list[int]:
        return sorted(self._labels)

    @property
    def target_labels(self) -> list[int]:
        return [y for y in self.labels if y > 0]

    def font(self, y: int) -> FontLabel:
        return self._labels[y]

    def glyph(self, y: int, glyph_id: str) -> GlyphImage:
        return GlyphImage(to_float(self.images[y, glyph_id]), self._labels[y], CharacterSpec.from_glyph_id(glyph_id))

    def relabel(self, mapping: dict[int, int]) -> "GlyphDataset":
        """Copy of the dataset with font labels renamed through ``mapping``."""
        fonts = [FontEntry(f.name, mapping.get(f.label, f.label), f.file) for f in self.manifest.fonts]
        manifest = DatasetManifest(**{**vars(self.manifest), "fonts": fonts})
        images = {(mapping.get(y, y), gid): im for (y, gid), im in self.images.items()}
        return GlyphDataset(manifest, images, self.root)


def sample_batch(dataset: GlyphDataset, batch_size: int, split: str,
                 rng: np.random.Generator, fonts: Sequence[int] | None = None) -> list[PairedSample]:
    """Draw ``batch_size`` paired samples from one split.

    Target fonts are uniform over ``fonts`` (default: every y > 0); the two
    characters of a sample are distinct.
    """
    ids = dataset.manifest.split(split)
    if len(ids) < 2:
        raise GlyphDataError(f"split {split!r} has {len(ids)} character(s); need at least 2")
    targets = list(fonts) if fonts is not None else dataset.target_labels
    if not targets:
        raise GlyphDataError("dataset has no target fonts")
    out = []
    for _ in range(batch_size):
        y = targets[rng.integers(len(targets))]
        a, b = rng.choice(len(ids), size=2, replace=False)
        ca, cb = ids[a], ids[b]
        out.append(PairedSample(
            source=dataset.glyph(0, ca),
            target=dataset.glyph(y, cb),
            source_ref=dataset.glyph(0, cb),
            target_ref=dataset.glyph(y, ca),
        ))
    return out
