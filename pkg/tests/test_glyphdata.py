import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image, ImageDraw, ImageFont

from fontgan.glyphdata import (
    CharacterSpec,
    DatasetManifest,
    FontLabel,
    FontReadError,
    GlyphDataError,
    GlyphDataset,
    MissingGlyphError,
    PairedSample,
    build_dataset,
    font_coverage,
    charset_from_text,
    load_glyph,
    render_font,
    sample_batch,
    save_glyph,
    split_characters,
)

from .conftest import find_cjk_font


def test_character_spec():
    c = CharacterSpec(0x4E00)
    assert c.glyph_id == "4e00"
    assert CharacterSpec.from_glyph_id("0041") == CharacterSpec(65)
    assert CharacterSpec(65).glyph_id == "0041"
    with pytest.raises(ValueError):
        CharacterSpec(0xD800)
    with pytest.raises(ValueError):
        CharacterSpec(0x110000)


def test_font_label_rejects_negative():
    with pytest.raises(ValueError):
        FontLabel(-1, "x")


def test_blank_glyph_is_background(sans):
    (g,) = render_font(sans, [CharacterSpec(0x20)])
    assert g.pixels.shape == (64, 64)
    assert np.all(g.pixels == 1.0)


def _ink_box(pixels, threshold=0.0):
    ys, xs = np.nonzero(pixels < threshold)
    return xs.min(), xs.max(), ys.min(), ys.max()


def test_wide_glyph_bbox_matches_reference_rasterizer(sans):
    # reference: plain PIL rendering at 64 px, no supersampling or centring
    ch = "—"
    (g,) = render_font(sans, charset_from_text(ch))
    x0, x1, y0, y1 = _ink_box(g.pixels)
    assert (x1 - x0) > (y1 - y0)

    ref = Image.new("L", (128, 128), 0)
    ImageDraw.Draw(ref).text((10, 10), ch, fill=255, font=ImageFont.truetype(str(sans), 54))
    rx0, rx1, ry0, ry1 = _ink_box(-np.asarray(ref, float), threshold=-128)
    assert (rx1 - rx0) > (ry1 - ry0)
    # same aspect within a couple of pixels of anti-aliasing slack
    assert abs((x1 - x0) - (rx1 - rx0)) <= 3
    assert abs((y1 - y0) - (ry1 - ry0)) <= 3


def test_cjk_one_is_wider_than_tall():
    font = find_cjk_font()
    if font is None:
        pytest.skip("no CJK font installed")
    (g,) = render_font(font, [CharacterSpec(0x4E00)])
    x0, x1, y0, y1 = _ink_box(g.pixels)
    assert (x1 - x0) > (y1 - y0)


def test_rendering_is_deterministic_and_in_range(sans):
    cs = charset_from_text("AgW")
    a = render_font(sans, cs)
    b = render_font(sans, cs)
    for ga, gb in zip(a, b):
        assert np.array_equal(ga.pixels, gb.pixels)
        assert ga.pixels.min() >= -1 and ga.pixels.max() <= 1
        assert ga.pixels.min() < -0.9  # some solid ink


def test_glyph_is_centred(sans):
    (g,) = render_font(sans, charset_from_text("H"))
    x0, x1, y0, y1 = _ink_box(g.pixels)
    assert abs((x0 + x1) / 2 - 31.5) <= 1.5
    assert abs((y0 + y1) / 2 - 31.5) <= 1.5


def test_missing_glyph_lists_codepoints(sans):
    with pytest.raises(MissingGlyphError) as err:
        render_font(sans, charset_from_text("A一二"))
    assert err.value.codepoints == [0x4E00, 0x4E8C]
    assert "U+4E00" in str(err.value)


def test_unreadable_font(tmp_path):
    bad = tmp_path / "bad.ttf"
    bad.write_bytes(b"not a font")
    with pytest.raises(FontReadError):
        render_font(bad, charset_from_text("A"))


def test_split_arithmetic_and_determinism():
    ids = [f"{i:04x}" for i in range(10)]
    train, test = split_characters(ids, 0.8, 7)
    assert len(train) == 8 and len(test) == 2
    assert not set(train) & set(test)
    assert split_characters(ids, 0.8, 7) == (train, test)
    assert split_characters(reversed(ids), 0.8, 7) == (train, test)
    with pytest.raises(ValueError):
        split_characters(ids, 1.0, 7)


def test_build_dataset_manifest(toy_root, toy):
    m = toy.manifest
    assert len(m.train) == 8 and len(m.test) == 2
    assert sorted(m.train + m.test) == sorted(m.charset)
    assert [f.label for f in m.fonts] == [0, 1]
    assert DatasetManifest.load(toy_root) == m
    for f in m.fonts:
        assert len(list((toy_root / f.name).glob("*.png"))) == 10


def test_build_dataset_is_deterministic(tmp_path, sans, serif):
    fonts = [(sans, FontLabel(0, "a")), (serif, FontLabel(1, "b"))]
    cs = charset_from_text("ABCDEFGHIJ")
    m1 = build_dataset(fonts, cs, tmp_path / "1", 0.8, 7)
    m2 = build_dataset(fonts, cs, tmp_path / "2", 0.8, 7)
    assert m1.to_json() == m2.to_json()


def test_build_dataset_excludes_missing(tmp_path, sans, serif, caplog):
    # a symbol DejaVu Sans has and DejaVu Serif lacks
    cp = min(c for c in font_coverage(sans) - font_coverage(serif) if c >= 0x2000)
    cs = charset_from_text("ABCD" + chr(cp))
    fonts = [(sans, FontLabel(0, "a")), (serif, FontLabel(1, "b")), (sans, FontLabel(2, "c"))]
    with caplog.at_level(logging.WARNING):
        m = build_dataset(fonts, cs, tmp_path, 0.5, 0)
    assert m.excluded == [f"{cp:04x}"]
    assert f"{cp:04x}" not in m.train + m.test
    assert sorted(m.train + m.test) == ["0041", "0042", "0043", "0044"]
    assert sum(f"U+{cp:04X}" in r.message for r in caplog.records) == 1


def test_build_dataset_rejects_duplicate_labels(tmp_path, sans, serif):
    with pytest.raises(GlyphDataError):
        build_dataset([(sans, FontLabel(0, "a")), (serif, FontLabel(0, "b"))], charset_from_text("AB"), tmp_path)


def test_save_load_roundtrip_is_exact(tmp_path, toy):
    g = toy.glyph(1, toy.manifest.train[0])
    save_glyph(tmp_path / "g.png", g)
    assert np.array_equal(load_glyph(tmp_path / "g.png"), g.pixels)
    reloaded = GlyphDataset.load(toy.root)
    for key, raw in toy.images.items():
        assert np.array_equal(reloaded.images[key], raw)


def test_sample_batch_invariants(toy):
    batch = sample_batch(toy, 4, "train", np.random.default_rng(0))
    assert len(batch) == 4
    for s in batch:
        assert isinstance(s, PairedSample)
        s.check()
        assert s.source.char != s.target.char
        assert s.source.char.glyph_id in toy.manifest.train


def test_sample_batch_deterministic(toy):
    a = sample_batch(toy, 6, "train", np.random.default_rng(5))
    b = sample_batch(toy, 6, "train", np.random.default_rng(5))
    assert [(s.source.char, s.target.char, s.target.font) for s in a] == \
           [(s.source.char, s.target.char, s.target.font) for s in b]


def test_sample_batch_rejects_single_character_split(toy):
    m = DatasetManifest(**{**vars(toy.manifest), "test": toy.manifest.test[:1]})
    small = GlyphDataset(m, toy.images)
    with pytest.raises(GlyphDataError):
        sample_batch(small, 2, "test", np.random.default_rng(0))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), size=st.integers(1, 8), split=st.sampled_from(["train", "test"]))
def test_sample_batch_property(toy, seed, size, split):
    for s in sample_batch(toy, size, split, np.random.default_rng(seed)):
        s.check()
        assert s.source.char.glyph_id in toy.manifest.split(split)


def test_paired_sample_check_rejects_mismatch(toy):
    (s,) = sample_batch(toy, 1, "train", np.random.default_rng(0))
    bad = PairedSample(s.source, s.target, s.target_ref, s.source_ref)
    with pytest.raises(ValueError):
        bad.check()
