import os
from pathlib import Path

import numpy as np
import pytest
import torch

from fontgan.glyphdata import FontLabel, GlyphDataset, build_dataset, charset_from_text

torch.use_deterministic_algorithms(True)

_DIRS = [Path("/usr/share/fonts/truetype/dejavu")]
try:
    import matplotlib

    _DIRS.append(Path(matplotlib.get_data_path()) / "fonts" / "ttf")
except ImportError:  # pragma: no cover
    pass

TOY_CHARS = "ABEGHKMRSW"


def find_font(name):
    for d in _DIRS:
        if (d / name).exists():
            return d / name
    pytest.skip(f"font {name} not available")


def find_cjk_font():
    candidates = [os.environ.get("FONTGAN_CJK_FONT", "")]
    for root in ("/usr/share/fonts", "/usr/local/share/fonts", str(Path.home() / ".fonts")):
        for p in Path(root).rglob("*") if Path(root).exists() else ():
            if any(k in p.name.lower() for k in ("cjk", "simsun", "simkai", "wqy", "droidsansfallback", "han")):
                candidates.append(str(p))
    for c in candidates:
        if c and Path(c).is_file():
            return Path(c)
    return None


@pytest.fixture(scope="session")
def sans():
    return find_font("DejaVuSans.ttf")


@pytest.fixture(scope="session")
def serif():
    return find_font("DejaVuSerif.ttf")


@pytest.fixture(scope="session")
def mono():
    return find_font("DejaVuSansMono.ttf")


@pytest.fixture(scope="session")
def toy_root(tmp_path_factory, sans, serif):
    """2 fonts x 10 characters, split 8/2."""
    root = tmp_path_factory.mktemp("toy")
    build_dataset([(sans, FontLabel(0, "sans")), (serif, FontLabel(1, "serif"))],
                  charset_from_text(TOY_CHARS), root, split_ratio=0.8, seed=7)
    return root


@pytest.fixture(scope="session")
def toy(toy_root):
    return GlyphDataset.load(toy_root)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def newfont(tmp_path_factory, sans, mono):
    """Standard font plus a font unseen by the toy models, same characters."""
    root = tmp_path_factory.mktemp("newfont")
    build_dataset([(sans, FontLabel(0, "sans")), (mono, FontLabel(1, "mono"))],
                  charset_from_text(TOY_CHARS), root, split_ratio=0.8, seed=7)
    return GlyphDataset.load(root)
