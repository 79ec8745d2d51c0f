"""Shared helpers for the demo scripts: font discovery and the output folder."""

import os
from pathlib import Path

OUT = Path(os.environ.get("FONTGAN_DEMO_DIR", "demo_out"))

_DIRS = [Path("/usr/share/fonts/truetype/dejavu"), Path("/usr/share/fonts")]
try:
    import matplotlib

    _DIRS.append(Path(matplotlib.get_data_path()) / "fonts" / "ttf")
except ImportError:
    pass


def font(name):
    """Find a font file by file name in the usual system locations."""
    for d in _DIRS:
        hits = sorted(d.rglob(name)) if d.exists() else []
        if hits:
            return hits[0]
    raise SystemExit(f"font {name} not found; set FONTGAN_DEMO_FONTS or install DejaVu fonts")


def demo_fonts():
    """(standard, target...) fonts: FONTGAN_DEMO_FONTS=path1:path2:... overrides the DejaVu defaults."""
    env = os.environ.get("FONTGAN_DEMO_FONTS")
    if env:
        return [Path(p) for p in env.split(os.pathsep)]
    return [font("DejaVuSans.ttf"), font("DejaVuSerif.ttf"), font("DejaVuSansMono.ttf")]
