"""
Local distortion: mean magnitude of a dense descriptor flow between glyphs.

Each pixel gets a SIFT-like descriptor (4x4 cells of 4 px, 8 orientation
bins). An integer flow from ``a`` to ``b`` is found by exhaustive search in
a +-6 px window on descriptor L1 distance, then refined by one raster-order
sweep of iterated conditional modes with an L1 smoothness penalty toward the
4-neighbours. LD is the mean flow length over ink pixels of ``a``.
"""

from __future__ import annotations

import warnings

import numpy as np

from .ssim import to_unit

CELL = 4
CELLS = 4
BINS = 8
RADIUS = 6
SMOOTHNESS = 0.5
INK_THRESHOLD = 0.5  # on the [0, 1] scale; darker is ink


class DegenerateGlyphWarning(UserWarning):
    """An input has no ink, so the flow is undetermined."""


def dense_descriptors(img: np.ndarray) -> np.ndarray:
    """(H, W, CELLS*CELLS*BINS) descriptors for a [0, 1] image."""
    h, w = img.shape
    gy, gx = np.gradient(img)
    mag = np.hypot(gx, gy)
    theta = np.mod(np.arctan2(gy, gx), 2 * np.pi) / (2 * np.pi) * BINS
    lo = np.floor(theta).astype(int) % BINS
    frac = theta - np.floor(theta)
    orient = np.zeros((BINS, h, w))
    rows, cols = np.indices((h, w))
    np.add.at(orient, (lo, rows, cols), mag * (1 - frac))
    np.add.at(orient, ((lo + 1) % BINS, rows, cols), mag * frac)

    # sum over a CELLxCELL box whose top-left corner is the pixel
    ext = np.pad(orient, ((0, 0), (0, CELL), (0, CELL)))
    sums = sum(ext[:, i:i + h, j:j + w] for i in range(CELL) for j in range(CELL))
    half = CELL * CELLS // 2
    padded = np.pad(sums, ((0, 0), (half, half), (half, half)))
    parts = []
    for i in range(CELLS):
        for j in range(CELLS):
            oy, ox = i * CELL, j * CELL
            parts.append(padded[:, oy:oy + h, ox:ox + w])
    desc = np.concatenate(parts, axis=0).transpose(1, 2, 0)

    norm = np.linalg.norm(desc, axis=-1, keepdims=True)
    desc = np.divide(desc, norm, out=np.zeros_like(desc), where=norm > 1e-8)
    desc = np.minimum(desc, 0.2)
    norm = np.linalg.norm(desc, axis=-1, keepdims=True)
    return np.divide(desc, norm, out=np.zeros_like(desc), where=norm > 1e-8)


def _displacements(radius: int) -> np.ndarray:
    d = np.array([(dy, dx) for dy in range(-radius, radius + 1) for dx in range(-radius, radius + 1)])
    # zero first so ties resolve to the smallest motion
    order = np.lexsort((np.abs(d).sum(1), np.hypot(d[:, 0], d[:, 1])))
    return d[order]


def dense_flow(a, b, radius: int = RADIUS, smoothness: float = SMOOTHNESS) -> np.ndarray:
    """Integer flow (H, W, 2) as (dy, dx) taking pixels of ``a`` to ``b``."""
    a, b = to_unit(a), to_unit(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    h, w = a.shape
    da, db = dense_descriptors(a), dense_descriptors(b)
    db = np.pad(db, ((radius, radius), (radius, radius), (0, 0)))
    disp = _displacements(radius)
    cost = np.empty((len(disp), h, w))
    for k, (dy, dx) in enumerate(disp):
        shifted = db[radius + dy:radius + dy + h, radius + dx:radius + dx + w]
        cost[k] = np.abs(da - shifted).sum(-1)

    pair = smoothness * np.abs(disp[:, None] - disp[None]).sum(-1)
    labels = cost.argmin(0)
    for r in range(h):
        for c in range(w):
            energy = cost[:, r, c].copy()
            for nr, nc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
                if 0 <= nr < h and 0 <= nc < w:
                    energy += pair[labels[nr, nc]]
            labels[r, c] = energy.argmin()
    return disp[labels]


def local_distortion(a, b, return_flag: bool = False, **kw):
    """Mean flow magnitude over ink pixels of ``a`` (lower is better).

    A glyph without ink makes the flow meaningless: the result is still
    finite, a :class:`DegenerateGlyphWarning` is issued and, with
    ``return_flag``, ``(value, True)`` is returned. Blank ``a`` gives 0.
    """
    ua, ub = to_unit(a), to_unit(b)
    ink = ua < INK_THRESHOLD
    flagged = False
    if not ink.any() or not (ub < INK_THRESHOLD).any():
        flagged = True
        warnings.warn("local_distortion on a glyph without ink", DegenerateGlyphWarning, stacklevel=2)
    if not ink.any():
        value = 0.0
    else:
        flow = dense_flow(a, b, **kw)
        value = float(np.hypot(flow[..., 0], flow[..., 1])[ink].mean())
    return (value, flagged) if return_flag else value
