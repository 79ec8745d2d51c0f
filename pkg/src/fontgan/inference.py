"""Inference helpers: stylize, de-stylize and style codes from references or priors."""

from __future__ import annotations

import numpy as np
import torch

from .networks import STYLE_DIM, FontGAN, sample_style_prior


def _as_batch(images) -> torch.Tensor:
    x = torch.as_tensor(np.asarray(images, dtype=np.float32))
    if x.dim() == 2:
        x = x[None]
    if x.dim() == 3:
        x = x[:, None]
    return x


@torch.no_grad()
def reference_style(model: FontGAN, references) -> torch.Tensor:
    """Style codes of reference glyphs, taking the mean (no sampling noise)."""
    return model.E_f(_as_batch(references)).mu


def prior_style(y: int, n: int, seed: int | None = None, *, mean: bool = False) -> torch.Tensor:
    """``n`` draws from N(y*1, I); ``mean=True`` returns the prior mean instead."""
    if mean:
        eps = torch.zeros(n, STYLE_DIM)
    else:
        eps = torch.randn(n, STYLE_DIM, generator=torch.Generator().manual_seed(seed or 0))
    return sample_style_prior(y, eps)


def _broadcast(style: torch.Tensor, n: int) -> torch.Tensor:
    style = torch.as_tensor(style, dtype=torch.float32)
    if style.dim() == 1:
        style = style[None]
    if style.shape[0] == 1 and n > 1:
        style = style.expand(n, -1)
    if style.shape != (n, STYLE_DIM):
        raise ValueError(f"style codes must be (N, {STYLE_DIM}) or ({STYLE_DIM},), got {tuple(style.shape)}")
    return style


@torch.no_grad()
def stylize(model: FontGAN, sources, style) -> np.ndarray:
    """Render standard-font glyphs in the font given by ``style`` codes."""
    x = _as_batch(sources)
    content, skips = model.E_c(x)
    return model.G_Y(content, _broadcast(style, len(x)), skips)[:, 0].numpy()


@torch.no_grad()
def destylize(model: FontGAN, glyphs, style=None) -> np.ndarray:
    """Map styled glyphs to the standard font; default style is the y=0 prior mean."""
    x = _as_batch(glyphs)
    if style is None:
        style = torch.zeros(STYLE_DIM)
    content, skips = model.E_c(x)
    return model.G_X(content, _broadcast(style, len(x)), skips)[:, 0].numpy()
