"""
The six FontGAN subnets and the checkpoint container.

Shape chain for 64x64 glyphs::

    encoders       64 -> 32 -> 16 -> 8 -> 4 -> 2      (5 stride-2 stages)
    decoders        2 -> 4 -> 8 -> 16 -> 32 -> 64     (4 up modules + output layer)
    discriminators 64 -> 32 -> 16 -> 8 -> 4           (4 stride-2 blocks + 1x1 logits)

Widths are 32/64/128/256/512 across encoder stages and mirrored in the
decoders. Every forward pass is deterministic; noise only enters through the
explicit ``eps`` arguments of :func:`reparameterize` and
:func:`sample_style_prior`.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path

import torch
import torch.nn as nn
import torch.nn.functional as F

STYLE_DIM = 128
IMAGE_SIZE = 64
ENCODER_WIDTHS = (32, 64, 128, 256, 512)
SKIP_RESOLUTIONS = (32, 16, 8, 4, 2)
SIGMA_FLOOR = 1e-6
CHECKPOINT_VERSION = 1
SUBNETS = ("E_c", "E_f", "G_X", "G_Y", "D_X", "D_Y")


def _check_images(x: torch.Tensor, channels: int = 1) -> None:
    if x.dim() != 4 or x.shape[1:] != (channels, IMAGE_SIZE, IMAGE_SIZE):
        raise ValueError(f"expected (B, {channels}, {IMAGE_SIZE}, {IMAGE_SIZE}) images, got {tuple(x.shape)}")


class ResidualBlock(nn.Module):
    """Pre-activation residual block: two 3x3 convs and an identity shortcut."""

    def __init__(self, channels: int):
        super().__init__()
        self.body = nn.Sequential(
            nn.InstanceNorm2d(channels, affine=True),
            nn.ReLU(),
            nn.Conv2d(channels, channels, 3, padding=1),
            nn.InstanceNorm2d(channels, affine=True),
            nn.ReLU(),
            nn.Conv2d(channels, channels, 3, padding=1),
        )

    def forward(self, x):
        return x + self.body(x)


class DownModule(nn.Module):
    def __init__(self, cin: int, cout: int, norm: bool = True):
        super().__init__()
        layers = [nn.Conv2d(cin, cout, 4, stride=2, padding=1)]
        if norm:
            layers.append(nn.InstanceNorm2d(cout, affine=True))
        layers.append(nn.LeakyReLU(0.2))
        self.down = nn.Sequential(*layers)
        self.res = ResidualBlock(cout)

    def forward(self, x):
        return self.res(self.down(x))


class UpModule(nn.Module):
    def __init__(self, cin: int, cout: int):
        super().__init__()
        self.up = nn.Sequential(
            nn.ConvTranspose2d(cin, cout, 4, stride=2, padding=1),
            nn.InstanceNorm2d(cout, affine=True),
            nn.ReLU(),
        )
        self.res = ResidualBlock(cout)

    def forward(self, x):
        return self.res(self.up(x))


class EncoderTrunk(nn.Module):
    def __init__(self, widths=ENCODER_WIDTHS):
        super().__init__()
        chans = (1,) + tuple(widths)
        self.stages = nn.ModuleList(DownModule(a, b) for a, b in zip(chans[:-1], chans[1:]))

    def forward(self, x):
        _check_images(x)
        feats = []
        for stage in self.stages:
            x = stage(x)
            feats.append(x)
        assert [f.shape[-1] for f in feats] == list(SKIP_RESOLUTIONS)
        return feats


class ContentEncoder(nn.Module):
    """E_c: glyph -> (content code (B, 512, 2, 2), skip stack at 32/16/8/4/2)."""

    def __init__(self, widths=ENCODER_WIDTHS):
        super().__init__()
        self.trunk = EncoderTrunk(widths)
        self.head = nn.Conv2d(widths[-1], widths[-1], 1)

    def forward(self, x):
        feats = self.trunk(x)
        return self.head(feats[-1]), feats


@dataclass
class StyleDistribution:
    mu: torch.Tensor     # (B, 128)
    sigma: torch.Tensor  # (B, 128), > 0


class StyleEncoder(nn.Module):
    """E_f: glyph -> StyleDistribution. Same trunk layout as E_c, own weights."""

    def __init__(self, widths=ENCODER_WIDTHS, style_dim: int = STYLE_DIM):
        super().__init__()
        self.trunk = EncoderTrunk(widths)
        self.fc = nn.Linear(widths[-1] * 2 * 2, 2 * style_dim)
        self.style_dim = style_dim

    def forward(self, x) -> StyleDistribution:
        h = self.trunk(x)[-1].flatten(1)
        mu, raw = self.fc(h).chunk(2, dim=1)
        return StyleDistribution(mu, F.softplus(raw) + SIGMA_FLOOR)


class Decoder(nn.Module):
    """G_X / G_Y: (content code, style code, skips) -> glyph in [-1, 1].

    The style vector is tiled over the 2x2 bottleneck and concatenated with
    the content code. After each up module the encoder skip at the new
    resolution is concatenated; the 2x2 level reaches the decoder through
    the content code itself.
    """

    def __init__(self, widths=ENCODER_WIDTHS, style_dim: int = STYLE_DIM):
        super().__init__()
        w = tuple(widths)
        self.style_dim = style_dim
        self.fuse = nn.Conv2d(w[-1] + style_dim, w[-1], 3, padding=1)
        # 2->4, 4->8, 8->16, 16->32; input of module i carries the skip of module i-1
        ups = []
        cin = w[-1]
        for k in range(len(w) - 2, -1, -1):
            ups.append(UpModule(cin, w[k]))
            cin = 2 * w[k]
        self.ups = nn.ModuleList(ups)
        self.out = nn.ConvTranspose2d(cin, 1, 4, stride=2, padding=1)

    def forward(self, content, style, skips):
        b = content.shape[0]
        if content.shape[1:] != (self.fuse.in_channels - self.style_dim, 2, 2):
            raise ValueError(f"content code must be (B, {self.fuse.in_channels - self.style_dim}, 2, 2), "
                             f"got {tuple(content.shape)}")
        if style.shape != (b, self.style_dim):
            raise ValueError(f"style code must be (B, {self.style_dim}), got {tuple(style.shape)}")
        if len(skips) != len(SKIP_RESOLUTIONS):
            raise ValueError(f"expected {len(SKIP_RESOLUTIONS)} skip levels, got {len(skips)}")
        tiled = style[:, :, None, None].expand(-1, -1, 2, 2)
        h = self.fuse(torch.cat([content, tiled], dim=1))
        for up, skip in zip(self.ups, skips[-2::-1]):
            h = up(h)
            if skip.shape[0] != b or skip.shape[-1] != h.shape[-1]:
                raise ValueError(f"skip of shape {tuple(skip.shape)} does not match {tuple(h.shape)}")
            h = torch.cat([h, skip], dim=1)
        y = torch.tanh(self.out(h))
        assert y.shape[-2:] == (IMAGE_SIZE, IMAGE_SIZE)
        return y


class PatchDiscriminator(nn.Module):
    """D_X / D_Y: <condition, candidate> -> (B, 1, 4, 4) patch logits."""

    def __init__(self, widths=(64, 128, 256, 512)):
        super().__init__()
        chans = (2,) + tuple(widths)
        blocks = []
        for i, (a, b) in enumerate(zip(chans[:-1], chans[1:])):
            blocks.append(nn.Conv2d(a, b, 4, stride=2, padding=1))
            if i > 0:
                blocks.append(nn.InstanceNorm2d(b, affine=True))
            blocks.append(nn.LeakyReLU(0.2))
        self.body = nn.Sequential(*blocks)
        self.logits = nn.Conv2d(chans[-1], 1, 1)

    def forward(self, condition, candidate):
        _check_images(condition)
        _check_images(candidate)
        if condition.shape[0] != candidate.shape[0]:
            raise ValueError("condition and candidate batch sizes differ")
        out = self.logits(self.body(torch.cat([condition, candidate], dim=1)))
        assert out.shape[-2:] == (4, 4)
        return out


class FontGAN(nn.Module):
    """Container for the six subnets. E_c and E_f serve both directions."""

    def __init__(self):
        super().__init__()
        self.E_c = ContentEncoder()
        self.E_f = StyleEncoder()
        self.G_X = Decoder()
        self.G_Y = Decoder()
        self.D_X = PatchDiscriminator()
        self.D_Y = PatchDiscriminator()

    def generator_parameters(self):
        for name in ("E_c", "E_f", "G_X", "G_Y"):
            yield from getattr(self, name).parameters()

    def discriminator_parameters(self):
        for name in ("D_X", "D_Y"):
            yield from getattr(self, name).parameters()


# --------------------------------------------------------------------------
# functional surface
# --------------------------------------------------------------------------

def encode_content(image: torch.Tensor, model: FontGAN | ContentEncoder):
    enc = model.E_c if isinstance(model, FontGAN) else model
    return enc(image)


def encode_style(image: torch.Tensor, model: FontGAN | StyleEncoder) -> StyleDistribution:
    enc = model.E_f if isinstance(model, FontGAN) else model
    return enc(image)


def reparameterize(dist: StyleDistribution, eps: torch.Tensor) -> torch.Tensor:
    """z = mu + sigma * eps."""
    if eps.shape != dist.mu.shape or dist.sigma.shape != dist.mu.shape:
        raise ValueError(f"shape mismatch: mu {tuple(dist.mu.shape)}, sigma {tuple(dist.sigma.shape)}, "
                         f"eps {tuple(eps.shape)}")
    return dist.mu + dist.sigma * eps


def sample_style_prior(y, eps: torch.Tensor) -> torch.Tensor:
    """Draw from the font prior N(y * 1, I) given standard normal ``eps``.

    ``y`` is an int or a (B,) tensor of labels.
    """
    if eps.shape[-1] != STYLE_DIM:
        raise ValueError(f"eps must have last dimension {STYLE_DIM}, got {tuple(eps.shape)}")
    y = torch.as_tensor(y, dtype=eps.dtype)
    if (y < 0).any():
        raise ValueError("font labels must be non-negative")
    if y.dim() == 1:
        y = y[:, None]
    return y + eps


def decode(content, style, skips, model: FontGAN, which: str) -> torch.Tensor:
    if which == "stylize":
        return model.G_Y(content, style, skips)
    if which == "destylize":
        return model.G_X(content, style, skips)
    raise ValueError(f"which must be 'stylize' or 'destylize', got {which!r}")


def discriminate(condition, candidate, disc: PatchDiscriminator) -> torch.Tensor:
    return disc(condition, candidate)


def init_weights(module: nn.Module, generator: torch.Generator) -> None:
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d, nn.Linear)):
            with torch.no_grad():
                m.weight.normal_(0.0, 0.02, generator=generator)
                if m.bias is not None:
                    m.bias.zero_()
        elif isinstance(m, nn.InstanceNorm2d) and m.affine:
            nn.init.ones_(m.weight)
            nn.init.zeros_(m.bias)


def init_params(seed: int) -> FontGAN:
    """Build all six subnets with N(0, 0.02^2) weights, deterministic in ``seed``."""
    g = torch.Generator().manual_seed(seed)
    model = FontGAN()
    for name in SUBNETS:
        init_weights(getattr(model, name), g)
    return model


# --------------------------------------------------------------------------
# checkpoints
# --------------------------------------------------------------------------

def named_arrays(model: FontGAN) -> dict[str, torch.Tensor]:
    """Parameters and buffers keyed ``<subnet>/<path>``."""
    out = {}
    for key, t in model.state_dict().items():
        subnet, rest = key.split(".", 1)
        out[f"{subnet}/{rest}"] = t.detach().clone()
    return out


def load_named_arrays(model: FontGAN, arrays: dict[str, torch.Tensor], subnets=SUBNETS) -> None:
    state = {k.replace("/", ".", 1): v for k, v in arrays.items() if k.split("/", 1)[0] in subnets}
    missing, unexpected = model.load_state_dict(state, strict=False)
    missing = [k for k in missing if k.split(".", 1)[0] in subnets]
    if missing or unexpected:
        raise ValueError(f"checkpoint mismatch: missing {missing[:5]}, unexpected {unexpected[:5]}")


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def save_checkpoint(path, model: FontGAN, meta: dict, extra: dict | None = None) -> None:
    """Write a versioned archive: named arrays plus a metadata block.

    ``extra`` holds training state (optimizer, RNG); inference ignores it.
    Writes go to a temp file first and are renamed into place.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    blob = {
        "format": "fontgan-checkpoint",
        "version": CHECKPOINT_VERSION,
        "arrays": named_arrays(model),
        "meta": dict(meta),
        "extra": extra or {},
    }
    tmp = path.with_name(path.name + ".tmp")
    torch.save(blob, tmp)
    os.replace(tmp, path)


def read_checkpoint(path) -> dict:
    blob = torch.load(Path(path), map_location="cpu", weights_only=False)
    if blob.get("format") != "fontgan-checkpoint" or blob.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: not a version-{CHECKPOINT_VERSION} fontgan checkpoint")
    return blob


def load_checkpoint(path) -> tuple[FontGAN, dict]:
    blob = read_checkpoint(path)
    model = FontGAN()
    load_named_arrays(model, blob["arrays"])
    return model, blob["meta"]
