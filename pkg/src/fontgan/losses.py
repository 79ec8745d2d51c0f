"""
Loss terms of the FontGAN objective.

All reductions are means: per pixel / per latent dimension first, then over
the batch, so a batch loss equals the mean of per-sample losses. The
generator adversarial term is the non-saturating ``softplus(-fake)``; the
discriminator term is the plain binary cross-entropy on logits.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import torch
import torch.nn.functional as F


@dataclass
class LossWeights:
    lambda_pix: float = 30.0
    lambda_con: float = 5.0
    lambda_pri: float = 5.0
    lambda_lab: float = 1.0
    lambda_reg: float = 1.0
    lambda_kl: float = 0.01

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"{f.name} must be non-negative")


def _same_shape(*tensors):
    shape = tensors[0].shape
    for t in tensors[1:]:
        if t.shape != shape:
            raise ValueError(f"shape mismatch: {tuple(shape)} vs {tuple(t.shape)}")


def _per_sample_mean(x: torch.Tensor) -> torch.Tensor:
    return x.flatten(1).mean(dim=1) if x.dim() > 1 else x


def mse(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    _same_shape(a, b)
    return _per_sample_mean((a - b) ** 2).mean()


def mae(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    _same_shape(a, b)
    return _per_sample_mean((a - b).abs()).mean()


def adversarial_losses(real_logits: torch.Tensor, fake_logits: torch.Tensor):
    """Return ``(d_loss, g_loss)`` for one conditional patch discriminator."""
    _same_shape(real_logits, fake_logits)
    d_loss = (_per_sample_mean(F.softplus(-real_logits)) + _per_sample_mean(F.softplus(fake_logits))).mean()
    g_loss = _per_sample_mean(F.softplus(-fake_logits)).mean()
    return d_loss, g_loss


def discriminator_loss(real_logits, fake_logits):
    return adversarial_losses(real_logits, fake_logits)[0]


def generator_adv_loss(fake_logits):
    return _per_sample_mean(F.softplus(-fake_logits)).mean()


def pixel_loss(fake_Y, ref_Y, sam_Y, fake_X, ref_X) -> torch.Tensor:
    """Sum of three per-image MSEs; ``sam_Y`` may be None when the sampled path is off."""
    loss = mse(fake_Y, ref_Y) + mse(fake_X, ref_X)
    if sam_Y is not None:
        loss = loss + mse(sam_Y, ref_Y)
    return loss


def content_consistency_loss(reencoded, originals) -> torch.Tensor:
    """``reencoded = (E_c(fake_X), E_c(fake_Y)[, E_c(sam_Y)])``, ``originals = (z_c_X, z_c_Y)``.

    Pairs: fake_X with z_c_Y, fake_Y with z_c_X, sam_Y with z_c_X.
    """
    z_cX, z_cY = originals
    targets = (z_cY, z_cX, z_cX)
    return sum(mse(r, t) for r, t in zip(reencoded, targets))


def kl_loss(mu: torch.Tensor, sigma: torch.Tensor, y) -> torch.Tensor:
    """KL(N(mu, sigma^2) || N(y*1, I)), summed over dims, averaged over batch."""
    _same_shape(mu, sigma)
    if (sigma <= 0).any():
        raise ValueError("sigma must be strictly positive")
    y = torch.as_tensor(y, dtype=mu.dtype, device=mu.device)
    if y.dim() == 1:
        y = y[:, None]
    var = sigma ** 2
    per_sample = 0.5 * ((mu - y) ** 2 + var - torch.log(var) - 1).sum(dim=-1)
    return per_sample.mean()


def label_loss(mu_X: torch.Tensor, mu_Y: torch.Tensor, y) -> torch.Tensor:
    """mean|mu_X| + mean|mu_Y - y|."""
    _same_shape(mu_X, mu_Y)
    y = torch.as_tensor(y, dtype=mu_Y.dtype, device=mu_Y.device)
    if y.dim() == 1:
        y = y[:, None]
    return _per_sample_mean(mu_X.abs()).mean() + _per_sample_mean((mu_Y - y).abs()).mean()


def latent_regression_loss(reencoded, originals) -> torch.Tensor:
    """``reencoded = (zhat_X, zhat_Y[, zhat_sam_Y])``, ``originals = (z_f_X, z_f_Y)``.

    The sampled-path estimate regresses onto z_f_Y as well.
    """
    z_X, z_Y = originals
    targets = (z_X, z_Y, z_Y)
    return sum(mae(r, t) for r, t in zip(reencoded, targets))


def content_prior_loss(z_c_target: torch.Tensor, z_prior: torch.Tensor) -> torch.Tensor:
    """MSE to the frozen prior encoder's code; no gradient reaches ``z_prior``."""
    return mse(z_c_target, z_prior.detach())


GENERATOR_TERMS = ("gan_XY", "gan_YX", "gan_sam", "pixel", "content", "kl_source", "kl_target",
                   "label", "regression", "prior")
DISCRIMINATOR_TERMS = ("d_XY", "d_YX", "d_sam")


@dataclass
class LossReport:
    """Named loss values for one step. Disabled terms stay None."""

    gan_XY: object = None
    gan_YX: object = None
    gan_sam: object = None
    pixel: object = None
    content: object = None
    kl_source: object = None
    kl_target: object = None
    label: object = None
    regression: object = None
    prior: object = None
    d_XY: object = None
    d_YX: object = None
    d_sam: object = None
    total_G: object = None
    total_D: object = None

    def as_dict(self) -> dict[str, float]:
        """Plain floats for logging; disabled terms are omitted."""
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if v is not None:
                out[f.name] = float(v.detach()) if isinstance(v, torch.Tensor) else float(v)
        return out


def weighted_generator_terms(terms: dict, weights: LossWeights) -> dict:
    """Each generator term multiplied by its weight; missing terms skipped."""
    scale = {
        "gan_XY": 1.0, "gan_YX": 1.0, "gan_sam": 1.0,
        "pixel": weights.lambda_pix,
        "content": weights.lambda_con,
        "kl_source": weights.lambda_kl, "kl_target": weights.lambda_kl,
        "label": weights.lambda_lab,
        "regression": weights.lambda_reg,
        "prior": weights.lambda_pri,
    }
    return {k: scale[k] * terms[k] for k in GENERATOR_TERMS if terms.get(k) is not None}


def total_loss(terms: dict, weights: LossWeights | None = None) -> LossReport:
    """Combine named terms into a LossReport with ``total_G`` and ``total_D``.

    Values may be tensors (the totals then carry gradients) or floats.
    """
    weights = weights or LossWeights()
    unknown = set(terms) - set(GENERATOR_TERMS) - set(DISCRIMINATOR_TERMS)
    if unknown:
        raise KeyError(f"unknown loss terms: {sorted(unknown)}")
    weighted = weighted_generator_terms(terms, weights)
    total_G = sum(weighted.values()) if weighted else 0.0
    d_parts = [terms[k] for k in DISCRIMINATOR_TERMS if terms.get(k) is not None]
    total_D = sum(d_parts) if d_parts else 0.0
    return LossReport(**{k: v for k, v in terms.items() if v is not None}, total_G=total_G, total_D=total_D)


def recompute_total_G(record: dict, weights: LossWeights | None = None) -> float:
    """total_G from the logged parts of a loss-log record."""
    weights = weights or LossWeights()
    return float(sum(weighted_generator_terms({k: record.get(k) for k in GENERATOR_TERMS}, weights).values()))

