"""
Training: content-prior pre-training, the main adversarial loop,
fine-tuning on a new font, checkpointing and resume.

One step is one discriminator update (D_X and D_Y on ``total_D``) followed by
one generator update (E_c, E_f, G_X, G_Y on ``total_G``).
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import torch

from . import losses as L
from .glyphdata import GlyphDataset, PairedSample, sample_batch
from .networks import (
    ContentEncoder,
    FontGAN,
    config_hash,
    init_params,
    load_checkpoint,
    load_named_arrays,
    read_checkpoint,
    reparameterize,
    sample_style_prior,
    save_checkpoint,
)

log = logging.getLogger(__name__)

LOG_NAME = "loss_log.jsonl"
LAST_NAME = "last.pt"
BEST_NAME = "best.pt"
CPM_FORMAT = "fontgan-cpm"

# fields that do not change what a run computes, so resuming may alter them
_UNHASHED = {"epochs", "dataset", "checkpoint_dir", "cpm_path"}


class TrainingDivergedError(FloatingPointError):
    def __init__(self, term: str, report: dict):
        self.term = term
        self.report = report
        super().__init__(f"non-finite loss term {term!r}: {report}")


class ConfigMismatchError(RuntimeError):
    pass


class LabelCollisionError(ValueError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    lr: float = 2e-4
    lr_halving_every: int = 20
    betas: tuple[float, float] = (0.5, 0.999)
    weights: L.LossWeights = field(default_factory=L.LossWeights)
    seed: int = 0
    use_fcm: bool = True
    use_cpm: bool = True
    steps_per_epoch: int | None = None
    dataset: str = ""
    checkpoint_dir: str = ""
    cpm_path: str = ""

    def __post_init__(self):
        if isinstance(self.weights, dict):
            self.weights = L.LossWeights(**self.weights)
        self.betas = tuple(self.betas)
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if self.lr <= 0:
            raise ValueError("lr must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["betas"] = list(self.betas)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "TrainConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    def replace(self, **kw) -> "TrainConfig":
        return TrainConfig.from_dict({**self.to_dict(), **kw})

    @property
    def hash(self) -> str:
        return config_hash({k: v for k, v in self.to_dict().items() if k not in _UNHASHED})


def learning_rate(config: TrainConfig, epoch: int) -> float:
    """Learning rate for 1-based ``epoch``: halved every ``lr_halving_every`` epochs."""
    return config.lr * 0.5 ** ((epoch - 1) // config.lr_halving_every)


# --------------------------------------------------------------------------
# content prior
# --------------------------------------------------------------------------

class CpmArtifact:
    """Frozen content encoder E_c' from the pre-training stage."""

    def __init__(self, encoder: ContentEncoder, meta: dict):
        self.encoder = encoder
        self.meta = dict(meta)
        encoder.requires_grad_(False)
        encoder.eval()

    def __call__(self, images: torch.Tensor) -> torch.Tensor:
        with torch.no_grad():
            return self.encoder(images)[0]

    def save(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        arrays = {f"E_c/{k}": v.clone() for k, v in self.encoder.state_dict().items()}
        tmp = path.with_name(path.name + ".tmp")
        torch.save({"format": CPM_FORMAT, "version": 1, "arrays": arrays, "meta": self.meta}, tmp)
        tmp.replace(path)

    @classmethod
    def load(cls, path) -> "CpmArtifact":
        blob = torch.load(Path(path), map_location="cpu", weights_only=False)
        if blob.get("format") != CPM_FORMAT:
            raise ValueError(f"{path}: not a content-prior artifact")
        enc = ContentEncoder()
        enc.load_state_dict({k.split("/", 1)[1]: v for k, v in blob["arrays"].items()})
        return cls(enc, blob["meta"])

    @classmethod
    def from_model(cls, model: FontGAN, meta: dict) -> "CpmArtifact":
        enc = ContentEncoder()
        enc.load_state_dict(model.E_c.state_dict())
        return cls(enc, meta)


# --------------------------------------------------------------------------
# one step
# --------------------------------------------------------------------------

def collate(batch: list[PairedSample]) -> dict[str, torch.Tensor]:
    def stack(attr):
        return torch.from_numpy(np.stack([getattr(s, attr).pixels for s in batch]))[:, None]

    return {
        "x": stack("source"),
        "y": stack("target"),
        "x_ref": stack("source_ref"),
        "y_ref": stack("target_ref"),
        "label": torch.tensor([s.target.font.y for s in batch], dtype=torch.float32),
    }


def make_optimizers(model: FontGAN, config: TrainConfig):
    opt_G = torch.optim.Adam(model.generator_parameters(), lr=config.lr, betas=config.betas)
    opt_D = torch.optim.Adam(model.discriminator_parameters(), lr=config.lr, betas=config.betas)
    return opt_G, opt_D


def _check_finite(terms: dict) -> None:
    for name, v in terms.items():
        if v is not None and not torch.isfinite(torch.as_tensor(v)).all():
            raise TrainingDivergedError(name, {k: float(torch.as_tensor(t).detach()) for k, t in terms.items() if t is not None})


def generator_forward(model: FontGAN, batch: dict, use_fcm: bool, generator: torch.Generator) -> dict:
    """Encode both glyphs, swap codes and decode; the sampled path needs ``use_fcm``."""
    x, y, label = batch["x"], batch["y"], batch["label"]
    z_cX, skips_X = model.E_c(x)
    z_cY, skips_Y = model.E_c(y)
    dist_X = model.E_f(x)
    dist_Y = model.E_f(y)
    if use_fcm:
        eps = torch.randn((3,) + dist_X.mu.shape, generator=generator)
        z_fX = reparameterize(dist_X, eps[0])
        z_fY = reparameterize(dist_Y, eps[1])
        z_sample = sample_style_prior(label, eps[2])
    else:
        z_fX, z_fY, z_sample = dist_X.mu, dist_Y.mu, None
    out = {
        "z_cX": z_cX, "z_cY": z_cY, "dist_X": dist_X, "dist_Y": dist_Y, "z_fX": z_fX, "z_fY": z_fY,
        "fake_X": model.G_X(z_cY, z_fX, skips_Y),
        "fake_Y": model.G_Y(z_cX, z_fY, skips_X),
        "sam_Y": model.G_Y(z_cX, z_sample, skips_X) if use_fcm else None,
    }
    return out


def discriminator_terms(model: FontGAN, batch: dict, fwd: dict) -> dict:
    x, y = batch["x"], batch["y"]
    real_Y = model.D_Y(x, batch["y_ref"])
    real_X = model.D_X(y, batch["x_ref"])
    terms = {
        "d_XY": L.discriminator_loss(real_Y, model.D_Y(x, fwd["fake_Y"].detach())),
        "d_YX": L.discriminator_loss(real_X, model.D_X(y, fwd["fake_X"].detach())),
    }
    if fwd["sam_Y"] is not None:
        terms["d_sam"] = L.discriminator_loss(real_Y, model.D_Y(x, fwd["sam_Y"].detach()))
    return terms


def generator_terms(model: FontGAN, batch: dict, fwd: dict, cpm: CpmArtifact | None) -> dict:
    x, y, label = batch["x"], batch["y"], batch["label"]
    fake_X, fake_Y, sam_Y = fwd["fake_X"], fwd["fake_Y"], fwd["sam_Y"]
    fakes = [fake_X, fake_Y] + ([sam_Y] if sam_Y is not None else [])
    dist_X, dist_Y = fwd["dist_X"], fwd["dist_Y"]

    terms = {
        "gan_XY": L.generator_adv_loss(model.D_Y(x, fake_Y)),
        "gan_YX": L.generator_adv_loss(model.D_X(y, fake_X)),
        "pixel": L.pixel_loss(fake_Y, batch["y_ref"], sam_Y, fake_X, batch["x_ref"]),
        "content": L.content_consistency_loss(
            [model.E_c(f)[0] for f in fakes], (fwd["z_cX"].detach(), fwd["z_cY"].detach())),
        "label": L.label_loss(dist_X.mu, dist_Y.mu, label),
        "regression": L.latent_regression_loss(
            [model.E_f(f).mu for f in fakes], (fwd["z_fX"].detach(), fwd["z_fY"].detach())),
    }
    if sam_Y is not None:
        terms["gan_sam"] = L.generator_adv_loss(model.D_Y(x, sam_Y))
        terms["kl_source"] = L.kl_loss(dist_X.mu, dist_X.sigma, 0)
        terms["kl_target"] = L.kl_loss(dist_Y.mu, dist_Y.sigma, label)
    if cpm is not None:
        terms["prior"] = L.content_prior_loss(fwd["z_cY"], cpm(batch["x_ref"]))
    return terms


def train_step(model: FontGAN, opt_G, opt_D, batch: list[PairedSample] | dict, config: TrainConfig,
               generator: torch.Generator, cpm: CpmArtifact | None = None) -> L.LossReport:
    """One D update then one G update, in place. Returns the step's LossReport (floats).

    Raises:
        TrainingDivergedError: some loss term is NaN or infinite; nothing is updated
            past the failing half-step.
    """
    if config.use_cpm and cpm is None:
        raise ValueError("use_cpm is set but no content-prior artifact was given")
    if not config.use_cpm:
        cpm = None
    if not isinstance(batch, dict):
        batch = collate(batch)

    fwd = generator_forward(model, batch, config.use_fcm, generator)

    d_terms = discriminator_terms(model, batch, fwd)
    _check_finite(d_terms)
    opt_D.zero_grad(set_to_none=True)
    sum(d_terms.values()).backward()
    opt_D.step()

    model.D_X.requires_grad_(False)
    model.D_Y.requires_grad_(False)
    try:
        g_terms = generator_terms(model, batch, fwd, cpm)
    finally:
        model.D_X.requires_grad_(True)
        model.D_Y.requires_grad_(True)
    _check_finite(g_terms)
    report = L.total_loss({**g_terms, **{k: v.detach() for k, v in d_terms.items()}}, config.weights)
    opt_G.zero_grad(set_to_none=True)
    report.total_G.backward()
    opt_G.step()

    return L.LossReport(**report.as_dict())


# --------------------------------------------------------------------------
# loops
# --------------------------------------------------------------------------

@dataclass
class TrainResult:
    checkpoint: Path
    log_path: Path
    records: list[dict]
    model: FontGAN


def steps_per_epoch(config: TrainConfig, dataset: GlyphDataset, fonts) -> int:
    if config.steps_per_epoch:
        return config.steps_per_epoch
    pairs = len(dataset.manifest.train) * len(fonts)
    return max(1, pairs // config.batch_size)


def read_log(path) -> list[dict]:
    path = Path(path)
    if not path.exists():
        return []
    return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]


def _write_log(path: Path, records: list[dict]) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r) + "\n")


def _font_meta(dataset: GlyphDataset) -> list[dict]:
    return [{"name": dataset.font(y).name, "label": y} for y in dataset.labels]


def run_training(dataset: GlyphDataset, config: TrainConfig, model: FontGAN | None = None,
                 cpm: CpmArtifact | None = None, fonts=None, meta_extra: dict | None = None,
                 resume: bool = True) -> TrainResult:
    """Core loop shared by :func:`train`, :func:`pretrain_cpm` and :func:`finetune`.

    Checkpoints ``last.pt`` after every epoch and ``best.pt`` whenever the
    epoch-mean pixel term improves. If ``resume`` and a ``last.pt`` with the
    same config hash exists, training continues from it.
    """
    if not config.checkpoint_dir:
        raise ValueError("config.checkpoint_dir is required")
    ckpt_dir = Path(config.checkpoint_dir)
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    log_path = ckpt_dir / LOG_NAME
    last_path = ckpt_dir / LAST_NAME
    fonts = list(fonts) if fonts is not None else dataset.target_labels
    n_steps = steps_per_epoch(config, dataset, fonts)

    model = model if model is not None else init_params(config.seed)
    opt_G, opt_D = make_optimizers(model, config)
    rng = np.random.default_rng(config.seed)
    gen = torch.Generator().manual_seed(config.seed + 1)
    start_epoch, step, best = 1, 0, math.inf
    records: list[dict] = []

    if resume and last_path.exists():
        blob = read_checkpoint(last_path)
        if blob["meta"].get("config_hash") != config.hash:
            raise ConfigMismatchError(
                f"{last_path} was written with config {blob['meta'].get('config_hash')}, current is {config.hash}")
        load_named_arrays(model, blob["arrays"])
        extra = blob["extra"]
        opt_G.load_state_dict(extra["opt_G"])
        opt_D.load_state_dict(extra["opt_D"])
        rng.bit_generator.state = extra["np_rng"]
        gen.set_state(extra["torch_rng"])
        start_epoch, step, best = extra["epoch"] + 1, extra["step"], extra["best"]
        records = [r for r in read_log(log_path) if r["step"] <= step]
        log.info("resumed from %s at epoch %d, step %d", last_path, start_epoch - 1, step)
    _write_log(log_path, records)

    meta = {"config_hash": config.hash, "seed": config.seed, "fonts": _font_meta(dataset),
            "config": config.to_dict(), **(meta_extra or {})}

    with open(log_path, "a") as fh:
        for epoch in range(start_epoch, config.epochs + 1):
            lr = learning_rate(config, epoch)
            for opt in (opt_G, opt_D):
                for group in opt.param_groups:
                    group["lr"] = lr
            pixel_sum = 0.0
            for _ in range(n_steps):
                batch = sample_batch(dataset, config.batch_size, "train", rng, fonts=fonts)
                report = train_step(model, opt_G, opt_D, batch, config, gen, cpm)
                step += 1
                rec = {"step": step, "epoch": epoch, "lr": lr, **report.as_dict()}
                records.append(rec)
                fh.write(json.dumps(rec) + "\n")
                fh.flush()
                pixel_sum += rec["pixel"]
            epoch_pixel = pixel_sum / n_steps
            extra = {
                "opt_G": opt_G.state_dict(), "opt_D": opt_D.state_dict(),
                "np_rng": rng.bit_generator.state, "torch_rng": gen.get_state(),
                "epoch": epoch, "step": step, "best": min(best, epoch_pixel),
            }
            save_checkpoint(last_path, model, {**meta, "epoch": epoch, "step": step}, extra)
            if epoch_pixel < best:
                best = epoch_pixel
                save_checkpoint(ckpt_dir / BEST_NAME, model, {**meta, "epoch": epoch, "step": step,
                                                             "train_pixel": epoch_pixel})
            log.info("epoch %d/%d  step %d  pixel %.4f  total_G %.4f", epoch, config.epochs, step,
                     epoch_pixel, records[-1]["total_G"])

    return TrainResult(last_path, log_path, records, model)


def train(dataset: GlyphDataset | str | Path, config: TrainConfig, cpm: CpmArtifact | None = None,
          resume: bool = True) -> TrainResult:
    """Main FontGAN training over every target font of the dataset."""
    if not isinstance(dataset, GlyphDataset):
        dataset = GlyphDataset.load(dataset)
    if len(dataset.labels) < 2:
        raise ValueError("training needs the source font and at least one target font")
    if config.use_cpm and cpm is None:
        if not config.cpm_path:
            raise ValueError("use_cpm is set but neither a CpmArtifact nor cpm_path was given")
        cpm = CpmArtifact.load(config.cpm_path)
    meta = {"cpm": dict(cpm.meta) if (cpm is not None and config.use_cpm) else None}
    return run_training(dataset, config, cpm=cpm if config.use_cpm else None, meta_extra=meta, resume=resume)


def pretrain_cpm(dataset: GlyphDataset | str | Path, config: TrainConfig, resume: bool = True) -> CpmArtifact:
    """Train the full graph on one simple font pair and freeze its content encoder.

    The prior term is always off here, whatever ``config.use_cpm`` says. The
    artifact is written to ``<checkpoint_dir>/cpm.pt``.
    """
    if not isinstance(dataset, GlyphDataset):
        dataset = GlyphDataset.load(dataset)
    if len(dataset.labels) != 2:
        raise ValueError(f"content-prior pre-training takes exactly two fonts, got {len(dataset.labels)}")
    config = config.replace(use_cpm=False)
    result = run_training(dataset, config, resume=resume)
    meta = {
        "fonts": _font_meta(dataset),
        "epochs": config.epochs,
        "config_hash": config.hash,
        "final_pixel": result.records[-1]["pixel"] if result.records else None,
    }
    artifact = CpmArtifact.from_model(result.model, meta)
    artifact.save(Path(config.checkpoint_dir) / "cpm.pt")
    return artifact


def finetune(checkpoint, dataset: GlyphDataset | str | Path, config: TrainConfig,
             cpm: CpmArtifact | None = None, new_font: str | None = None) -> TrainResult:
    """Continue training a checkpoint on a new font with a small charset.

    ``dataset`` holds the source font (y=0) and the new font. The new font is
    relabelled to n+1 where n is the largest label the checkpoint knows.
    """
    if not isinstance(dataset, GlyphDataset):
        dataset = GlyphDataset.load(dataset)
    model, meta = load_checkpoint(checkpoint)
    known = {f["name"]: f["label"] for f in meta["fonts"]}
    candidates = [y for y in dataset.target_labels if new_font is None or dataset.font(y).name == new_font]
    if len(candidates) != 1:
        raise ValueError(f"fine-tuning needs exactly one new font in the dataset, found labels {candidates}")
    old = candidates[0]
    name = dataset.font(old).name
    if name in known:
        raise LabelCollisionError(f"font {name!r} already has label {known[name]} in {checkpoint}")
    new_label = max(known.values()) + 1
    dataset = dataset.relabel({old: new_label})
    if config.use_cpm and cpm is None:
        cpm = CpmArtifact.load(config.cpm_path) if config.cpm_path else None
        if cpm is None:
            config = config.replace(use_cpm=False)
    fonts_meta = meta["fonts"] + [{"name": name, "label": new_label}]
    extra = {"fonts": fonts_meta, "finetuned_from": str(checkpoint), "new_font": {"name": name, "label": new_label}}
    return run_training(dataset, config, model=model, cpm=cpm if config.use_cpm else None, fonts=[new_label],
                        meta_extra=extra, resume=False)
