"""Chinese glyph stylization and de-stylization with disentangled content/style codes."""

from .glyphdata import (
    CharacterSpec,
    DatasetManifest,
    FontLabel,
    GlyphDataset,
    GlyphImage,
    PairedSample,
    build_dataset,
    render_font,
    sample_batch,
)
from .losses import LossReport, LossWeights, total_loss
from .networks import FontGAN, StyleDistribution, init_params, load_checkpoint, save_checkpoint
from .training import CpmArtifact, TrainConfig, finetune, pretrain_cpm, train, train_step

__version__ = "0.1.0"
