"""Glyph quality metrics and the evaluation harness."""

from .distortion import DegenerateGlyphWarning, dense_flow, local_distortion
from .evaluation import EvalReport, MetricSummary, Sample, evaluate, l1_metric, score_samples, style_label_error
from .ocr import OcrConfig, OcrProxy, OcrRejectedError, train_ocr_proxy
from .ssim import ms_ssim, ssim

__all__ = [
    "DegenerateGlyphWarning", "dense_flow", "local_distortion",
    "EvalReport", "MetricSummary", "Sample", "evaluate", "l1_metric", "score_samples", "style_label_error",
    "OcrConfig", "OcrProxy", "OcrRejectedError", "train_ocr_proxy",
    "ms_ssim", "ssim",
]
