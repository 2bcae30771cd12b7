"""Identity-decoupled diffusion personalization, desk-scale testbed.

Thin wrapper over the compiled extension; `evaluate` returns the parsed
report instead of raw JSON text.
"""

import json as _json

from ._core import (
    NoiseSchedule,
    ensemble_aggregate,
    ensemble_weights,
    forward_noise,
    generate_dataset,
    make_schedule,
    personalize,
    pgd_step,
    project_linf_and_box,
    protect,
    psnr,
    read_png,
    ssim,
    stage_split,
    train_encoders,
    write_png,
)
from ._core import evaluate as _evaluate_text


def evaluate(run_dir):
    """Recompute the metric suite for a run directory; returns a dict."""
    return _json.loads(_evaluate_text(run_dir))


__all__ = [
    "NoiseSchedule",
    "ensemble_aggregate",
    "ensemble_weights",
    "evaluate",
    "forward_noise",
    "generate_dataset",
    "make_schedule",
    "personalize",
    "pgd_step",
    "project_linf_and_box",
    "protect",
    "psnr",
    "read_png",
    "ssim",
    "stage_split",
    "train_encoders",
    "write_png",
]
