"""Quantitative explainability evaluation for lesion-detector heatmaps."""

from ._xaieval import (
    ConfigError,
    Detector,
    ShapeError,
    XaiError,
    __version__,
    binarize,
    generate_case,
    iou_box,
    iou_mask,
    mse,
    normalize,
    peak_roi,
    run_cli,
    spearman,
    ssim,
)

EXIT_OK = 0
EXIT_GATE_FAILED = 1
EXIT_USAGE = 2
EXIT_PROVIDER = 3


def evaluate(dataset, out, command="pipeline", config=None, methods=None, seed=None, jobs=None):
    """Run an evaluation subcommand and return its exit code."""
    args = []
    if jobs is not None:
        args += ["--jobs", str(jobs)]
    args += [command, "--dataset", str(dataset), "--out", str(out)]
    if config is not None:
        args += ["--config", str(config)]
    if methods:
        args += ["--methods", ",".join(methods)]
    if seed is not None:
        args += ["--seed", str(seed)]
    return run_cli(args)


__all__ = [
    "ConfigError",
    "Detector",
    "ShapeError",
    "XaiError",
    "__version__",
    "binarize",
    "evaluate",
    "generate_case",
    "iou_box",
    "iou_mask",
    "mse",
    "normalize",
    "peak_roi",
    "run_cli",
    "spearman",
    "ssim",
]
