"""Distortion statistics of pairs of metrics on free groups."""

from ._hypstat import (
    HypstatError,
    Metric,
    SpecError,
    __version__,
    ball_statistics,
    constants,
    diff,
    green_metric,
    hilbert_schottky,
    manhattan_curve,
    plot_data,
    run,
    scaled,
    similar,
    validate_coding,
    validate_spec,
    word_metric,
)

__all__ = [
    "HypstatError",
    "Metric",
    "SpecError",
    "__version__",
    "ball_statistics",
    "constants",
    "diff",
    "green_metric",
    "hilbert_schottky",
    "manhattan_curve",
    "plot_data",
    "run",
    "scaled",
    "similar",
    "validate_coding",
    "validate_spec",
    "word_metric",
]
