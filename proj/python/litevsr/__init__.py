"""Lightweight visual speech recognition by distilling a speech recognizer's encoder."""

from ._litevsr import (
    AcousticModel,
    ConfigError,
    DataError,
    DimensionError,
    Error,
    NormalizationStats,
    NumericError,
    VisualBase,
    Vocabulary,
    cer,
    compute_stats,
    denormalize,
    gaussian_kernel,
    gaussian_smooth,
    greedy_ctc_decode,
    linear_regression,
    noam_lr,
    normalize,
    normalize_words,
    plan_crop,
    read_landmarks,
    wer,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
