"""Shuffle augmentation of features for unsupervised domain adaptation."""

from ._core import (
    BatchError,
    ConfigError,
    DataError,
    Error,
    IoError,
    ParseError,
    ShapeError,
    StateError,
    cli,
    conditional_entropy,
    default_config,
    gaussian_blobs,
    h_divergence,
    lambda_d_schedule,
    lambda_m_schedule,
    learning_rate_schedule,
    pca,
    resolve_config,
    train,
    two_moons,
)

__all__ = [
    "BatchError",
    "ConfigError",
    "DataError",
    "Error",
    "IoError",
    "ParseError",
    "ShapeError",
    "StateError",
    "cli",
    "conditional_entropy",
    "default_config",
    "gaussian_blobs",
    "h_divergence",
    "lambda_d_schedule",
    "lambda_m_schedule",
    "learning_rate_schedule",
    "pca",
    "resolve_config",
    "train",
    "two_moons",
]
