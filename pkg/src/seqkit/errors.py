"""
Exception hierarchy for seqkit.

Library code raises these; only the CLI turns them into exit codes.
"""

from __future__ import annotations


class SeqkitError(Exception):
    """Base class for every error raised by seqkit."""


class ShapeError(SeqkitError, ValueError):
    """Tensor extents do not fit the operation."""


class ResolutionError(SeqkitError, ValueError):
    """Input resolution is not divisible by the model's downsampling factor."""

    def __init__(self, message: str, divisor: int):
        super().__init__(message)
        self.divisor = divisor


class UnsupportedResolutionError(ResolutionError):
    """A positional-embedding model was fed a grid it was not built for."""


class EmptySequenceError(SeqkitError, ValueError):
    """A scan or dataset has no elements."""


class ConfigError(SeqkitError, ValueError):
    """Invalid model, layer, training or command-line configuration."""


class GradientError(SeqkitError, RuntimeError):
    """Reverse-mode differentiation was asked for something it cannot do."""


class FormatError(SeqkitError, ValueError):
    """A file on disk does not follow the expected seqkit format."""


class CheckFailedError(SeqkitError):
    """A verification command ran but its acceptance check did not hold."""


class LabelError(SeqkitError, ValueError):
    """A class label lies outside ``[0, num_classes)``."""
