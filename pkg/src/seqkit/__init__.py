"""
seqkit

LSTM-based vision backbones (BiLSTM2D token mixing) with a small
reverse-mode engine, cost accounting and receptive-field analysis.
"""

from __future__ import annotations

from importlib.metadata import PackageNotFoundError, version


def _get_version() -> str:
    # Installed distribution first; source checkouts report a placeholder.
    try:
        return version("sequencer-kit")
    except PackageNotFoundError:
        return "0.0.0"


__version__ = _get_version()
__author__ = "seqkit developers"
