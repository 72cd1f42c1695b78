"""Magnetic lengthscales, coverings and Lieb–Thirring checks for Pauli operators."""

from __future__ import annotations

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("mag-lt")
except PackageNotFoundError:
    __version__ = "0.0.0+local"
