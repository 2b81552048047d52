"""Quantum LDGM codes: construction, decoding and Monte Carlo evaluation."""
from __future__ import annotations

__version__ = "0.1.0"
