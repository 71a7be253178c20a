"""Exact-arithmetic kernel for chain-level Batalin-Vilkovisky computations."""

from __future__ import annotations

__version__ = "0.1.0"
