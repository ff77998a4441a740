"""Agentic extraction engine for scanned historical sources."""
from __future__ import annotations

__version__ = "0.1.0"
