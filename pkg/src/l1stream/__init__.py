"""Streaming sparse recovery with warm-started l1 homotopy."""

__version__ = "0.1.0"
