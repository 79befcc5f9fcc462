"""Synthesis, filtering, and GRPO training kernel for code-reasoning data."""

__version__ = "0.1.0"
