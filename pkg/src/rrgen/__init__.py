"""Data-driven robust residual generator with chi-squared fault detection and a
bit-accurate fixed-point execution mode."""

__version__ = "0.1.0"
