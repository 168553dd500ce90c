"""Adaptive robot speech: annoyance prediction, voice adaptation and the supporting analysis tools."""

__version__ = "0.1.0"
