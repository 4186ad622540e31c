"""Trust-aware Stackelberg routing laboratory."""

__version__ = "0.1.0"
