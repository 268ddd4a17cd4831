"""Navigation-path-conditioned target generation and trajectory planning."""

__version__ = "0.1.0"
