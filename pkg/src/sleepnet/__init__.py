"""End-to-end raw-audio sleepiness regression with a small numpy 1D CNN."""

__version__ = "0.1.0"
