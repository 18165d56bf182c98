"""Set-based keyphrase generation with calibration-aware training."""

__version__ = "0.1.0"
