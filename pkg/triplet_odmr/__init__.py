"""Zero-field triplet ODMR toolkit."""

__version__ = "0.1.0"
