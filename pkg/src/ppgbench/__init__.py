"""PPG rhythm classification and vital-sign regression benchmark toolkit."""

__version__ = "0.1.0"
