"""Joint structure and feature denoising for graphs with noisy edges and features."""

__version__ = "0.1.0"
