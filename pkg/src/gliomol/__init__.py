"""Multimodal multi-label molecular classification of glioma slide images."""

__version__ = "0.1.0"
