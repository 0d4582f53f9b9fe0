"""Handwriting-style image synthesis and confidence-filtered OCR augmentation."""

__version__ = "0.1.0"
