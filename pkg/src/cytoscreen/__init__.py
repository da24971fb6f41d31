"""Cervical cell screening: nuclei detection, patch-CNN nucleus segmentation and
frozen-feature transfer-learning classification."""

__version__ = "0.1.0"
