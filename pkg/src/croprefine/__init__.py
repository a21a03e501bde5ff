"""Crop-label refinement pipeline: cloud-filtered composites, label
cleaning, region-grown refinement, and NDVI-based quality evaluation."""

__version__ = "0.1.0"
