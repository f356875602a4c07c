"""Toolkit for generating, pseudo-labeling, decomposing, and scoring
distorted image sequences (shadow, light, occlusion)."""

__version__ = "0.1.0"
