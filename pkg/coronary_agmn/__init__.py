"""Coronary artery semantic labeling by association-graph matching."""

__version__ = "0.1.0"
