
"""Spike-camera particle image velocimetry: simulation, baselines and a graph-attention flow network."""

__version__ = "0.1.0"
