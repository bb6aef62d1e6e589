"""Competitive-refractory network simulation, temporal-path and weight-trajectory embeddings."""

__version__ = "0.1.0"
