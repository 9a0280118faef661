"""Driving planner that predicts latent future frames before planning, with a synthetic 2D world."""

__version__ = "0.1.0"
