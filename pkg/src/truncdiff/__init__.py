"""Truncated anchored diffusion planner with a cascade conditional denoiser."""

__version__ = "0.1.0"
