"""Seamless heterogeneous multiscale effective diffusivity for 2D advection-diffusion."""

__version__ = "0.1.0"
