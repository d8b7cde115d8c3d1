"""Box-size stabilization analysis of one-dimensional shape resonances."""

__version__ = "0.1.0"
