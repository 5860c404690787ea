"""Pesin charts, graph transforms, closing and Bernoulli coding for hyperbolic maps."""

__version__ = "0.1.0"
