"""Feed-forward chain bifurcation toolkit."""

__version__ = "0.1.0"
