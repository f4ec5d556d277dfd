"""Loading multivariate distributions into real-amplitude circuits shaped by a vine copula."""

__version__ = "0.1.0"
