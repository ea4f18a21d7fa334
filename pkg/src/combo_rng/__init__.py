"""Monte Carlo simulator and analysis toolkit for a spatio-temporal photonic QRNG."""

__version__ = "0.1.0"
