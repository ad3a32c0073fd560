"""
magm - multi-attribute Gaussian graphical model estimation.
"""

__version__ = "0.1.0"
