"""Direct and inverse spectral analysis of the third-order operator i y''' + q y on [0, l]."""

__version__ = "0.1.0"
