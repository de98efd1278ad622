"""Genericity lab.

Trains small generative models (a dense-MLP diffusion model for images, a
smoothed n-gram model for text) from scratch on controlled synthetic data,
then measures how strongly each model reproduces elements in proportion to
their training frequency. The reproduction measurements are distilled into
genericity scores with uncertainty intervals and rank correlations.
"""

__version__ = "0.1.0"
