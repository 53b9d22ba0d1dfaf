"""Monte Carlo toolkit for multi-score Nakamoto consensus under bounded network delay."""

__version__ = "0.1.0"
