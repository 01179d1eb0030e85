"""Numerical checks of Schatten-norm inequalities for chains of PSD operators."""

__version__ = "0.1.0"
