"""Topic modeling with likelihood-ratio topic growth and parameter-free stopping."""

__version__ = "0.1.0"
