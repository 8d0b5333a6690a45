"""Kriged weed maps and five discrete spatial representations of them."""
__version__ = "0.1.0"
