"""Sparse visual counterfactuals with Frank-Wolfe over lp-balls intersected with the image box."""

__version__ = "0.1.0"
