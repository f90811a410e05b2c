"""Softmax-smoothed debiased inference for expected-maximum functionals."""

__version__ = "0.1.0"
