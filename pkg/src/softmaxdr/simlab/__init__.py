"""Synthetic designs, exact and quadrature oracles, and Monte-Carlo experiments."""
from .dgp import DgpSpec, make_dgp, random_iv_spec, smoothed_value, true_value
from .experiments import (McReport, bias_decay_experiment, orthogonality_probe,
                          park_variance_diagnostic, run_monte_carlo, tie_or_gap_spec)

__all__ = [
    "DgpSpec", "make_dgp", "true_value", "smoothed_value", "random_iv_spec",
    "McReport", "run_monte_carlo", "bias_decay_experiment", "park_variance_diagnostic",
    "orthogonality_probe", "tie_or_gap_spec",
]
