"""Softmax smoothing of the max operator and its calculus.

Every function accepts a score array whose last axis indexes the N >= 2
actions; leading axes are treated as a batch.  Exponentials are always taken
of ``-beta * (max(u) - u)`` so that no term overflows for large ``beta``.

    sm^beta(u) = sum_i u_i exp(beta u_i) / sum_j exp(beta u_j)
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError

__all__ = [
    "MarginParams",
    "softmax_weights",
    "softmax_value",
    "softmax_grad",
    "softmax_hessian",
    "argmax_share",
    "softplus_max",
    "gaps",
    "bias_envelope",
    "margin_bias_rate",
]


@dataclass(frozen=True)
class MarginParams:
    """Polynomial density condition on the sub-optimality gaps.

    A gap U satisfies it when ``U * 1{0 < U < c}`` has a density bounded by
    ``H * u**(delta - 1)``.
    """

    delta: float = 1.0
    c: float = 1.0
    H: float = 1.0

    def __post_init__(self):
        for name in ("delta", "c", "H"):
            val = getattr(self, name)
            if not (np.isfinite(val) and val > 0):
                raise InvalidArgumentError(f"{name} must be a positive finite number, got {val!r}")


def _check_scores(u, min_actions=2) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.ndim == 0:
        raise InvalidArgumentError("score vector must have at least one axis")
    if u.shape[-1] < min_actions:
        raise InvalidArgumentError(f"need at least {min_actions} scores, got {u.shape[-1]}")
    if not np.all(np.isfinite(u)):
        raise InvalidArgumentError("scores must be finite")
    return u


def _check_beta(beta, positive=False) -> float:
    try:
        beta = float(beta)
    except (TypeError, ValueError):
        raise InvalidArgumentError(f"beta must be a real number, got {beta!r}") from None
    if not np.isfinite(beta) or beta < 0 or (positive and beta == 0):
        bound = "> 0" if positive else ">= 0"
        raise InvalidArgumentError(f"beta must be finite and {bound}, got {beta!r}")
    return beta


def _weights_and_gap(u: np.ndarray, beta: float):
    """Softmax weights, the gaps max(u) - u_i, and max(u) - sm(u)."""
    top = u.max(axis=-1, keepdims=True)
    delta = top - u
    e = np.exp(-beta * delta)
    w = e / e.sum(axis=-1, keepdims=True)
    mean_gap = (w * delta).sum(axis=-1)
    return w, delta, mean_gap, top[..., 0]


def softmax_weights(u, beta) -> np.ndarray:
    """w_i = exp(beta u_i) / sum_j exp(beta u_j)."""
    u = _check_scores(u)
    w, _, _, _ = _weights_and_gap(u, _check_beta(beta))
    return w


def softmax_value(u, beta):
    """Softmax-weighted average of ``u``; lies in ``[min(u), max(u)]``.

    Evaluated as ``max(u) - sum_i w_i (max(u) - u_i)`` which keeps the result
    inside the range of ``u`` under rounding.
    """
    u = _check_scores(u)
    beta = _check_beta(beta)
    _, _, mean_gap, top = _weights_and_gap(u, beta)
    out = top - mean_gap
    return float(out) if out.ndim == 0 else out


def softmax_grad(u, beta) -> np.ndarray:
    """Gradient ``w_k * (1 + beta * (u_k - sm(u)))``.

    Entries sum to one and are bounded by ``1 + log(N)`` in absolute value.
    """
    u = _check_scores(u)
    beta = _check_beta(beta)
    w, delta, mean_gap, _ = _weights_and_gap(u, beta)
    # u_k - sm(u) = mean_gap - delta_k, computed without cancellation against max(u)
    dev = mean_gap[..., None] - delta
    return w * (1.0 + beta * dev)


def softmax_hessian(u, beta) -> np.ndarray:
    """Hessian of ``sm^beta`` at ``u`` (symmetric by construction).

    With ``d_k = u_k - sm(u)``::

        H_kl = beta * (1{k=l} w_k (2 + beta d_k) - w_k w_l (2 + beta d_k + beta d_l))
    """
    u = _check_scores(u)
    beta = _check_beta(beta)
    w, delta, mean_gap, _ = _weights_and_gap(u, beta)
    bd = beta * (mean_gap[..., None] - delta)
    outer = w[..., :, None] * w[..., None, :] * ((bd[..., :, None] + bd[..., None, :]) + 2.0)
    n = u.shape[-1]
    diag = np.zeros_like(outer)
    idx = np.arange(n)
    diag[..., idx, idx] = w * (2.0 + bd)
    return beta * (diag - outer)


def argmax_share(u, tie_tol=None) -> np.ndarray:
    """Hard-max limit of the softmax gradient.

    Entry k is ``1/|A|`` if ``u_k >= max(u) - tie_tol`` (A the set of such k)
    and 0 otherwise.  The default tolerance is ``1e-12 * max(1, |max(u)|)``.
    """
    u = _check_scores(u, min_actions=1)
    top = u.max(axis=-1, keepdims=True)
    if tie_tol is None:
        tol = 1e-12 * np.maximum(1.0, np.abs(top))
    else:
        tie_tol = float(tie_tol)
        if not tie_tol >= 0:
            raise InvalidArgumentError(f"tie_tol must be >= 0, got {tie_tol!r}")
        tol = tie_tol
    hit = (u >= top - tol).astype(float)
    return hit / hit.sum(axis=-1, keepdims=True)


def softplus_max(u, beta):
    """Log-sum-exp smoother ``(1/beta) log sum_i exp(beta u_i)``.

    Over-estimates ``max(u)`` by at most ``log(N)/beta``.
    """
    u = _check_scores(u)
    beta = _check_beta(beta, positive=True)
    top = u.max(axis=-1)
    out = top + np.log(np.exp(-beta * (top[..., None] - u)).sum(axis=-1)) / beta
    return float(out) if out.ndim == 0 else out


def gaps(u) -> np.ndarray:
    """Sub-optimality gaps ``max(u) - u_i``."""
    u = _check_scores(u, min_actions=1)
    return u.max(axis=-1, keepdims=True) - u


def bias_envelope(gap_values, beta):
    """``sum_i D_i exp(-beta D_i)``, an upper bound on ``max(u) - sm(u)``."""
    d = np.asarray(gap_values, dtype=float)
    if d.ndim == 0:
        d = d[None]
    if not np.all(np.isfinite(d)):
        raise InvalidArgumentError("gaps must be finite")
    if np.any(d < 0):
        raise InvalidArgumentError("gaps must be non-negative")
    beta = _check_beta(beta)
    out = (d * np.exp(-beta * d)).sum(axis=-1)
    return float(out) if out.ndim == 0 else out


def margin_bias_rate(margin: MarginParams, beta) -> float:
    """Envelope ``(H Gamma(1 + delta) + 1) * beta**-(1 + delta)`` for E[U exp(-beta U)].

    Only meaningful for large ``beta``; no threshold is enforced here.
    """
    beta = _check_beta(beta, positive=True)
    const = margin.H * math.gamma(1.0 + margin.delta) + 1.0
    return const * beta ** -(1.0 + margin.delta)
