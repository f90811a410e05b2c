"""Smoothed orthogonal scores for the value of the optimal treatment policy.

For observations ``z = (x, a, y)`` with actions ``1..N`` the smoothed score is

    Psi^beta(z; Q, alpha) = sm^beta(Q(., x)) + sum_l alpha_l(a, x) (y - Q(a, x))

and the canonical representer is

    alpha_k(a, x) = d_k sm^beta(Q(., x)) * 1{a = k} / p(k | x).

The correction is added; with this sign the population score has a vanishing
first derivative in Q at the truth.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import expit

from .data import PolicyData
from .errors import InvalidArgumentError, NuisanceEvaluationError, PositivityError
from .softmax import argmax_share, softmax_grad, softmax_value

DEFAULT_ETA = 0.01


@dataclass(frozen=True)
class Observation:
    x: np.ndarray
    a: int
    y: float

    def as_data(self, n_actions=None) -> PolicyData:
        return PolicyData(np.atleast_1d(np.asarray(self.x, float))[None, :], [self.a], [self.y],
                          n_actions=n_actions)


class OutcomeSurface:
    """Q(a, x) for all actions at once: ``surface(x)`` has shape ``(n, N)``.

    If ``bound`` is given, predictions are clamped to ``[-bound, bound]`` and
    the number of clamped values is kept in ``clamped``.
    """

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], n_actions: int,
                 bound: float | None = None, lower=None, upper=None):
        self.fn = fn
        self.n_actions = n_actions
        self.bound = bound
        self.lower = lower
        self.upper = upper
        self.clamped = 0

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        q = np.asarray(self.fn(x), dtype=float)
        if q.shape != (len(x), self.n_actions):
            raise NuisanceEvaluationError(
                f"outcome surface returned shape {q.shape}, expected {(len(x), self.n_actions)}")
        lo = -np.inf if self.lower is None else self.lower
        hi = np.inf if self.upper is None else self.upper
        if self.bound is not None:
            lo, hi = max(lo, -self.bound), min(hi, self.bound)
        if np.isfinite(lo) or np.isfinite(hi):
            outside = (q < lo) | (q > hi)
            if outside.any():
                self.clamped += int(outside.sum())
                q = np.clip(q, lo, hi)
        return q

    def at(self, a, x) -> np.ndarray:
        """Q(a_i, x_i) for 1-based labels ``a``."""
        a = np.asarray(a, dtype=int)
        return np.take_along_axis(self(x), (a - 1)[:, None], axis=1)[:, 0]


def clip_probabilities(p, eta=DEFAULT_ETA, max_iter=100) -> np.ndarray:
    """Clip rows of ``p`` into ``[eta, 1 - eta]`` while keeping row sums at one."""
    p = np.array(p, dtype=float)
    n_actions = p.shape[-1]
    if eta * n_actions > 1:
        raise InvalidArgumentError(f"eta={eta} infeasible for {n_actions} actions")
    p = p / p.sum(axis=-1, keepdims=True)
    for _ in range(max_iter):
        p = np.clip(p, eta, 1 - eta)
        p = p / p.sum(axis=-1, keepdims=True)
        if np.all(p >= eta - 1e-15) and np.all(p <= 1 - eta + 1e-15):
            break
    return np.clip(p, eta, 1 - eta)


class PropensityModel:
    """p(a | x) for all actions: ``model(x)`` has shape ``(n, N)``, clipped to [eta, 1 - eta]."""

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], n_actions: int, eta: float = DEFAULT_ETA):
        self.fn = fn
        self.n_actions = n_actions
        self.eta = eta

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        p = np.asarray(self.fn(x), dtype=float)
        if p.shape != (len(x), self.n_actions) or not np.all(np.isfinite(p)):
            raise NuisanceEvaluationError("propensity model returned invalid values")
        return clip_probabilities(p, self.eta)


class RepresenterSurface:
    """alpha_k(a, x) for every k: ``surface(a, x)`` has shape ``(n, N)``."""

    def __init__(self, fn: Callable[[np.ndarray, np.ndarray], np.ndarray], n_actions: int):
        self.fn = fn
        self.n_actions = n_actions

    def __call__(self, a, x) -> np.ndarray:
        out = np.asarray(self.fn(np.asarray(a, dtype=int), np.asarray(x, dtype=float)), dtype=float)
        if out.shape != (len(np.atleast_1d(a)), self.n_actions):
            raise NuisanceEvaluationError(f"representer returned shape {out.shape}")
        return out


def _one_hot(a_idx, n_actions):
    return np.eye(n_actions)[a_idx]


def riesz_policy(beta, q_at_x, p_at_x, a, eta=0.0) -> np.ndarray:
    """Canonical representer values at observed actions ``a`` (1-based).

    Broadcasts over a leading batch axis.  Only entry ``a`` can be non-zero.
    """
    q_at_x = np.asarray(q_at_x, dtype=float)
    p_at_x = np.asarray(p_at_x, dtype=float)
    a = np.asarray(a, dtype=int)
    n_actions = q_at_x.shape[-1]
    if np.any(a < 1) or np.any(a > n_actions):
        raise InvalidArgumentError(f"action labels must lie in 1..{n_actions}")
    if np.any(p_at_x <= 0) or np.any(p_at_x < eta):
        raise PositivityError(f"propensity below positivity floor {eta}")
    grad = softmax_grad(q_at_x, beta)
    return grad * _one_hot(a - 1, n_actions) / p_at_x


def canonical_representer(q: OutcomeSurface, p: PropensityModel, beta) -> RepresenterSurface:
    """alpha built from an outcome surface and propensity model."""
    def fn(a, x):
        return riesz_policy(beta, q(x), p(x), a)
    return RepresenterSurface(fn, q.n_actions)


def _as_batch(z) -> PolicyData:
    if isinstance(z, Observation):
        return z.as_data()
    return z


def policy_scores_from_arrays(q_all, alpha_all, a, y, beta) -> np.ndarray:
    """Psi^beta from evaluated nuisances: ``q_all`` and ``alpha_all`` are ``(n, N)``."""
    q_all = np.asarray(q_all, dtype=float)
    alpha_all = np.asarray(alpha_all, dtype=float)
    if not (np.all(np.isfinite(q_all)) and np.all(np.isfinite(alpha_all))):
        raise NuisanceEvaluationError("non-finite nuisance values")
    a = np.asarray(a, dtype=int)
    q_obs = np.take_along_axis(q_all, (a - 1)[:, None], axis=1)[:, 0]
    return softmax_value(q_all, beta) + alpha_all.sum(axis=1) * (np.asarray(y, float) - q_obs)


def score_policy(z, q: OutcomeSurface, alpha: RepresenterSurface, beta) -> np.ndarray:
    """Per-observation smoothed debiased scores; their mean estimates V^beta."""
    data = _as_batch(z)
    return policy_scores_from_arrays(q(data.x), alpha(data.a, data.x), data.a, data.y, beta)


def score_policy_limit(z, q_true: OutcomeSurface, p: PropensityModel, tie_tol=None) -> np.ndarray:
    """The hard-max score ``max_l Q(l, x) + sum_l alpha*_l (y - Q(a, x))``."""
    data = _as_batch(z)
    q_all = q_true(data.x)
    if not np.all(np.isfinite(q_all)):
        raise NuisanceEvaluationError("non-finite outcome surface values")
    share = argmax_share(q_all, tie_tol)
    alpha = share * _one_hot(data.action_index, q_all.shape[1]) / p(data.x)
    q_obs = np.take_along_axis(q_all, data.action_index[:, None], axis=1)[:, 0]
    return q_all.max(axis=1) + alpha.sum(axis=1) * (data.y - q_obs)


def smoothed_hinge(t, beta):
    """phi_beta(t) = t * sigmoid(beta t)."""
    t = np.asarray(t, dtype=float)
    return t * expit(beta * t)


def smoothed_hinge_deriv(t, beta):
    t = np.asarray(t, dtype=float)
    s = expit(beta * t)
    return s + beta * t * s * (1 - s)


def riesz_two_action(beta, q0, q1, p1, a01) -> np.ndarray:
    """Scalar representer for actions {0, 1}; ``p1 = P(A = 1 | x)``.

    Equals ``alpha_0 + alpha_1`` of the canonical N = 2 construction.
    """
    d = smoothed_hinge_deriv(np.asarray(q1) - np.asarray(q0), beta)
    a01 = np.asarray(a01)
    p1 = np.asarray(p1, dtype=float)
    return a01 * d / p1 + (1 - a01) * (1 - d) / (1 - p1)


def score_two_action(z, q: OutcomeSurface, alpha_scalar, beta) -> np.ndarray:
    """phi_beta(tau(x)) + Q(0, x) + alpha(a, x) (y - Q(a, x)) with a in {0, 1}.

    ``z`` holds actions coded 0/1, ``q`` is a two-column surface whose first
    column is action 0, and ``alpha_scalar(a01, x)`` returns one value per row.
    """
    if q.n_actions != 2:
        raise InvalidArgumentError(f"two-action score needs N = 2, got {q.n_actions}")
    x = np.asarray(z.x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    a01 = np.asarray(z.a, dtype=int)
    if np.any((a01 != 0) & (a01 != 1)):
        raise InvalidArgumentError("two-action score expects actions coded 0/1")
    y = np.asarray(z.y, dtype=float)
    q_all = q(x)
    tau = q_all[:, 1] - q_all[:, 0]
    q_obs = np.where(a01 == 1, q_all[:, 1], q_all[:, 0])
    alpha = np.asarray(alpha_scalar(a01, x), dtype=float)
    return smoothed_hinge(tau, beta) + q_all[:, 0] + alpha * (y - q_obs)
