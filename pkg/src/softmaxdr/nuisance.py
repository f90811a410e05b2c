"""Nuisance learners.

Every learner is a deterministic multi-output regressor of a target matrix on
covariates; outcome surfaces regress Y within each action stratum, propensity
models and joint cell surfaces regress one-hot indicators.

``oracle_noise`` perturbs a known truth by ``amplitude * n**-rate * h`` with
``h`` a fixed smooth direction of unit L2 norm under the design measure, so
the nuisance error rate is exact by construction.
"""
from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass
from typing import Callable, Protocol

import numpy as np
from scipy.spatial import cKDTree

from .data import IvData, PolicyData
from .errors import FitError, InvalidArgumentError
from .irregular import CELLS, QJointSurface
from .scores import DEFAULT_ETA, OutcomeSurface, PropensityModel

KINDS = ("knn", "ridge_poly", "empirical_bin", "oracle_noise", "known")


@dataclass(frozen=True)
class LearnerSpec:
    kind: str = "knn"
    k: int = 25
    degree: int = 2
    penalty: float = 1e-6
    bins: int = 10
    rate: float = 0.45
    amplitude: float = 1.0
    direction_seed: int = 0
    eta: float = DEFAULT_ETA

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidArgumentError(f"unknown learner kind {self.kind!r}; expected one of {KINDS}")
        if self.k < 1:
            raise InvalidArgumentError("k must be >= 1")
        if self.degree < 0:
            raise InvalidArgumentError("degree must be >= 0")
        if self.penalty < 0:
            raise InvalidArgumentError("penalty must be >= 0")
        if self.bins < 1:
            raise InvalidArgumentError("bins must be >= 1")
        if not 0 < self.rate <= 0.5:
            raise InvalidArgumentError(f"rate must lie in (0, 0.5], got {self.rate}")
        if self.amplitude < 0:
            raise InvalidArgumentError("amplitude must be >= 0")
        if not 0 <= self.eta < 0.5:
            raise InvalidArgumentError("eta must lie in [0, 0.5)")

    def to_dict(self):
        return asdict(self)


class Design(Protocol):
    """What oracle learners need to know about the data-generating process."""

    n_actions: int

    def q_true(self, x: np.ndarray) -> np.ndarray: ...
    def propensity(self, x: np.ndarray) -> np.ndarray: ...
    def expect(self, fn: Callable[[np.ndarray], np.ndarray]) -> float: ...


# ---------------------------------------------------------------------------
# regressors

def poly_features(x: np.ndarray, degree: int) -> np.ndarray:
    """All monomials of total degree <= ``degree``, intercept first."""
    n, d = x.shape
    cols = [np.ones(n)]
    for deg in range(1, degree + 1):
        for combo in itertools.combinations_with_replacement(range(d), deg):
            cols.append(np.prod(x[:, combo], axis=1))
    return np.column_stack(cols)


class RidgePoly:
    def __init__(self, degree: int, penalty: float):
        self.degree = degree
        self.penalty = penalty

    def fit(self, x, t):
        phi = poly_features(x, self.degree)
        if self.penalty == 0:
            self.coef_, *_ = np.linalg.lstsq(phi, t, rcond=None)
        else:
            reg = self.penalty * len(x) * np.eye(phi.shape[1])
            reg[0, 0] = 0.0
            self.coef_ = np.linalg.solve(phi.T @ phi + reg, phi.T @ t)
        return self

    def predict(self, x):
        return poly_features(x, self.degree) @ self.coef_


class KNN:
    def __init__(self, k: int):
        self.k = k

    def fit(self, x, t):
        self.tree_ = cKDTree(x)
        self.t_ = t
        self.k_ = min(self.k, len(x))
        return self

    def predict(self, x):
        _, idx = self.tree_.query(x, k=self.k_)
        if self.k_ == 1:
            idx = idx[:, None]
        return self.t_[idx].mean(axis=1)


class EmpiricalBin:
    """Cell means on an equal-width grid; empty cells fall back to the global mean."""

    def __init__(self, bins: int):
        self.bins = bins

    def _cell(self, x):
        scaled = (x - self.lo_) / self.width_
        idx = np.clip(np.floor(scaled * self.bins).astype(int), 0, self.bins - 1)
        return np.ravel_multi_index(idx.T, (self.bins,) * x.shape[1])

    def fit(self, x, t):
        self.lo_ = x.min(axis=0)
        self.width_ = np.where(np.ptp(x, axis=0) > 0, np.ptp(x, axis=0), 1.0)
        cell = self._cell(x)
        n_cells = self.bins ** x.shape[1]
        counts = np.bincount(cell, minlength=n_cells).astype(float)
        sums = np.zeros((n_cells, t.shape[1]))
        np.add.at(sums, cell, t)
        overall = t.mean(axis=0)
        with np.errstate(invalid="ignore", divide="ignore"):
            means = sums / counts[:, None]
        self.means_ = np.where(counts[:, None] > 0, means, overall[None, :])
        return self

    def predict(self, x):
        return self.means_[self._cell(x)]


def make_regressor(spec: LearnerSpec):
    if spec.kind == "knn":
        return KNN(spec.k)
    if spec.kind == "ridge_poly":
        return RidgePoly(spec.degree, spec.penalty)
    if spec.kind == "empirical_bin":
        return EmpiricalBin(spec.bins)
    raise InvalidArgumentError(f"learner kind {spec.kind!r} is not a data-driven regressor")


def _fit_multi(x, t, spec) -> Callable[[np.ndarray], np.ndarray]:
    t = np.asarray(t, dtype=float)
    if t.ndim == 1:
        t = t[:, None]
    reg = make_regressor(spec).fit(np.asarray(x, dtype=float), t)
    return lambda xn: reg.predict(np.asarray(xn, dtype=float))


# ---------------------------------------------------------------------------
# outcome surfaces

def fit_outcome(data: PolicyData, spec: LearnerSpec, bound: float | None = None,
                design: Design | None = None) -> OutcomeSurface:
    """Per-action regression of Y on X.

    Predictions are clamped to the observed outcome range widened by 10% on
    each side, and to ``[-bound, bound]`` when a bound is declared.
    """
    if spec.kind == "oracle_noise":
        if design is None:
            raise FitError("oracle_noise learner requires the data-generating design")
        return fit_oracle_noise(design, len(data), spec, bound=bound)
    if spec.kind == "known":
        if design is None:
            raise FitError("known learner requires the data-generating design")
        return OutcomeSurface(design.q_true, design.n_actions, bound=bound)
    if len(data) == 0:
        raise FitError("cannot fit an outcome model on an empty sample")
    n_actions = data.n_actions
    predictors = []
    for k in range(1, n_actions + 1):
        mask = data.a == k
        if not mask.any():
            raise FitError(f"no observations with action {k}; cannot fit its outcome model")
        predictors.append(_fit_multi(data.x[mask], data.y[mask], spec))
    lo, hi = float(data.y.min()), float(data.y.max())
    pad = 0.1 * (hi - lo)

    def fn(x):
        return np.column_stack([pred(x)[:, 0] for pred in predictors])

    return OutcomeSurface(fn, n_actions, bound=bound, lower=lo - pad, upper=hi + pad)


def smooth_direction(n_actions: int, seed: int, n_terms: int = 4) -> Callable[[np.ndarray], np.ndarray]:
    """A bounded smooth function ``h(x) -> (n, n_actions)`` drawn from ``seed``."""
    rng = np.random.default_rng(seed)
    coef = rng.normal(size=(n_actions, n_terms))
    phase = rng.uniform(0, 2 * np.pi, size=(n_actions, n_terms))

    def h(x):
        s = np.asarray(x, dtype=float).mean(axis=1)
        freq = np.pi * np.arange(1, n_terms + 1)
        arg = s[:, None, None] * freq[None, None, :] + phase[None, :, :]
        return (coef[None, :, :] * np.cos(arg)).sum(axis=2)
    return h


def design_l2_norm(design: Design, h: Callable[[np.ndarray], np.ndarray]) -> float:
    """L2(P_W) norm of a function of (a, x): sqrt(E_X[sum_a p(a|X) h(a, X)^2])."""
    return float(np.sqrt(design.expect(lambda x: (design.propensity(x) * h(x) ** 2).sum(axis=1))))


def fit_oracle_noise(design: Design, n: int, spec: LearnerSpec, bound: float | None = None) -> OutcomeSurface:
    """``Q* + amplitude * n**-rate * h`` with ``||h||_{L2(P_W)} = 1``."""
    if not 0 < spec.rate <= 0.5:
        raise InvalidArgumentError(f"rate must lie in (0, 0.5], got {spec.rate}")
    if n < 1:
        raise InvalidArgumentError("n must be >= 1")
    scale = spec.amplitude * float(n) ** -spec.rate
    if scale == 0:
        return OutcomeSurface(design.q_true, design.n_actions, bound=bound)
    raw = smooth_direction(design.n_actions, spec.direction_seed)
    norm = design_l2_norm(design, raw)

    def fn(x):
        return design.q_true(x) + (scale / norm) * raw(x)
    surface = OutcomeSurface(fn, design.n_actions, bound=bound)
    surface.l2_error = scale
    return surface


# ---------------------------------------------------------------------------
# propensities

def fit_propensity(data: PolicyData, spec: LearnerSpec, design: Design | None = None) -> PropensityModel:
    """Class-probability model for the action, clipped to ``[eta, 1 - eta]``.

    ``known`` and ``oracle_noise`` both return the design's true propensity.
    """
    n_actions = data.n_actions
    if spec.kind in ("known", "oracle_noise"):
        if design is None:
            raise FitError(f"{spec.kind} propensity requires the data-generating design")
        return PropensityModel(design.propensity, n_actions, eta=spec.eta)
    if len(data) == 0:
        raise FitError("cannot fit a propensity model on an empty sample")
    present = np.bincount(data.a, minlength=n_actions + 1)[1:]
    if np.any(present == 0):
        missing = int(np.flatnonzero(present == 0)[0]) + 1
        raise FitError(f"no observations with action {missing}; cannot fit the propensity model")
    pred = _fit_multi(data.x, np.eye(n_actions)[data.action_index], spec)

    def fn(x):
        return np.clip(pred(x), 0.0, None) + 1e-12
    return PropensityModel(fn, n_actions, eta=spec.eta)


def fit_instrument_propensity(data: IvData, spec: LearnerSpec, truth: Callable | None = None):
    """P(V = 1 | x), clipped to ``[eta, 1 - eta]``."""
    eta = spec.eta
    if spec.kind in ("known", "oracle_noise"):
        if truth is None:
            raise FitError(f"{spec.kind} instrument propensity requires the true design")
        return lambda x: np.clip(truth(x), eta, 1 - eta)
    if not (np.any(data.v == 0) and np.any(data.v == 1)):
        raise FitError("both instrument values must be present to fit P(V = 1 | x)")
    pred = _fit_multi(data.x, data.v.astype(float), spec)
    return lambda x: np.clip(pred(x)[:, 0], eta, 1 - eta)


def fit_q_joint(data: IvData, spec: LearnerSpec, truth: QJointSurface | None = None,
                design: Design | None = None) -> QJointSurface:
    """Cell probabilities ``P(Y = y, A = a | X = x, V = v)`` fitted per instrument stratum."""
    if spec.kind == "known":
        if truth is None:
            raise FitError("known q surface requires the true design")
        return truth
    if spec.kind == "oracle_noise":
        if truth is None or design is None:
            raise FitError("oracle_noise q surface requires the true design")
        return _oracle_q_joint(truth, design, len(data), spec)
    models = {}
    for v in (0, 1):
        mask = data.v == v
        if not mask.any():
            raise FitError(f"no observations with instrument value {v}; cannot fit q")
        onehot = np.eye(4)[2 * data.y[mask] + data.a[mask]]
        models[v] = _fit_multi(data.x[mask], onehot, spec)

    def fn(x, v):
        out = np.empty((len(x), 4))
        for val, pred in models.items():
            sel = v == val
            if sel.any():
                out[sel] = pred(x[sel])
        out = np.clip(out, 0.0, 1.0)
        total = out.sum(axis=1, keepdims=True)
        return np.where(total > 0, out / np.where(total > 0, total, 1.0), 0.25)
    return QJointSurface(fn)


def _oracle_q_joint(truth: QJointSurface, design, n, spec) -> QJointSurface:
    """Zero-sum perturbation of the true cells, mixed so values stay in [0, 1]."""
    scale = spec.amplitude * float(n) ** -spec.rate
    raw = smooth_direction(4, spec.direction_seed)

    def fn(x, v):
        q = truth(x, v)
        h = raw(np.column_stack([x, v]))
        h = h - h.mean(axis=1, keepdims=True)
        h = h / np.maximum(np.abs(h).max(axis=1, keepdims=True), 1e-12)
        return np.clip(q + scale * h, 0.0, 1.0)
    return QJointSurface(fn)


__all__ = [
    "LearnerSpec", "fit_outcome", "fit_oracle_noise", "fit_propensity",
    "fit_instrument_propensity", "fit_q_joint", "design_l2_norm", "smooth_direction", "CELLS",
]
