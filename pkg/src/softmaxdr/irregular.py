"""Expected maximum of nuisance-dependent scores.

The target is ``V = E[max_k psi_k(X; g_k)]``.  Each constituent score k has a
nuisance ``g_k(w) = E[U_k | W = w]`` and a conditional Riesz representer
``zeta_k(w)``; the smoothed orthogonal score is

    Psi^beta = sm^beta(psi(x; g)) + sum_k alpha_k(w)^T (u_k - g_k(w)),
    alpha_k  = d_k sm^beta(psi(x; g)) * zeta_k(w).

Two instantiations are provided: the optimal policy value and the lower
Balke-Pearl bound on the ATE with a binary instrument.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np

from .data import IvData, PolicyData
from .errors import InvalidArgumentError, NuisanceEvaluationError, PositivityError
from .scores import PropensityModel
from .softmax import argmax_share, softmax_grad, softmax_value


@dataclass(frozen=True)
class ConstituentScore:
    """One score psi_k of the max, together with its debiasing ingredients.

    evaluate(data, g) -> (n,)      psi_k(X_i; g)
    at_w(data, g)     -> (n, d_k)  g(W_i)
    riesz(data)       -> (n, d_k)  zeta_k(W_i)
    target(data)      -> (n, d_k)  U_k for each row
    gamma: mean-squared continuity exponent (metadata only).
    """

    evaluate: Callable[[Any, Any], np.ndarray]
    at_w: Callable[[Any, Any], np.ndarray]
    riesz: Callable[[Any], np.ndarray]
    target: Callable[[Any], np.ndarray]
    gamma: float = 1.0
    name: str = ""


def _column(arr, n):
    arr = np.asarray(arr, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] != n:
        raise InvalidArgumentError(f"expected an (n, d) array with n={n}, got shape {arr.shape}")
    return arr


def evaluate_scores(data, scores: Sequence[ConstituentScore], g: Sequence) -> np.ndarray:
    """Matrix of ``psi_k(X_i; g_k)`` with shape ``(n, N)``."""
    if len(g) != len(scores):
        raise InvalidArgumentError(f"{len(scores)} scores but {len(g)} nuisances")
    psi = np.column_stack([s.evaluate(data, gk) for s, gk in zip(scores, g)])
    if not np.all(np.isfinite(psi)):
        raise NuisanceEvaluationError("non-finite constituent score values")
    return psi


def riesz_irregular(beta, psi_at_x, zeta_at_w: Sequence[np.ndarray]) -> list[np.ndarray]:
    """alpha_k = d_k sm^beta(psi) * zeta_k, one ``(n, d_k)`` array per score."""
    psi_at_x = np.asarray(psi_at_x, dtype=float)
    if psi_at_x.ndim == 1:
        psi_at_x = psi_at_x[None, :]
    if len(zeta_at_w) != psi_at_x.shape[-1]:
        raise InvalidArgumentError("one representer per score is required")
    grad = softmax_grad(psi_at_x, beta)
    n = psi_at_x.shape[0]
    return [grad[:, k:k + 1] * _column(z, n) for k, z in enumerate(zeta_at_w)]


def score_irregular(data, scores: Sequence[ConstituentScore], g: Sequence,
                    alpha: Sequence[np.ndarray], beta) -> np.ndarray:
    """Per-observation general smoothed orthogonal score."""
    psi = evaluate_scores(data, scores, g)
    n = psi.shape[0]
    if len(alpha) != len(scores):
        raise InvalidArgumentError(f"{len(scores)} scores but {len(alpha)} representers")
    correction = np.zeros(n)
    for s, gk, ak in zip(scores, g, alpha):
        resid = _column(s.target(data), n) - _column(s.at_w(data, gk), n)
        ak = _column(ak, n)
        if ak.shape != resid.shape:
            raise InvalidArgumentError(
                f"score {s.name or '?'}: representer has shape {ak.shape}, residual {resid.shape}")
        correction += (ak * resid).sum(axis=1)
    return softmax_value(psi, beta) + correction


def score_irregular_limit(data, scores: Sequence[ConstituentScore], g: Sequence, tie_tol=None) -> np.ndarray:
    """Hard-max score with ``alpha*_k = s_k(psi) * zeta_k``."""
    psi = evaluate_scores(data, scores, g)
    share = argmax_share(psi, tie_tol)
    n = psi.shape[0]
    out = psi.max(axis=1)
    for k, (s, gk) in enumerate(zip(scores, g)):
        resid = _column(s.target(data), n) - _column(s.at_w(data, gk), n)
        out = out + share[:, k] * (_column(s.riesz(data), n) * resid).sum(axis=1)
    return out


def plugin_smoothed_scores(data, scores: Sequence[ConstituentScore], g: Sequence, beta) -> np.ndarray:
    """Smoothed score with the canonical representer built from ``g`` and each ``riesz``."""
    psi = evaluate_scores(data, scores, g)
    alpha = riesz_irregular(beta, psi, [s.riesz(data) for s in scores])
    return score_irregular(data, scores, g, alpha, beta)


# ---------------------------------------------------------------------------
# optimal policy value

def policy_constituent_scores(p: PropensityModel, n_actions: int) -> list[ConstituentScore]:
    """psi_k(x; Q) = Q(k, x) with zeta_k(a, x) = 1{a = k} / p(k | x); nuisance is an OutcomeSurface."""
    def make(k):
        return ConstituentScore(
            evaluate=lambda d, q: q(d.x)[:, k],
            at_w=lambda d, q: q.at(d.a, d.x)[:, None],
            riesz=lambda d: ((d.action_index == k) / p(d.x)[:, k])[:, None],
            target=lambda d: d.y[:, None],
            name=f"Q{k + 1}",
        )
    return [make(k) for k in range(n_actions)]


# ---------------------------------------------------------------------------
# Balke-Pearl lower bound

# q_{ya}(x, v) = P(Y = y, A = a | X = x, V = v); column index of a (y, a) cell is 2 y + a.
CELLS = ((0, 0), (0, 1), (1, 0), (1, 1))

BALKE_PEARL_FORMULAS = (
    "q11(x,1) + q00(x,0) - 1",
    "q11(x,0) + q00(x,1) - 1",
    "-q01(x,1) - q10(x,1)",
    "-q01(x,0) - q10(x,0)",
    "q11(x,0) - q11(x,1) - q10(x,1) - q01(x,0) - q10(x,0)",
    "q11(x,1) - q11(x,0) - q10(x,0) - q01(x,1) - q10(x,1)",
    "q00(x,1) - q01(x,1) - q10(x,1) - q01(x,0) - q00(x,0)",
    "q00(x,0) - q01(x,0) - q10(x,0) - q01(x,1) - q00(x,1)",
)

_TERM = re.compile(r"([+-]?)\s*(?:q([01])([01])\(x,([01])\)|(\d+))")


@dataclass(frozen=True)
class LinearScore:
    """psi(x; q) = const + sum_t sign_t * q_{y_t a_t}(x, v_t)."""

    terms: tuple  # of (sign, y, a, v)
    const: float

    @property
    def signs(self):
        return np.array([t[0] for t in self.terms], dtype=float)

    @property
    def cells(self):
        return np.array([2 * t[1] + t[2] for t in self.terms])

    @property
    def instruments(self):
        return np.array([t[3] for t in self.terms])


def parse_linear_score(formula: str) -> LinearScore:
    text = formula.replace(" ", "")
    pos, terms, const = 0, [], 0.0
    while pos < len(text):
        m = _TERM.match(text, pos)
        if m is None or m.end() == pos:
            raise ValueError(f"cannot parse {formula!r} at position {pos}")
        sign = -1 if m.group(1) == "-" else 1
        if m.group(5) is not None:
            const += sign * float(m.group(5))
        else:
            terms.append((sign, int(m.group(2)), int(m.group(3)), int(m.group(4))))
        pos = m.end()
    return LinearScore(tuple(terms), const)


BALKE_PEARL_SCORES = tuple(parse_linear_score(f) for f in BALKE_PEARL_FORMULAS)


class QJointSurface:
    """Cell probabilities ``q(x, v)`` of shape ``(n, 4)`` in the order of CELLS.

    Rows are normalized to sum to one; values outside [0, 1] raise.
    """

    def __init__(self, fn: Callable[[np.ndarray, np.ndarray], np.ndarray], validate: bool = True):
        self.fn = fn
        self.validate = validate

    def __call__(self, x, v) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        v = np.broadcast_to(np.asarray(v, dtype=int), (len(x),))
        q = np.asarray(self.fn(x, v), dtype=float)
        if q.shape != (len(x), 4):
            raise NuisanceEvaluationError(f"q surface returned shape {q.shape}, expected {(len(x), 4)}")
        if self.validate:
            if not np.all(np.isfinite(q)) or np.any(q < 0) or np.any(q > 1):
                raise InvalidArgumentError("cell probabilities must lie in [0, 1]")
            q = q / q.sum(axis=1, keepdims=True)
        return q

    def flip_outcome(self) -> "QJointSurface":
        """Surface for ``1 - Y``: swaps the y index of every cell."""
        perm = [2 * (1 - y) + a for y, a in CELLS]
        return QJointSurface(lambda x, v: self(x, v)[:, perm], validate=self.validate)

    def perturbed(self, direction: Callable[[np.ndarray, np.ndarray], np.ndarray], t: float) -> "QJointSurface":
        """``q + t * direction`` without normalization or range checks."""
        return QJointSurface(lambda x, v: self(x, v) + t * np.asarray(direction(x, v)), validate=False)


def _linear_psi(q: QJointSurface, x) -> np.ndarray:
    return _linear_psi_from((q(x, 0), q(x, 1)))


def _linear_psi_from(by_v) -> np.ndarray:
    cols = []
    for s in BALKE_PEARL_SCORES:
        val = np.full(len(by_v[0]), s.const)
        for sign, y, a, v in s.terms:
            val = val + sign * by_v[v][:, 2 * y + a]
        cols.append(val)
    return np.column_stack(cols)


def balke_pearl_scores(q: QJointSurface, x) -> np.ndarray:
    """``(psi_1, ..., psi_8)`` at each covariate row; shape ``(n, 8)``."""
    return _linear_psi(q, x)


def balke_pearl_riesz(x, v_obs, p_instrument: Callable[[np.ndarray], np.ndarray], eta=0.0) -> list[np.ndarray]:
    """Signed ``1{V = v} / p(v | x)`` for every term of every score.

    ``p_instrument(x)`` returns P(V = 1 | x).  Returns 8 arrays of shape
    ``(n, d_k)`` with columns following the term order of each formula.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    v_obs = np.asarray(v_obs, dtype=int)
    p1 = np.asarray(p_instrument(x), dtype=float).reshape(-1)
    if np.any(p1 <= 0) or np.any(p1 >= 1) or np.any(p1 < eta) or np.any(p1 > 1 - eta):
        raise PositivityError(f"instrument propensity outside [{eta}, {1 - eta}]")
    p_obs = np.where(v_obs == 1, p1, 1 - p1)
    out = []
    for s in BALKE_PEARL_SCORES:
        active = v_obs[:, None] == s.instruments[None, :]
        out.append(s.signs[None, :] * active / p_obs[:, None])
    return out


def cell_indicators(z: IvData) -> np.ndarray:
    """``(n, 4)`` one-hot matrix of the observed (y, a) cell."""
    return np.eye(4)[2 * np.asarray(z.y) + np.asarray(z.a)]


def balke_pearl_targets(z: IvData) -> list[np.ndarray]:
    """U_{ya} = 1{Y = y, A = a} for every term of every score."""
    u = cell_indicators(z)
    return [u[:, s.cells] for s in BALKE_PEARL_SCORES]


def balke_pearl_constituent_scores(p_instrument: Callable[[np.ndarray], np.ndarray]) -> list[ConstituentScore]:
    """The eight scores as ConstituentScores sharing one QJointSurface nuisance."""
    def make(k):
        s = BALKE_PEARL_SCORES[k]
        return ConstituentScore(
            evaluate=lambda d, q: _linear_psi(q, d.x)[:, k],
            at_w=lambda d, q: q(d.x, d.v)[:, s.cells],
            riesz=lambda d: balke_pearl_riesz(d.x, d.v, p_instrument)[k],
            target=lambda d: cell_indicators(d)[:, s.cells],
            name=f"psi{k + 1}",
        )
    return [make(k) for k in range(len(BALKE_PEARL_SCORES))]


def balke_pearl_score_values(z: IvData, q: QJointSurface, p_instrument, beta) -> np.ndarray:
    """Smoothed orthogonal lower-bound scores with the canonical representer.

    Same values as ``plugin_smoothed_scores`` over the constituent scores,
    but q and the instrument propensity are evaluated once.
    """
    x = np.asarray(z.x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    by_v = (q(x, 0), q(x, 1))
    psi = _linear_psi_from(by_v)
    w = softmax_grad(psi, beta)
    riesz = balke_pearl_riesz(x, z.v, p_instrument)
    u = cell_indicators(z)
    q_obs = np.where(np.asarray(z.v)[:, None] == 1, by_v[1], by_v[0])
    resid = u - q_obs
    corr = np.column_stack([(r * resid[:, s.cells]).sum(axis=1)
                            for r, s in zip(riesz, BALKE_PEARL_SCORES)])
    return softmax_value(psi, beta) + (w * corr).sum(axis=1)


def balke_pearl_score_values_limit(z: IvData, q: QJointSurface, p_instrument, tie_tol=None) -> np.ndarray:
    scores = balke_pearl_constituent_scores(p_instrument)
    return score_irregular_limit(z, scores, [q] * len(scores), tie_tol)
