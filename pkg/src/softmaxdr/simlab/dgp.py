"""Synthetic designs with analytically or numerically exact targets.

Policy families expose ``q_true``, ``propensity``, ``sample`` and an
``expect`` operator over the covariate law (adaptive quadrature on [0, 1] or
an exact finite sum).  The IV family exposes the true joint cell surface and
the exact Balke-Pearl bounds and ATE.

Action labels are 1-based; in two-action designs label 1 is control and
label 2 is treatment, so ``tau(x) = Q(2, x) - Q(1, x)``.
"""
from __future__ import annotations

import itertools
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, optimize

from ..data import IvData, PolicyData
from ..errors import InvalidArgumentError, NumericError
from ..irregular import QJointSurface, balke_pearl_scores
from ..scores import clip_probabilities
from ..softmax import MarginParams, softmax_value

FAMILIES = ("binary_uniform", "delta_family", "discrete_exact", "n_action_gaussian", "iv_discrete")

QUAD_EPSABS = 1e-13
QUAD_EPSREL = 1e-11


@dataclass(frozen=True)
class DgpSpec:
    family: str
    params: dict = field(default_factory=dict)
    eta: float = 0.01
    bound: float | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidArgumentError(f"unknown DGP family {self.family!r}; expected one of {FAMILIES}")
        if not 0 < self.eta < 0.5:
            raise InvalidArgumentError("eta must lie in (0, 0.5)")

    def to_dict(self):
        return asdict(self)


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def quad_1d(fn: Callable[[np.ndarray], np.ndarray], lo=0.0, hi=1.0, points=(),
            epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=2000) -> float:
    """Adaptive Gauss-Kronrod integral of a vectorized ``fn((m, 1)) -> (m,)`` over [lo, hi].

    Integrates piecewise between the sorted break points; raises NumericError
    if the reported error exceeds ``max(1e-8, epsrel * |value|)``.
    """
    edges = np.unique(np.concatenate([[lo, hi], [p for p in points if lo < p < hi]]))
    total, err = 0.0, 0.0
    scalar = lambda t: float(fn(np.array([[t]]))[0])
    for a, b in zip(edges[:-1], edges[1:]):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, e = integrate.quad(scalar, a, b, epsabs=epsabs, epsrel=epsrel, limit=limit)
        total += val
        err += e
    if err > max(1e-8, 10 * epsrel * abs(total)):
        raise NumericError(f"quadrature did not converge: achieved error estimate {err:.3g}")
    return total


class PolicyDgp:
    """Base class for designs over (X, A, Y) with known Q* and p*."""

    n_actions: int = 2
    d: int = 1

    def __init__(self, spec: DgpSpec):
        self.spec = spec
        self.eta = spec.eta

    # -- interface -------------------------------------------------------
    def q_true(self, x) -> np.ndarray:
        raise NotImplementedError

    def propensity(self, x) -> np.ndarray:
        raise NotImplementedError

    def sample_x(self, n, rng) -> np.ndarray:
        raise NotImplementedError

    def sample_y(self, mean, rng) -> np.ndarray:
        raise NotImplementedError

    def breakpoints(self, beta=None):
        return ()

    def expect(self, fn, beta=None) -> float:
        """E[fn(X)] for ``fn((m, d)) -> (m,)``."""
        return quad_1d(fn, points=self.breakpoints(beta))

    @property
    def bound(self) -> float:
        return self.spec.bound if self.spec.bound is not None else self._default_bound()

    def _default_bound(self) -> float:
        return np.inf

    def margin(self) -> MarginParams | None:
        return None

    # -- derived ---------------------------------------------------------
    def sample(self, n: int, seed=None) -> PolicyData:
        rng = _rng(seed)
        x = self.sample_x(n, rng)
        p = self.propensity(x)
        u = rng.random(n)
        a = (u[:, None] > np.cumsum(p, axis=1)[:, :-1]).sum(axis=1) + 1
        mean = np.take_along_axis(self.q_true(x), (a - 1)[:, None], axis=1)[:, 0]
        y = self.sample_y(mean, rng)
        return PolicyData(x, a, y, n_actions=self.n_actions)

    def cate(self, x) -> np.ndarray:
        q = self.q_true(x)
        return q[:, 1] - q[:, 0]

    def true_value(self) -> float:
        return self.expect(lambda x: self.q_true(x).max(axis=1))

    def smoothed_value(self, beta) -> float:
        return self.expect(lambda x: softmax_value(self.q_true(x), beta), beta=beta)

    def smoothing_bias(self, beta) -> float:
        """V* - V^beta, integrated directly so small values keep relative accuracy."""
        def gap(x):
            q = self.q_true(x)
            return q.max(axis=1) - softmax_value(q, beta)
        return self.expect(gap, beta=beta)

    def envelope_bound(self, beta) -> float:
        """E[sum_k D_k exp(-beta D_k)] with D_k the sub-optimality gaps."""
        def env(x):
            q = self.q_true(x)
            d = q.max(axis=1, keepdims=True) - q
            return (d * np.exp(-beta * d)).sum(axis=1)
        return self.expect(env, beta=beta)

    def analytic_value(self) -> float | None:
        return None


def _uniform_noise(mean, sd, rng):
    half = np.sqrt(3.0) * sd
    return mean + rng.uniform(-half, half, size=mean.shape)


class BinaryUniform(PolicyDgp):
    """X ~ U(0, 1), Q(1, x) = 1 - x, Q(2, x) = x, constant propensity; |tau| ~ U(0, 1)."""

    def __init__(self, spec):
        super().__init__(spec)
        prm = spec.params
        self.p_treat = float(prm.get("p_treat", 0.5))
        self.outcome = prm.get("outcome", "bernoulli")
        self.noise_sd = float(prm.get("noise_sd", 0.5))
        if self.outcome not in ("bernoulli", "uniform"):
            raise InvalidArgumentError("outcome must be 'bernoulli' or 'uniform'")
        if not self.eta <= self.p_treat <= 1 - self.eta:
            raise InvalidArgumentError("p_treat violates positivity")

    def q_true(self, x):
        x = np.asarray(x, dtype=float)[:, 0]
        return np.column_stack([1 - x, x])

    def propensity(self, x):
        n = len(x)
        return np.column_stack([np.full(n, 1 - self.p_treat), np.full(n, self.p_treat)])

    def sample_x(self, n, rng):
        return rng.random((n, 1))

    def sample_y(self, mean, rng):
        if self.outcome == "bernoulli":
            return (rng.random(mean.shape) < mean).astype(float)
        return _uniform_noise(mean, self.noise_sd, rng)

    def _default_bound(self):
        return 1.0 if self.outcome == "bernoulli" else 1.0 + np.sqrt(3) * self.noise_sd

    def breakpoints(self, beta=None):
        pts = [0.5]
        if beta:
            for j in (0.25, 1, 4, 16, 64):
                off = j / (2 * beta)
                if off < 0.5:
                    pts += [0.5 - off, 0.5 + off]
        return pts

    def margin(self):
        return MarginParams(delta=1.0, c=1.0, H=1.0)

    def analytic_value(self):
        return 0.75


_BASELINES = {
    "flat": lambda x: np.full_like(x, 0.5),
    "linear": lambda x: 0.3 + 0.4 * x,
    "sine": lambda x: 0.5 + 0.2 * np.sin(2 * np.pi * x),
}


class DeltaFamily(PolicyDgp):
    """Two actions with |tau(X)| = margin + c * U**(1/delta) on responders.

    X ~ U(0, 1).  Units with X < p0 are non-responders (tau = 0).  The
    remaining range is split in half: the first half has tau < 0, the second
    tau > 0, and within each half U is uniform.  With margin = 0 the gaps
    satisfy the polynomial density condition with exponent delta, radius c
    and constant H = (1 - p0) * delta / c**delta.
    """

    def __init__(self, spec):
        super().__init__(spec)
        prm = spec.params
        self.delta = float(prm.get("delta", 1.0))
        self.c = float(prm.get("c", 1.0))
        self.p0 = float(prm.get("p0", 0.0))
        self.margin_offset = float(prm.get("margin", 0.0))
        self.baseline = prm.get("baseline", "linear")
        self.noise_sd = float(prm.get("noise_sd", 0.5))
        self.prop_slope = float(prm.get("prop_slope", 0.4))
        if self.delta <= 0 or self.c <= 0:
            raise InvalidArgumentError("delta and c must be positive")
        if not 0 <= self.p0 < 1:
            raise InvalidArgumentError("p0 must lie in [0, 1)")
        if self.baseline not in _BASELINES:
            raise InvalidArgumentError(f"baseline must be one of {sorted(_BASELINES)}")
        if self.noise_sd < 0 or self.margin_offset < 0:
            raise InvalidArgumentError("noise_sd and margin must be non-negative")
        lo = 0.5 - 0.5 * abs(self.prop_slope)
        if lo < self.eta:
            raise InvalidArgumentError("prop_slope violates positivity")

    def _split(self, x):
        s = (x - self.p0) / (1 - self.p0)
        neg = s < 0.5
        u = np.where(neg, 2 * s, 2 * s - 1)
        return np.clip(u, 0.0, 1.0), neg

    def tau(self, x):
        x = np.asarray(x, dtype=float)
        u, neg = self._split(x)
        mag = self.margin_offset + self.c * u ** (1.0 / self.delta)
        return np.where(x < self.p0, 0.0, np.where(neg, -mag, mag))

    def q_true(self, x):
        x = np.asarray(x, dtype=float)[:, 0]
        b = _BASELINES[self.baseline](x)
        return np.column_stack([b, b + self.tau(x)])

    def propensity(self, x):
        x = np.asarray(x, dtype=float)[:, 0]
        p1 = 0.5 + self.prop_slope * (x - 0.5)
        return np.column_stack([1 - p1, p1])

    def sample_x(self, n, rng):
        return rng.random((n, 1))

    def sample_y(self, mean, rng):
        return _uniform_noise(mean, self.noise_sd, rng)

    def _default_bound(self):
        return 0.7 + self.margin_offset + self.c + np.sqrt(3) * self.noise_sd

    def breakpoints(self, beta=None):
        mid = self.p0 + 0.5 * (1 - self.p0)
        pts = [self.p0, mid]
        if beta:
            for j in (0.25, 0.5, 1, 2, 4, 8, 16, 32, 64):
                t = j / beta - self.margin_offset
                if 0 < t < self.c:
                    u = (t / self.c) ** self.delta
                    pts += [self.p0 + 0.5 * u * (1 - self.p0), mid + 0.5 * u * (1 - self.p0)]
        return sorted(set(pts))

    def margin(self):
        return MarginParams(delta=self.delta, c=self.c, H=(1 - self.p0) * self.delta / self.c ** self.delta)

    def analytic_value(self):
        # E[b(X)] = 0.5 for every baseline; E[max(tau, 0)] = (1 - p0) / 2 * E|tau|
        mean_mag = self.margin_offset + self.c * self.delta / (1 + self.delta)
        return 0.5 + 0.5 * (1 - self.p0) * mean_mag


class DiscreteExact(PolicyDgp):
    """Finite covariate support; every expectation is an exact finite sum.

    params: cells (m x d values), cell_probs (m), q_table (m x N),
    prop_table (m x N), noise_sd.
    """

    def __init__(self, spec):
        super().__init__(spec)
        prm = spec.params
        self.q_table = np.asarray(prm["q_table"], dtype=float)
        m, self.n_actions = self.q_table.shape
        cells = prm.get("cells")
        self.cells = (np.arange(m, dtype=float)[:, None] / max(m - 1, 1)) if cells is None \
            else np.asarray(cells, dtype=float).reshape(m, -1)
        self.d = self.cells.shape[1]
        self.cell_probs = np.asarray(prm.get("cell_probs", np.full(m, 1.0 / m)), dtype=float)
        prop = prm.get("prop_table")
        self.prop_table = np.full((m, self.n_actions), 1.0 / self.n_actions) if prop is None \
            else np.asarray(prop, dtype=float)
        self.noise_sd = float(prm.get("noise_sd", 0.5))
        if self.n_actions < 2:
            raise InvalidArgumentError("need at least two actions")
        if np.any(self.cell_probs < 0) or not np.isclose(self.cell_probs.sum(), 1.0):
            raise InvalidArgumentError("cell_probs must be a probability vector")
        if self.prop_table.shape != self.q_table.shape or not np.allclose(self.prop_table.sum(axis=1), 1.0):
            raise InvalidArgumentError("prop_table rows must be probability vectors matching q_table")
        if np.any(self.prop_table < self.eta) or np.any(self.prop_table > 1 - self.eta):
            raise InvalidArgumentError("prop_table violates positivity")
        if len(np.unique(self.cells, axis=0)) != m:
            raise InvalidArgumentError("cells must be distinct")

    def _lookup(self, x):
        x = np.asarray(x, dtype=float).reshape(len(x), -1)
        dist = np.abs(x[:, None, :] - self.cells[None, :, :]).sum(axis=2)
        idx = dist.argmin(axis=1)
        if np.any(dist[np.arange(len(x)), idx] > 1e-9):
            raise InvalidArgumentError("covariate value outside the discrete support")
        return idx

    def q_true(self, x):
        return self.q_table[self._lookup(x)]

    def propensity(self, x):
        return self.prop_table[self._lookup(x)]

    def sample_x(self, n, rng):
        return self.cells[rng.choice(len(self.cells), size=n, p=self.cell_probs)]

    def sample_y(self, mean, rng):
        return _uniform_noise(mean, self.noise_sd, rng)

    def _default_bound(self):
        return float(np.abs(self.q_table).max() + np.sqrt(3) * self.noise_sd)

    def expect(self, fn, beta=None):
        return float(np.dot(self.cell_probs, fn(self.cells)))


class NActionGaussian(PolicyDgp):
    """N actions on X ~ U(0, 1) with Gaussian-bump outcome curves.

    Q(k, x) = base_k + height_k * exp(-(x - center_k)^2 / (2 width^2));
    propensities are a softmax of ``slope_k * x`` mixed with the uniform law.
    """

    def __init__(self, spec):
        super().__init__(spec)
        prm = spec.params
        self.n_actions = int(prm.get("n_actions", 3))
        k = self.n_actions
        self.centers = np.asarray(prm.get("centers", np.linspace(0.15, 0.85, k)), dtype=float)
        self.heights = np.asarray(prm.get("heights", np.linspace(0.6, 0.4, k)), dtype=float)
        self.base = np.asarray(prm.get("base", np.linspace(0.1, 0.3, k)), dtype=float)
        self.width = float(prm.get("width", 0.15))
        self.slopes = np.asarray(prm.get("slopes", np.linspace(-1.0, 1.0, k)), dtype=float)
        self.noise_sd = float(prm.get("noise_sd", 0.3))
        for name in ("centers", "heights", "base", "slopes"):
            if getattr(self, name).shape != (k,):
                raise InvalidArgumentError(f"{name} must have {k} entries")
        if k * self.eta >= 1:
            raise InvalidArgumentError("eta too large for the number of actions")

    def q_true(self, x):
        x = np.asarray(x, dtype=float)[:, :1]
        return self.base + self.heights * np.exp(-((x - self.centers) ** 2) / (2 * self.width ** 2))

    def propensity(self, x):
        x = np.asarray(x, dtype=float)[:, :1]
        z = self.slopes * x
        w = np.exp(z - z.max(axis=1, keepdims=True))
        w /= w.sum(axis=1, keepdims=True)
        mix = 0.5 * w + 0.5 / self.n_actions
        return clip_probabilities(mix, self.eta)

    def sample_x(self, n, rng):
        return rng.random((n, 1))

    def sample_y(self, mean, rng):
        return _uniform_noise(mean, self.noise_sd, rng)

    def _default_bound(self):
        return float((self.base + self.heights).max() + np.sqrt(3) * self.noise_sd)

    def breakpoints(self, beta=None):
        grid = np.linspace(0, 1, 4001)
        arg = self.q_true(grid[:, None]).argmax(axis=1)
        switches = []
        for i in np.flatnonzero(arg[1:] != arg[:-1]):
            j, k = arg[i], arg[i + 1]
            diff = lambda t: float(np.diff(self.q_true(np.array([[t]]))[0, [j, k]])[0])
            try:
                switches.append(optimize.brentq(diff, grid[i], grid[i + 1], xtol=1e-15))
            except ValueError:
                # more than one switch inside this grid cell; keep both ends
                switches += [grid[i], grid[i + 1]]
        pts = list(switches)
        if beta:
            for s in switches:
                for j in (1, 4, 16):
                    pts += [s - j / beta * 0.05, s + j / beta * 0.05]
        return [p for p in pts if 0 < p < 1]


# ---------------------------------------------------------------------------
# IV design

# compliance/response type: (A(0), A(1), Y(0), Y(1)), Y(a) the outcome under treatment a
RESPONSE_TYPES = tuple(itertools.product((0, 1), repeat=4))


class IvDiscrete:
    """Binary instrument, treatment and outcome over a finite covariate support.

    params: cells (m x d), cell_probs (m), type_probs (m x 16 over
    RESPONSE_TYPES), instrument_probs (m, P(V = 1 | x)).
    """

    def __init__(self, spec: DgpSpec):
        self.spec = spec
        self.eta = spec.eta
        prm = spec.params
        self.type_probs = np.asarray(prm["type_probs"], dtype=float)
        m = self.type_probs.shape[0]
        cells = prm.get("cells")
        self.cells = (np.arange(m, dtype=float)[:, None] / max(m - 1, 1)) if cells is None \
            else np.asarray(cells, dtype=float).reshape(m, -1)
        self.cell_probs = np.asarray(prm.get("cell_probs", np.full(m, 1.0 / m)), dtype=float)
        self.instrument_probs = np.asarray(prm.get("instrument_probs", np.full(m, 0.5)), dtype=float)
        if self.type_probs.shape != (m, 16) or not np.allclose(self.type_probs.sum(axis=1), 1.0):
            raise InvalidArgumentError("type_probs must be an (m, 16) table of probability rows")
        if np.any(self.type_probs < 0):
            raise InvalidArgumentError("type_probs must be non-negative")
        if np.any(self.instrument_probs < self.eta) or np.any(self.instrument_probs > 1 - self.eta):
            raise InvalidArgumentError("instrument_probs violate positivity")
        if not np.isclose(self.cell_probs.sum(), 1.0):
            raise InvalidArgumentError("cell_probs must sum to one")
        types = np.array(RESPONSE_TYPES)
        # cell_table[v, type, (y, a) cell]
        self._cell_of_type = np.zeros((2, 16, 4))
        for t, (a0, a1, y0, y1) in enumerate(RESPONSE_TYPES):
            for v in (0, 1):
                a = a1 if v else a0
                y = y1 if a else y0
                self._cell_of_type[v, t, 2 * y + a] = 1.0
        self._q_table = np.einsum("mt,vtc->vmc", self.type_probs, self._cell_of_type)
        self._ite = types[:, 3] - types[:, 2]
        self.q_joint = QJointSurface(lambda x, v: self._q_table[v, self._lookup(x)])

    def _lookup(self, x):
        x = np.asarray(x, dtype=float).reshape(len(x), -1)
        dist = np.abs(x[:, None, :] - self.cells[None, :, :]).sum(axis=2)
        idx = dist.argmin(axis=1)
        if np.any(dist[np.arange(len(x)), idx] > 1e-9):
            raise InvalidArgumentError("covariate value outside the discrete support")
        return idx

    def instrument_propensity(self, x):
        return self.instrument_probs[self._lookup(x)]

    def expect(self, fn, beta=None) -> float:
        return float(np.dot(self.cell_probs, fn(self.cells)))

    def sample(self, n, seed=None) -> IvData:
        rng = _rng(seed)
        cell = rng.choice(len(self.cells), size=n, p=self.cell_probs)
        cum = np.cumsum(self.type_probs[cell], axis=1)
        t = (rng.random(n)[:, None] > cum[:, :-1]).sum(axis=1)
        v = (rng.random(n) < self.instrument_probs[cell]).astype(int)
        types = np.array(RESPONSE_TYPES)[t]
        a = np.where(v == 1, types[:, 1], types[:, 0])
        y = np.where(a == 1, types[:, 3], types[:, 2])
        return IvData(self.cells[cell], a, v, y)

    def ate_true(self) -> float:
        return float(self.cell_probs @ (self.type_probs @ self._ite))

    def conditional_ate(self) -> np.ndarray:
        return self.type_probs @ self._ite

    def psi_true(self) -> np.ndarray:
        """``(m, 8)`` Balke-Pearl scores at each covariate cell."""
        return balke_pearl_scores(self.q_joint, self.cells)

    def bp_lower_true(self) -> float:
        return self.expect(lambda x: balke_pearl_scores(self.q_joint, x).max(axis=1))

    def bp_upper_true(self) -> float:
        flipped = self.q_joint.flip_outcome()
        return -self.expect(lambda x: balke_pearl_scores(flipped, x).max(axis=1))

    def true_value(self) -> dict:
        return {"lower": self.bp_lower_true(), "upper": self.bp_upper_true(), "ate": self.ate_true()}

    def smoothed_value(self, beta, bound="lower") -> float:
        q = self.q_joint if bound == "lower" else self.q_joint.flip_outcome()
        val = self.expect(lambda x: softmax_value(balke_pearl_scores(q, x), beta))
        return val if bound == "lower" else -val


_CLASSES = {
    "binary_uniform": BinaryUniform,
    "delta_family": DeltaFamily,
    "discrete_exact": DiscreteExact,
    "n_action_gaussian": NActionGaussian,
    "iv_discrete": IvDiscrete,
}


def make_dgp(spec: DgpSpec):
    try:
        return _CLASSES[spec.family](spec)
    except KeyError as exc:
        raise InvalidArgumentError(f"missing DGP parameter {exc}") from None


def true_value(spec: DgpSpec):
    """V* for policy families; ``{lower, upper, ate}`` for iv_discrete."""
    return make_dgp(spec).true_value()


def smoothed_value(spec: DgpSpec, beta) -> float:
    return make_dgp(spec).smoothed_value(beta)


def random_iv_spec(n_cells=4, seed=0, eta=0.01, concentration=0.5, instrument_range=(0.3, 0.7),
                   min_gap=0.0, max_tries=10_000) -> DgpSpec:
    """An iv_discrete spec with Dirichlet response-type tables.

    With ``min_gap > 0`` each cell's table is redrawn until its two largest
    Balke-Pearl scores differ by at least ``min_gap``.
    """
    rng = np.random.default_rng(seed)
    inst = rng.uniform(*instrument_range, size=n_cells)
    types = np.empty((n_cells, 16))
    for i in range(n_cells):
        for _ in range(max_tries):
            row = rng.dirichlet(np.full(16, concentration))
            probe = IvDiscrete(DgpSpec("iv_discrete", {"type_probs": [row], "instrument_probs": [inst[i]]}, eta=eta))
            top = np.sort(probe.psi_true()[0])[-2:]
            if top[1] - top[0] >= min_gap:
                break
        else:
            raise InvalidArgumentError(f"no table with top-score gap >= {min_gap} after {max_tries} draws")
        types[i] = row
    return DgpSpec("iv_discrete", {"type_probs": types.tolist(), "instrument_probs": inst.tolist()}, eta=eta)
