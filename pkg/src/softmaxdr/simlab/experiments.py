"""Monte-Carlo coverage studies, bias-decay fits, the scaled-variance
diagnostic and the exact orthogonality probe."""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import stats

from .. import __version__
from ..data import PolicyData
from ..errors import ExperimentError, InvalidArgumentError, SoftmaxDRError
from ..estimator import BalkePearlProblem, CrossFitConfig, PolicyValueProblem, crossfit_estimate
from ..scores import OutcomeSurface, PropensityModel, canonical_representer, score_policy
from ..softmax import softmax_value
from .dgp import DgpSpec, DiscreteExact, IvDiscrete, PolicyDgp, make_dgp


def rep_rng(seed: int, rep: int) -> np.random.Generator:
    """Independent stream for replication ``rep``; depends only on (seed, rep)."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(rep,)))


@dataclass
class McReport:
    reps: int
    n: int
    target: float
    coverage: float
    mean_bias: float
    rmse: float
    std_errors: np.ndarray
    ks_stat: float
    ks_pvalue: float
    runtime: float
    mean_ci_width: float
    beta_n: float
    estimates: np.ndarray
    failures: list = field(default_factory=list)
    spec: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.reps < 1:
            raise InvalidArgumentError("reps must be >= 1")

    def to_dict(self, include_reps=False) -> dict:
        out = {
            "version": __version__, "seed": self.seed, "reps": self.reps, "n": self.n,
            "target": self.target, "coverage": self.coverage, "mean_bias": self.mean_bias,
            "rmse": self.rmse, "ks_stat": self.ks_stat, "ks_pvalue": self.ks_pvalue,
            "runtime": self.runtime, "mean_ci_width": self.mean_ci_width, "beta_n": self.beta_n,
            "delta": self.config.get("smoothing", {}).get("delta"),
            "folds": self.config.get("folds"),
            "failures": self.failures, "spec": self.spec, "config": self.config,
        }
        if include_reps:
            out["estimates"] = [float(v) for v in self.estimates]
            out["std_errors"] = [float(v) for v in self.std_errors]
        return out


def _default_problem(dgp):
    return BalkePearlProblem("lower") if isinstance(dgp, IvDiscrete) else PolicyValueProblem()


def population_target(dgp, problem) -> float:
    """The quantity a problem estimates under the design, from analytic or exact oracles."""
    if isinstance(problem, BalkePearlProblem):
        return dgp.bp_lower_true() if problem.bound == "lower" else dgp.bp_upper_true()
    analytic = dgp.analytic_value()
    return analytic if analytic is not None else dgp.true_value()


def run_monte_carlo(spec: DgpSpec, cfg: CrossFitConfig, n: int, reps: int, seed: int = 0,
                    problem=None, target: float | None = None) -> McReport:
    """Repeat sample -> cross-fit -> CI ``reps`` times and summarize against the true target.

    Per-rep failures are recorded; the run fails only if every rep fails.
    """
    if reps < 1:
        raise InvalidArgumentError("reps must be >= 1")
    dgp = make_dgp(spec)
    problem = problem or _default_problem(dgp)
    if target is None:
        target = population_target(dgp, problem)
    cfg = replace(cfg, keep_scores=False)
    start = time.perf_counter()
    est, se, width, covered, betas, failures = [], [], [], [], [], []
    for rep in range(reps):
        rng = rep_rng(seed, rep)
        fold_seed = int(rng.integers(2 ** 31))
        data = dgp.sample(n, rng)
        try:
            rep_report = crossfit_estimate(data, replace(cfg, seed=fold_seed), problem, design=dgp)
        except SoftmaxDRError as exc:
            failures.append({"rep": rep, "error": f"{type(exc).__name__}: {exc}"})
            continue
        est.append(rep_report.v_hat)
        se.append(rep_report.std_error)
        width.append(rep_report.ci_high - rep_report.ci_low)
        covered.append(rep_report.ci_low <= target <= rep_report.ci_high)
        betas.append(rep_report.beta_n)
    if not est:
        raise ExperimentError(f"all {reps} replications failed; first error: {failures[0]['error']}")
    est, se = np.array(est), np.array(se)
    err = est - target
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, err / se, 0.0)
    ks = stats.kstest(z, "norm") if len(z) > 1 else None
    return McReport(
        reps=reps, n=n, target=float(target), coverage=float(np.mean(covered)),
        mean_bias=float(err.mean()), rmse=float(np.sqrt(np.mean(err ** 2))), std_errors=z,
        ks_stat=float(ks.statistic) if ks else float("nan"),
        ks_pvalue=float(ks.pvalue) if ks else float("nan"),
        runtime=time.perf_counter() - start, mean_ci_width=float(np.mean(width)),
        beta_n=float(betas[0]), estimates=est, failures=failures,
        spec=spec.to_dict(), config=cfg.to_dict(), seed=seed,
    )


# ---------------------------------------------------------------------------
# bias decay

@dataclass
class BiasDecayResult:
    betas: np.ndarray
    bias: np.ndarray
    envelope: np.ndarray
    used: np.ndarray
    slope: float
    intercept: float
    residuals: np.ndarray
    expected_slope: float | None

    def to_dict(self):
        d = asdict(self)
        return {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in d.items()}


def bias_decay_experiment(spec: DgpSpec, betas, last_decade: bool = False,
                          floor: float = 1e-12) -> BiasDecayResult:
    """Quadrature bias ``V* - V^beta`` per beta and its least-squares log-log slope.

    Points with bias below ``floor`` are excluded.  With ``last_decade`` only
    betas within a factor 10 of the largest are used in the fit.
    """
    betas = np.sort(np.asarray(betas, dtype=float))
    if betas.size < 2 or betas[0] <= 0:
        raise InvalidArgumentError("need at least two positive betas")
    if betas[-1] / betas[0] < 10 ** 1.5:
        raise InvalidArgumentError("betas must span at least 1.5 decades")
    dgp = make_dgp(spec)
    if not isinstance(dgp, PolicyDgp):
        raise InvalidArgumentError("bias decay needs a policy-value family")
    bias = np.array([dgp.smoothing_bias(b) for b in betas])
    envelope = np.array([dgp.envelope_bound(b) for b in betas])
    used = bias > floor
    if last_decade:
        used &= betas >= betas[-1] / 10
    if used.sum() < 4:
        raise ExperimentError(f"only {int(used.sum())} usable bias points (need 4)")
    lx, ly = np.log(betas[used]), np.log(bias[used])
    slope, intercept = np.polyfit(lx, ly, 1)
    margin = dgp.margin()
    return BiasDecayResult(betas, bias, envelope, used, float(slope), float(intercept),
                           ly - (slope * lx + intercept),
                           None if margin is None else -(1 + margin.delta))


# ---------------------------------------------------------------------------
# scaled-variance diagnostic

@dataclass
class ParkResult:
    betas: np.ndarray
    variance: np.ndarray
    scaled_variance: np.ndarray
    ratio: float
    n_mc: int

    def relative_change(self, beta_a, beta_b) -> float:
        """|Var(a) - Var(b)| / min(Var(a), Var(b)) for two betas on the grid."""
        ia = int(np.flatnonzero(np.isclose(self.betas, beta_a))[0])
        ib = int(np.flatnonzero(np.isclose(self.betas, beta_b))[0])
        va, vb = self.variance[ia], self.variance[ib]
        return float(abs(va - vb) / min(va, vb)) if min(va, vb) > 0 else 0.0

    def to_dict(self):
        return {"betas": self.betas.tolist(), "variance": self.variance.tolist(),
                "scaled_variance": self.scaled_variance.tolist(), "ratio": self.ratio, "n_mc": self.n_mc}


def true_nuisances(dgp: PolicyDgp, eta=None):
    q = OutcomeSurface(dgp.q_true, dgp.n_actions)
    p = PropensityModel(dgp.propensity, dgp.n_actions, eta=dgp.eta if eta is None else eta)
    return q, p


def park_variance_diagnostic(spec: DgpSpec, betas, n_mc: int = 200_000, seed: int = 0) -> ParkResult:
    """Var[Psi^beta(Z; Q*, alpha^beta)] and Var[Psi^beta / beta] over a beta grid.

    One sample of size ``n_mc`` is shared across betas.
    """
    betas = np.asarray(betas, dtype=float)
    if np.any(betas <= 0):
        raise InvalidArgumentError("betas must be positive")
    dgp = make_dgp(spec)
    data = dgp.sample(n_mc, np.random.default_rng(seed))
    q, p = true_nuisances(dgp)
    var = np.array([np.var(score_policy(data, q, canonical_representer(q, p, b), b)) for b in betas])
    scaled = var / betas ** 2
    ratio = float(scaled[0] / scaled[-1]) if scaled[-1] > 0 else math.inf
    if np.all(var == 0):
        ratio = 1.0
    return ParkResult(betas, var, scaled, ratio, n_mc)


def limit_score_variance(spec: DgpSpec, n_mc: int = 1_000_000, seed: int = 0) -> float:
    """Monte-Carlo Var[Psi*(Z; Q*, alpha*)] of the hard-max score."""
    from ..scores import score_policy_limit
    dgp = make_dgp(spec)
    data = dgp.sample(n_mc, np.random.default_rng(seed))
    q, p = true_nuisances(dgp)
    return float(np.var(score_policy_limit(data, q, p)))


# ---------------------------------------------------------------------------
# orthogonality probe

@dataclass
class ProbeResult:
    beta: float
    t: float
    derivatives: np.ndarray
    plugin: bool

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.derivatives))) if self.derivatives.size else 0.0


def _exact_mean_score(dgp: DiscreteExact, q_table, alpha, beta, plugin: bool) -> float:
    """Exact E[Psi^beta] using that the score is affine in y (so E[.|A, X] plugs in Q*)."""
    m, k = dgp.q_table.shape
    x = np.repeat(dgp.cells, k, axis=0)
    a = np.tile(np.arange(1, k + 1), m)
    y = dgp.q_table.reshape(-1)
    weight = (dgp.cell_probs[:, None] * dgp.prop_table).reshape(-1)
    q_all = np.repeat(q_table, k, axis=0)
    if plugin:
        vals = softmax_value(q_all, beta)
    else:
        alpha_all = alpha(a, x)
        q_obs = q_all[np.arange(len(a)), a - 1]
        vals = softmax_value(q_all, beta) + alpha_all.sum(axis=1) * (y - q_obs)
    return float(np.dot(weight, vals))


def orthogonality_probe(spec: DgpSpec, beta: float, directions: int = 5, t: float = 1e-4,
                        seed: int = 0, plugin: bool = False, direction_tables=None) -> ProbeResult:
    """Central difference quotients of t -> E[Psi^beta(Z; Q* + t w, alpha^beta)] at t = 0.

    ``alpha`` is the canonical representer at the truth.  Directions are
    tables ``w[cell, action]`` drawn uniformly from [-1, 1] unless given.
    ``plugin`` drops the correction term, giving the naive estimator's mean.
    """
    dgp = make_dgp(spec)
    if not isinstance(dgp, DiscreteExact):
        raise InvalidArgumentError("the orthogonality probe needs a discrete_exact design")
    q_true, p_true = true_nuisances(dgp, eta=0.0)
    alpha = canonical_representer(q_true, p_true, beta)
    if direction_tables is None:
        rng = np.random.default_rng(seed)
        direction_tables = [rng.uniform(-1, 1, size=dgp.q_table.shape) for _ in range(directions)]
    derivs = []
    for w in direction_tables:
        w = np.asarray(w, dtype=float)
        up = _exact_mean_score(dgp, dgp.q_table + t * w, alpha, beta, plugin)
        down = _exact_mean_score(dgp, dgp.q_table - t * w, alpha, beta, plugin)
        derivs.append((up - down) / (2 * t))
    return ProbeResult(float(beta), float(t), np.array(derivs), plugin)


def tie_or_gap_spec(n_cells: int = 8, n_actions: int = 3, seed: int = 0, gap: float = 0.6,
                    tie_fraction: float = 0.5, noise_sd: float = 0.5, eta: float = 0.01) -> DgpSpec:
    """A discrete_exact spec whose per-cell top two values are either tied or ``gap`` apart.

    Remaining actions sit at least ``gap`` below the top.  Cell probabilities
    and propensities are random and bounded away from zero.
    """
    if n_actions < 2 or n_cells < 1:
        raise InvalidArgumentError("need n_actions >= 2 and n_cells >= 1")
    rng = np.random.default_rng(seed)
    q = np.empty((n_cells, n_actions))
    for i in range(n_cells):
        top = rng.uniform(0.5, 1.5)
        row = top - gap - rng.uniform(0, 0.5, size=n_actions)
        row[0] = top
        row[1] = top if rng.random() < tie_fraction else top - gap
        q[i] = rng.permutation(row)
    cell_probs = rng.dirichlet(np.full(n_cells, 2.0))
    prop = rng.dirichlet(np.full(n_actions, 4.0), size=n_cells)
    prop = 0.5 * prop + 0.5 / n_actions
    cells = np.arange(n_cells, dtype=float)[:, None]
    return DgpSpec("discrete_exact", {"cells": cells.tolist(), "cell_probs": cell_probs.tolist(),
                                      "q_table": q.tolist(), "prop_table": prop.tolist(),
                                      "noise_sd": noise_sd}, eta=eta)
