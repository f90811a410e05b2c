"""Randomized property checks of the softmax calculus (value, gradient, Hessian, bias)."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .softmax import softmax_grad, softmax_hessian, softmax_value


@dataclass
class PropertyResult:
    name: str
    worst: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.worst <= self.tolerance)


@dataclass
class SoftmaxCheckReport:
    draws: int
    seed: int
    runtime: float
    results: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def to_dict(self) -> dict:
        return {
            "draws": self.draws, "seed": self.seed, "runtime": self.runtime, "passed": self.passed,
            "properties": [{"name": r.name, "worst": r.worst, "tolerance": r.tolerance, "passed": r.passed}
                           for r in self.results],
        }


def random_inputs(rng, n, n_actions, beta_max=1e3, scale=3.0, tie_prob=0.2):
    """Score vectors with occasional exact ties, and betas half log-uniform, half uniform."""
    u = rng.uniform(-scale, scale, size=(n, n_actions))
    tie = rng.random(n) < tie_prob
    u[tie, 1] = u[tie, 0]
    beta = np.where(rng.random(n) < 0.5, rng.uniform(0, beta_max, n),
                    np.exp(rng.uniform(np.log(1e-3), np.log(beta_max), n)))
    beta[: max(1, n // 50)] = 0.0
    return u, beta


def _batched(fn, u, beta):
    # every softmax function takes a scalar beta; loop over distinct betas in the batch
    return np.stack([fn(u[i], beta[i]) for i in range(len(u))])


def check_softmax_properties(draws: int = 10_000, seed: int = 0, beta_max: float = 1e3,
                             n_range=(2, 8)) -> SoftmaxCheckReport:
    """Check the softmax identities and bounds on ``draws`` random (u, beta) pairs.

    Relative tolerances use a unit floor in the denominator.
    """
    rng = np.random.default_rng(seed)
    start = time.perf_counter()
    sizes = rng.integers(n_range[0], n_range[1] + 1, size=draws)
    worst = {k: -np.inf for k in ("grad_fd", "grad_sum", "grad_inf", "hess_sym", "hess_fd",
                                  "hess_op", "range", "envelope")}
    for n_act in np.unique(sizes):
        m = int((sizes == n_act).sum())
        u, beta = random_inputs(rng, m, int(n_act), beta_max)
        g = _batched(softmax_grad, u, beta)
        h = _batched(softmax_hessian, u, beta)
        sm = np.array([softmax_value(u[i], beta[i]) for i in range(m)])
        step = 1e-4 / np.maximum(1.0, beta)
        eye = np.eye(n_act)
        fd_g = np.empty_like(g)
        fd_h = np.empty_like(h)
        for k in range(n_act):
            up = u + step[:, None] * eye[k]
            dn = u - step[:, None] * eye[k]
            fd_g[:, k] = (np.array([softmax_value(up[i], beta[i]) for i in range(m)])
                          - np.array([softmax_value(dn[i], beta[i]) for i in range(m)])) / (2 * step)
            fd_h[:, :, k] = (_batched(softmax_grad, up, beta) - _batched(softmax_grad, dn, beta)) / (2 * step[:, None])
        gnorm = np.abs(g).max(axis=1)
        hnorm = np.abs(h).max(axis=(1, 2))
        worst["grad_fd"] = max(worst["grad_fd"], float((np.abs(fd_g - g).max(axis=1) / np.maximum(1, gnorm)).max()))
        worst["grad_sum"] = max(worst["grad_sum"], float(np.abs(g.sum(axis=1) - 1).max()))
        worst["grad_inf"] = max(worst["grad_inf"], float((gnorm - (1 + np.log(n_act))).max()))
        asym = np.abs(h - np.swapaxes(h, 1, 2)).max(axis=(1, 2))
        worst["hess_sym"] = max(worst["hess_sym"], float((asym / np.maximum(1, hnorm)).max()))
        worst["hess_fd"] = max(worst["hess_fd"], float((np.abs(fd_h - h).max(axis=(1, 2)) / np.maximum(1, hnorm)).max()))
        op = np.abs(np.linalg.eigvalsh(0.5 * (h + np.swapaxes(h, 1, 2)))).max(axis=1)
        bound = beta * (6 + 4 * np.log(n_act))
        worst["hess_op"] = max(worst["hess_op"], float((op - bound).max()))
        top, low = u.max(axis=1), u.min(axis=1)
        tol = 1e-12 * np.maximum(1, np.abs(u).max(axis=1))
        worst["range"] = max(worst["range"], float((np.maximum(low - sm, sm - top) - tol).max()))
        d = top[:, None] - u
        env = (d * np.exp(-beta[:, None] * d)).sum(axis=1)
        worst["envelope"] = max(worst["envelope"], float((top - sm - env - tol).max()))
    tolerances = {"grad_fd": 1e-5, "grad_sum": 1e-12, "grad_inf": 0.0, "hess_sym": 1e-10,
                  "hess_fd": 1e-4, "hess_op": 0.0, "range": 0.0, "envelope": 0.0}
    results = [PropertyResult(k, worst[k], tolerances[k]) for k in worst]
    return SoftmaxCheckReport(draws, seed, time.perf_counter() - start, results)
