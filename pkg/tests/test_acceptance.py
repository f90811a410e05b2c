"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` (lines are printed even with
output capture enabled).
"""
from __future__ import annotations

import time

import numpy as np
import pytest

from softmaxdr.checks import check_softmax_properties
from softmaxdr.data import PolicyData
from softmaxdr.estimator import CrossFitConfig, SmoothingConfig, crossfit_estimate
from softmaxdr.irregular import QJointSurface, balke_pearl_scores
from softmaxdr.nuisance import LearnerSpec
from softmaxdr.scores import (OutcomeSurface, PropensityModel, canonical_representer, riesz_two_action,
                              score_policy, score_two_action)
from softmaxdr.simlab import (DgpSpec, bias_decay_experiment, make_dgp, orthogonality_probe,
                              park_variance_diagnostic, random_iv_spec, run_monte_carlo, tie_or_gap_spec)
from softmaxdr.simlab.experiments import limit_score_variance
from softmaxdr.softmax import softmax_grad

# oracle-noise calibration used by the Monte-Carlo criteria (rate fixed at 0.45)
ORACLE_NOISE = LearnerSpec(kind="oracle_noise", rate=0.45, amplitude=0.5)
MC_CONFIG = CrossFitConfig(folds=5, outcome=ORACLE_NOISE, propensity=LearnerSpec(kind="known"),
                           smoothing=SmoothingConfig(delta=1.0, beta0=2.0, growth="loglog"), ci_level=0.95)


@pytest.fixture
def verdict(capsys):
    def emit(criterion: str, ok: bool, detail: str):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}")
        assert ok, detail
    return emit


def test_criterion_1_softmax_calculus(verdict):
    report = check_softmax_properties(draws=10_000, seed=0, beta_max=1e3)
    worst = ", ".join(f"{r.name}={r.worst:.2e}/{r.tolerance:g}" for r in report.results)
    ok = report.passed and report.runtime < 30
    verdict("1", ok, f"10^4 draws in {report.runtime:.1f}s; {worst}")


def test_criterion_2_exact_orthogonality(verdict):
    start = time.perf_counter()
    worst, plug = 0.0, np.inf
    for n_actions in (2, 3):
        for seed in range(3):
            spec = tie_or_gap_spec(n_cells=16, n_actions=n_actions, seed=seed)
            q_table = make_dgp(spec).q_table
            for beta in (1.0, 10.0, 100.0):
                res = orthogonality_probe(spec, beta, directions=5, t=1e-4, seed=seed)
                worst = max(worst, res.max_abs)
                # direction aligned with the softmax gradient at the truth
                aligned = [softmax_grad(q_table, beta)]
                plug = min(plug, orthogonality_probe(spec, beta, t=1e-4, plugin=True,
                                                     direction_tables=aligned).max_abs)
    runtime = time.perf_counter() - start
    ok = worst <= 1e-8 and plug > 1e-3 and runtime < 10
    verdict("2", ok, f"max |derivative| {worst:.2e} (<= 1e-8), plug-in aligned derivative "
                     f"min {plug:.3f} (> 1e-3), {runtime:.1f}s")


def test_criterion_3_bias_decay_rate(verdict):
    start = time.perf_counter()
    betas = np.geomspace(4, 256, 13)
    slopes = {}
    for delta in (0.5, 1.0, 2.0):
        res = bias_decay_experiment(DgpSpec("delta_family", {"delta": delta, "p0": 0.4}), betas)
        slopes[delta] = res.slope
    runtime = time.perf_counter() - start
    ok = all(abs(s + (1 + d)) <= 0.3 for d, s in slopes.items()) and runtime < 60
    detail = ", ".join(f"delta={d}: slope {s:.3f} (target {-(1 + d):.1f})" for d, s in slopes.items())
    verdict("3", ok, f"{detail}; {runtime:.1f}s")


@pytest.mark.parametrize("label, spec", [
    ("binary_uniform", DgpSpec("binary_uniform")),
    ("delta_family p0=0.8", DgpSpec("delta_family", {"delta": 1.0, "p0": 0.8})),
])
def test_criterion_4_coverage(verdict, label, spec):
    rep = run_monte_carlo(spec, MC_CONFIG, n=4000, reps=400, seed=0)
    ok = 0.91 <= rep.coverage <= 0.98 and rep.ks_stat <= 0.08 and not rep.failures
    verdict("4", ok, f"{label}: V*={rep.target:.6f}, coverage {rep.coverage:.4f} in [0.91, 0.98], "
                     f"KS {rep.ks_stat:.4f} <= 0.08, beta_n {rep.beta_n:.2f}, {rep.runtime:.1f}s")


class _TwoActionBatch:
    def __init__(self, x, a, y):
        self.x, self.a, self.y = x, a, y


def test_criterion_5_two_action_score_equivalence(verdict):
    rng = np.random.default_rng(0)
    worst, total = 0.0, 0
    for _ in range(100):
        m = 100
        beta = float(rng.choice([0.0, rng.uniform(0, 5), rng.uniform(5, 500)]))
        qtab = rng.uniform(-2, 2, size=(m, 2))
        ptab = rng.uniform(0.05, 0.95, size=m)
        idx = np.arange(m, dtype=float)[:, None]
        a01 = rng.integers(0, 2, m)
        y = rng.normal(size=m)
        lookup = lambda x: qtab[x[:, 0].astype(int)]
        q = OutcomeSurface(lookup, 2)
        p = PropensityModel(lambda x: np.column_stack([1 - ptab[x[:, 0].astype(int)],
                                                       ptab[x[:, 0].astype(int)]]), 2, eta=0.0)
        phi = score_two_action(_TwoActionBatch(idx, a01, y), q,
                               lambda a, x: riesz_two_action(beta, lookup(x)[:, 0], lookup(x)[:, 1],
                                                             ptab[x[:, 0].astype(int)], a), beta)
        psi = score_policy(PolicyData(idx, a01 + 1, y, n_actions=2), q, canonical_representer(q, p, beta), beta)
        worst = max(worst, float(np.abs(phi - psi).max()))
        total += m
    verdict("5", worst <= 1e-12, f"{total} random inputs, max |Phi - Psi| = {worst:.2e} (<= 1e-12)")


def test_criterion_6_scaled_variance_diagnostic(verdict):
    res = park_variance_diagnostic(DgpSpec("binary_uniform"), [8, 16, 32, 64, 128], n_mc=200_000, seed=0)
    change = res.relative_change(64, 128)
    ok = res.ratio >= 50 and change <= 0.10
    verdict("6", ok, f"scaled-variance ratio beta 8/128 = {res.ratio:.1f} (>= 50); "
                     f"Var change 64->128 = {100 * change:.2f}% (<= 10%)")


def test_criterion_7_balke_pearl(verdict):
    # (a) enumeration oracle: lower bound below the true ATE on many designs
    gaps = []
    for seed in range(50):
        truth = make_dgp(random_iv_spec(4, seed=seed)).true_value()
        gaps.append(truth["ate"] - truth["lower"])
    bound_ok = min(gaps) >= -1e-12
    # (b) each psi_k affine in q
    rng = np.random.default_rng(1)
    affine = 0.0
    for _ in range(200):
        tabs = rng.random((2, 2, 4))
        t = rng.uniform(-2, 2)
        qa = QJointSurface(lambda x, v: tabs[0][v], validate=False)
        qb = QJointSurface(lambda x, v: tabs[1][v], validate=False)
        qm = QJointSurface(lambda x, v: (1 - t) * tabs[0][v] + t * tabs[1][v], validate=False)
        x = np.zeros((1, 1))
        diff = balke_pearl_scores(qm, x) - ((1 - t) * balke_pearl_scores(qa, x) + t * balke_pearl_scores(qb, x))
        affine = max(affine, float(np.abs(diff).max()))
    # (c) coverage of the exact lower bound
    spec = random_iv_spec(4, seed=0, min_gap=0.15)
    rep = run_monte_carlo(spec, MC_CONFIG, n=5000, reps=200, seed=0)
    cov_ok = 0.90 <= rep.coverage <= 0.985 and not rep.failures
    ok = bound_ok and affine <= 1e-12 and cov_ok
    verdict("7", ok, f"min(ATE - lower) over 50 designs = {min(gaps):.4f} (>= 0); affine residual "
                     f"{affine:.1e} (<= 1e-12); coverage {rep.coverage:.3f} in [0.90, 0.985] "
                     f"(lower={rep.target:.4f}, {rep.runtime:.1f}s)")


def test_criterion_8_efficiency(verdict):
    spec = DgpSpec("delta_family", {"delta": 1.0, "p0": 0.0, "margin": 0.2})
    oracle_var = limit_score_variance(spec, n_mc=1_000_000, seed=12345)
    dgp = make_dgp(spec)
    rep = crossfit_estimate(dgp.sample(10_000, np.random.default_rng(0)), MC_CONFIG, design=dgp)
    rel = abs(rep.sigma_hat / oracle_var - 1)
    verdict("8", rel <= 0.10, f"sigma_hat {rep.sigma_hat:.4f} vs oracle Var[Psi*] {oracle_var:.4f}: "
                              f"relative difference {100 * rel:.2f}% (<= 10%)")
