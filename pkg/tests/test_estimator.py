from __future__ import annotations

import json
import math
from statistics import NormalDist

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from softmaxdr.data import PolicyData
from softmaxdr.errors import FitError, InsufficientDataError, InvalidArgumentError
from softmaxdr.estimator import (BalkePearlProblem, CrossFitConfig, SmoothingConfig, beta_schedule,
                                 crossfit_estimate, fold_assignment, normal_quantile, variance_and_ci)
from softmaxdr.nuisance import LearnerSpec
from softmaxdr.simlab import DgpSpec, make_dgp, random_iv_spec

ORACLE = CrossFitConfig(outcome=LearnerSpec(kind="known"), propensity=LearnerSpec(kind="known"))


def test_beta_schedule_values():
    n = 10_000
    assert beta_schedule(n, SmoothingConfig(1.0, 1.0, "constant-one")) == pytest.approx(10.0)
    assert beta_schedule(n, SmoothingConfig(1.0, 2.0, "loglog")) == pytest.approx(
        2 * 10 * math.log(1 + math.log(1 + n)))
    assert beta_schedule(n, SmoothingConfig(0.5, 1.0, "sqrtlog")) == pytest.approx(
        n ** (1 / 3) * math.sqrt(math.log(2 + n)))


@given(st.integers(1, 10 ** 7), st.floats(0.1, 5))
def test_beta_schedule_grows(n, delta):
    cfg = SmoothingConfig(delta=delta)
    assert beta_schedule(2 * n, cfg) > beta_schedule(n, cfg)


@pytest.mark.parametrize("p", [0.5, 0.975, 0.995, 1e-6, 0.3])
def test_normal_quantile_matches_stdlib(p):
    assert normal_quantile(p) == pytest.approx(NormalDist().inv_cdf(p), abs=1e-12)


def test_variance_and_ci_by_hand():
    scores = np.array([1.0, 2.0, 3.0, 6.0])
    sigma, lo, hi = variance_and_ci(scores, 3.0, 0.9)
    assert sigma == pytest.approx(3.5)
    half = NormalDist().inv_cdf(0.95) * math.sqrt(3.5 / 4)
    assert (lo, hi) == pytest.approx((3 - half, 3 + half))


@given(st.integers(10, 500), st.integers(2, 10), st.integers(0, 100))
def test_fold_assignment_balanced_and_deterministic(n, folds, seed):
    f = fold_assignment(n, folds, seed)
    counts = np.bincount(f, minlength=folds)
    assert counts.max() - counts.min() <= 1
    np.testing.assert_array_equal(f, fold_assignment(n, folds, seed))


def test_constant_outcome_gives_constant_estimate():
    rng = np.random.default_rng(0)
    data = PolicyData(rng.random((200, 2)), rng.integers(1, 4, 200), np.full(200, 2.5))
    cfg = CrossFitConfig(outcome=LearnerSpec(kind="knn", k=10))
    rep = crossfit_estimate(data, cfg)
    assert rep.v_hat == pytest.approx(2.5, abs=1e-12)
    assert rep.sigma_hat == pytest.approx(0.0, abs=1e-20)
    assert rep.ci_low == pytest.approx(2.5) and rep.ci_high == pytest.approx(2.5)


def test_estimate_is_reproducible_and_fold_ordered():
    d = make_dgp(DgpSpec("binary_uniform"))
    data = d.sample(1000, 4)
    cfg = CrossFitConfig(outcome=LearnerSpec(kind="knn"), seed=11)
    a, b = crossfit_estimate(data, cfg), crossfit_estimate(data, cfg)
    assert a.v_hat == b.v_hat and a.sigma_hat == b.sigma_hat
    assert a.v_hat == pytest.approx(np.mean(a.per_obs_scores), abs=1e-14)
    assert sum(f["size"] for f in a.per_fold) == 1000


def test_known_nuisances_estimate_is_close_to_truth():
    d = make_dgp(DgpSpec("delta_family", {"delta": 1.0, "p0": 0.4}))
    rep = crossfit_estimate(d.sample(20_000, 0), ORACLE, design=d)
    assert abs(rep.v_hat - d.analytic_value()) < 4 * rep.std_error + 2e-3


def test_data_driven_learners_estimate_is_close_to_truth():
    d = make_dgp(DgpSpec("n_action_gaussian"))
    cfg = CrossFitConfig(outcome=LearnerSpec(kind="knn", k=40), propensity=LearnerSpec(kind="empirical_bin"))
    rep = crossfit_estimate(d.sample(20_000, 1), cfg)
    assert abs(rep.v_hat - d.true_value()) < 5 * rep.std_error


def test_direct_alpha_mode_runs_with_separate_learners():
    d = make_dgp(DgpSpec("binary_uniform"))
    cfg = CrossFitConfig(outcome=LearnerSpec(kind="knn"), alpha_mode="direct",
                         alpha_outcome=LearnerSpec(kind="ridge_poly", degree=1),
                         alpha_propensity=LearnerSpec(kind="empirical_bin", bins=4))
    rep = crossfit_estimate(d.sample(2000, 0), cfg)
    assert abs(rep.v_hat - 0.75) < 0.1


def test_insufficient_data_and_fold_errors():
    with pytest.raises(InsufficientDataError):
        crossfit_estimate(PolicyData(np.zeros((5, 1)), [1, 2, 1, 2, 1], np.zeros(5)), CrossFitConfig(folds=5))
    # action 3 appears only once, so some training split lacks it
    a = np.array([1, 2] * 10 + [3])
    data = PolicyData(np.linspace(0, 1, 21)[:, None], a, np.zeros(21))
    with pytest.raises(FitError, match="fold"):
        crossfit_estimate(data, CrossFitConfig(folds=2, outcome=LearnerSpec(kind="knn", k=2)))


def test_config_validation():
    with pytest.raises(InvalidArgumentError):
        CrossFitConfig(folds=1)
    with pytest.raises(InvalidArgumentError):
        CrossFitConfig(ci_level=1.0)
    with pytest.raises(InvalidArgumentError):
        SmoothingConfig(growth="linear")
    with pytest.raises(InvalidArgumentError):
        BalkePearlProblem("middle")


def test_report_document_is_self_describing():
    d = make_dgp(DgpSpec("binary_uniform"))
    cfg = CrossFitConfig(outcome=LearnerSpec(kind="knn"), smoothing=SmoothingConfig(growth="constant-one"))
    doc = crossfit_estimate(d.sample(300, 0), cfg).to_dict(include_scores=True)
    for key in ("version", "seed", "beta_n", "delta", "folds", "config", "per_obs_scores"):
        assert key in doc
    assert doc["config"]["outcome"]["kind"] == "knn"
    assert any("constant-one" in note for note in doc["notes"])
    json.dumps(doc)


def test_balke_pearl_bounds_bracket_and_cover():
    d = make_dgp(random_iv_spec(3, seed=5, min_gap=0.1))
    data = d.sample(20_000, 2)
    lo = crossfit_estimate(data, ORACLE, BalkePearlProblem("lower"), design=d)
    hi = crossfit_estimate(data, ORACLE, BalkePearlProblem("upper"), design=d)
    assert lo.v_hat < hi.v_hat
    assert abs(lo.v_hat - d.bp_lower_true()) < 4 * lo.std_error + 1e-3
    assert abs(hi.v_hat - d.bp_upper_true()) < 4 * hi.std_error + 1e-3


def test_balke_pearl_with_learned_nuisances():
    d = make_dgp(random_iv_spec(2, seed=3, min_gap=0.1))
    cfg = CrossFitConfig(outcome=LearnerSpec(kind="empirical_bin", bins=2),
                         propensity=LearnerSpec(kind="empirical_bin", bins=2))
    rep = crossfit_estimate(d.sample(20_000, 0), cfg, BalkePearlProblem("lower"))
    assert abs(rep.v_hat - d.bp_lower_true()) < 5 * rep.std_error + 2e-3
