from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import linprog

from softmaxdr.data import IvData, PolicyData
from softmaxdr.errors import InvalidArgumentError, PositivityError
from softmaxdr.irregular import (BALKE_PEARL_FORMULAS, BALKE_PEARL_SCORES, QJointSurface,
                                 balke_pearl_constituent_scores, balke_pearl_riesz,
                                 balke_pearl_score_values, balke_pearl_score_values_limit,
                                 balke_pearl_scores, parse_linear_score, plugin_smoothed_scores,
                                 policy_constituent_scores, score_irregular)
from softmaxdr.scores import OutcomeSurface, PropensityModel, canonical_representer, score_policy
from softmaxdr.simlab.dgp import RESPONSE_TYPES, make_dgp, random_iv_spec

TYPES = np.array(RESPONSE_TYPES)


def _constraint_matrix():
    rows = []
    for v in (0, 1):
        for cell in range(4):
            row = []
            for a0, a1, y0, y1 in TYPES:
                a = a1 if v else a0
                y = y1 if a else y0
                row.append(float(2 * y + a == cell))
            rows.append(row)
    return np.array(rows)


def lp_ate_bounds(q0, q1):
    """Sharp ATE bounds over response-type laws reproducing the observed cells."""
    a_eq, b_eq = _constraint_matrix(), np.concatenate([q0, q1])
    ite = (TYPES[:, 3] - TYPES[:, 2]).astype(float)
    lo = linprog(ite, A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    hi = linprog(-ite, A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    assert lo.success and hi.success
    return lo.fun, -hi.fun


def test_formulas_parse_to_expected_terms():
    s = parse_linear_score("q11(x,1) + q00(x,0) - 1")
    assert s.const == -1
    assert s.terms == ((1, 1, 1, 1), (1, 0, 0, 0))
    s5 = BALKE_PEARL_SCORES[4]
    assert list(s5.signs) == [1, -1, -1, -1, -1]
    assert list(s5.cells) == [3, 3, 2, 1, 2]
    assert list(s5.instruments) == [0, 1, 1, 0, 0]
    assert len(BALKE_PEARL_SCORES) == len(BALKE_PEARL_FORMULAS) == 8


def test_parse_rejects_garbage():
    with pytest.raises(ValueError):
        parse_linear_score("q21(x,0)")


@pytest.mark.parametrize("seed", range(20))
def test_max_score_equals_linear_program_bounds(seed):
    d = make_dgp(random_iv_spec(1, seed=seed))
    q0, q1 = d.q_joint(d.cells, 0)[0], d.q_joint(d.cells, 1)[0]
    lo, hi = lp_ate_bounds(q0, q1)
    assert d.psi_true()[0].max() == pytest.approx(lo, abs=1e-9)
    assert -balke_pearl_scores(d.q_joint.flip_outcome(), d.cells)[0].max() == pytest.approx(hi, abs=1e-9)


@pytest.mark.parametrize("seed", range(10))
def test_bounds_bracket_true_effect(seed):
    d = make_dgp(random_iv_spec(5, seed=seed))
    truth = d.true_value()
    assert truth["lower"] <= truth["ate"] + 1e-12 <= truth["upper"] + 2e-12


@given(st.integers(0, 10_000), st.floats(-2, 2))
def test_scores_are_affine_in_q(seed, t):
    rng = np.random.default_rng(seed)
    tables = rng.random((2, 2, 4))
    q_a = QJointSurface(lambda x, v: tables[0][v], validate=False)
    q_b = QJointSurface(lambda x, v: tables[1][v], validate=False)
    mix = QJointSurface(lambda x, v: (1 - t) * tables[0][v] + t * tables[1][v], validate=False)
    x = np.zeros((1, 1))
    lhs = balke_pearl_scores(mix, x)
    rhs = (1 - t) * balke_pearl_scores(q_a, x) + t * balke_pearl_scores(q_b, x)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_flip_outcome_swaps_y_index():
    q = QJointSurface(lambda x, v: np.tile([0.1, 0.2, 0.3, 0.4], (len(x), 1)))
    np.testing.assert_allclose(q.flip_outcome()(np.zeros((1, 1)), 0), [[0.3, 0.4, 0.1, 0.2]])


def test_q_surface_validation():
    q = QJointSurface(lambda x, v: np.tile([0.5, 0.7, -0.2, 0.0], (len(x), 1)))
    with pytest.raises(InvalidArgumentError):
        q(np.zeros((1, 1)), 0)


def test_riesz_values_and_positivity():
    x = np.zeros((2, 1))
    r = balke_pearl_riesz(x, np.array([0, 1]), lambda x: np.full(len(x), 0.25))
    # psi_1 = q11(x,1) + q00(x,0) - 1: terms (v=1, v=0)
    np.testing.assert_allclose(r[0], [[0, 1 / 0.75], [1 / 0.25, 0]])
    with pytest.raises(PositivityError):
        balke_pearl_riesz(x, np.array([0, 1]), lambda x: np.full(len(x), 0.0))


def test_fast_path_matches_generic_framework():
    d = make_dgp(random_iv_spec(3, seed=4))
    z = d.sample(500, 0)
    generic = balke_pearl_constituent_scores(d.instrument_propensity)
    for beta in (0.0, 3.0, 300.0):
        np.testing.assert_allclose(balke_pearl_score_values(z, d.q_joint, d.instrument_propensity, beta),
                                   plugin_smoothed_scores(z, generic, [d.q_joint] * 8, beta), atol=1e-13)


def test_smoothed_score_tends_to_limit():
    d = make_dgp(random_iv_spec(3, seed=2, min_gap=0.05))
    z = d.sample(300, 1)
    np.testing.assert_allclose(balke_pearl_score_values(z, d.q_joint, d.instrument_propensity, 1e5),
                               balke_pearl_score_values_limit(z, d.q_joint, d.instrument_propensity),
                               atol=1e-9)


def test_score_mean_is_exact_population_value():
    # E[U | X, V] = q, so the correction has mean zero and E[Psi] = E[sm(psi)]
    d = make_dgp(random_iv_spec(3, seed=7))
    beta = 5.0
    total = 0.0
    for i, x in enumerate(d.cells):
        for v in (0, 1):
            pv = d.instrument_probs[i] if v else 1 - d.instrument_probs[i]
            qv = d.q_joint(x[None, :], v)[0]
            for cell in range(4):
                y, a = divmod(cell, 2)
                z = IvData(x[None, :], [a], [v], [y])
                s = balke_pearl_score_values(z, d.q_joint, d.instrument_propensity, beta)[0]
                total += d.cell_probs[i] * pv * qv[cell] * s
    assert total == pytest.approx(d.smoothed_value(beta), abs=1e-13)


def test_policy_framework_reproduces_policy_score():
    q = OutcomeSurface(lambda x: np.column_stack([x[:, 0], 1 - x[:, 0], 0.5 + 0 * x[:, 0]]), 3)
    p = PropensityModel(lambda x: np.tile([0.2, 0.3, 0.5], (len(x), 1)), 3)
    rng = np.random.default_rng(0)
    data = PolicyData(rng.random((40, 1)), rng.integers(1, 4, 40), rng.normal(size=40), n_actions=3)
    scores = policy_constituent_scores(p, 3)
    for beta in (0.5, 20.0):
        np.testing.assert_allclose(plugin_smoothed_scores(data, scores, [q] * 3, beta),
                                   score_policy(data, q, canonical_representer(q, p, beta), beta), atol=1e-13)


def test_dimension_mismatch_rejected():
    q = OutcomeSurface(lambda x: np.zeros((len(x), 2)), 2)
    p = PropensityModel(lambda x: np.full((len(x), 2), 0.5), 2)
    data = PolicyData([[0.0]], [1], [0.0], n_actions=2)
    scores = policy_constituent_scores(p, 2)
    with pytest.raises(InvalidArgumentError):
        score_irregular(data, scores, [q, q], [np.ones((1, 2)), np.ones((1, 1))], 1.0)
    with pytest.raises(InvalidArgumentError):
        score_irregular(data, scores, [q], [np.ones((1, 1))] * 2, 1.0)
