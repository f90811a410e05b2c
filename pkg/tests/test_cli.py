from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from softmaxdr.cli import build_parser, build_run_config, ingest_csv, main, write_csv
from softmaxdr.data import IvData, PolicyData
from softmaxdr.errors import ParseError, SchemaError
from softmaxdr.simlab import DgpSpec, make_dgp, random_iv_spec


def write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def test_ingest_well_formed_policy_file(tmp_path):
    data = ingest_csv(write(tmp_path, "x1,x2,a,y\n0.1,0.2,1,0.5\n0.3,0.4,3,1.5\n0.5,0.6,2,-1\n"))
    assert len(data) == 3 and data.n_actions == 3 and data.x.shape == (3, 2)


def test_zero_action_label_is_schema_error_with_line(tmp_path):
    with pytest.raises(SchemaError, match="line 3"):
        ingest_csv(write(tmp_path, "x1,a,y\n0.1,1,0\n0.2,0,1\n"))


@pytest.mark.parametrize("text, match", [
    ("x1,y,a\n0,1,1\n", "header"),
    ("x1,a,y\n0.1,1\n", "line 2"),
    ("x1,a,y\n0.1,1,abc\n", "line 2"),
    ("x1,a,y\n0.1,1,nan\n", "not finite"),
    ("", "empty"),
    ("x1,a,y\n", "no data"),
    ("a,y\n1,0\n", "header"),
])
def test_malformed_files_are_parse_errors(tmp_path, text, match):
    with pytest.raises(ParseError, match=match):
        ingest_csv(write(tmp_path, text))


def test_iv_mode_requires_binary_columns(tmp_path):
    with pytest.raises(SchemaError, match="v must be 0 or 1"):
        ingest_csv(write(tmp_path, "x1,a,v,y\n0.1,1,2,0\n"), "iv")
    data = ingest_csv(write(tmp_path, "x1,a,v,y\n0.1,1,0,0\n0.2,0,1,1\n"), "iv")
    assert isinstance(data, IvData) and len(data) == 2


@given(st.integers(0, 1000), st.integers(1, 3))
def test_policy_csv_round_trip(tmp_path_factory, seed, d):
    rng = np.random.default_rng(seed)
    data = PolicyData(rng.normal(size=(25, d)) * 1e3, rng.integers(1, 5, 25), rng.normal(size=25) / 7)
    path = tmp_path_factory.mktemp("rt") / "p.csv"
    write_csv(data, path)
    back = ingest_csv(path)
    np.testing.assert_array_equal(back.x, data.x)
    np.testing.assert_array_equal(back.a, data.a)
    np.testing.assert_array_equal(back.y, data.y)


def test_iv_csv_round_trip(tmp_path):
    data = make_dgp(random_iv_spec(3, seed=1)).sample(50, 0)
    write_csv(data, tmp_path / "iv.csv")
    back = ingest_csv(tmp_path / "iv.csv", "iv")
    for name in ("x", "a", "v", "y"):
        np.testing.assert_array_equal(getattr(back, name), getattr(data, name))


def test_config_precedence_flag_over_file_over_default(tmp_path):
    cfg_path = write(tmp_path, "seed: 5\ncrossfit: {folds: 3}\nsmoothing: {delta: 2.0, beta0: 3.0}\n"
                               "outcome: {kind: ridge_poly, degree: 3}\n", "c.yaml")
    args = build_parser().parse_args(["estimate", "--config", str(cfg_path), "--delta", "0.5", "--data", "x.csv"])
    cfg = build_run_config(args)
    assert cfg.seed == 5
    assert cfg.crossfit.folds == 3
    assert cfg.crossfit.smoothing.delta == 0.5
    assert cfg.crossfit.smoothing.beta0 == 3.0
    assert cfg.crossfit.smoothing.growth == "loglog"
    assert cfg.crossfit.outcome.kind == "ridge_poly" and cfg.crossfit.outcome.degree == 3


def test_bad_config_is_exit_code_2(tmp_path, capsys):
    cfg_path = write(tmp_path, "crossfit: {folds: 5, unknown_key: 1}\n", "c.yaml")
    assert main(["softmax-check", "--config", str(cfg_path)]) == 2
    assert main(["softmax-check", "--config", str(tmp_path / "missing.yaml")]) == 2


def test_estimate_constant_outcome(tmp_path, capsys):
    rng = np.random.default_rng(0)
    data = PolicyData(rng.random((60, 1)), rng.integers(1, 3, 60), np.full(60, 0.7))
    write_csv(data, tmp_path / "c.csv")
    out = tmp_path / "report.json"
    assert main(["estimate", "--data", str(tmp_path / "c.csv"), "--out", str(out), "--folds", "3"]) == 0
    doc = json.loads(out.read_text())
    assert doc["v_hat"] == pytest.approx(0.7)
    assert doc["input"]["n_actions"] == 2
    for key in ("version", "seed", "beta_n", "delta", "folds", "config"):
        assert key in doc


def test_estimate_exit_codes(tmp_path, capsys):
    write(tmp_path, "x1,a,y\n0.1,0,1\n", "bad.csv")
    assert main(["estimate", "--data", str(tmp_path / "bad.csv")]) == 2
    write(tmp_path, "x1,a,y\n" + "".join(f"{i / 10},1,0\n" for i in range(9)) + "0.95,2,1\n", "few.csv")
    assert main(["estimate", "--data", str(tmp_path / "few.csv"), "--folds", "5"]) == 3


def test_bp_bounds_command(tmp_path, capsys):
    d = make_dgp(random_iv_spec(2, seed=0, min_gap=0.1))
    write_csv(d.sample(3000, 0), tmp_path / "iv.csv")
    out = tmp_path / "bp.json"
    assert main(["bp-bounds", "--data", str(tmp_path / "iv.csv"), "--out", str(out),
                 "--outcome-learner", "empirical_bin", "--propensity-learner", "empirical_bin"]) == 0
    doc = json.loads(out.read_text())
    assert doc["lower"]["v_hat"] < doc["upper"]["v_hat"]


def test_softmax_check_command(tmp_path, capsys):
    out = tmp_path / "sc.json"
    assert main(["softmax-check", "--draws", "300", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["passed"] is True


def test_simulate_command(tmp_path, capsys):
    out = tmp_path / "mc.json"
    assert main(["simulate", "--family", "binary_uniform", "--n", "300", "--reps", "4",
                 "--outcome-learner", "known", "--propensity-learner", "known", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["reps"] == 4 and doc["target"] == 0.75


def test_curve_commands_write_files(tmp_path, capsys):
    assert main(["bias-decay", "--param", "p0=0.4", "--betas", "4,8,16,32,64,128",
                 "--curves-dir", str(tmp_path), "--emit-curves", "--out", str(tmp_path / "b.json")]) == 0
    lines = (tmp_path / "bias_decay.csv").read_text().splitlines()
    assert lines[0] == "beta,bias,envelope" and len(lines) == 7
    assert (tmp_path / "bias_decay.svg").exists()
    assert main(["park-diagnostic", "--betas", "8,128", "--n-mc", "2000",
                 "--curves-dir", str(tmp_path), "--out", str(tmp_path / "p.json")]) == 0
    assert (tmp_path / "park_diagnostic.csv").exists()
    doc = json.loads((tmp_path / "p.json").read_text())
    assert len(doc["variance"]) == 2


def test_bad_param_and_betas(capsys):
    assert main(["bias-decay", "--param", "novalue"]) == 2
    assert main(["bias-decay", "--betas", "4,x"]) == 2
    assert main(["simulate", "--family", "delta_family", "--param", "delta=-1"]) == 2
