"""Command-line interface: estimation from CSV, simulation studies and checks.

Configuration precedence is command-line flag > YAML config file > default.
Every report is a JSON document; curves are written as CSV with an optional
SVG line plot.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .checks import check_softmax_properties
from .data import IvData, PolicyData
from .errors import AcceptanceFailure, ParseError, SchemaError, SoftmaxDRError
from .estimator import (BalkePearlProblem, CrossFitConfig, PolicyValueProblem, SmoothingConfig,
                        crossfit_estimate)
from .nuisance import LearnerSpec
from .simlab import (DgpSpec, bias_decay_experiment, park_variance_diagnostic,
                     run_monte_carlo)
from .simlab.dgp import FAMILIES

COMMANDS = ("estimate", "simulate", "bias-decay", "park-diagnostic", "bp-bounds", "softmax-check")


# ---------------------------------------------------------------------------
# CSV

def _parse_float(text, lineno, column):
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"line {lineno}: column {column!r} is not a number: {text!r}") from None
    if not math.isfinite(value):
        raise ParseError(f"line {lineno}: column {column!r} is not finite: {text!r}")
    return value


def ingest_csv(path, mode: str = "policy"):
    """Read a dataset.

    policy mode: header ``x1,...,xd,a,y`` with 1-based integer actions; the
    number of actions is the largest observed label.
    iv mode: header ``x1,...,xd,a,v,y`` with binary a, v and y.
    """
    if mode not in ("policy", "iv"):
        raise ParseError(f"mode must be 'policy' or 'iv', got {mode!r}")
    tail = ["a", "y"] if mode == "policy" else ["a", "v", "y"]
    path = Path(path)
    if not path.is_file():
        raise ParseError(f"input file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError(f"{path}: empty file, header row required") from None
        d = len(header) - len(tail)
        expected = [f"x{j}" for j in range(1, d + 1)] + tail
        if d < 1 or header != expected:
            raise ParseError(f"line 1: header must be x1,...,xd,{','.join(tail)}; got {','.join(header)}")
        rows = []
        for row in reader:
            lineno = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
            rows.append([_parse_float(c.strip(), lineno, header[j]) for j, c in enumerate(row)])
    if not rows:
        raise ParseError(f"{path}: no data rows")
    arr = np.array(rows)
    x = arr[:, :d]
    if mode == "policy":
        a = arr[:, d]
        bad = np.flatnonzero((a != np.round(a)) | (a < 1))
        if bad.size:
            raise SchemaError(f"line {bad[0] + 2}: action label must be an integer >= 1, got {a[bad[0]]!r}")
        return PolicyData(x, a.astype(int), arr[:, d + 1])
    for j, name in enumerate(tail):
        col = arr[:, d + j]
        bad = np.flatnonzero((col != 0) & (col != 1))
        if bad.size:
            raise SchemaError(f"line {bad[0] + 2}: {name} must be 0 or 1, got {col[bad[0]]!r}")
    return IvData(x, arr[:, d], arr[:, d + 1], arr[:, d + 2])


def write_csv(data, path) -> None:
    """Write a dataset in the layout ``ingest_csv`` reads; floats use repr so they round-trip."""
    x = data.x
    names = [f"x{j}" for j in range(1, x.shape[1] + 1)]
    if isinstance(data, IvData):
        names += ["a", "v", "y"]
        cols = [data.a, data.v, data.y]
    else:
        names += ["a", "y"]
        cols = [data.a, data.y]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for i in range(len(data)):
            w.writerow([repr(float(v)) for v in x[i]] + [int(cols[0][i])]
                       + [int(c[i]) for c in cols[1:-1]] + [repr(float(cols[-1][i]))])


# ---------------------------------------------------------------------------
# configuration

@dataclass
class RunConfig:
    command: str
    data: str | None = None
    mode: str = "policy"
    out: str | None = None
    curves_dir: str | None = None
    emit_curves: bool = False
    seed: int = 0
    crossfit: CrossFitConfig = field(default_factory=CrossFitConfig)
    dgp: DgpSpec | None = None
    experiment: dict = field(default_factory=dict)


def _learner(d: dict | None, default: LearnerSpec) -> LearnerSpec:
    if not d:
        return default
    base = default.to_dict()
    base.update(d)
    return LearnerSpec(**base)


def _merge(config: dict, args: argparse.Namespace) -> dict:
    """Apply flags on top of the config-file tree."""
    cfg = {k: dict(v) if isinstance(v, dict) else v for k, v in config.items()}
    for section in ("crossfit", "smoothing", "outcome", "propensity", "dgp", "experiment"):
        cfg.setdefault(section, {})
    flag_map = {
        "folds": ("crossfit", "folds"), "ci_level": ("crossfit", "ci_level"),
        "bound": ("crossfit", "bound"), "alpha_mode": ("crossfit", "alpha_mode"),
        "delta": ("smoothing", "delta"), "beta0": ("smoothing", "beta0"), "growth": ("smoothing", "growth"),
        "outcome_learner": ("outcome", "kind"), "propensity_learner": ("propensity", "kind"),
        "family": ("dgp", "family"), "n": ("experiment", "n"), "reps": ("experiment", "reps"),
        "betas": ("experiment", "betas"), "n_mc": ("experiment", "n_mc"), "draws": ("experiment", "draws"),
        "target_bound": ("experiment", "bound"),
    }
    for flag, (section, key) in flag_map.items():
        value = getattr(args, flag, None)
        if value is not None:
            cfg[section][key] = value
    for flag in ("seed", "data", "mode", "out", "curves_dir"):
        value = getattr(args, flag, None)
        if value is not None:
            cfg[flag] = value
    if getattr(args, "emit_curves", False):
        cfg["emit_curves"] = True
    for item in getattr(args, "param", None) or []:
        key, _, raw = item.partition("=")
        if not key or not _:
            raise ParseError(f"--param expects key=value, got {item!r}")
        cfg["dgp"].setdefault("params", {})[key] = yaml.safe_load(raw)
    return cfg


def build_run_config(args: argparse.Namespace) -> RunConfig:
    config = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise ParseError(f"config file not found: {path}")
        try:
            config = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        except yaml.YAMLError as exc:
            raise ParseError(f"{path}: {exc}") from None
        if not isinstance(config, dict):
            raise SchemaError(f"{path}: top level must be a mapping")
    cfg = _merge(config, args)
    try:
        smoothing = SmoothingConfig(**cfg["smoothing"])
        crossfit = CrossFitConfig(
            smoothing=smoothing,
            outcome=_learner(cfg["outcome"], LearnerSpec()),
            propensity=_learner(cfg["propensity"], LearnerSpec(kind="empirical_bin")),
            **{k: v for k, v in cfg["crossfit"].items()},
        )
    except TypeError as exc:
        raise SchemaError(f"config: {exc}") from None
    dgp = None
    if cfg["dgp"].get("family"):
        d = cfg["dgp"]
        dgp = DgpSpec(d["family"], dict(d.get("params", {})), eta=d.get("eta", 0.01), bound=d.get("bound"))
    return RunConfig(
        command=args.command, data=cfg.get("data"), mode=cfg.get("mode", "policy"), out=cfg.get("out"),
        curves_dir=cfg.get("curves_dir"), emit_curves=bool(cfg.get("emit_curves", False)),
        seed=int(cfg.get("seed", 0)), crossfit=crossfit, dgp=dgp, experiment=cfg["experiment"],
    )


# ---------------------------------------------------------------------------
# outputs

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer, np.bool_)):
        return obj.item()
    return obj


def emit_report(doc: dict, out: str | None) -> None:
    text = json.dumps(_jsonable(doc), indent=2, sort_keys=False)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def write_curve(path, columns: dict) -> None:
    names = list(columns)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for row in zip(*(columns[k] for k in names)):
            w.writerow([repr(float(v)) for v in row])


def plot_curve(path, x, ys: dict, xlabel: str, ylabel: str) -> bool:
    """Log-log SVG line plot; returns False when matplotlib is unavailable."""
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        return False
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for label, y in ys.items():
        y = np.asarray(y, dtype=float)
        keep = y > 0
        ax.loglog(np.asarray(x)[keep], y[keep], marker="o", label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return True


def _curves(cfg: RunConfig, stem: str, x, ys: dict, ylabel: str) -> list:
    if not (cfg.curves_dir or cfg.emit_curves):
        return []
    outdir = Path(cfg.curves_dir or ".")
    outdir.mkdir(parents=True, exist_ok=True)
    files = [outdir / f"{stem}.csv"]
    write_curve(files[0], {"beta": x, **ys})
    if cfg.emit_curves and plot_curve(outdir / f"{stem}.svg", x, ys, "beta", ylabel):
        files.append(outdir / f"{stem}.svg")
    return [str(f) for f in files]


# ---------------------------------------------------------------------------
# commands

def _require_data(cfg: RunConfig, mode: str):
    if not cfg.data:
        raise ParseError(f"{cfg.command} needs --data")
    return ingest_csv(cfg.data, mode)


def _require_dgp(cfg: RunConfig, default_family: str | None = None) -> DgpSpec:
    if cfg.dgp is None:
        if default_family is None:
            raise ParseError(f"{cfg.command} needs --family or a dgp section in the config")
        return DgpSpec(default_family)
    return cfg.dgp


def _betas(cfg: RunConfig, default):
    betas = cfg.experiment.get("betas", default)
    if isinstance(betas, str):
        try:
            betas = [float(b) for b in betas.split(",") if b.strip()]
        except ValueError:
            raise ParseError(f"betas must be a comma-separated list of numbers, got {betas!r}") from None
    return [float(b) for b in betas]


def cmd_estimate(cfg: RunConfig) -> dict:
    if cfg.mode == "iv":
        data = _require_data(cfg, "iv")
        problem = BalkePearlProblem(cfg.experiment.get("bound", "lower"))
    else:
        data = _require_data(cfg, "policy")
        problem = PolicyValueProblem()
    report = crossfit_estimate(data, replace(cfg.crossfit, seed=cfg.seed), problem)
    doc = report.to_dict(include_scores=False)
    doc["input"] = {"path": cfg.data, "mode": cfg.mode, "n": len(data), "d": int(data.x.shape[1])}
    if isinstance(data, PolicyData):
        doc["input"]["n_actions"] = data.n_actions
        doc["input"]["n_actions_rule"] = "largest observed action label"
    return doc


def cmd_bp_bounds(cfg: RunConfig) -> dict:
    data = _require_data(cfg, "iv")
    crossfit = replace(cfg.crossfit, seed=cfg.seed)
    out = {"version": __version__, "seed": cfg.seed, "input": {"path": cfg.data, "n": len(data)}}
    for bound in ("lower", "upper"):
        out[bound] = crossfit_estimate(data, crossfit, BalkePearlProblem(bound)).to_dict()
    return out


def cmd_simulate(cfg: RunConfig) -> dict:
    spec = _require_dgp(cfg, "binary_uniform")
    n = int(cfg.experiment.get("n", 4000))
    reps = int(cfg.experiment.get("reps", 100))
    problem = None
    if spec.family == "iv_discrete":
        problem = BalkePearlProblem(cfg.experiment.get("bound", "lower"))
    report = run_monte_carlo(spec, cfg.crossfit, n, reps, seed=cfg.seed, problem=problem)
    return report.to_dict()


def cmd_bias_decay(cfg: RunConfig) -> dict:
    spec = _require_dgp(cfg, "delta_family")
    betas = _betas(cfg, list(np.geomspace(4, 256, 13)))
    res = bias_decay_experiment(spec, betas, last_decade=bool(cfg.experiment.get("last_decade", False)))
    doc = {"version": __version__, "spec": spec.to_dict(), **res.to_dict()}
    doc["curve_files"] = _curves(cfg, "bias_decay", res.betas, {"bias": res.bias, "envelope": res.envelope},
                                 "V* - V^beta")
    return doc


def cmd_park(cfg: RunConfig) -> dict:
    spec = _require_dgp(cfg, "binary_uniform")
    betas = _betas(cfg, [8, 16, 32, 64, 128])
    n_mc = int(cfg.experiment.get("n_mc", 200_000))
    res = park_variance_diagnostic(spec, betas, n_mc=n_mc, seed=cfg.seed)
    doc = {"version": __version__, "seed": cfg.seed, "spec": spec.to_dict(), **res.to_dict()}
    doc["curve_files"] = _curves(cfg, "park_diagnostic", res.betas,
                                 {"variance": res.variance, "scaled_variance": res.scaled_variance}, "variance")
    return doc


def cmd_softmax_check(cfg: RunConfig) -> dict:
    draws = int(cfg.experiment.get("draws", 10_000))
    report = check_softmax_properties(draws=draws, seed=cfg.seed)
    doc = {"version": __version__, **report.to_dict()}
    if not report.passed:
        failed = [r.name for r in report.results if not r.passed]
        emit_report(doc, cfg.out)
        raise AcceptanceFailure(f"softmax properties failed: {', '.join(failed)}")
    return doc


HANDLERS = {
    "estimate": cmd_estimate, "simulate": cmd_simulate, "bias-decay": cmd_bias_decay,
    "park-diagnostic": cmd_park, "bp-bounds": cmd_bp_bounds, "softmax-check": cmd_softmax_check,
}


def run(cfg: RunConfig) -> int:
    """Execute one command; returns the process exit status."""
    try:
        doc = HANDLERS[cfg.command](cfg)
    except SoftmaxDRError as exc:
        print(f"error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return exc.exit_code
    emit_report(doc, cfg.out)
    return 0


# ---------------------------------------------------------------------------
# argument parsing

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="softmaxdr", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config file")
    common.add_argument("--out", help="write the JSON report here instead of stdout")
    common.add_argument("--seed", type=int)

    est = argparse.ArgumentParser(add_help=False)
    est.add_argument("--folds", type=int)
    est.add_argument("--ci-level", dest="ci_level", type=float)
    est.add_argument("--bound", type=float, help="declared bound on |Y|")
    est.add_argument("--alpha-mode", dest="alpha_mode", choices=["canonical", "direct"])
    est.add_argument("--delta", type=float)
    est.add_argument("--beta0", type=float)
    est.add_argument("--growth", choices=["loglog", "sqrtlog", "constant-one"])
    est.add_argument("--outcome-learner", dest="outcome_learner",
                     choices=["knn", "ridge_poly", "empirical_bin", "oracle_noise", "known"])
    est.add_argument("--propensity-learner", dest="propensity_learner",
                     choices=["knn", "ridge_poly", "empirical_bin", "oracle_noise", "known"])

    dgp = argparse.ArgumentParser(add_help=False)
    dgp.add_argument("--family", choices=FAMILIES)
    dgp.add_argument("--param", action="append", metavar="KEY=VALUE", help="DGP parameter (repeatable)")

    curves = argparse.ArgumentParser(add_help=False)
    curves.add_argument("--betas", help="comma-separated beta grid")
    curves.add_argument("--curves-dir", dest="curves_dir", help="directory for curve CSV files")
    curves.add_argument("--emit-curves", dest="emit_curves", action="store_true",
                        help="also write SVG line plots")

    p = sub.add_parser("estimate", parents=[common, est], help="cross-fitted estimate from a CSV file")
    p.add_argument("--data")
    p.add_argument("--mode", choices=["policy", "iv"])
    p.add_argument("--target-bound", dest="target_bound", choices=["lower", "upper"],
                   help="which Balke-Pearl bound in iv mode")

    p = sub.add_parser("bp-bounds", parents=[common, est], help="Balke-Pearl lower and upper bounds from a CSV file")
    p.add_argument("--data")

    p = sub.add_parser("simulate", parents=[common, est, dgp], help="Monte-Carlo coverage study")
    p.add_argument("--n", type=int)
    p.add_argument("--reps", type=int)
    p.add_argument("--target-bound", dest="target_bound", choices=["lower", "upper"])

    sub.add_parser("bias-decay", parents=[common, dgp, curves], help="smoothing bias against beta")

    p = sub.add_parser("park-diagnostic", parents=[common, dgp, curves], help="variance of the scaled score against beta")
    p.add_argument("--n-mc", dest="n_mc", type=int)

    p = sub.add_parser("softmax-check", parents=[common], help="randomized softmax property suite")
    p.add_argument("--draws", type=int)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = build_run_config(args)
    except SoftmaxDRError as exc:
        print(f"error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return exc.exit_code
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
