"""Variance of the smoothed score and of the score divided by beta, over a beta grid."""
from __future__ import annotations

import argparse

from _common import RESULTS, save

from softmaxdr.cli import plot_curve, write_curve
from softmaxdr.simlab import DgpSpec, park_variance_diagnostic


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-mc", type=int, default=200_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    betas = [2, 4, 8, 16, 32, 64, 128, 256]
    res = park_variance_diagnostic(DgpSpec("binary_uniform"), betas, n_mc=args.n_mc, seed=args.seed)
    for b, v, s in zip(res.betas, res.variance, res.scaled_variance):
        print(f"beta={b:6.0f}  Var={v:.5f}  Var/beta^2={s:.3e}")
    RESULTS.mkdir(exist_ok=True)
    write_curve(RESULTS / "scaled_variance.csv",
                {"beta": res.betas, "variance": res.variance, "scaled_variance": res.scaled_variance})
    plot_curve(RESULTS / "scaled_variance.svg", res.betas,
               {"Var": res.variance, "Var / beta^2": res.scaled_variance}, "beta", "variance")
    print("saved", save("scaled_variance.json", res.to_dict()))


if __name__ == "__main__":
    main()
