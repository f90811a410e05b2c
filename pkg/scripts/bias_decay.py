"""Smoothing bias against beta for several margin exponents, with fitted slopes."""
from __future__ import annotations

import argparse

import numpy as np
from _common import RESULTS, save

from softmaxdr.cli import plot_curve, write_curve
from softmaxdr.simlab import DgpSpec, bias_decay_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--p0", type=float, default=0.4)
    ap.add_argument("--deltas", default="0.5,1,2")
    ap.add_argument("--beta-min", type=float, default=4)
    ap.add_argument("--beta-max", type=float, default=256)
    args = ap.parse_args()
    betas = np.geomspace(args.beta_min, args.beta_max, 13)
    RESULTS.mkdir(exist_ok=True)
    out, curves = {}, {}
    for delta in map(float, args.deltas.split(",")):
        res = bias_decay_experiment(DgpSpec("delta_family", {"delta": delta, "p0": args.p0}), betas)
        out[str(delta)] = res.to_dict()
        curves[f"delta={delta}"] = res.bias
        print(f"delta={delta}: slope {res.slope:.3f} (rate {-(1 + delta):.1f})")
    write_curve(RESULTS / "bias_decay.csv", {"beta": betas, **{k.replace("=", "_"): v for k, v in curves.items()}})
    plot_curve(RESULTS / "bias_decay.svg", betas, curves, "beta", "V* - V^beta")
    print("saved", save("bias_decay.json", out))


if __name__ == "__main__":
    main()
