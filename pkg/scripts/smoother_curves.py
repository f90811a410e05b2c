"""Softmax and log-sum-exp smoothers of max(0, t) for a few temperatures."""
from __future__ import annotations

import numpy as np
from _common import RESULTS

from softmaxdr.cli import write_curve
from softmaxdr.softmax import softmax_value, softplus_max


def main():
    t = np.linspace(-2, 2, 401)
    u = np.column_stack([np.zeros_like(t), t])
    cols = {"t": t, "max": np.maximum(t, 0)}
    for beta in (1.0, 3.0, 10.0):
        cols[f"softmax_beta_{beta:g}"] = softmax_value(u, beta)
        cols[f"logsumexp_beta_{beta:g}"] = softplus_max(u, beta)
    RESULTS.mkdir(exist_ok=True)
    write_curve(RESULTS / "smoother_curves.csv", cols)
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        return
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(t, cols["max"], "k-", label="max(0, t)")
    for beta in (1.0, 3.0, 10.0):
        ax.plot(t, cols[f"softmax_beta_{beta:g}"], label=f"softmax, beta={beta:g}")
        ax.plot(t, cols[f"logsumexp_beta_{beta:g}"], "--", label=f"log-sum-exp, beta={beta:g}")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(RESULTS / "smoother_curves.svg", format="svg")
    print("saved", RESULTS / "smoother_curves.csv")


if __name__ == "__main__":
    main()
