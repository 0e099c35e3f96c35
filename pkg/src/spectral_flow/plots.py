"""Optional SVG plots of experiment outputs (needs matplotlib)."""
from __future__ import annotations

import os

import numpy as np


def _pyplot():
    import matplotlib
    matplotlib.use("svg")
    import matplotlib.pyplot as plt
    return plt


def plot_cdf(F, path, label="F", others=()):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(F.grid.x, F.values, label=label)
    for lab, G in others:
        ax.plot(G.grid.x, G.values, "--", label=lab)
    ax.set_xlabel("x")
    ax.set_ylabel("F(x)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_rows(x, y, path, xlabel, ylabel, log=True):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(x, y, "o-")
    if log:
        ax.set_xscale("log")
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_outputs(experiment, res, out):
    """Write the plots that make sense for an experiment's result dict."""
    if "cdf" in res:
        plot_cdf(res["cdf"], os.path.join(out, "cdf.svg"))
    if "final" in res:
        plot_cdf(res["final"], os.path.join(out, "cdf.svg"))
    if "trace" in res:
        rep = res["trace"]
        plot_rows(rep.times, rep.max_dxF, os.path.join(out, "lipschitz.svg"), "t",
                  "max dF/dx", log=False)
    if "rows" in res:
        rows = res["rows"]
        plot_rows([r["N"] for r in rows], [r["ks_mean"] for r in rows],
                  os.path.join(out, "convergence.svg"), "N", "KS")
    if "law" in res and "report" in res:
        law = res["law"]
        lo, hi = law.support()
        x = np.linspace(lo, hi, 400)
        plt = _pyplot()
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.plot(x, law.density(x))
        ax.set_xlabel("x")
        ax.set_ylabel("density")
        fig.tight_layout()
        fig.savefig(os.path.join(out, "density.svg"))
        plt.close(fig)
