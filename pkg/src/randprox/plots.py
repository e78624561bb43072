"""Render run reports as figures next to their CSV files."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def trace_figure(trace, path, rate=None, title=""):
    """Semilog convergence plot of the recorded diagnostics, with the certified
    envelope c^t Psi^0 overlaid when a rate is given."""
    ts = np.array(trace.column("t"), dtype=float)
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    psi = trace.column("psi")
    if any(v is not None for v in psi):
        vals = np.array([np.nan if v is None else v for v in psi])
        ax.semilogy(ts, vals, label=r"$\Psi^t$", color="C0")
        if rate is not None and psi[0] is not None:
            ax.semilogy(ts, psi[0] * rate.c ** ts, "--", color="C3",
                        label=rf"$c^t\,\Psi^0$ (c={rate.c:.4g})")
    dx = trace.column("dist_x_sq")
    if any(v is not None for v in dx):
        vals = np.array([np.nan if v is None else v for v in dx])
        ax.semilogy(ts, vals, label=r"$\|x^t-x^\star\|^2$", color="C1", alpha=0.8)
    ax.set_xlabel("iteration")
    ax.set_ylabel("value")
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    _finish(fig, path)


def certify_figure(report, path, title=""):
    """Mean Lyapunov trajectory against its certified envelope."""
    ts = np.arange(len(report.mean_psi))
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.semilogy(ts, report.mean_psi, label=r"mean $\Psi^t$", color="C0")
    ax.semilogy(ts, report.bound, "--", color="C3",
                label=rf"$c^t\,\Psi^0$ (c={report.c:.4g})")
    upper = report.mean_psi + 3 * report.std_error
    ax.fill_between(ts, report.mean_psi, upper, color="C0", alpha=0.25,
                    label=r"$+3\,$SE")
    ax.set_xlabel("iteration")
    ax.set_ylabel(r"$\Psi$")
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    _finish(fig, path)


def sweep_figure(result, path, title=""):
    """Log-log communication cost versus condition number with the fitted slope."""
    kappas = np.array([r.kappa for r in result.rows])
    costs = np.array([r.mean_cost for r in result.rows])
    stds = np.array([r.std_cost for r in result.rows])
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.errorbar(kappas, costs, yerr=stds, fmt="o-", color="C0", capsize=3,
                label="measured cost")
    anchor = costs[0] / kappas[0] ** result.slope
    ax.plot(kappas, anchor * kappas ** result.slope, "--", color="C3",
            label=f"fit: slope {result.slope:.3f}")
    ax.plot(kappas, costs[0] * np.sqrt(kappas / kappas[0]), ":", color="C2",
            label="slope 0.5 reference")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel(r"$\kappa$")
    ax.set_ylabel("communication cost to target accuracy")
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    _finish(fig, path)


def convex_bench_figure(report, path, title=""):
    """Ergodic Bregman decay against the 1/t bound."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.loglog(report.ts, report.mean_bregman_avg, label=r"$D_f(\bar{x}^t, x^\star)$",
              color="C0")
    ax.loglog(report.ts, report.bound, "--", color="C3", label=r"$\Psi^0/((2\gamma-\gamma^2 L)t)$")
    ax.set_xlabel("iteration")
    ax.set_ylabel("Bregman divergence")
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    _finish(fig, path)
