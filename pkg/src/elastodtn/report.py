"""Delimited output tables and summary figures of a run."""

from __future__ import annotations

import csv
import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .adapt import AdaptRecord  # noqa: E402
from .spectral import EfficiencyTable  # noqa: E402

__all__ = ["write_convergence_csv", "write_efficiencies_csv",
           "plot_convergence", "plot_efficiencies"]

CONVERGENCE_COLUMNS = ["iter", "n_dofs", "n_tets", "N", "eps_h", "eps_N",
                       "h1_error", "efficiency_sum", "wall_seconds"]


def write_convergence_csv(path, records: list[AdaptRecord]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CONVERGENCE_COLUMNS)
        for r in records:
            err = "" if math.isnan(r.h1_error) else repr(r.h1_error)
            writer.writerow([r.iteration, r.n_dofs, r.n_tets, r.n_trunc,
                             repr(r.eps_h), repr(r.eps_n), err,
                             repr(r.efficiency_sum),
                             f"{r.wall_seconds:.3f}"])


def write_efficiencies_csv(path, table: EfficiencyTable) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n1", "n2", "type", "efficiency"])
        for n1, n2, kind, value in table.rows:
            writer.writerow([n1, n2, kind, repr(value)])


def plot_convergence(path, records: list[AdaptRecord]) -> None:
    """Log-log history of the indicator (and H1 error, when known)."""
    dofs = np.array([r.n_dofs for r in records], dtype=float)
    eps_h = np.array([r.eps_h for r in records])
    fig, ax = plt.subplots(figsize=(5.5, 4.2))
    ax.loglog(dofs, eps_h, "o-", label="error indicator")
    errs = np.array([r.h1_error for r in records])
    if not np.any(np.isnan(errs)):
        ax.loglog(dofs, errs, "s-", label="H1 error")
    ref = eps_h[0] * (dofs / dofs[0]) ** (-1.0 / 3.0)
    ax.loglog(dofs, ref, "k--", linewidth=0.8, label=r"slope $-1/3$")
    ax.set_xlabel("degrees of freedom")
    ax.set_ylabel("error")
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_efficiencies(path, table: EfficiencyTable) -> None:
    """Bar chart of the propagating-mode efficiencies."""
    labels = [f"({n1},{n2}) {kind}" for n1, n2, kind, _ in table.rows]
    values = [value for *_, value in table.rows]
    fig, ax = plt.subplots(figsize=(max(4.0, 0.8 * len(labels)), 4.0))
    ax.bar(range(len(values)), values)
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=45, ha="right")
    ax.set_ylabel("efficiency")
    ax.set_title(f"sum = {table.total:.6f}")
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
