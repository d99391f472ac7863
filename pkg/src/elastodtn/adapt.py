"""Adaptive mesh refinement driven by the residual estimator.

The truncation order ``N`` is fixed per run: it is chosen up front as
the smallest order whose analytic truncation bound meets the target, so
the modal truncation error never limits the mesh convergence.  Elements
are marked by the maximum strategy and refined by bisection.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .dtn import make_mode_grid
from .estimator import ErrorEstimate, indicators
from .fem import h1_error
from .mesh import Mesh, SurfaceProfile, build_mesh, refine
from .solver import SolveResult, solve
from .spectral import (Incidence, Lattice, Medium, efficiencies,
                       incident_h1_norm, truncation_bound)

__all__ = ["AdaptRecord", "AdaptResult", "choose_n_trunc", "mark", "run"]


def choose_n_trunc(medium: Medium, incidence: Incidence, lattice: Lattice,
                   domain_volume: float, target: float = 1e-8,
                   n_max: int = 200) -> int:
    """Smallest truncation order whose tail bound meets ``target``."""
    norm = incident_h1_norm(medium, domain_volume)
    for n in range(1, n_max + 1):
        if truncation_bound(medium, incidence, lattice, n, norm) <= target:
            return n
    raise ValueError(f"no truncation order up to {n_max} reaches {target:g}")


def mark(eta: np.ndarray, tau: float = 0.5) -> np.ndarray:
    """Maximum-strategy marking: all elements with ``eta >= tau * max``."""
    return np.nonzero(eta >= tau * eta.max())[0]


@dataclass
class AdaptRecord:
    """One row of the adaptive convergence history."""

    iteration: int
    n_dofs: int
    n_tets: int
    n_trunc: int
    eps_h: float            # total error indicator
    eps_n: float            # analytic modal truncation bound
    h1_error: float         # against a reference, NaN if none given
    efficiency_sum: float
    wall_seconds: float


@dataclass
class AdaptResult:
    mesh: Mesh
    solution: SolveResult
    estimate: ErrorEstimate
    records: list[AdaptRecord] = field(default_factory=list)


def run(profile: SurfaceProfile, medium: Medium, incidence: Incidence,
        lattice: Lattice, divisions, eps: float = 0.0, tau: float = 0.5,
        eps_n_target: float = 1e-8, max_dofs: int = 300000,
        max_iters: int = 30, n_trunc: int | None = None,
        reference_gradient=None, callback=None) -> AdaptResult:
    """Adaptive solve: estimate, mark, bisect until a tolerance or
    budget is hit.

    The loop stops once the total indicator drops to ``eps``, after the
    first solve whose dof count reaches ``max_dofs``, or after
    ``max_iters`` solves.  ``n_trunc`` overrides the automatically
    chosen truncation order.  ``reference_gradient``
    (an exact gradient function) enables the recorded H1 error;
    ``callback(mesh, solution, estimate, record)`` runs once per
    iteration.
    """
    t_start = time.time()
    mesh = build_mesh(profile, lattice, divisions)
    if n_trunc is None:
        n_trunc = choose_n_trunc(medium, incidence, lattice,
                                 profile.volume(lattice), eps_n_target)
    grid = make_mode_grid(medium, incidence, lattice, n_trunc)
    eps_n = truncation_bound(
        medium, incidence, lattice, n_trunc,
        incident_h1_norm(medium, profile.volume(lattice)))

    records: list[AdaptRecord] = []
    for iteration in range(max_iters):
        solution = solve(mesh, medium, incidence, grid)
        estimate = indicators(mesh, medium, solution.field, grid,
                              solution.spectrum)
        eff = efficiencies(medium, incidence, lattice, solution.spectrum)
        err = math.nan
        if reference_gradient is not None:
            err = h1_error(mesh, solution.field, reference_gradient)
        record = AdaptRecord(
            iteration=iteration, n_dofs=solution.n_dofs, n_tets=mesh.n_tets,
            n_trunc=n_trunc, eps_h=estimate.total, eps_n=eps_n,
            h1_error=err, efficiency_sum=eff.total,
            wall_seconds=time.time() - t_start)
        records.append(record)
        if callback is not None:
            callback(mesh, solution, estimate, record)
        if (estimate.total <= eps or solution.n_dofs >= max_dofs
                or iteration == max_iters - 1):
            break
        mesh = refine(mesh, mark(estimate.eta, tau))
    return AdaptResult(mesh=mesh, solution=solution, estimate=estimate,
                       records=records)
