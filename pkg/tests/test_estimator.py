"""Tests of the residual error estimator."""

import math

import numpy as np

from elastodtn.analytic import flat_exact, flat_gradient
from elastodtn.dtn import make_mode_grid
from elastodtn.estimator import indicators, local_indicator
from elastodtn.fem import Field, build_dofmap, h1_error
from elastodtn.mesh import FACE_TOP, build_mesh, flat_profile, refine
from elastodtn.solver import solve
from elastodtn.spectral import Lattice, make_incidence, make_medium


def example_setup():
    medium = make_medium(1.0, 1.0, 2.0 * math.pi)
    incidence = make_incidence(medium, math.pi / 6, math.pi / 6)
    lattice = Lattice(1.0, 1.0, 0.3, 0.0)
    return medium, incidence, lattice


def solved(divisions, n_trunc=3):
    medium, incidence, lattice = example_setup()
    mesh = build_mesh(flat_profile(0.0), lattice, divisions)
    grid = make_mode_grid(medium, incidence, lattice, n_trunc)
    result = solve(mesh, medium, incidence, grid)
    return medium, mesh, grid, result


def test_face_sweep_audit():
    """Vectorized indicators equal the independent per-element gather."""
    medium, mesh, grid, result = solved((6, 6, 3))
    est = indicators(mesh, medium, result.field, grid, result.spectrum)
    rng = np.random.default_rng(5)
    sample = rng.choice(mesh.n_tets, size=20, replace=False)
    # include elements touching the top plane explicitly
    top = mesh.face_tets[mesh.face_tags == FACE_TOP, 0]
    for t in list(sample) + list(top[:6]):
        ref = local_indicator(mesh, medium, result.field, grid,
                              result.spectrum, int(t))
        assert abs(est.eta[t] - ref) < 1e-9 * ref, (t, est.eta[t], ref)


def test_effectivity_bounded():
    medium, mesh, grid, result = solved((10, 10, 5))
    est = indicators(mesh, medium, result.field, grid, result.spectrum)
    sol = flat_exact(medium, result.field.dofmap.incidence)
    err = h1_error(mesh, result.field, lambda x: flat_gradient(sol, x))
    eff = est.total / err
    assert 0.01 < eff < 100.0, eff


def test_estimate_decreases_under_refinement():
    totals = []
    for div in ((6, 6, 3), (12, 12, 6)):
        medium, mesh, grid, result = solved(div)
        est = indicators(mesh, medium, result.field, grid, result.spectrum)
        totals.append(est.total)
    assert totals[1] < 0.75 * totals[0], totals


def test_constant_field_interior_elements():
    """At normal incidence a constant field has no flux jumps away from
    the boundary planes: the indicator reduces to the volume residual."""
    medium = make_medium(1.0, 1.0, 2.0 * math.pi)
    incidence = make_incidence(medium, 0.0, 0.0)
    lattice = Lattice(0.9, 0.9, 0.3, 0.0)
    mesh = build_mesh(flat_profile(0.0), lattice, (6, 6, 4))
    dofmap = build_dofmap(mesh, incidence)
    c = np.array([0.3 - 0.2j, 0.1 + 0.4j, -0.5 + 0.1j])
    coef = np.tile(c, dofmap.n_free_vertices)
    dvals = np.tile(c, (mesh.n_vertices, 1)).astype(complex)
    field = Field(dofmap=dofmap, coef=coef, dirichlet_values=dvals)
    grid = make_mode_grid(medium, incidence, lattice, 2)
    from elastodtn.dtn import fourier_trace
    spectrum = fourier_trace(mesh, field.vertex_values(), grid)
    est = indicators(mesh, medium, field, grid, spectrum)

    from elastodtn.fem import element_geometry
    from elastodtn.mesh import longest_edges
    vol, _ = element_geometry(mesh)
    h_k = longest_edges(mesh)
    expected = h_k * medium.omega ** 2 \
        * np.sqrt(vol * float((np.abs(c) ** 2).sum()))
    touches_top = np.zeros(mesh.n_tets, dtype=bool)
    touches_top[mesh.face_tets[mesh.face_tags == FACE_TOP, 0]] = True
    inner = ~touches_top
    assert np.allclose(est.eta[inner], expected[inner], rtol=1e-12)
    assert np.all(est.eta[touches_top] > expected[touches_top])


def test_refined_mesh_audit():
    """The audit also holds on an adaptively refined (bisected) mesh."""
    medium, incidence, lattice = example_setup()
    mesh = build_mesh(flat_profile(0.0), lattice, (4, 4, 2))
    rng = np.random.default_rng(7)
    mesh = refine(mesh, rng.choice(mesh.n_tets, 20, replace=False))
    mesh = refine(mesh, rng.choice(mesh.n_tets, 30, replace=False))
    grid = make_mode_grid(medium, incidence, lattice, 2)
    result = solve(mesh, medium, incidence, grid)
    est = indicators(mesh, medium, result.field, grid, result.spectrum)
    for t in rng.choice(mesh.n_tets, 12, replace=False):
        ref = local_indicator(mesh, medium, result.field, grid,
                              result.spectrum, int(t))
        assert abs(est.eta[t] - ref) < 1e-9 * ref
