"""Tests for the analytic Fourier trace and the truncated DtN block."""

import math

import numpy as np
import pytest

from elastodtn.dtn import (BoundarySpectrum, apply_tn, build_dtn_block,
                           evaluate_modal_sum, fourier_trace, make_mode_grid,
                           triangle_exp_integrals, _dd2, _dd4_weighted,
                           _dd_exp_expm, _dd_exp_series)
from elastodtn.fem import Field, build_dofmap
from elastodtn.mesh import FACE_TOP, build_mesh, flat_profile
from elastodtn.quadrature import triangle_rule
from elastodtn.spectral import Lattice, make_incidence, make_medium, mode


def example_setup():
    medium = make_medium(1.0, 1.0, 2.0 * math.pi)
    incidence = make_incidence(medium, math.pi / 6, math.pi / 6)
    lattice = Lattice(1.0, 1.0, 0.3, 0.0)
    return medium, incidence, lattice


# --- divided differences -------------------------------------------------

def test_dd_normalization_at_zero():
    zero3 = np.zeros((1, 3))
    zero4 = np.zeros((1, 4))
    assert abs(_dd_exp_series(zero3)[0] - 0.5) < 1e-14
    assert abs(_dd_exp_series(zero4)[0] - 1.0 / 6.0) < 1e-14
    assert abs(_dd_exp_expm(zero4)[0] - 1.0 / 6.0) < 1e-14


def test_dd2_matches_definition():
    rng = np.random.default_rng(3)
    p = 1j * rng.uniform(-5, 5, 200)
    q = 1j * rng.uniform(-5, 5, 200)
    ref = (np.exp(p) - np.exp(q)) / (p - q)
    assert np.allclose(_dd2(p, q), ref, rtol=1e-12, atol=1e-13)


def test_dd_paths_agree():
    rng = np.random.default_rng(4)
    # well-separated imaginary nodes: recursion vs series vs expm
    for _ in range(50):
        zj, za, zb = 1j * rng.uniform(-3, 3, 3)
        nodes = np.array([[zj, zj, za, zb]])
        series = _dd_exp_series(nodes)[0]
        expm = _dd_exp_expm(nodes)[0]
        assert abs(series - expm) < 1e-12
        if min(abs(zj - za), abs(zj - zb)) > 0.1:
            rec = _dd4_weighted(np.array([zj]), np.array([za]),
                                np.array([zb]))[0]
            assert abs(rec - series) < 1e-11
    # nearly confluent nodes at larger magnitude: expm vs series
    for _ in range(50):
        base = 1j * rng.uniform(-6, 6)
        nodes = base + 1j * rng.uniform(-0.01, 0.01, 4)
        got = _dd_exp_expm(nodes[None, :])[0]
        ref = _dd_exp_series(nodes[None, :] - base)[0] * np.exp(base)
        assert abs(got - ref) < 1e-12


# --- triangle integrals --------------------------------------------------

def tri_area2(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def quad_oracle(tri, alphas, order=30):
    """High-order quadrature of the weighted exponential integrals."""
    pts, wts = triangle_rule(order)
    lam = np.column_stack([1.0 - pts[:, 0] - pts[:, 1], pts[:, 0], pts[:, 1]])
    xy = lam @ tri
    jac = abs(tri_area2(tri[1] - tri[0], tri[2] - tri[0]))
    phase = np.exp(-1j * (xy @ alphas.T))           # (nq, na)
    # (na, 3)
    return jac * np.einsum("q,qa,qj->aj", wts, phase, lam)


def all_modes(incidence, lattice, n_max):
    k1 = 2.0 * math.pi / lattice.period1
    k2 = 2.0 * math.pi / lattice.period2
    out = []
    for n1 in range(-n_max, n_max + 1):
        for n2 in range(-n_max, n_max + 1):
            out.append(incidence.alpha + np.array([k1 * n1, k2 * n2]))
    return np.array(out)


def test_triangle_integrals_against_quadrature():
    medium, incidence, lattice = example_setup()
    alphas = all_modes(incidence, lattice, 10)
    rng = np.random.default_rng(11)
    tris = []
    for _ in range(50):
        corner = rng.uniform(0.0, 1.0, 2)
        tris.append(corner + rng.uniform(-0.06, 0.06, (3, 2)))
    tris = np.array(tris)
    got = triangle_exp_integrals(tris, alphas)
    area = 0.5 * np.abs(tri_area2(tris[:, 1] - tris[:, 0],
                                  tris[:, 2] - tris[:, 0]))
    for t in range(len(tris)):
        ref = quad_oracle(tris[t], alphas)
        err = np.abs(got[:, t, :] - ref).max()
        assert err < 1e-10 * area[t], f"triangle {t}: {err / area[t]:.2e}"


def test_triangle_integrals_zero_mode_and_symmetry():
    rng = np.random.default_rng(12)
    tris = rng.uniform(0, 1, (20, 3, 2))
    area = 0.5 * np.abs(tri_area2(tris[:, 1] - tris[:, 0],
                                  tris[:, 2] - tris[:, 0]))
    zero = triangle_exp_integrals(tris, np.zeros((1, 2)))[0]
    assert np.allclose(zero, (area / 3.0)[:, None], rtol=1e-13)
    alphas = rng.uniform(-40, 40, (5, 2))
    plus = triangle_exp_integrals(tris, alphas)
    minus = triangle_exp_integrals(tris, -alphas)
    assert np.allclose(minus, plus.conj(), rtol=1e-11, atol=1e-14)


# --- Fourier trace -------------------------------------------------------

def random_field(mesh, dofmap, rng):
    coef = rng.standard_normal(dofmap.n_dofs) \
        + 1j * rng.standard_normal(dofmap.n_dofs)
    dvals = np.zeros((mesh.n_vertices, 3), dtype=complex)
    return Field(dofmap=dofmap, coef=coef, dirichlet_values=dvals)


def trace_oracle(mesh, vertex_values, alphas):
    """Coefficients by per-face quadrature of the P1 interpolant."""
    fids = np.nonzero(mesh.face_tags == FACE_TOP)[0]
    coeffs = np.zeros((len(alphas), 3), dtype=complex)
    pts, wts = triangle_rule(20)
    lam = np.column_stack([1.0 - pts[:, 0] - pts[:, 1], pts[:, 0], pts[:, 1]])
    for f in mesh.faces[fids]:
        tri = mesh.vertices[f][:, :2]
        jac = abs(tri_area2(tri[1] - tri[0], tri[2] - tri[0]))
        xy = lam @ tri
        uh = lam @ vertex_values[f]                   # (nq, 3)
        phase = np.exp(-1j * (xy @ alphas.T))         # (nq, na)
        coeffs += jac * np.einsum("q,qa,qc->ac", wts, phase, uh)
    return coeffs / mesh.lattice.area


def test_fourier_trace_matches_quadrature():
    medium, incidence, lattice = example_setup()
    mesh = build_mesh(flat_profile(0.0), lattice, (4, 4, 2))
    dofmap = build_dofmap(mesh, incidence)
    field = random_field(mesh, dofmap, np.random.default_rng(21))
    grid = make_mode_grid(medium, incidence, lattice, 3)
    got = fourier_trace(mesh, field.vertex_values(), grid)
    ref = trace_oracle(mesh, field.vertex_values(), grid.alphas)
    scale = np.abs(ref).max()
    assert np.abs(got.coeffs - ref).max() < 1e-10 * scale


def test_fourier_trace_nesting():
    medium, incidence, lattice = example_setup()
    mesh = build_mesh(flat_profile(0.0), lattice, (4, 4, 2))
    dofmap = build_dofmap(mesh, incidence)
    field = random_field(mesh, dofmap, np.random.default_rng(22))
    small = fourier_trace(mesh, field.vertex_values(),
                          make_mode_grid(medium, incidence, lattice, 2))
    large = fourier_trace(mesh, field.vertex_values(),
                          make_mode_grid(medium, incidence, lattice, 4))
    for n1 in range(-2, 3):
        for n2 in range(-2, 3):
            assert np.allclose(small.coefficient(n1, n2),
                               large.coefficient(n1, n2), rtol=1e-12)
    assert np.all(small.coefficient(3, 0) == 0.0)


def test_apply_tn_per_mode():
    medium, incidence, lattice = example_setup()
    grid = make_mode_grid(medium, incidence, lattice, 2)
    rng = np.random.default_rng(23)
    coeffs = rng.standard_normal((grid.count, 3)) \
        + 1j * rng.standard_normal((grid.count, 3))
    spectrum = BoundarySpectrum(N=2, coeffs=coeffs)
    out = apply_tn(spectrum, grid)
    for n1 in (-2, 0, 1):
        for n2 in (-1, 0, 2):
            md = mode(medium, incidence, lattice, (n1, n2))
            ref = md.dtn @ spectrum.coefficient(n1, n2)
            assert np.allclose(out.coefficient(n1, n2), ref, rtol=1e-13)


def test_evaluate_modal_sum_against_loop():
    medium, incidence, lattice = example_setup()
    grid = make_mode_grid(medium, incidence, lattice, 3)
    rng = np.random.default_rng(24)
    coeffs = rng.standard_normal((grid.count, 3)) \
        + 1j * rng.standard_normal((grid.count, 3))
    spectrum = BoundarySpectrum(N=3, coeffs=coeffs)
    points = rng.uniform(0, 1, (17, 2))
    got = evaluate_modal_sum(spectrum, lattice, incidence, points)
    ref = np.zeros((len(points), 3), dtype=complex)
    for k in range(grid.count):
        phase = np.exp(1j * (points @ grid.alphas[k]))
        ref += phase[:, None] * coeffs[k]
    assert np.allclose(got, ref, rtol=1e-12, atol=1e-12)


# --- DtN block -----------------------------------------------------------

def test_dtn_block_trace_matches_fourier_trace():
    medium, incidence, lattice = example_setup()
    mesh = build_mesh(flat_profile(0.0), lattice, (4, 4, 2))
    dofmap = build_dofmap(mesh, incidence)
    grid = make_mode_grid(medium, incidence, lattice, 2)
    block = build_dtn_block(mesh, dofmap, grid)
    field = random_field(mesh, dofmap, np.random.default_rng(31))
    got = block.trace(field.coef)
    ref = fourier_trace(mesh, field.vertex_values(), grid).coeffs
    assert np.abs(got - ref).max() < 1e-12 * np.abs(ref).max()


def test_dtn_block_dense_matches_matvec():
    medium, incidence, lattice = example_setup()
    mesh = build_mesh(flat_profile(0.0), lattice, (4, 4, 2))
    dofmap = build_dofmap(mesh, incidence)
    grid = make_mode_grid(medium, incidence, lattice, 2)
    block = build_dtn_block(mesh, dofmap, grid)
    e, dofs = block.dense()
    rng = np.random.default_rng(32)
    x = rng.standard_normal(dofmap.n_dofs) \
        + 1j * rng.standard_normal(dofmap.n_dofs)
    via_mv = block.matvec(x)
    via_dense = np.zeros_like(x)
    via_dense[dofs] = e @ x[dofs]
    assert np.allclose(via_mv, via_dense, rtol=1e-12, atol=1e-13)


def test_dtn_block_form_value_oracle():
    """The sesquilinear boundary term equals the modal sum directly."""
    medium, incidence, lattice = example_setup()
    mesh = build_mesh(flat_profile(0.0), lattice, (4, 4, 2))
    dofmap = build_dofmap(mesh, incidence)
    grid = make_mode_grid(medium, incidence, lattice, 2)
    block = build_dtn_block(mesh, dofmap, grid)
    rng = np.random.default_rng(33)
    x = rng.standard_normal(dofmap.n_dofs) \
        + 1j * rng.standard_normal(dofmap.n_dofs)
    y = rng.standard_normal(dofmap.n_dofs) \
        + 1j * rng.standard_normal(dofmap.n_dofs)
    got = np.vdot(y, block.matvec(x))
    un = fourier_trace(mesh, Field(dofmap, x, np.zeros(
        (mesh.n_vertices, 3), dtype=complex)).vertex_values(), grid).coeffs
    vn = fourier_trace(mesh, Field(dofmap, y, np.zeros(
        (mesh.n_vertices, 3), dtype=complex)).vertex_values(), grid).coeffs
    ref = -lattice.area * sum(
        np.vdot(vn[k], grid.dtn_blocks[k] @ un[k]) for k in range(grid.count))
    assert abs(got - ref) < 1e-10 * abs(ref)


def test_wood_anomaly_propagates():
    medium = make_medium(1.0, 1.0, 2.0 * math.pi)
    incidence = make_incidence(medium, 0.0, 0.0)
    lattice = Lattice(1.0, 1.0, 0.3, 0.0)
    from elastodtn.spectral import WoodAnomalyError
    with pytest.raises(WoodAnomalyError):
        make_mode_grid(medium, incidence, lattice, 2)
