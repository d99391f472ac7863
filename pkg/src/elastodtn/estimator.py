"""Residual a posteriori error estimator.

Per element ``K`` the indicator is

    eta_K^2 = h_K^2 ||omega^2 u_h||_K^2 + h_K sum_F w_F ||J_F||_F^2

with ``h_K`` the longest edge, jumps of the co-normal derivative
``mu dnu(u) + (lam+mu) div(u) nu`` across interior faces (weight 1/2),
across the periodic lateral boundary after unfolding with the Bloch
phase (weight 1/2), and the defect ``2 (T_N u_h - D u_h)`` of the
transparent boundary condition on the top plane (weight 1/4); the rigid
surface carries no jump.

``indicators`` computes all elements in one vectorized sweep over the
faces; ``local_indicator`` recomputes a single element independently
with plain loops and is used to audit the sweep.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .dtn import BoundarySpectrum, ModeGrid, apply_tn, evaluate_modal_sum
from .fem import Field, element_geometry
from .mesh import (FACE_INTERIOR, FACE_SURFACE, FACE_TOP, FACE_X1_HI,
                   FACE_X1_LO, FACE_X2_HI, FACE_X2_LO, Mesh, longest_edges)
from .quadrature import triangle_rule
from .spectral import Medium

__all__ = ["ErrorEstimate", "indicators", "local_indicator"]

_MIN_ORDER = 4
_MAX_ORDER = 24


@dataclass
class ErrorEstimate:
    """Elementwise error indicators."""

    eta: np.ndarray          # (nt,)

    @property
    def total(self) -> float:
        return float(np.sqrt(np.sum(self.eta ** 2)))


def _traction(gradu: np.ndarray, divu: np.ndarray, nu: np.ndarray,
              medium: Medium) -> np.ndarray:
    """Co-normal derivative; ``gradu[..., c, l] = d_l u_c``."""
    return medium.mu * np.einsum("...cl,...l->...c", gradu, nu) \
        + (medium.lam + medium.mu) * divu[..., None] * nu


def _top_quad_order(diam: np.ndarray, alpha_max: float) -> np.ndarray:
    order = np.ceil(0.5 * alpha_max * diam).astype(int) + _MIN_ORDER
    return np.clip(order, _MIN_ORDER, _MAX_ORDER)


def indicators(mesh: Mesh, medium: Medium, field: Field, grid: ModeGrid,
               spectrum: BoundarySpectrum) -> ErrorEstimate:
    incidence = field.dofmap.incidence
    lat = mesh.lattice
    vol, grads = element_geometry(mesh)
    h_k = longest_edges(mesh)
    vals = field.vertex_values()[mesh.tets]              # (nt, 4, 3)
    gradu = np.einsum("tvc,tvl->tcl", vals, grads)
    divu = np.trace(gradu, axis1=1, axis2=2)

    # volume residual: exact integral of |u_h|^2 through the P1 mass
    s = vals.sum(axis=1)
    int_u2 = vol / 20.0 * ((np.abs(s) ** 2).sum(axis=1)
                           + (np.abs(vals) ** 2).sum(axis=(1, 2)))
    eta2 = (h_k * medium.omega ** 2) ** 2 * int_u2

    fverts = mesh.vertices[mesh.faces]
    avec = 0.5 * np.cross(fverts[:, 1] - fverts[:, 0],
                          fverts[:, 2] - fverts[:, 0])
    farea = np.linalg.norm(avec, axis=1)
    nunit = avec / farea[:, None]

    # interior faces
    fint = np.nonzero(mesh.face_tags == FACE_INTERIOR)[0]
    t0, t1 = mesh.face_tets[fint].T
    nu = nunit[fint]
    jump = _traction(gradu[t0], divu[t0], nu, medium) \
        - _traction(gradu[t1], divu[t1], nu, medium)
    j2 = farea[fint] * (np.abs(jump) ** 2).sum(axis=1)
    np.add.at(eta2, t0, 0.5 * h_k[t0] * j2)
    np.add.at(eta2, t1, 0.5 * h_k[t1] * j2)

    # periodic lateral faces, unfolded with the Bloch phase
    for axis, pairs, period in ((0, mesh.lateral_pairs1, lat.period1),
                                (1, mesh.lateral_pairs2, lat.period2)):
        if len(pairs) == 0:
            continue
        phase = cmath.exp(1j * incidence.alpha[axis] * period)
        flo, fhi = pairs.T
        tlo = mesh.face_tets[flo, 0]
        thi = mesh.face_tets[fhi, 0]
        nu = np.zeros(3)
        nu[axis] = 1.0
        jump = _traction(gradu[thi], divu[thi], nu, medium) \
            - phase * _traction(gradu[tlo], divu[tlo], nu, medium)
        j2 = farea[fhi] * (np.abs(jump) ** 2).sum(axis=1)
        np.add.at(eta2, tlo, 0.5 * h_k[tlo] * j2)
        np.add.at(eta2, thi, 0.5 * h_k[thi] * j2)

    # transparent boundary defect on the top plane
    ftop = np.nonzero(mesh.face_tags == FACE_TOP)[0]
    if len(ftop):
        tn_spec = apply_tn(spectrum, grid)
        ttop = mesh.face_tets[ftop, 0]
        nu = np.array([0.0, 0.0, 1.0])
        du = _traction(gradu[ttop], divu[ttop], nu, medium)  # (nfb, 3)
        edges = fverts[ftop] - np.roll(fverts[ftop], 1, axis=1)
        diam = np.linalg.norm(edges, axis=2).max(axis=1)
        alpha_max = np.linalg.norm(grid.alphas, axis=1).max()
        orders = _top_quad_order(diam, alpha_max)
        j2 = np.zeros(len(ftop))
        for q in np.unique(orders):
            sel = np.nonzero(orders == q)[0]
            bary, wts = triangle_rule(int(q))
            lam = np.column_stack([1.0 - bary.sum(axis=1), bary])
            xy = np.einsum("qv,fvx->fqx", lam, fverts[ftop[sel]][:, :, :2])
            tn = evaluate_modal_sum(tn_spec, lat, incidence,
                                    xy.reshape(-1, 2)).reshape(
                len(sel), len(wts), 3)
            diff2 = (np.abs(tn - du[sel][:, None, :]) ** 2).sum(axis=2)
            j2[sel] = 4.0 * 2.0 * farea[ftop[sel]] * (diff2 @ wts)
        np.add.at(eta2, ttop, 0.25 * h_k[ttop] * j2)

    return ErrorEstimate(eta=np.sqrt(eta2))


def local_indicator(mesh: Mesh, medium: Medium, field: Field, grid: ModeGrid,
                    spectrum: BoundarySpectrum, tet: int) -> float:
    """Indicator of a single element, recomputed from scratch.

    Independent of :func:`indicators`: plain loops, quadrature for the
    volume term and a direct sum over the Rayleigh modes on the top
    plane.  Used to audit the vectorized face sweep.
    """
    incidence = field.dofmap.incidence
    lat = mesh.lattice
    values = field.vertex_values()

    def tet_gradient(t):
        verts = mesh.vertices[mesh.tets[t]]
        vals = values[mesh.tets[t]]
        e = verts[1:] - verts[0]
        gmat = np.linalg.solve(e, vals[1:] - vals[0])    # (l, c) = d_l u_c
        return gmat.T                                     # (c, l)

    def traction(t, nu):
        g = tet_gradient(t)
        return medium.mu * g @ nu \
            + (medium.lam + medium.mu) * np.trace(g) * nu

    verts = mesh.vertices[mesh.tets[tet]]
    h_k = max(np.linalg.norm(verts[i] - verts[j])
              for i in range(4) for j in range(i + 1, 4))

    # volume term by quadrature (exact: |u_h|^2 is quadratic)
    from .quadrature import tet_rule
    bary, wts = tet_rule()
    vol = abs(np.linalg.det(verts[1:] - verts[0])) / 6.0
    uq = bary @ values[mesh.tets[tet]]
    int_u2 = vol * float(np.sum(wts * (np.abs(uq) ** 2).sum(axis=1)))
    eta2 = (h_k * medium.omega ** 2) ** 2 * int_u2

    for fid in mesh.tet_faces[tet]:
        tag = mesh.face_tags[fid]
        if tag == FACE_SURFACE:
            continue
        fv = mesh.vertices[mesh.faces[fid]]
        av = 0.5 * np.cross(fv[1] - fv[0], fv[2] - fv[0])
        area = float(np.linalg.norm(av))
        if tag == FACE_INTERIOR:
            ta, tb = mesh.face_tets[fid]
            nu = av / area
            jump = traction(ta, nu) - traction(tb, nu)
            eta2 += 0.5 * h_k * area * float((np.abs(jump) ** 2).sum())
        elif tag == FACE_TOP:
            nu = np.array([0.0, 0.0, 1.0])
            du = traction(tet, nu)
            diam = max(np.linalg.norm(fv[i] - fv[j])
                       for i in range(3) for j in range(i + 1, 3))
            alpha_max = max(math.hypot(*a) for a in grid.alphas)
            order = int(_top_quad_order(np.array([diam]), alpha_max)[0])
            bary2, wts2 = triangle_rule(order)
            lam = np.column_stack([1.0 - bary2.sum(axis=1), bary2])
            xy = lam @ fv[:, :2]
            j2 = 0.0
            for pt, w in zip(xy, wts2):
                tn = np.zeros(3, dtype=complex)
                for k in range(grid.count):
                    ph = cmath.exp(1j * (grid.alphas[k] @ pt))
                    tn += ph * (grid.dtn_blocks[k] @ spectrum.coeffs[k])
                j2 += w * float((np.abs(2.0 * (tn - du)) ** 2).sum())
            eta2 += 0.25 * h_k * 2.0 * area * j2
        else:
            if tag in (FACE_X1_LO, FACE_X1_HI):
                axis, pairs, period = 0, mesh.lateral_pairs1, lat.period1
            else:
                axis, pairs, period = 1, mesh.lateral_pairs2, lat.period2
            phase = cmath.exp(1j * incidence.alpha[axis] * period)
            nu = np.zeros(3)
            nu[axis] = 1.0
            lo_side = tag in (FACE_X1_LO, FACE_X2_LO)
            col = 0 if lo_side else 1
            row = np.nonzero(pairs[:, col] == fid)[0][0]
            other = mesh.face_tets[pairs[row, 1 - col], 0]
            if lo_side:
                jump = traction(other, nu) - phase * traction(tet, nu)
            else:
                jump = traction(tet, nu) - phase * traction(other, nu)
            eta2 += 0.5 * h_k * area * float((np.abs(jump) ** 2).sum())
    return math.sqrt(eta2)
