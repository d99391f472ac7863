"""Truncated DtN transparent boundary condition on the top plane.

The transparent boundary condition couples all degrees of freedom on the
top plane through the Rayleigh modes ``|n1|, |n2| <= N``.  The Fourier
coefficients of a P1 trace are computed analytically: the integral of a
barycentric basis function times ``exp(-i alpha_n . r)`` over a triangle
is a divided difference of the exponential at the (purely imaginary)
corner phases, which is evaluated by three complementary schemes (a
centred series, a stable recursion, and a matrix-exponential fallback
for clustered nodes).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import FACE_TOP, Mesh
from .spectral import Incidence, Lattice, Medium, ModeData, mode

__all__ = [
    "triangle_exp_integrals",
    "ModeGrid",
    "make_mode_grid",
    "BoundarySpectrum",
    "fourier_trace",
    "apply_tn",
    "evaluate_modal_sum",
    "DtnBlock",
    "build_dtn_block",
]

_SERIES_SPREAD = 8.0
_MIN_SEPARATION = 0.05
_SERIES_TERMS = 60


def _dd_exp_series(nodes: np.ndarray) -> np.ndarray:
    """Divided difference of exp at ``nodes`` (..., m) via the complete
    homogeneous symmetric series; accurate for centred node spreads of
    order ten."""
    m = nodes.shape[-1]
    shape = nodes.shape[:-1]
    # h_k of an increasing node set, built one node at a time
    h = np.zeros((_SERIES_TERMS + 1,) + shape, dtype=complex)
    h[0] = 1.0
    for j in range(m):
        w = nodes[..., j]
        for k in range(1, _SERIES_TERMS + 1):
            h[k] = h[k] + w * h[k - 1]
    # dd = sum_k h_k / (m - 1 + k)!
    from scipy.special import factorial
    fact = factorial(m - 1 + np.arange(_SERIES_TERMS + 1), exact=False)
    return np.tensordot(1.0 / fact, h, axes=(0, 0))


def _dd_exp_expm(nodes: np.ndarray) -> np.ndarray:
    """Divided difference via the corner entry of the exponential of the
    bidiagonal node matrix (scaling and squaring); uniformly valid."""
    m = nodes.shape[-1]
    inst = nodes.reshape(-1, m)
    j = np.zeros((len(inst), m, m), dtype=complex)
    idx = np.arange(m)
    j[:, idx, idx] = inst
    j[:, idx[:-1], idx[:-1] + 1] = 1.0
    norm = np.abs(inst).max(initial=0.0)
    s = max(0, int(np.ceil(np.log2(max(norm, 1e-300) / 0.5))))
    t = j / (2.0 ** s)
    result = np.zeros_like(t)
    result[:, idx, idx] = 1.0
    term = result.copy()
    for k in range(1, 24):
        term = term @ t / k
        result += term
    for _ in range(s):
        result = result @ result
    return result[:, 0, m - 1].reshape(nodes.shape[:-1])


def _sinhc(x: np.ndarray) -> np.ndarray:
    out = np.ones_like(x)
    small = np.abs(x) < 1.0e-4
    xs = x[small]
    out[small] = 1.0 + xs * xs / 6.0 * (1.0 + xs * xs / 20.0)
    xl = x[~small]
    out[~small] = np.sinh(xl) / xl
    return out


def _dd2(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Stable two-node divided difference of exp."""
    return np.exp(0.5 * (p + q)) * _sinhc(0.5 * (p - q))


def _dd4_weighted(zj, za, zb):
    """dd of exp at the node multiset {zj, zj, za, zb} for instances whose
    pairwise separations are not too small."""
    dja = zj - za
    djb = zj - zb
    d2ja = _dd2(zj, za)
    dd3a = (np.exp(zj) - d2ja) / dja
    dd3b = (d2ja - _dd2(za, zb)) / djb
    return (dd3a - dd3b) / djb


def triangle_exp_integrals(tris: np.ndarray, alphas: np.ndarray,
                           chunk: int = 64) -> np.ndarray:
    """Integrals ``int_T lambda_j exp(-i alpha . r) dr`` for planar
    triangles.

    Parameters
    ----------
    tris : ndarray (nt, 3, 2)
        Triangle corner coordinates.
    alphas : ndarray (na, 2)
        Real horizontal wavevectors.

    Returns
    -------
    ndarray (na, nt, 3), complex
        One integral per wavevector, triangle and barycentric weight.
    """
    tris = np.asarray(tris, dtype=float)
    alphas = np.atleast_2d(np.asarray(alphas, dtype=float))
    e1 = tris[:, 1] - tris[:, 0]
    e2 = tris[:, 2] - tris[:, 0]
    area = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    out = np.empty((len(alphas), len(tris), 3), dtype=complex)
    for lo in range(0, len(alphas), chunk):
        hi = min(lo + chunk, len(alphas))
        theta = np.einsum("ax,tjx->atj", alphas[lo:hi], tris)
        z = -1j * theta
        zc = z.mean(axis=-1, keepdims=True)
        w = z - zc
        spread = (theta.max(axis=-1) - theta.min(axis=-1))
        series = spread <= _SERIES_SPREAD
        block = np.empty(z.shape, dtype=complex)       # (a, t, 3)
        for jloc, (a_, b_) in enumerate(((1, 2), (2, 0), (0, 1))):
            nodes = np.stack([w[..., jloc], w[..., jloc],
                              w[..., a_], w[..., b_]], axis=-1)
            vals = np.empty(z.shape[:-1], dtype=complex)
            if np.any(series):
                vals[series] = _dd_exp_series(nodes[series])
            rest = ~series
            if np.any(rest):
                zj, za, zb = (nodes[rest][:, 0], nodes[rest][:, 2],
                              nodes[rest][:, 3])
                sep = np.minimum(np.abs(zj - za), np.abs(zj - zb))
                ok = sep >= _MIN_SEPARATION
                got = np.empty(len(zj), dtype=complex)
                if np.any(ok):
                    got[ok] = _dd4_weighted(zj[ok], za[ok], zb[ok])
                if np.any(~ok):
                    got[~ok] = _dd_exp_expm(nodes[rest][~ok])
                vals[rest] = got
            block[..., jloc] = vals
        out[lo:hi] = block * (2.0 * area)[None, :, None] * np.exp(zc)
    return out


@dataclass(frozen=True)
class ModeGrid:
    """All Rayleigh modes with ``|n1|, |n2| <= N`` in a fixed order."""

    N: int
    modes: list            # of ModeData, length (2N+1)^2
    alphas: np.ndarray     # ((2N+1)^2, 2)
    dtn_blocks: np.ndarray  # ((2N+1)^2, 3, 3)

    @property
    def count(self) -> int:
        return (2 * self.N + 1) ** 2

    def flat_index(self, n1: int, n2: int) -> int:
        return (n1 + self.N) * (2 * self.N + 1) + (n2 + self.N)


def make_mode_grid(medium: Medium, incidence: Incidence, lattice: Lattice,
                   n_trunc: int) -> ModeGrid:
    modes = []
    for n1 in range(-n_trunc, n_trunc + 1):
        for n2 in range(-n_trunc, n_trunc + 1):
            modes.append(mode(medium, incidence, lattice, (n1, n2)))
    alphas = np.array([m.alpha_n for m in modes])
    blocks = np.array([m.dtn for m in modes])
    return ModeGrid(N=n_trunc, modes=modes, alphas=alphas, dtn_blocks=blocks)


@dataclass
class BoundarySpectrum:
    """Fourier coefficients of a displacement trace on the top plane."""

    N: int
    coeffs: np.ndarray      # ((2N+1)^2, 3) complex, n1-major order

    def coefficient(self, n1: int, n2: int) -> np.ndarray:
        if max(abs(n1), abs(n2)) > self.N:
            return np.zeros(3, dtype=complex)
        return self.coeffs[(n1 + self.N) * (2 * self.N + 1) + (n2 + self.N)]


def _top_face_data(mesh: Mesh):
    fids = np.nonzero(mesh.face_tags == FACE_TOP)[0]
    faces = mesh.faces[fids]
    tris = mesh.vertices[faces][:, :, :2]
    return faces, tris


def fourier_trace(mesh: Mesh, vertex_values: np.ndarray,
                  grid: ModeGrid) -> BoundarySpectrum:
    """Fourier coefficients of the P1 trace of a field on the top plane.

    ``vertex_values`` are complex nodal values, shape (nv, 3).
    """
    faces, tris = _top_face_data(mesh)
    w = triangle_exp_integrals(tris, grid.alphas)        # (K, nf, 3)
    vals = vertex_values[faces]                          # (nf, 3, 3)
    area = mesh.lattice.area
    coeffs = np.einsum("kfj,fjc->kc", w, vals) / area
    return BoundarySpectrum(N=grid.N, coeffs=coeffs)


def apply_tn(spectrum: BoundarySpectrum, grid: ModeGrid) -> BoundarySpectrum:
    """Apply the truncated DtN operator mode by mode."""
    out = np.einsum("kcd,kd->kc", grid.dtn_blocks, spectrum.coeffs)
    return BoundarySpectrum(N=spectrum.N, coeffs=out)


def evaluate_modal_sum(spectrum: BoundarySpectrum, lattice: Lattice,
                       incidence: Incidence, points: np.ndarray) -> np.ndarray:
    """Evaluate ``sum_n c_n exp(i alpha_n . r)`` at 2-d points, (np, 3)."""
    n_t = spectrum.N
    k1 = 2.0 * np.pi / lattice.period1
    k2 = 2.0 * np.pi / lattice.period2
    ns = np.arange(-n_t, n_t + 1)
    e1 = np.exp(1j * k1 * np.outer(ns, points[:, 0]))   # (2N+1, np)
    e2 = np.exp(1j * k2 * np.outer(ns, points[:, 1]))
    c = spectrum.coeffs.reshape(2 * n_t + 1, 2 * n_t + 1, 3)
    tmp = np.einsum("abc,ap->bcp", c, e1)
    vals = np.einsum("bcp,bp->pc", tmp, e2)
    base = np.exp(1j * (points[:, 0] * incidence.alpha[0]
                        + points[:, 1] * incidence.alpha[1]))
    return vals * base[:, None]


@dataclass
class DtnBlock:
    """The DtN contribution to the discrete system.

    The sesquilinear boundary term is
    ``- area * sum_n (M_n (B u)_n) . conj((B v)_n)`` where ``B`` maps free
    coefficients to modal traces.  ``B`` acts componentwise through the
    scalar matrix ``trace_scalar``: the trace of dof ``(vertex, c)``
    contributes only to component ``c`` of each mode.

    Attributes
    ----------
    free_verts : ndarray (nbv,)
        Free-vertex indices (into the dof map's dense numbering) that
        carry top-plane trace.  Dof ``3*free_verts[i] + c`` is boundary
        column ``3*i + c``.
    trace_scalar : ndarray (K, nbv) complex
        Modal trace weights of the scalar nodal basis (Bloch phases of
        slave vertices included).
    """

    grid: ModeGrid
    lattice: Lattice
    free_verts: np.ndarray
    trace_scalar: np.ndarray

    @property
    def n_boundary_dofs(self) -> int:
        return 3 * len(self.free_verts)

    @property
    def rank(self) -> int:
        return 3 * self.grid.count

    def boundary_dofs(self) -> np.ndarray:
        return (3 * self.free_verts[:, None] + np.arange(3)).ravel()

    def trace(self, x: np.ndarray) -> np.ndarray:
        """Modal coefficients (K, 3) of the trace of dof vector ``x``."""
        xb = x.reshape(-1, 3)[self.free_verts]
        return self.trace_scalar @ xb

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """Action of the boundary term on a dof vector."""
        u = self.trace(x)
        w = np.einsum("kcd,kd->kc", self.grid.dtn_blocks, u)
        yb = -self.lattice.area * (self.trace_scalar.conj().T @ w)
        y = np.zeros_like(x)
        yr = y.reshape(-1, 3)
        yr[self.free_verts] = yb
        return y

    def dense(self) -> tuple[np.ndarray, np.ndarray]:
        """Dense boundary block and its dof indices.

        Returns ``(E, dofs)`` with ``E`` of shape (3 nbv, 3 nbv) such that
        the global matrix gets ``E[i, j]`` added at ``(dofs[i], dofs[j])``.
        """
        nbv = len(self.free_verts)
        bs = self.trace_scalar
        e = np.empty((nbv, 3, nbv, 3), dtype=complex)
        for c in range(3):
            for d in range(3):
                m_cd = self.grid.dtn_blocks[:, c, d]
                e[:, c, :, d] = -self.lattice.area * \
                    (bs.conj().T @ (m_cd[:, None] * bs))
        return e.reshape(3 * nbv, 3 * nbv), self.boundary_dofs()


def build_dtn_block(mesh: Mesh, dofmap, grid: ModeGrid) -> DtnBlock:
    """Modal trace operator of the free dofs on the top plane."""
    faces, tris = _top_face_data(mesh)
    w = triangle_exp_integrals(tris, grid.alphas) / mesh.lattice.area
    masters = dofmap.vert_master[faces]                  # (nf, 3)
    fi = dofmap.free_index[masters]
    if np.any(fi < 0):
        raise ValueError("top plane touches the Dirichlet surface")
    phases = dofmap.vert_phase[faces]

    free_verts, col = np.unique(fi, return_inverse=True)
    col = col.reshape(fi.shape)
    bs = np.zeros((grid.count, len(free_verts)), dtype=complex)
    weighted = w * phases[None, :, :]
    for j in range(3):
        np.add.at(bs.T, col[:, j], weighted[:, :, j].T)
    return DtnBlock(grid=grid, lattice=mesh.lattice,
                    free_verts=free_verts, trace_scalar=bs)
