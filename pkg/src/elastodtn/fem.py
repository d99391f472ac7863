"""Vector P1 finite elements with quasi-periodic degree-of-freedom folding.

Trial and test functions are alpha-quasi-periodic: on the two "high"
lateral boundaries the nodal value equals the value at the translated
"low" vertex times the Bloch phase ``exp(i alpha_j period_j)``.  The
folding is done at the degree-of-freedom level: every vertex stores its
master vertex and the accumulated phase, and only non-surface master
vertices carry unknowns.  Surface vertices are Dirichlet and eliminated
against the right-hand side.
"""

from __future__ import annotations

import cmath
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh
from .quadrature import tet_rule
from .spectral import Incidence, Medium

__all__ = [
    "DofMap", "Field", "build_dofmap", "dirichlet_lift",
    "assemble_volume", "interpolate_field", "h1_error", "element_geometry",
]


@dataclass
class DofMap:
    """Quasi-periodic degrees of freedom of a mesh.

    Attributes
    ----------
    vert_master : ndarray (nv,)
        Master vertex after unfolding the periodic identification.
    vert_phase : ndarray (nv,) complex
        The nodal value at a vertex is ``vert_phase * value(master)``.
    vert_dirichlet : ndarray (nv,) bool
        Vertices on the scattering surface.
    free_index : ndarray (nv,)
        Dense index of free master vertices, -1 otherwise.  Vertex
        component ``c`` of free master ``v`` owns dof ``3*free_index[v]+c``.
    """

    mesh: Mesh
    incidence: Incidence
    vert_master: np.ndarray
    vert_phase: np.ndarray
    vert_dirichlet: np.ndarray
    free_index: np.ndarray
    n_free_vertices: int

    @property
    def n_dofs(self) -> int:
        return 3 * self.n_free_vertices

    def vertex_dofs(self, verts) -> np.ndarray:
        """Dof indices (per component) of given vertices; -1 where the
        vertex is Dirichlet."""
        fi = self.free_index[self.vert_master[verts]]
        dofs = 3 * fi[..., None] + np.arange(3)
        dofs[fi < 0] = -1
        return dofs


def build_dofmap(mesh: Mesh, incidence: Incidence) -> DofMap:
    nv = mesh.n_vertices
    master = np.arange(nv)
    phase = np.ones(nv, dtype=complex)
    ph1 = cmath.exp(1j * incidence.alpha[0] * mesh.lattice.period1)
    ph2 = cmath.exp(1j * incidence.alpha[1] * mesh.lattice.period2)
    for pair, ph in ((mesh.pair_x1, ph1), (mesh.pair_x2, ph2)):
        inv = -np.ones(nv, dtype=np.int64)
        src = np.nonzero(pair >= 0)[0]
        inv[pair[src]] = src
        hi = inv[master] >= 0
        master[hi] = inv[master[hi]]
        phase[hi] *= ph
    dirichlet = mesh.surface_vertex.copy()
    is_free_master = (master == np.arange(nv)) & ~dirichlet
    free_index = -np.ones(nv, dtype=np.int64)
    free_index[is_free_master] = np.arange(int(is_free_master.sum()))
    return DofMap(mesh=mesh, incidence=incidence, vert_master=master,
                  vert_phase=phase, vert_dirichlet=dirichlet,
                  free_index=free_index,
                  n_free_vertices=int(is_free_master.sum()))


@dataclass
class Field:
    """A finite element function given by free coefficients plus
    Dirichlet boundary values."""

    dofmap: DofMap
    coef: np.ndarray                 # (n_dofs,) complex
    dirichlet_values: np.ndarray     # (nv, 3) complex, zero off the surface

    def vertex_values(self) -> np.ndarray:
        """Complex nodal values at every vertex, shape (nv, 3)."""
        dm = self.dofmap
        vals = np.zeros((dm.mesh.n_vertices, 3), dtype=complex)
        fi = dm.free_index[dm.vert_master]
        has = fi >= 0
        vals[has] = dm.vert_phase[has, None] * self.coef.reshape(-1, 3)[fi[has]]
        dirich = dm.vert_dirichlet
        vals[dirich] = self.dirichlet_values[dirich]
        return vals


def dirichlet_lift(mesh: Mesh, dofmap: DofMap,
                   incidence: Incidence) -> np.ndarray:
    """Boundary data ``-u_inc`` at the surface vertices, shape (nv, 3)."""
    from .analytic import incident
    vals = np.zeros((mesh.n_vertices, 3), dtype=complex)
    s = dofmap.vert_dirichlet
    vals[s] = -incident(incidence, mesh.vertices[s])
    return vals


def interpolate_field(mesh: Mesh, dofmap: DofMap, fn) -> Field:
    """Nodal interpolant of a (quasi-periodic) vector function."""
    vals = np.asarray(fn(mesh.vertices), dtype=complex)
    coef = np.zeros(dofmap.n_dofs, dtype=complex)
    is_free = dofmap.free_index >= 0
    coef = vals[is_free].reshape(-1)
    dvals = np.zeros((mesh.n_vertices, 3), dtype=complex)
    dvals[dofmap.vert_dirichlet] = vals[dofmap.vert_dirichlet]
    return Field(dofmap=dofmap, coef=coef, dirichlet_values=dvals)


def element_geometry(mesh: Mesh):
    """Volumes and P1 basis gradients of all cells.

    Returns
    -------
    vol : ndarray (nt,)
    grads : ndarray (nt, 4, 3)
        ``grads[t, i]`` is the (constant) gradient of the barycentric
        basis function of local vertex ``i``.
    """
    v = mesh.vertices[mesh.tets]
    e = v[:, 1:] - v[:, :1]                  # rows: edge vectors
    det = np.linalg.det(e)
    vol = np.abs(det) / 6.0
    ginv = np.linalg.inv(e)                  # columns give gradients
    grads = np.empty((len(v), 4, 3))
    grads[:, 1:] = np.transpose(ginv, (0, 2, 1))
    grads[:, 0] = -grads[:, 1:].sum(axis=1)
    return vol, grads


def assemble_volume(mesh: Mesh, dofmap: DofMap, medium: Medium,
                    dirichlet_values: np.ndarray, chunk: int = 60000):
    """Assemble the volume part of the sesquilinear form.

    The form is ``mu (grad u, grad v) + (lam + mu)(div u, div v)
    - omega^2 (u, v)`` over the cell; Dirichlet columns are folded into
    the right-hand side.

    Returns
    -------
    A : csr_matrix, (n_dofs, n_dofs) complex
    rhs : ndarray (n_dofs,) complex
    """
    n = dofmap.n_dofs
    vol, grads = element_geometry(mesh)
    mass_ref = (np.ones((4, 4)) + np.eye(4)) / 20.0
    eye3 = np.eye(3)

    dofs_all = dofmap.vertex_dofs(mesh.tets).reshape(-1, 12)
    phases_all = np.repeat(dofmap.vert_phase[mesh.tets], 3, axis=1)
    dvals_all = dirichlet_values[mesh.tets].reshape(-1, 12)

    rows_l, cols_l, data_l = [], [], []
    rhs = np.zeros(n, dtype=complex)
    nt = mesh.n_tets
    for lo in range(0, nt, chunk):
        hi = min(lo + chunk, nt)
        g = grads[lo:hi]
        v = vol[lo:hi]
        stiff = np.einsum("tik,tjk->tij", g, g) * v[:, None, None]
        scal = medium.mu * stiff - medium.omega ** 2 \
            * mass_ref[None] * v[:, None, None]
        elem = np.einsum("tij,cd->ticjd", scal, eye3)
        elem += (medium.lam + medium.mu) * v[:, None, None, None, None] \
            * g[:, :, :, None, None] * g[:, None, None, :, :]
        elem = elem.reshape(-1, 12, 12)

        dofs = dofs_all[lo:hi]
        ph = phases_all[lo:hi]
        free = dofs >= 0
        # Dirichlet columns -> right-hand side
        dval = dvals_all[lo:hi]
        if np.any(~free):
            contrib = np.einsum("tij,tj->ti", elem, np.where(free, 0.0, dval))
            np.add.at(rhs, dofs[free],
                      -(np.conj(ph) * contrib)[free])
        pairmask = free[:, :, None] & free[:, None, :]
        r = np.broadcast_to(dofs[:, :, None], elem.shape)[pairmask]
        c = np.broadcast_to(dofs[:, None, :], elem.shape)[pairmask]
        d = (np.conj(ph)[:, :, None] * ph[:, None, :] * elem)[pairmask]
        rows_l.append(r)
        cols_l.append(c)
        data_l.append(d)

    rows = np.concatenate(rows_l)
    cols = np.concatenate(cols_l)
    data = np.concatenate(data_l)
    a = sp.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()
    return a, rhs


def h1_error(mesh: Mesh, field: Field, grad_fn) -> float:
    """H1 seminorm of the difference between a P1 field and an exact
    field with analytic gradient ``grad_fn(x) -> (..., 3, 3)``."""
    vol, grads = element_geometry(mesh)
    vals = field.vertex_values()[mesh.tets]          # (nt, 4, 3)
    gh = np.einsum("tvi,tvl->til", vals, grads)      # discrete gradient
    bary, w = tet_rule()
    pts = np.einsum("qv,tvx->tqx", bary, mesh.vertices[mesh.tets])
    gx = grad_fn(pts.reshape(-1, 3)).reshape(len(vol), len(w), 3, 3)
    diff = gx - gh[:, None, :, :]
    local = np.einsum("tqil,tqil,q->t", diff, diff.conj(), w).real * vol
    return float(np.sqrt(local.sum()))
