"""Solution of the coupled finite element / DtN system.

The discrete operator is ``A + U V`` where ``A`` is the sparse
quasi-periodic volume matrix and ``U V`` is the rank ``3 (2N+1)^2``
boundary term coupling all top-plane dofs.  Three strategies cover the
size range:

``dense``
    Fold the boundary term into the sparse matrix as a dense clique and
    factor once; exact, best for small systems.
``woodbury``
    Factor ``A`` alone (with a geometric nested dissection ordering, far
    less fill than the default orderings on these slab meshes) and solve
    through the Woodbury identity; exact.
``gmres``
    For systems too large to factor exactly in memory: GMRES on the
    matrix-free operator, preconditioned by an incomplete factorization
    of ``A`` combined with the same Woodbury correction so that the
    boundary coupling is present in the preconditioner (without it GMRES
    stagnates).
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, gmres, spilu, splu

from .dtn import BoundarySpectrum, DtnBlock, ModeGrid, build_dtn_block, \
    fourier_trace
from .fem import DofMap, Field, assemble_volume, build_dofmap, dirichlet_lift
from .mesh import Mesh
from .spectral import Incidence, Medium

__all__ = ["SolveResult", "solve", "nested_dissection_order"]

DENSE_THRESHOLD = 9000
DIRECT_THRESHOLD = 36000


def nested_dissection_order(coords: np.ndarray, graph: sp.csr_matrix,
                            leaf: int = 48) -> np.ndarray:
    """Fill-reducing vertex order by recursive coordinate bisection.

    Vertices are split at the median of the widest coordinate; the
    separator (vertices of one half adjacent to the other, periodic
    links included) is ordered last.
    """
    def rec(idx):
        if len(idx) <= leaf:
            return [idx]
        c = coords[idx]
        d = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
        med = np.median(c[:, d])
        mask = c[:, d] < med
        left, right = idx[mask], idx[~mask]
        if len(left) == 0 or len(right) == 0:
            return [idx]
        touch = np.asarray(
            (graph[right][:, left].sum(axis=1)).ravel()).ravel() > 0
        return rec(left) + rec(right[~touch]) + [right[touch]]

    return np.concatenate(rec(np.arange(len(coords))))


def _free_vertex_graph(mesh: Mesh, dofmap: DofMap):
    """Adjacency of free master vertices (periodic links included) and
    their coordinates."""
    coords = mesh.vertices[dofmap.free_index >= 0]
    fm = dofmap.free_index[dofmap.vert_master[mesh.tets]]
    edges = np.concatenate([np.stack([fm[:, i], fm[:, j]], axis=1)
                            for i in range(4) for j in range(i + 1, 4)])
    edges = edges[(edges[:, 0] >= 0) & (edges[:, 1] >= 0)]
    g = sp.csr_matrix((np.ones(len(edges)), (edges[:, 0], edges[:, 1])),
                      shape=(len(coords),) * 2)
    return coords, (g + g.T).tocsr()


def _dof_permutation(mesh: Mesh, dofmap: DofMap) -> np.ndarray:
    coords, graph = _free_vertex_graph(mesh, dofmap)
    vorder = nested_dissection_order(coords, graph)
    return (3 * vorder[:, None] + np.arange(3)).ravel()


class _Bordered:
    """Woodbury solve of ``A + U V`` given an (approximate) solver for
    ``A``; the low-rank factors live on the boundary dofs only."""

    def __init__(self, base_solve, block: DtnBlock, n: int, chunk: int = 48):
        self.base_solve = base_solve
        self.n = n
        self.bdofs = block.boundary_dofs()
        k = block.rank
        nbv = len(block.free_verts)
        bs = block.trace_scalar
        # U[(v,c), (k,c)] = conj(bs[k,v]); V[(k,c), (w,d)] = -area M_k[c,d] bs[k,w]
        u = np.zeros((3 * nbv, k), dtype=complex)
        v = np.zeros((k, 3 * nbv), dtype=complex)
        for c in range(3):
            u[c::3, c::3] = bs.conj().T
            for d in range(3):
                v[c::3, d::3] = (-block.lattice.area
                                 * block.grid.dtn_blocks[:, c, d][:, None] * bs)
        self.u, self.v = u, v
        # S = I + V A^{-1} U, built in column chunks to bound memory
        s = np.eye(k, dtype=complex)
        for lo in range(0, k, chunk):
            hi = min(lo + chunk, k)
            cols = np.zeros((n, hi - lo), dtype=complex, order="F")
            cols[self.bdofs] = u[:, lo:hi]
            z = base_solve(cols)
            s[:, lo:hi] += v @ z[self.bdofs]
        self.s_lu = scipy.linalg.lu_factor(s)

    def solve(self, b: np.ndarray) -> np.ndarray:
        y0 = self.base_solve(b)
        w = scipy.linalg.lu_solve(self.s_lu, self.v @ y0[self.bdofs])
        corr = np.zeros(self.n, dtype=complex)
        corr[self.bdofs] = self.u @ w
        return y0 - self.base_solve(corr)


@dataclass
class SolveResult:
    """Solution of the scattering problem on one mesh."""

    field: Field
    spectrum: BoundarySpectrum      # Fourier trace of the solution
    residual: float                 # relative residual of the full system
    method: str
    iterations: int
    n_dofs: int
    seconds: float


def _fold_dense(a: sp.csr_matrix, block: DtnBlock) -> sp.csc_matrix:
    e, dofs = block.dense()
    rows = np.repeat(dofs, len(dofs))
    cols = np.tile(dofs, len(dofs))
    return (a + sp.csr_matrix((e.ravel(), (rows, cols)),
                              shape=a.shape)).tocsc()


def solve(mesh: Mesh, medium: Medium, incidence: Incidence, grid: ModeGrid,
          method: str = "auto", rtol: float = 1e-10,
          dofmap: DofMap | None = None) -> SolveResult:
    """Solve the scattering problem on a mesh with ``|n| <= N`` modes."""
    t_start = time.time()
    if dofmap is None:
        dofmap = build_dofmap(mesh, incidence)
    lift = dirichlet_lift(mesh, dofmap, incidence)
    a, rhs = assemble_volume(mesh, dofmap, medium, lift)
    block = build_dtn_block(mesh, dofmap, grid)
    n = dofmap.n_dofs
    if method == "auto":
        if n <= DENSE_THRESHOLD:
            method = "dense"
        elif n <= DIRECT_THRESHOLD:
            method = "woodbury"
        else:
            method = "gmres"

    iterations = 0
    if method == "dense":
        lu = splu(_fold_dense(a, block))
        x = lu.solve(rhs)
    else:
        perm = _dof_permutation(mesh, dofmap)
        ap = a[perm][:, perm].tocsc()
        iperm = np.empty_like(perm)
        iperm[perm] = np.arange(n)
        if method == "woodbury":
            lu = splu(ap, permc_spec="NATURAL",
                      options=dict(SymmetricMode=True))
        else:
            lu = spilu(ap, drop_tol=2e-4, fill_factor=15,
                       permc_spec="NATURAL", options=dict(SymmetricMode=True))

        def base_solve(b):
            return lu.solve(np.asfortranarray(b[perm]))[iperm]

        bordered = _Bordered(base_solve, block, n)
        if method == "woodbury":
            x = bordered.solve(rhs)
        elif method == "gmres":
            full = LinearOperator(
                (n, n), matvec=lambda y: a @ y + _boundary_term(block, y),
                dtype=complex)
            precond = LinearOperator((n, n), matvec=bordered.solve,
                                     dtype=complex)
            count = [0]
            x, info = gmres(full, rhs, rtol=rtol, atol=0.0, restart=200,
                            maxiter=5, M=precond,
                            callback=lambda p: count.__setitem__(
                                0, count[0] + 1),
                            callback_type="pr_norm")
            iterations = count[0]
            if info != 0:
                raise RuntimeError(
                    f"GMRES did not converge ({iterations} iterations)")
        else:
            raise ValueError(f"unknown method {method!r}")

    residual = (np.linalg.norm(a @ x + _boundary_term(block, x) - rhs)
                / np.linalg.norm(rhs))
    field = Field(dofmap=dofmap, coef=x, dirichlet_values=lift)
    spectrum = fourier_trace(mesh, field.vertex_values(), grid)
    return SolveResult(field=field, spectrum=spectrum, residual=residual,
                       method=method, iterations=iterations, n_dofs=n,
                       seconds=time.time() - t_start)


def _boundary_term(block: DtnBlock, x: np.ndarray) -> np.ndarray:
    # the weak form subtracts the DtN pairing; matvec carries that sign
    return block.matvec(x)
