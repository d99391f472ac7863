"""Periodic tetrahedral meshes of the truncated cell.

The computational domain is one periodicity cell between a biperiodic
rigid surface and the horizontal plane where the transparent boundary
condition lives.  Meshes start from a structured grid of boxes, each cut
into six tetrahedra along its main diagonal (Kuhn subdivision), which
makes the two pairs of lateral boundaries match exactly under
translation.  Local refinement bisects tetrahedra across their marked
edge with recursive closure; midpoints created on a lateral boundary are
propagated to the translated boundary so the periodic trace meshes stay
identical.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .spectral import Lattice

__all__ = [
    "MeshAlignmentError",
    "MeshPairingError",
    "SurfaceProfile",
    "flat_profile",
    "bump_profile",
    "heightmap_profile",
    "Mesh",
    "build_mesh",
    "refine",
    "tet_volumes",
    "longest_edges",
    "min_dihedral_angle",
    "audit_conformity",
    "write_vtk",
    "FACE_INTERIOR", "FACE_SURFACE", "FACE_TOP",
    "FACE_X1_LO", "FACE_X1_HI", "FACE_X2_LO", "FACE_X2_HI",
]

FACE_INTERIOR = 0
FACE_SURFACE = 1
FACE_TOP = 2
FACE_X1_LO = 3
FACE_X1_HI = 4
FACE_X2_LO = 5
FACE_X2_HI = 6

_GEOM_TOL = 1.0e-12
_ALIGN_TOL = 1.0e-9


class MeshAlignmentError(ValueError):
    """Geometry feature does not line up with the structured grid."""


class MeshPairingError(RuntimeError):
    """The two lateral boundaries are not exact translates of each other."""


@dataclass(frozen=True)
class SurfaceProfile:
    """Description of the scattering surface.

    kind
        ``'flat'``: plane ``x3 = base``.
        ``'bumps'``: axis-aligned boxes sitting on the plane ``x3 = base``;
        each bump is ``(x1lo, x1hi, x2lo, x2hi, height)``.
        ``'heightmap'``: biperiodic piecewise-affine surface interpolating
        node values on the horizontal grid.
    """

    kind: str
    base: float = 0.0
    bumps: tuple = ()
    values: np.ndarray | None = None

    def top(self) -> float:
        """Highest point of the surface."""
        if self.kind == "flat":
            return self.base
        if self.kind == "bumps":
            return self.base + max((b[4] for b in self.bumps), default=0.0)
        return float(np.max(self.values))

    def volume(self, lattice: Lattice) -> float:
        """Volume of the cell between the surface and the top plane."""
        h = lattice.height
        box = lattice.area * (h - self.base) if self.kind != "heightmap" \
            else lattice.area * h
        if self.kind == "flat":
            return box
        if self.kind == "bumps":
            return box - sum((b[1] - b[0]) * (b[3] - b[2]) * b[4]
                             for b in self.bumps)
        # heightmap: subtract the integral of the piecewise-affine surface;
        # each grid cell is split along the diagonal from its lower-left to
        # its upper-right corner (matching the Kuhn subdivision above it)
        f = self.values
        n1, n2 = f.shape
        cell = lattice.area / (n1 * n2)
        f00 = f
        f10 = np.roll(f, -1, axis=0)
        f01 = np.roll(f, -1, axis=1)
        f11 = np.roll(np.roll(f, -1, axis=0), -1, axis=1)
        integral = cell / 6.0 * float(np.sum((f00 + f10 + f11)
                                             + (f00 + f11 + f01)))
        return lattice.area * h - integral


def flat_profile(z0: float = 0.0) -> SurfaceProfile:
    return SurfaceProfile(kind="flat", base=z0)


def bump_profile(bumps, base: float = 0.0) -> SurfaceProfile:
    return SurfaceProfile(kind="bumps", base=base,
                          bumps=tuple(tuple(map(float, b)) for b in bumps))


def heightmap_profile(values: np.ndarray) -> SurfaceProfile:
    values = np.asarray(values, dtype=float)
    if values.ndim != 2:
        raise ValueError("heightmap must be a 2-d array of node heights")
    return SurfaceProfile(kind="heightmap", values=values)


@dataclass
class Mesh:
    """Conforming tetrahedral mesh of one periodicity cell.

    Tetrahedra are stored with an ordered vertex tuple and a bisection
    tag; the refinement edge of a tetrahedron with tag ``t`` joins its
    local vertices ``0`` and ``t``.

    ``pair_x1[v]`` is the vertex obtained by translating ``v`` by one
    period in ``x1`` (only set for vertices on the ``x1 = 0`` plane),
    ``-1`` otherwise; analogously ``pair_x2``.
    """

    vertices: np.ndarray        # (nv, 3) float
    tets: np.ndarray            # (nt, 4) int
    tags: np.ndarray            # (nt,) int, in {1, 2, 3}
    gens: np.ndarray            # (nt,) int
    lattice: Lattice
    pair_x1: np.ndarray         # (nv,) int
    pair_x2: np.ndarray         # (nv,) int
    # derived connectivity, built in __post_init__
    faces: np.ndarray = field(default=None, repr=False)
    face_tets: np.ndarray = field(default=None, repr=False)
    face_tags: np.ndarray = field(default=None, repr=False)
    tet_faces: np.ndarray = field(default=None, repr=False)
    surface_vertex: np.ndarray = field(default=None, repr=False)
    lateral_pairs1: np.ndarray = field(default=None, repr=False)
    lateral_pairs2: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self._build_faces()
        self._classify_faces()
        self._pair_lateral_faces()

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_tets(self) -> int:
        return self.tets.shape[0]

    def _build_faces(self):
        nt = self.n_tets
        loc = np.array([[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]])
        all_faces = self.tets[:, loc].reshape(-1, 3)
        all_faces.sort(axis=1)
        order = np.lexsort(all_faces.T[::-1])
        sf = all_faces[order]
        new = np.ones(len(sf), dtype=bool)
        new[1:] = np.any(sf[1:] != sf[:-1], axis=1)
        face_id_sorted = np.cumsum(new) - 1
        nf = int(face_id_sorted[-1]) + 1
        face_of = np.empty(4 * nt, dtype=np.int64)
        face_of[order] = face_id_sorted
        self.faces = sf[new]
        self.tet_faces = face_of.reshape(nt, 4)
        counts = np.bincount(face_id_sorted, minlength=nf)
        if counts.max() > 2:
            raise MeshPairingError("a face is shared by more than two cells")
        ft = np.full((nf, 2), -1, dtype=np.int64)
        tet_idx = np.repeat(np.arange(nt), 4)[order]
        first = np.ones(len(sf), dtype=bool)
        first[1:] = new[1:]
        ft[face_id_sorted[first], 0] = tet_idx[first]
        second = ~first
        ft[face_id_sorted[second], 1] = tet_idx[second]
        self.face_tets = ft

    def _classify_faces(self):
        v = self.vertices
        lat = self.lattice
        fx = v[self.faces]                      # (nf, 3, 3)
        boundary = self.face_tets[:, 1] < 0
        tags = np.zeros(len(self.faces), dtype=np.int8)
        scale1 = max(1.0, lat.period1)
        scale2 = max(1.0, lat.period2)
        scaleh = max(1.0, abs(lat.height))
        on = lambda c, val, s: np.all(np.abs(fx[:, :, c] - val) < _GEOM_TOL * s,
                                      axis=1)
        top = on(2, lat.height, scaleh)
        x1lo, x1hi = on(0, 0.0, scale1), on(0, lat.period1, scale1)
        x2lo, x2hi = on(1, 0.0, scale2), on(1, lat.period2, scale2)
        tags[boundary] = FACE_SURFACE
        tags[boundary & top] = FACE_TOP
        tags[boundary & x1lo] = FACE_X1_LO
        tags[boundary & x1hi] = FACE_X1_HI
        tags[boundary & x2lo] = FACE_X2_LO
        tags[boundary & x2hi] = FACE_X2_HI
        self.face_tags = tags
        self.surface_vertex = np.zeros(self.n_vertices, dtype=bool)
        self.surface_vertex[self.faces[tags == FACE_SURFACE]] = True

    def _pair_lateral_faces(self):
        self.lateral_pairs1 = self._pair_axis(FACE_X1_LO, FACE_X1_HI,
                                              self.pair_x1, 0,
                                              self.lattice.period1)
        self.lateral_pairs2 = self._pair_axis(FACE_X2_LO, FACE_X2_HI,
                                              self.pair_x2, 1,
                                              self.lattice.period2)

    def _pair_axis(self, tag_lo, tag_hi, pair, axis, period):
        lo = np.nonzero(self.face_tags == tag_lo)[0]
        hi = np.nonzero(self.face_tags == tag_hi)[0]
        if len(lo) != len(hi):
            raise MeshPairingError(
                f"lateral face counts differ along axis {axis + 1}: "
                f"{len(lo)} vs {len(hi)}")
        mapped = pair[self.faces[lo]]
        if np.any(mapped < 0):
            raise MeshPairingError(
                f"missing vertex translate on the axis-{axis + 1} boundary")
        offset = np.zeros(3)
        offset[axis] = period
        err = np.abs(self.vertices[mapped] -
                     (self.vertices[self.faces[lo]] + offset)).max() \
            if len(lo) else 0.0
        if err > _GEOM_TOL * max(1.0, period):
            raise MeshPairingError(
                f"lateral boundaries along axis {axis + 1} are not exact "
                f"translates (max deviation {err:.3e})")
        mapped = np.sort(mapped, axis=1)
        lut = {}
        for f in hi:
            lut[tuple(self.faces[f])] = f
        pairs = np.empty((len(lo), 2), dtype=np.int64)
        for i, f in enumerate(lo):
            key = tuple(mapped[i])
            if key not in lut:
                raise MeshPairingError(
                    f"boundary face {tuple(self.faces[f])} has no translated "
                    f"partner along axis {axis + 1}")
            pairs[i] = (f, lut.pop(key))
        return pairs


def _kuhn_paths():
    """Vertex paths of the six tetrahedra of the unit-cube subdivision."""
    paths = []
    for perm in itertools.permutations((0, 1, 2)):
        p = [np.zeros(3, dtype=int)]
        for ax in perm:
            q = p[-1].copy()
            q[ax] += 1
            p.append(q)
        paths.append(np.array(p))
    return paths


_KUHN_PATHS = _kuhn_paths()


def _grid_index(value, grid, what):
    idx = int(np.argmin(np.abs(grid - value)))
    if abs(grid[idx] - value) > _ALIGN_TOL * max(1.0, np.abs(grid).max()):
        raise MeshAlignmentError(
            f"{what} = {value} does not lie on a grid line "
            f"(nearest: {grid[idx]})")
    return idx


def build_mesh(profile: SurfaceProfile, lattice: Lattice,
               divisions: tuple[int, int, int]) -> Mesh:
    """Structured Kuhn mesh of the cell between the surface and the top.

    ``divisions = (n1, n2, nz)`` counts boxes per period in the two
    horizontal directions and layers between the surface and the top
    plane.  For a heightmap the layers are graded vertically so the
    bottom facets interpolate the surface; for bumps the grid is uniform
    and the boxes inside the bumps are removed, which requires all bump
    facets to lie on grid planes.
    """
    n1, n2, nz = (int(d) for d in divisions)
    if min(n1, n2, nz) < 1:
        raise ValueError(f"divisions must be positive, got {divisions}")
    h = lattice.height
    if profile.top() >= h:
        raise ValueError("surface reaches the top plane; increase height")

    x = lattice.period1 * np.arange(n1 + 1) / n1
    y = lattice.period2 * np.arange(n2 + 1) / n2
    x[-1] = lattice.period1
    y[-1] = lattice.period2

    if profile.kind == "heightmap":
        f = profile.values
        if f.shape != (n1, n2):
            raise MeshAlignmentError(
                f"heightmap shape {f.shape} must equal horizontal divisions "
                f"({n1}, {n2})")
        fnode = f[np.arange(n1 + 1) % n1][:, np.arange(n2 + 1) % n2]
    else:
        fnode = np.full((n1 + 1, n2 + 1), profile.base)

    t = np.arange(nz + 1) / nz
    t[-1] = 1.0
    # vertex grid: z = (1-t) * surface + t * top, exact at both ends
    z = fnode[:, :, None] * (1.0 - t) + h * t          # (n1+1, n2+1, nz+1)
    coords = np.empty((n1 + 1, n2 + 1, nz + 1, 3))
    coords[..., 0] = x[:, None, None]
    coords[..., 1] = y[None, :, None]
    coords[..., 2] = z

    keep = np.ones((n1, n2, nz), dtype=bool)
    if profile.kind == "bumps":
        zgrid = z[0, 0]
        for bump in profile.bumps:
            x1lo, x1hi, x2lo, x2hi, height = bump
            if not (0.0 < x1lo < x1hi < lattice.period1
                    and 0.0 < x2lo < x2hi < lattice.period2):
                raise MeshAlignmentError(
                    f"bump footprint {bump[:4]} must lie strictly inside "
                    f"the periodicity cell")
            i0 = _grid_index(x1lo, x, "bump x1 bound")
            i1 = _grid_index(x1hi, x, "bump x1 bound")
            j0 = _grid_index(x2lo, y, "bump x2 bound")
            j1 = _grid_index(x2hi, y, "bump x2 bound")
            k1 = _grid_index(profile.base + height, zgrid, "bump top")
            keep[i0:i1, j0:j1, :k1] = False

    vid = -np.ones((n1 + 1, n2 + 1, nz + 1), dtype=np.int64)
    ci, cj, ck = np.nonzero(keep)
    for di, dj, dk in itertools.product((0, 1), repeat=3):
        vid[ci + di, cj + dj, ck + dk] = 0
    used = vid == 0
    vid[used] = np.arange(int(used.sum()))
    vertices = coords[used]

    tets = np.empty((len(ci) * 6, 4), dtype=np.int64)
    for p, path in enumerate(_KUHN_PATHS):
        for v, (di, dj, dk) in enumerate(path):
            tets[p::6, v] = vid[ci + di, cj + dj, ck + dk]
    tags = np.full(len(tets), 3, dtype=np.int8)
    gens = np.zeros(len(tets), dtype=np.int32)

    pair_x1 = -np.ones(len(vertices), dtype=np.int64)
    pair_x2 = -np.ones(len(vertices), dtype=np.int64)
    lo = vid[0][vid[0] >= 0]
    hi = vid[n1][vid[n1] >= 0]
    pair_x1[lo] = hi
    lo = vid[:, 0][vid[:, 0] >= 0]
    hi = vid[:, n2][vid[:, n2] >= 0]
    pair_x2[lo] = hi

    return Mesh(vertices=vertices, tets=tets, tags=tags, gens=gens,
                lattice=lattice, pair_x1=pair_x1, pair_x2=pair_x2)


def _edge_key(a, b):
    return (a << 32) | b if a < b else (b << 32) | a


def refine(mesh: Mesh, marked) -> Mesh:
    """Bisect the marked tetrahedra and close the mesh.

    Every marked tetrahedron is bisected across its refinement edge;
    neighbours left with a hanging midpoint are bisected recursively
    until the mesh is conforming again.  Midpoints created on a lateral
    boundary are mirrored to the translated boundary (and across corners)
    so the periodic identification survives refinement.
    """
    marked = np.asarray(marked)
    if marked.dtype == bool:
        marked = np.nonzero(marked)[0]
    coords = [tuple(p) for p in mesh.vertices]
    p1f = {v: int(p) for v, p in enumerate(mesh.pair_x1) if p >= 0}
    p1b = {int(p): v for v, p in p1f.items()}
    p2f = {v: int(p) for v, p in enumerate(mesh.pair_x2) if p >= 0}
    p2b = {int(p): v for v, p in p2f.items()}

    edge_mid: dict[int, int] = {}

    def get_mid(a: int, b: int) -> int:
        key = _edge_key(a, b)
        mid = edge_mid.get(key)
        if mid is not None:
            return mid
        pa, pb = coords[a], coords[b]
        coords.append(((pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0,
                       (pa[2] + pb[2]) / 2.0))
        mid = len(coords) - 1
        edge_mid[key] = mid
        for fwd, bwd in ((p1f, p1b), (p2f, p2b)):
            if a in fwd and b in fwd:
                m2 = get_mid(fwd[a], fwd[b])
                fwd[mid] = m2
                bwd[m2] = mid
            if a in bwd and b in bwd:
                m2 = get_mid(bwd[a], bwd[b])
                bwd[mid] = m2
                fwd[m2] = mid
        return mid

    tets = [tuple(t) for t in mesh.tets]
    tags = list(mesh.tags)
    gens = list(mesh.gens)
    alive = [True] * len(tets)

    def bisect(i: int):
        t, k, g = tets[i], tags[i], gens[i]
        z = get_mid(t[0], t[k])
        alive[i] = False
        child_tag = k - 1 if k > 1 else 3
        c1 = list(t)
        c1[k] = z
        c2 = [t[1], t[2], t[3], z] if k == 3 else \
            ([t[1], t[2], z, t[3]] if k == 2 else [t[1], z, t[2], t[3]])
        for c in (tuple(c1), tuple(c2)):
            tets.append(c)
            tags.append(child_tag)
            gens.append(g + 1)
            alive.append(True)

    for i in marked:
        if alive[i]:
            bisect(int(i))

    # conforming closure: bisect any cell that still has a split edge
    loc_pairs = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
    for _ in range(200):
        if not edge_mid:
            break
        mid_keys = np.fromiter(edge_mid.keys(), dtype=np.int64,
                               count=len(edge_mid))
        mid_keys.sort()
        t_arr = np.asarray(tets, dtype=np.int64)
        alive_arr = np.asarray(alive)
        keys = np.empty((len(tets), 6), dtype=np.int64)
        for e, (i, j) in enumerate(loc_pairs):
            a, b = t_arr[:, i], t_arr[:, j]
            keys[:, e] = np.where(a < b, (a << 32) | b, (b << 32) | a)
        pos = np.searchsorted(mid_keys, keys)
        pos[pos == len(mid_keys)] = 0
        hanging = (mid_keys[pos] == keys).any(axis=1) & alive_arr
        idx = np.nonzero(hanging)[0]
        if len(idx) == 0:
            break
        for i in idx:
            bisect(int(i))
    else:  # pragma: no cover - guarded by bisection theory
        raise RuntimeError("mesh closure did not terminate")

    alive_arr = np.asarray(alive)
    new_tets = np.asarray(tets, dtype=np.int64)[alive_arr]
    new_tags = np.asarray(tags, dtype=np.int8)[alive_arr]
    new_gens = np.asarray(gens, dtype=np.int32)[alive_arr]
    verts = np.asarray(coords)
    pair_x1 = -np.ones(len(verts), dtype=np.int64)
    pair_x2 = -np.ones(len(verts), dtype=np.int64)
    for v, p in p1f.items():
        pair_x1[v] = p
    for v, p in p2f.items():
        pair_x2[v] = p
    return Mesh(vertices=verts, tets=new_tets, tags=new_tags, gens=new_gens,
                lattice=mesh.lattice, pair_x1=pair_x1, pair_x2=pair_x2)


def tet_volumes(mesh: Mesh) -> np.ndarray:
    v = mesh.vertices[mesh.tets]
    e = v[:, 1:] - v[:, :1]
    return np.abs(np.linalg.det(e)) / 6.0


def longest_edges(mesh: Mesh) -> np.ndarray:
    """Diameter (longest edge) of every tetrahedron."""
    v = mesh.vertices[mesh.tets]
    best = np.zeros(len(v))
    for i in range(4):
        for j in range(i + 1, 4):
            d = np.linalg.norm(v[:, i] - v[:, j], axis=1)
            best = np.maximum(best, d)
    return best


def min_dihedral_angle(mesh: Mesh) -> float:
    """Smallest dihedral angle over the mesh, in radians."""
    v = mesh.vertices[mesh.tets]
    loc = [(1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2)]
    normals = np.empty((len(v), 4, 3))
    for k, (i, j, l) in enumerate(loc):
        n = np.cross(v[:, j] - v[:, i], v[:, l] - v[:, i])
        normals[:, k] = n / np.linalg.norm(n, axis=1, keepdims=True)
    worst = np.pi
    for a in range(4):
        for b in range(a + 1, 4):
            c = np.clip(-(normals[:, a] * normals[:, b]).sum(axis=1), -1, 1)
            worst = min(worst, float(np.arccos(c).min()))
    return worst


def audit_conformity(mesh: Mesh):
    """Raise if any cell has a vertex hanging on one of its edges."""
    lookup = {tuple(p): i for i, p in enumerate(mesh.vertices)}
    v = mesh.vertices
    bad = []
    seen = set()
    for t in mesh.tets:
        for i in range(4):
            for j in range(i + 1, 4):
                a, b = int(t[i]), int(t[j])
                key = _edge_key(a, b)
                if key in seen:
                    continue
                seen.add(key)
                midpt = tuple((v[a] + v[b]) / 2.0)
                if midpt in lookup:
                    bad.append((a, b, lookup[midpt]))
    if bad:
        raise MeshPairingError(f"{len(bad)} hanging vertices, e.g. {bad[0]}")


def write_vtk(mesh: Mesh, path, point_data=None, cell_data=None):
    """Write the mesh (legacy VTK unstructured grid, ASCII)."""
    nv, nt = mesh.n_vertices, mesh.n_tets
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n"
                 "biperiodic cell mesh\nASCII\n"
                 "DATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {nv} double\n")
        np.savetxt(fh, mesh.vertices, fmt="%.16g")
        fh.write(f"CELLS {nt} {5 * nt}\n")
        cells = np.hstack([np.full((nt, 1), 4, dtype=np.int64), mesh.tets])
        np.savetxt(fh, cells, fmt="%d")
        fh.write(f"CELL_TYPES {nt}\n")
        np.savetxt(fh, np.full(nt, 10, dtype=np.int64), fmt="%d")
        if point_data:
            fh.write(f"POINT_DATA {nv}\n")
            _write_vtk_arrays(fh, point_data)
        if cell_data:
            fh.write(f"CELL_DATA {nt}\n")
            _write_vtk_arrays(fh, cell_data)


def _write_vtk_arrays(fh, arrays):
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        if arr.ndim == 2 and arr.shape[1] == 3:
            fh.write(f"VECTORS {name} double\n")
            np.savetxt(fh, arr, fmt="%.9g")
        else:
            fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
            np.savetxt(fh, arr.reshape(-1, 1), fmt="%.9g")
