"""Steady Darcy flow on the mixed-dimensional mesh.

Mimetic finite differences with one pressure per cell and one per face,
except that faces carrying a fracture triangle get two face unknowns,
one per side, so the matrix pressure may jump across the fracture.
Fracture triangles are two-dimensional cells of the same construction
with the aperture folded into an effective transmissivity, and their
edges carry the trace pressures.  The local flux unknowns are removed
by static condensation, which leaves a symmetric positive semidefinite
system in the pressures alone; the two continua talk through an
interface coefficient k = 4 K_f / (mu a_f) per unit fracture area.

Cell blocks are built in bulk with batched einsum contractions, so the
module has no per-cell Python loop anywhere on the assembly path.
"""

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import sparse

from .surface_mesh import SurfaceMesh
from .volume_mesh import BOUNDARY_TAG_NAMES, VolumeMesh, _pack_triples

__all__ = ["FlowBC", "FlowProblem", "DofLayout", "FlowSolution",
           "CellSystems", "build_dof_layout", "tet_mass_matrices",
           "tri_mass_matrices", "tet_local_systems", "tri_local_systems",
           "coupling_coefficient", "assemble_system", "solve_flow"]

# local face f is opposite vertex f; matches the volume face table
_LOCAL_FACES = np.array([[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]])
# local edge e of a triangle is opposite vertex e
_LOCAL_EDGES = np.array([[1, 2], [0, 2], [0, 1]])
_CHUNK = 1 << 18


def coupling_coefficient(k_f, aperture, viscosity):
    """Interface exchange coefficient per unit fracture area."""
    return 4.0 * k_f / (viscosity * aperture)


# ---------------------------------------------------------------------------
# problem description
# ---------------------------------------------------------------------------

@dataclass
class FlowBC:
    """Dirichlet pressures per box side; everything else is no-flow.

    Values are either plain floats or callables mapping an (n, 3) array
    of positions to n pressures, which lets tests drive the solver with
    an exact linear field.
    """

    dirichlet: dict[str, float | Callable]

    def __post_init__(self):
        for tag in self.dirichlet:
            if tag not in BOUNDARY_TAG_NAMES:
                raise ValueError(
                    f"unknown boundary tag {tag!r}; expected one of "
                    f"{', '.join(BOUNDARY_TAG_NAMES)}")


@dataclass
class FlowProblem:
    volume: VolumeMesh
    bc: FlowBC
    matrix_permeability: np.ndarray
    surface: SurfaceMesh | None = None
    tri_face: np.ndarray | None = None
    aperture: np.ndarray | None = None
    frac_permeability: np.ndarray | None = None
    viscosity: float = 1e-3
    density: float = 1000.0
    gravity: np.ndarray = (0.0, 0.0, 0.0)

    def __post_init__(self):
        nt = len(self.volume.tets)
        k = np.asarray(self.matrix_permeability, dtype=np.float64)
        if k.ndim == 0:
            k = k * np.eye(3)
        if k.shape == (3, 3):
            k = np.broadcast_to(k, (nt, 3, 3))
        elif k.shape == (nt,):
            k = k[:, None, None] * np.eye(3)
        elif k.shape != (nt, 3, 3):
            raise ValueError("matrix_permeability: expected a scalar, a "
                             "3x3 tensor, or per-cell values")
        self.matrix_permeability = k
        self.gravity = np.asarray(self.gravity, dtype=np.float64)
        if self.gravity.shape != (3,):
            raise ValueError("gravity must be a 3-vector")
        if self.viscosity <= 0.0:
            raise ValueError("viscosity must be > 0")
        ntri = 0 if self.surface is None else len(self.surface.triangles)
        if ntri:
            self.tri_face = np.asarray(self.tri_face, dtype=np.int64)
            self.aperture = np.asarray(self.aperture, dtype=np.float64)
            self.frac_permeability = np.asarray(self.frac_permeability,
                                                dtype=np.float64)
            for name, arr in (("tri_face", self.tri_face),
                              ("aperture", self.aperture),
                              ("frac_permeability", self.frac_permeability)):
                if arr is None or len(arr) != ntri:
                    raise ValueError(f"{name} must have one entry per "
                                     "fracture triangle")
            if self.aperture.min() <= 0 or self.frac_permeability.min() <= 0:
                raise ValueError("apertures and fracture permeabilities "
                                 "must be > 0")

    @classmethod
    def from_network(cls, network, volume, surface, correspondence,
                     matrix_permeability, bc, viscosity=1e-3,
                     density=1000.0, gravity=(0.0, 0.0, 0.0)):
        """Wire per-fracture hydraulic properties onto the triangles."""
        if len(correspondence.misses):
            raise ValueError(
                f"{len(correspondence.misses)} fracture triangle(s) missing "
                "from the volume face table; the flow solver needs a fully "
                "conforming mesh")
        pos = {f.id: i for i, f in enumerate(network.fractures)}
        ap = np.array([f.aperture for f in network.fractures])
        kf = np.array([f.permeability for f in network.fractures])
        idx = np.array([pos[int(i)] for i in surface.tri_fracture],
                       dtype=np.int64)
        return cls(volume=volume, bc=bc,
                   matrix_permeability=matrix_permeability,
                   surface=surface, tri_face=correspondence.tri_face,
                   aperture=ap[idx], frac_permeability=kf[idx],
                   viscosity=viscosity, density=density, gravity=gravity)


# ---------------------------------------------------------------------------
# degrees of freedom
# ---------------------------------------------------------------------------

@dataclass
class DofLayout:
    """Global unknown numbering: tet pressures, face pressures (two
    copies on fracture faces), fracture cell pressures, edge pressures."""

    n_tet: int
    n_face_dof: int
    n_tri: int
    n_edge: int
    tet_face: np.ndarray
    tet_face_side: np.ndarray
    tet_face_dof: np.ndarray
    face_dof: np.ndarray
    is_frac_face: np.ndarray
    edges: np.ndarray
    tri_edge: np.ndarray

    @property
    def tri_base(self) -> int:
        return self.n_tet + self.n_face_dof

    @property
    def edge_base(self) -> int:
        return self.tri_base + self.n_tri

    @property
    def total(self) -> int:
        return self.edge_base + self.n_edge


def build_dof_layout(volume: VolumeMesh, surface: SurfaceMesh | None,
                     tri_face: np.ndarray | None) -> DofLayout:
    nt = len(volume.tets)
    nf = len(volume.faces)
    nv = len(volume.vertices)
    tris = np.sort(volume.tets[:, _LOCAL_FACES].reshape(-1, 3),
                   axis=1).astype(np.int64)
    idx = np.searchsorted(_pack_triples(volume.faces, nv),
                          _pack_triples(tris, nv))
    tet_face = idx.reshape(nt, 4)

    is_frac = np.zeros(nf, dtype=bool)
    if tri_face is not None and len(tri_face):
        tri_face = np.asarray(tri_face, dtype=np.int64)
        if len(np.unique(tri_face)) != len(tri_face):
            raise ValueError("two fracture triangles map to one volume face")
        if np.any(volume.face_tets[tri_face, 1] < 0):
            raise ValueError("a fracture triangle lies on the domain "
                             "boundary; fracture faces need a matrix cell "
                             "on both sides")
        is_frac[tri_face] = True

    per_face = 1 + is_frac.astype(np.int64)
    off = np.concatenate([[0], np.cumsum(per_face)])
    n_face_dof = int(off[-1])
    face_dof0 = nt + off[:-1]
    face_dof = np.column_stack(
        [face_dof0, np.where(is_frac, face_dof0 + 1, -1)])
    side = (volume.face_tets[tet_face, 0]
            != np.arange(nt, dtype=np.int64)[:, None])
    tet_face_dof = face_dof0[tet_face] + (side & is_frac[tet_face])

    if surface is not None and len(surface.triangles):
        ntri = len(surface.triangles)
        nsv = len(surface.vertices)
        pairs = np.sort(surface.triangles[:, _LOCAL_EDGES].reshape(-1, 2),
                        axis=1).astype(np.int64)
        key = pairs[:, 0] * nsv + pairs[:, 1]
        uniq, inv = np.unique(key, return_inverse=True)
        tri_edge = inv.reshape(ntri, 3).astype(np.int64)
        edges = np.column_stack([uniq // nsv, uniq % nsv])
    else:
        ntri = 0
        tri_edge = np.zeros((0, 3), dtype=np.int64)
        edges = np.zeros((0, 2), dtype=np.int64)

    layout = DofLayout(n_tet=nt, n_face_dof=n_face_dof, n_tri=ntri,
                       n_edge=len(edges), tet_face=tet_face,
                       tet_face_side=side, tet_face_dof=tet_face_dof,
                       face_dof=face_dof, is_frac_face=is_frac,
                       edges=edges, tri_edge=tri_edge)
    assert layout.total == (nt + nf + int(is_frac.sum()) + ntri
                            + len(edges))
    return layout


# ---------------------------------------------------------------------------
# local systems
# ---------------------------------------------------------------------------

def tet_mass_matrices(tet_vertices, km):
    """Batched flux mass matrices M = R K^-1 R^T / |E| + gamma (I - P_N).

    Returns (M, N, R, areas, face_centroids, volumes, centroids) with N
    the unit outward face normals and R the area-weighted face moment
    arms; M satisfies the consistency relation M (N K) = R exactly on
    constant fields.
    """
    v = np.asarray(tet_vertices, dtype=np.float64)
    km = np.asarray(km, dtype=np.float64)
    xe = v.mean(axis=1)
    vol = np.einsum("ij,ij->i",
                    np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]),
                    v[:, 3] - v[:, 0]) / 6.0
    if vol.min(initial=np.inf) <= 0.0:
        raise ValueError("degenerate cell: zero or negative volume")
    fa = v[:, _LOCAL_FACES]
    cr = np.cross(fa[:, :, 1] - fa[:, :, 0], fa[:, :, 2] - fa[:, :, 0])
    two_a = np.linalg.norm(cr, axis=2)
    areas = two_a / 2.0
    nrm = cr / two_a[:, :, None]
    fc = fa.mean(axis=2)
    arm = fc - xe[:, None, :]
    flip = np.sign(np.einsum("tfc,tfc->tf", nrm, arm))
    nrm = nrm * flip[:, :, None]
    r = areas[:, :, None] * arm
    kinv = np.linalg.inv(km)
    m0 = np.einsum("tia,tab,tjb->tij", r, kinv, r) / vol[:, None, None]
    ntn_inv = np.linalg.inv(np.einsum("tia,tib->tab", nrm, nrm))
    proj = np.eye(4) - np.einsum("tia,tab,tjb->tij", nrm, ntn_inv, nrm)
    gamma = np.trace(m0, axis1=1, axis2=2) / 4.0
    m = m0 + gamma[:, None, None] * proj
    m = (m + m.swapaxes(1, 2)) / 2.0
    return m, nrm, r, areas, fc, vol, xe


@dataclass
class _TriGeometry:
    area: np.ndarray
    lens: np.ndarray
    edge_mid: np.ndarray
    centroid: np.ndarray


def tri_mass_matrices(tri_vertices, transmissivity):
    """Two-dimensional analogue on fracture triangles, built in a local
    in-plane frame; the scalar transmissivity is aperture times
    permeability."""
    v = np.asarray(tri_vertices, dtype=np.float64)
    t = np.asarray(transmissivity, dtype=np.float64)
    d1 = v[:, 1] - v[:, 0]
    d2 = v[:, 2] - v[:, 0]
    cr = np.cross(d1, d2)
    two_a = np.linalg.norm(cr, axis=1)
    if two_a.min(initial=np.inf) <= 0.0:
        raise ValueError("degenerate cell: zero-area triangle")
    area = two_a / 2.0
    nh = cr / two_a[:, None]
    l1 = np.linalg.norm(d1, axis=1)
    t1 = d1 / l1[:, None]
    e2 = np.cross(nh, t1)
    p2 = np.zeros((len(v), 3, 2))
    p2[:, 1, 0] = l1
    p2[:, 2, 0] = np.einsum("ij,ij->i", d2, t1)
    p2[:, 2, 1] = np.einsum("ij,ij->i", d2, e2)
    cen2 = p2.mean(axis=1)
    ea = p2[:, _LOCAL_EDGES]
    d = ea[:, :, 1] - ea[:, :, 0]
    lens = np.linalg.norm(d, axis=2)
    n2 = np.stack([d[:, :, 1], -d[:, :, 0]], axis=2) / lens[:, :, None]
    em = ea.mean(axis=2)
    arm = em - cen2[:, None, :]
    flip = np.sign(np.einsum("tec,tec->te", n2, arm))
    n2 = n2 * flip[:, :, None]
    r = lens[:, :, None] * arm
    m0 = np.einsum("tia,tja->tij", r, r) / (area * t)[:, None, None]
    ntn_inv = np.linalg.inv(np.einsum("tia,tib->tab", n2, n2))
    proj = np.eye(3) - np.einsum("tia,tab,tjb->tij", n2, ntn_inv, n2)
    gamma = np.trace(m0, axis1=1, axis2=2) / 3.0
    m = m0 + gamma[:, None, None] * proj
    m = (m + m.swapaxes(1, 2)) / 2.0
    geo = _TriGeometry(area=area, lens=lens,
                       edge_mid=v[:, _LOCAL_EDGES].mean(axis=2),
                       centroid=v.mean(axis=1))
    return m, n2, r, geo


@dataclass
class CellSystems:
    """Condensed per-cell blocks on (p_cell, p_faces) plus the operators
    that recover the outward flux densities afterwards."""

    matrix: np.ndarray
    rhs: np.ndarray
    minv_j_mu: np.ndarray
    minv_g_mu: np.ndarray
    areas: np.ndarray


def _condense(m, areas, grav, mu):
    n_loc = m.shape[1]
    minv = np.linalg.inv(m)
    minv = (minv + minv.swapaxes(1, 2)) / 2.0
    j = np.zeros((m.shape[0], n_loc, n_loc + 1))
    j[:, :, 0] = areas
    j[:, np.arange(n_loc), np.arange(n_loc) + 1] = -areas
    s = np.einsum("tfa,tfg,tgb->tab", j, minv, j) / mu
    s = (s + s.swapaxes(1, 2)) / 2.0
    rhs = -np.einsum("tfa,tfg,tg->ta", j, minv, grav) / mu
    return CellSystems(matrix=s, rhs=rhs,
                       minv_j_mu=np.einsum("tfg,tga->tfa", minv, j) / mu,
                       minv_g_mu=np.einsum("tfg,tg->tf", minv, grav) / mu,
                       areas=areas)


def tet_local_systems(tet_vertices, km, mu, rho, g) -> CellSystems:
    m, _, _, areas, fc, _, xe = tet_mass_matrices(tet_vertices, km)
    grav = areas * np.einsum("tfc,c->tf", fc - xe[:, None, :],
                             rho * np.asarray(g, dtype=np.float64))
    return _condense(m, areas, grav, mu)


def tri_local_systems(tri_vertices, transmissivity, mu, rho, g
                      ) -> CellSystems:
    m, _, _, geo = tri_mass_matrices(tri_vertices, transmissivity)
    grav = geo.lens * np.einsum(
        "tec,c->te", geo.edge_mid - geo.centroid[:, None, :],
        rho * np.asarray(g, dtype=np.float64))
    return _condense(m, geo.lens, grav, mu)


# ---------------------------------------------------------------------------
# global assembly
# ---------------------------------------------------------------------------

_COUPLING_PATTERN = np.array([[1.0, 0.0, -1.0],
                              [0.0, 1.0, -1.0],
                              [-1.0, -1.0, 2.0]])


@dataclass
class _Recovery:
    dof_m: np.ndarray
    minv_j_mu: np.ndarray
    minv_g_mu: np.ndarray
    areas: np.ndarray
    dof_f: np.ndarray | None = None
    minv_j_mu_f: np.ndarray | None = None
    minv_g_mu_f: np.ndarray | None = None
    lens: np.ndarray | None = None
    k_face: np.ndarray | None = None
    lam: np.ndarray | None = None


@dataclass
class AssembledSystem:
    matrix: sparse.csr_matrix
    rhs: np.ndarray
    known: np.ndarray
    known_values: np.ndarray
    layout: DofLayout
    recovery: _Recovery


def _csr_from_triplets(rows, cols, data, n):
    """Deterministic CSR assembly: stable lexsort, then one reduction
    per (row, col) run, so transposed entry pairs sum the same values
    in the same order and the result is bitwise symmetric."""
    order = np.lexsort((cols, rows))
    r = rows[order]
    c = cols[order]
    d = data[order]
    new = np.ones(len(r), dtype=bool)
    new[1:] = (r[1:] != r[:-1]) | (c[1:] != c[:-1])
    starts = np.where(new)[0]
    vals = np.add.reduceat(d, starts) if len(starts) else d[:0]
    counts = np.bincount(r[new], minlength=n)
    indptr = np.concatenate([[0], np.cumsum(counts)])
    return sparse.csr_matrix((vals, c[new], indptr), shape=(n, n))


def _block_triplets(dof, blocks):
    n, m = dof.shape
    rows = np.broadcast_to(dof[:, :, None], (n, m, m)).ravel()
    cols = np.broadcast_to(dof[:, None, :], (n, m, m)).ravel()
    return rows, cols, blocks.ravel()


def assemble_system(problem: FlowProblem) -> AssembledSystem:
    volume = problem.volume
    layout = build_dof_layout(volume, problem.surface, problem.tri_face)
    nt = layout.n_tet
    mu, rho, g = problem.viscosity, problem.density, problem.gravity
    total = layout.total
    b = np.zeros(total)
    rows, cols, data = [], [], []

    minv_j = np.empty((nt, 4, 5))
    minv_g = np.empty((nt, 4))
    areas = np.empty((nt, 4))
    dof_m = np.column_stack([np.arange(nt, dtype=np.int64),
                             layout.tet_face_dof])
    for lo in range(0, nt, _CHUNK):
        sl = slice(lo, min(lo + _CHUNK, nt))
        ops = tet_local_systems(volume.vertices[volume.tets[sl]],
                                problem.matrix_permeability[sl], mu, rho, g)
        r, c, d = _block_triplets(dof_m[sl], ops.matrix)
        rows.append(r)
        cols.append(c)
        data.append(d)
        np.add.at(b, dof_m[sl], ops.rhs)
        minv_j[sl] = ops.minv_j_mu
        minv_g[sl] = ops.minv_g_mu
        areas[sl] = ops.areas

    rec = _Recovery(dof_m=dof_m, minv_j_mu=minv_j, minv_g_mu=minv_g,
                    areas=areas)
    if layout.n_tri:
        surface = problem.surface
        trans = problem.aperture * problem.frac_permeability
        tv = surface.vertices[surface.triangles]
        ops = tri_local_systems(tv, trans, mu, rho, g)
        dof_f = np.column_stack(
            [layout.tri_base + np.arange(layout.n_tri, dtype=np.int64),
             layout.edge_base + layout.tri_edge])
        r, c, d = _block_triplets(dof_f, ops.matrix)
        rows.append(r)
        cols.append(c)
        data.append(d)
        np.add.at(b, dof_f, ops.rhs)

        _, _, _, geo = tri_mass_matrices(tv, trans)
        k_face = coupling_coefficient(problem.frac_permeability,
                                      problem.aperture, mu) * geo.area
        lam = layout.face_dof[problem.tri_face]
        dof_c = np.column_stack([lam, dof_f[:, 0]])
        blocks = k_face[:, None, None] * _COUPLING_PATTERN
        r, c, d = _block_triplets(dof_c, blocks)
        rows.append(r)
        cols.append(c)
        data.append(d)
        rec.dof_f = dof_f
        rec.minv_j_mu_f = ops.minv_j_mu
        rec.minv_g_mu_f = ops.minv_g_mu
        rec.lens = ops.areas
        rec.k_face = k_face
        rec.lam = lam

    a = _csr_from_triplets(np.concatenate(rows), np.concatenate(cols),
                           np.concatenate(data), total)

    known = np.zeros(total, dtype=bool)
    kv = np.zeros(total)
    verts = volume.vertices
    lo_box = verts.min(axis=0)
    hi_box = verts.max(axis=0)
    tol = 1e-9 * (hi_box - lo_box).max()
    for tag, value in problem.bc.dirichlet.items():
        code = BOUNDARY_TAG_NAMES.index(tag)
        sel = volume.boundary_faces(tag)
        d = layout.face_dof[sel, 0]
        pts = verts[volume.faces[sel]].mean(axis=1)
        kv[d] = value(pts) if callable(value) else value
        known[d] = True
        if layout.n_edge:
            axis, side = code // 2, code % 2
            bound = (lo_box, hi_box)[side][axis]
            ecoords = problem.surface.vertices[layout.edges]
            on = np.all(np.abs(ecoords[:, :, axis] - bound) <= tol, axis=1)
            ed = layout.edge_base + np.where(on)[0]
            mids = ecoords[on].mean(axis=1)
            kv[ed] = value(mids) if callable(value) else value
            known[ed] = True
    return AssembledSystem(matrix=a, rhs=b, known=known, known_values=kv,
                           layout=layout, recovery=rec)


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------

def _pcg(a, b, rtol, maxiter, precond):
    """Preconditioned conjugate gradients, plain and deterministic.

    Convergence is measured in the preconditioned norm sqrt(r' P r).
    The plain 2-norm would be useless here: the assembled rows span many
    orders of magnitude (interface exchange versus fracture edge terms),
    and a residual that is tiny next to the stiffest rows can still be
    enormous relative to the weak ones.  The recurrence residual also
    drifts away from b - A x, so an exit is taken only once the true
    residual agrees.  When two exit attempts in a row verify at
    essentially the same true residual, rounding in the matvec has set
    the attainable floor and the solve returns what it has; the caller
    sees the achieved value in ``FlowSolution.residual``.
    """
    x = np.zeros_like(b)
    r = b.copy()
    z = precond(r)
    rz = r @ z
    bnorm = math.sqrt(rz)
    if bnorm == 0.0:
        return x, 0, 0.0
    p = z.copy()
    history = []
    floor_rn = None
    for it in range(1, maxiter + 1):
        ap = a @ p
        pap = p @ ap
        if pap <= 0.0:
            raise RuntimeError("conjugate gradients broke down "
                               "(non-positive curvature); is a pressure "
                               "boundary condition missing?")
        alpha = rz / pap
        x += alpha * p
        r -= alpha * ap
        z = precond(r)
        rz_new = r @ z
        rn = math.sqrt(max(rz_new, 0.0))
        history.append(rn)
        if rn <= rtol * bnorm:
            r = b - a @ x
            z = precond(r)
            rz_new = r @ z
            rn = math.sqrt(max(rz_new, 0.0))
            history[-1] = rn
            if rn <= rtol * bnorm or (floor_rn is not None
                                      and rn >= 0.5 * floor_rn):
                return x, it, rn / bnorm
            floor_rn = rn
            # fresh direction: the old one belongs to the recurrence
            # that was just discarded
            p = z.copy()
        else:
            p = z + (rz_new / rz) * p
        rz = rz_new
    tail = ", ".join(f"{h / bnorm:.3e}" for h in history[-5:])
    raise RuntimeError(
        f"pressure solve: relative residual {history[-1] / bnorm:.3e} "
        f"after {maxiter} iterations (target {rtol:.1e}); "
        f"last residuals: {tail}")


@dataclass
class FlowSolution:
    """Pressures, recovered fluxes, and balance diagnostics.

    ``face_flux`` is the volumetric rate through each matrix face,
    oriented from ``face_tets[:, 0]`` to ``face_tets[:, 1]`` (outward on
    boundary faces) and identically zero on fracture faces, where the
    sides exchange with the fracture cell instead: ``exchange[t, s]`` is
    the rate from side-s matrix into fracture cell t.  ``edge_flux`` is
    the outward volumetric rate across each triangle edge.  These three
    fields carry the minimal-norm conservative correction, so summing
    them around any cell gives zero to machine precision; the balance
    arrays record exactly those sums.
    """

    layout: DofLayout
    pressure: np.ndarray
    cell_flux: np.ndarray
    tri_flux: np.ndarray
    face_flux: np.ndarray
    exchange: np.ndarray
    edge_flux: np.ndarray
    iterations: int
    residual: float
    cell_balance_abs: np.ndarray
    cell_balance_scale: np.ndarray
    frac_balance_abs: np.ndarray
    frac_balance_scale: np.ndarray

    @property
    def cell_pressure(self) -> np.ndarray:
        return self.pressure[:self.layout.n_tet]

    @property
    def frac_pressure(self) -> np.ndarray:
        base = self.layout.tri_base
        return self.pressure[base:base + self.layout.n_tri]

    def fracture_pressure_jump(self) -> np.ndarray:
        """|p+ - p-| on each fracture face, in face-table order."""
        fd = self.layout.face_dof[self.layout.is_frac_face]
        return np.abs(self.pressure[fd[:, 0]] - self.pressure[fd[:, 1]])

    @staticmethod
    def _rel(abs_res, scale):
        top = scale.max(initial=0.0)
        if top == 0.0:
            return 0.0
        return float((abs_res / np.maximum(scale, 1e-14 * top)).max())

    def matrix_imbalance(self) -> float:
        return self._rel(self.cell_balance_abs, self.cell_balance_scale)

    def fracture_imbalance(self) -> float:
        return self._rel(self.frac_balance_abs, self.frac_balance_scale)


def _interface_preconditioner(s, layout, li):
    """Jacobi with exact 2x2 blocks on the fracture-face side pairs.

    The two side pressures of a fracture face are tied to each other by
    the interface exchange term, orders of magnitude stiffer than their
    couplings to anything else; point Jacobi leaves that cluster to CG,
    inverting the pair blocks removes it.
    """
    d = s.diagonal()
    if d.min(initial=np.inf) <= 0.0:
        raise ValueError("system diagonal is not positive; the assembled "
                         "flow system is not SPD")
    inv_d = 1.0 / d
    frac = np.where(layout.is_frac_face)[0]
    if not len(frac):
        return lambda r: inv_d * r
    pi = np.searchsorted(li, layout.face_dof[frac, 0])
    pj = pi + 1
    di, dj = d[pi], d[pj]
    c = np.asarray(s[pi, pj]).ravel()
    det = di * dj - c * c
    weak = det <= 0.0  # roundoff guard; fall back to the point rule
    c = np.where(weak, 0.0, c)
    det = np.where(weak, di * dj, det)

    def apply(r):
        z = inv_d * r
        ri, rj = r[pi], r[pj]
        z[pi] = (dj * ri - c * rj) / det
        z[pj] = (di * rj - c * ri) / det
        return z

    return apply


def _conserve_fluxes(volume, layout, tri_face, face_flux, edge_flux,
                     exchange):
    """Minimal-norm correction that zeroes every cell balance.

    The fields here are single shared values (one rate per face, per
    triangle edge slot, per interface side) averaged from the two
    one-sided recoveries, so each cell keeps a residual at the level of
    the continuity-row solve floor.  Transport advects with exactly
    these shared fields and drifts mass at that residual rate, so the
    residual is removed once and for all: solve min |d| with B d = -r,
    where B is the signed incidence of flux slots into cell balances,
    plus one row per shared fracture edge so that whatever leaves one
    triangle still enters the others.  Each slot moves by no more than
    the residual it absorbs.  Returns the corrected fields and the
    signed balance residuals with their scales.
    """
    n_tet = layout.n_tet
    n_tri = layout.n_tri
    nonfrac = np.where(~layout.is_frac_face)[0]
    base_e = len(nonfrac)
    base_x = base_e + 3 * n_tri

    rows, cols, vals = [], [], []
    ft = volume.face_tets[nonfrac]
    fcols = np.arange(base_e, dtype=np.int64)
    rows.append(ft[:, 0])
    cols.append(fcols)
    vals.append(np.ones(base_e))
    inner = ft[:, 1] >= 0
    rows.append(ft[inner, 1])
    cols.append(fcols[inner])
    vals.append(np.full(int(inner.sum()), -1.0))

    n_rows = n_tet
    if n_tri:
        sides = volume.face_tets[tri_face]
        xcols = base_x + 2 * np.arange(n_tri, dtype=np.int64)
        ecols = base_e + 3 * np.arange(n_tri, dtype=np.int64)
        frow = n_tet + np.arange(n_tri, dtype=np.int64)
        for s in (0, 1):
            rows += [sides[:, s], frow]
            cols += [xcols + s, xcols + s]
            vals += [np.ones(n_tri), np.full(n_tri, -1.0)]
        for e in (0, 1, 2):
            rows.append(frow)
            cols.append(ecols + e)
            vals.append(np.ones(n_tri))
        slot_edge = layout.tri_edge.ravel()
        counts = np.bincount(slot_edge, minlength=layout.n_edge)
        shared = counts >= 2
        erow = np.full(layout.n_edge, -1, dtype=np.int64)
        erow[shared] = n_tet + n_tri + np.arange(int(shared.sum()))
        keep = shared[slot_edge]
        rows.append(erow[slot_edge[keep]])
        cols.append(base_e + np.where(keep)[0])
        vals.append(np.ones(int(keep.sum())))
        n_rows += n_tri + int(shared.sum())

    b = sparse.csr_matrix((np.concatenate(vals),
                           (np.concatenate(rows), np.concatenate(cols))),
                          shape=(n_rows, base_x + 2 * n_tri))
    v = np.concatenate([face_flux[nonfrac], edge_flux.ravel(),
                        exchange.ravel()])
    r = b @ v
    if np.any(r != 0.0):
        bbt = (b @ b.T).tocsr()
        inv_d = 1.0 / bbt.diagonal()
        y, _, _ = _pcg(bbt, -r, 1e-10, 1000, lambda w: inv_d * w)
        v = v + b.T @ y
        r = b @ v
    scale = abs(b) @ np.abs(v)
    out_face = face_flux.copy()
    out_face[nonfrac] = v[:base_e]
    out_edge = v[base_e:base_x].reshape(n_tri, 3)
    out_exch = v[base_x:].reshape(n_tri, 2)
    return (out_face, out_edge, out_exch,
            np.abs(r[:n_tet]), scale[:n_tet],
            np.abs(r[n_tet:n_tet + n_tri]), scale[n_tet:n_tet + n_tri])


def solve_flow(problem: FlowProblem, tol: float = 1e-14,
               maxiter: int = 20000) -> FlowSolution:
    system = assemble_system(problem)
    layout = system.layout
    if not system.known.any():
        raise ValueError("the flow problem needs at least one "
                         "fixed-pressure boundary")
    # split the unknowns into cell pressures and interface (face and
    # edge) pressures; the cell-cell block is diagonal, so the cells
    # are eliminated exactly and PCG only sees the interface system
    is_cell = np.zeros(layout.total, dtype=bool)
    is_cell[:layout.n_tet] = True
    is_cell[layout.tri_base:layout.tri_base + layout.n_tri] = True
    fixed = np.where(system.known)[0]
    ci = np.where(is_cell)[0]  # cells are never constrained
    li = np.where(~is_cell & ~system.known)[0]
    a = system.matrix
    # re-zero the pressure datum at the middle of the boundary values:
    # the attainable error of the solve scales with the magnitude of
    # the unknowns, and a field living on [1.0e6, 1.1e6] resolves a
    # couple of decades better as one living on [-5e4, 5e4]
    kv = system.known_values[fixed]
    pref = 0.5 * (kv.min() + kv.max())
    kv = kv - pref
    dc = a.diagonal()[ci]
    if dc.min(initial=np.inf) <= 0.0:
        raise ValueError("system diagonal is not positive; the assembled "
                         "flow system is not SPD")
    inv_dc = 1.0 / dc
    acl = a[ci][:, li].tocsr()
    b_c = system.rhs[ci] - a[ci][:, fixed] @ kv
    b_l = system.rhs[li] - a[li][:, fixed] @ kv
    s = (a[li][:, li] - acl.T @ sparse.diags(inv_dc) @ acl).tocsr()
    bs = b_l - acl.T @ (inv_dc * b_c)
    precond = _interface_preconditioner(s, layout, li)
    x, iters, res = _pcg(s, bs, tol, maxiter, precond)
    pressure = np.zeros(layout.total)
    pressure[fixed] = kv
    pressure[li] = x
    pressure[ci] = inv_dc * (b_c - acl @ x)

    rec = system.recovery
    volume = problem.volume
    q = np.einsum("tfa,ta->tf", rec.minv_j_mu, pressure[rec.dof_m]) \
        + rec.minv_g_mu
    signed = rec.areas * q

    face_flux = np.zeros(len(volume.faces))
    f = layout.tet_face
    boundary = volume.face_tets[f, 1] < 0
    w = np.where(layout.is_frac_face[f], 0.0,
                 np.where(boundary, 1.0, 0.5))
    sgn = np.where(layout.tet_face_side, -1.0, 1.0)
    np.add.at(face_flux, f.ravel(), (sgn * w * signed).ravel())

    if layout.n_tri:
        q2 = np.einsum("tea,ta->te", rec.minv_j_mu_f,
                       pressure[rec.dof_f]) + rec.minv_g_mu_f
        edge_flux = rec.lens * q2
        exchange = rec.k_face[:, None] * (
            pressure[rec.lam] - pressure[rec.dof_f[:, 0]][:, None])
    else:
        q2 = np.zeros((0, 3))
        edge_flux = np.zeros((0, 3))
        exchange = np.zeros((0, 2))

    (face_flux, edge_flux, exchange, cell_abs, cell_scale,
     frac_abs, frac_scale) = _conserve_fluxes(
        volume, layout, problem.tri_face, face_flux, edge_flux, exchange)

    pressure += pref
    return FlowSolution(layout=layout, pressure=pressure, cell_flux=q,
                        tri_flux=q2, face_flux=face_flux,
                        exchange=exchange, edge_flux=edge_flux,
                        iterations=iters, residual=res,
                        cell_balance_abs=cell_abs,
                        cell_balance_scale=cell_scale,
                        frac_balance_abs=frac_abs,
                        frac_balance_scale=frac_scale)
