"""Conforming tetrahedral mesh of the matrix around a fracture mesh.

The pipeline is: build a body-centered-cubic background cloud sized so
the shortest interior lattice edge is h/2, excavate every background
vertex
that sits inside the circumsphere of any fracture triangle or within
h/2 of any fracture vertex, then run one Delaunay pass over the union
of the fracture vertices and the survivors.  With the excavation rule
satisfied, the fracture triangles come back as tetrahedron faces and
finding them is bookkeeping over the face table.

Two intentional asymmetries versus a plain lattice: interior lattice
points carry a deterministic relative nudge of about 1% so that no four
background points are even close to cospherical (exact ties would
surface as zero-volume tetrahedra, and excavation can re-expose a tie
by deleting the points that shield it), and the eight box corners are
never excavated, which keeps the convex hull of the cloud equal to the
box exactly no matter where fractures land.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .delaunay import delaunay3d
from .geometry import SpatialGrid, orient3d
from .surface_mesh import SurfaceMesh

__all__ = ["VolumeMesh", "FaceCorrespondence", "BOUNDARY_TAG_NAMES",
           "build_background", "excavate", "reconnect",
           "recover_correspondence", "tag_boundaries", "murphy_violations",
           "build_volume_mesh"]

BOUNDARY_TAG_NAMES = ("xmin", "xmax", "ymin", "ymax", "zmin", "zmax")
TAG_INTERIOR = -1

_NUDGE_SEED = 20220914
# boundary points stay essentially on the lattice; interior points get
# a nudge big enough to carry real volume.  Excavation strips the
# neighbors that normally shield the exactly cocircular lattice squares
# (every square has its circumsphere blocked by a point above or
# below), and once a shield is gone the square comes back as a tet
# whose height is exactly this nudge.
_NUDGE_REL = 1e-7
_NUDGE_REL_INTERIOR = 1e-2
# in-face shift of the clamped cell-center layer, as a fraction of the
# cell size per axis.  A clamped point otherwise differs from an
# interior center in one coordinate only, so clamp/center quadruples
# close exactly cocircular parallelograms and the tie-break emits
# near-flat boundary tets.  The fractions must be nonzero and pairwise
# distinct: equal magnitudes leave the corner/clamp quadruples on the
# box faces cocircular.
_CLAMP_SHIFT_REL = (0.10, 0.06, 0.14)


@dataclass
class VolumeMesh:
    """Tetrahedral mesh with a sorted face table.

    ``faces`` rows are sorted vertex triples in lexicographic order;
    ``face_tets[:, 1] == -1`` marks boundary faces; ``face_tag`` is an
    index into BOUNDARY_TAG_NAMES, or TAG_INTERIOR.  The first
    ``n_surface`` vertices are shared verbatim with the surface mesh
    that seeded the cloud (zero for a pure background mesh).
    """

    vertices: np.ndarray
    tets: np.ndarray
    faces: np.ndarray
    face_tets: np.ndarray
    face_tag: np.ndarray
    n_surface: int = 0

    def tet_volumes(self) -> np.ndarray:
        p = self.vertices
        t = self.tets
        a, b, c, d = p[t[:, 0]], p[t[:, 1]], p[t[:, 2]], p[t[:, 3]]
        return np.einsum("ij,ij->i", np.cross(b - a, c - a), d - a) / 6.0

    def boundary_faces(self, tag: str | None = None) -> np.ndarray:
        """Indices of boundary faces, optionally of one box side."""
        on_boundary = self.face_tets[:, 1] == -1
        if tag is None:
            return np.where(on_boundary)[0]
        code = BOUNDARY_TAG_NAMES.index(tag)
        return np.where(on_boundary & (self.face_tag == code))[0]


@dataclass
class FaceCorrespondence:
    """Where each fracture triangle lives in the volume face table."""

    tri_face: np.ndarray
    recovered_fraction: float
    misses: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))


# ---------------------------------------------------------------------------
# background lattice
# ---------------------------------------------------------------------------

def _face_table(tets: np.ndarray, n_surface: int = 0,
                vertices: np.ndarray | None = None) -> VolumeMesh:
    """Assemble a VolumeMesh around positively oriented tets."""
    local = np.array([[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]])
    f = np.sort(tets[:, local].reshape(-1, 3), axis=1).astype(np.int64)
    order = np.lexsort((f[:, 2], f[:, 1], f[:, 0]))
    fs = f[order]
    new = np.ones(len(fs), dtype=bool)
    new[1:] = np.any(fs[1:] != fs[:-1], axis=1)
    group = np.cumsum(new) - 1
    nf = int(group[-1]) + 1 if len(group) else 0
    counts = np.bincount(group, minlength=nf)
    if counts.max(initial=0) > 2:
        raise RuntimeError("face table: a face is shared by more than "
                           "two tetrahedra")
    faces = fs[new]
    face_tets = np.full((nf, 2), -1, dtype=np.int64)
    owner = order // 4
    first = np.where(new)[0]
    face_tets[:, 0] = owner[first]
    second = np.where(~new)[0]
    face_tets[group[second], 1] = owner[second]
    return VolumeMesh(vertices=vertices, tets=tets, faces=faces,
                      face_tets=face_tets,
                      face_tag=np.full(nf, TAG_INTERIOR, dtype=np.int8),
                      n_surface=n_surface)


def build_background(domain_lo, domain_hi, h: float) -> VolumeMesh:
    """Body-centered-cubic background mesh of the box.

    The cubic cell size is h/sqrt(3), which makes the shortest interior
    lattice edge (corner to center) h/2.  The cell-center layer extends
    one cell beyond the box and is clamped onto the box faces, which
    puts a center point on every boundary square.  Without those, the
    four corners of a boundary square and the body center behind it are
    exactly cospherical and the tie-break is forced to cut the square
    with a sqrt(2)-length diagonal; with them, the longest edge in the
    whole mesh stays at one cell size.

    Centers that leave the box through two or three coordinates are
    dropped instead of clamped: clamping would park them on box edges
    where, together with a face-clamped point on each adjacent face and
    the first interior center, they close an exactly cocircular square
    whose tie-break emits a near-flat tet.  The surviving face-clamped
    points get a fixed in-face shift of 6-14% of the cell size, because
    a clamped point otherwise differs from an interior center in one
    coordinate only and the resulting axis-aligned rectangles are
    cocircular too.  Interior points get a relative nudge of ~1% so the
    remaining cocircular lattice squares keep real volume even after
    excavation has stripped the points shielding their circumspheres;
    points on box faces are nudged within the face by a hair and the
    corners stay put.
    """
    lo = np.asarray(domain_lo, dtype=np.float64)
    hi = np.asarray(domain_hi, dtype=np.float64)
    size = hi - lo
    if np.any(size < 4.0 * h):
        raise ValueError("build_background: box dimensions must be >= 4h")
    a = h / math.sqrt(3.0)
    n = np.maximum(1, np.round(size / a).astype(int))
    spacing = size / n

    axes = []
    for k in range(3):
        ax = lo[k] + spacing[k] * np.arange(n[k] + 1)
        ax[-1] = hi[k]  # exact, so on-plane checks can compare bitwise
        axes.append(ax)
    cx, cy, cz = np.meshgrid(*axes, indexing="ij")
    corners = np.column_stack([cx.ravel(), cy.ravel(), cz.ravel()])
    caxes = [lo[k] + spacing[k] * (np.arange(-1, n[k] + 1) + 0.5)
             for k in range(3)]
    mx, my, mz = np.meshgrid(*caxes, indexing="ij")
    centers = np.column_stack([mx.ravel(), my.ravel(), mz.ravel()])
    clamped = (centers <= lo) | (centers >= hi)
    np.clip(centers, lo, hi, out=centers)
    centers = centers[clamped.sum(axis=1) <= 1]
    clamped = (centers == lo) | (centers == hi)
    shift = np.where(clamped.any(axis=1, keepdims=True),
                     np.array(_CLAMP_SHIFT_REL) * spacing, 0.0)
    shift[clamped] = 0.0
    centers = centers + shift

    pts = np.vstack([corners, centers])
    rng = np.random.default_rng(_NUDGE_SEED)
    nudge = rng.uniform(-1.0, 1.0, pts.shape)
    boundary = ((pts == lo) | (pts == hi)).any(axis=1)
    nudge *= np.where(boundary, _NUDGE_REL,
                      _NUDGE_REL_INTERIOR)[:, None] * spacing.min()
    # pin each point's nudge to the box planes it lies on
    for k in range(3):
        on_plane = (np.abs(pts[:, k] - lo[k]) == 0.0) \
            | (np.abs(pts[:, k] - hi[k]) == 0.0)
        nudge[on_plane, k] = 0.0
    pts = pts + nudge

    tets = delaunay3d(pts)
    vols = np.einsum("ij,ij->i",
                     np.cross(pts[tets[:, 1]] - pts[tets[:, 0]],
                              pts[tets[:, 2]] - pts[tets[:, 0]]),
                     pts[tets[:, 3]] - pts[tets[:, 0]]) / 6.0
    if vols.min(initial=np.inf) <= 0.0:
        raise RuntimeError("build_background: degenerate tetrahedra "
                           "survived the lattice nudge")
    mesh = _face_table(tets, n_surface=0, vertices=pts)
    tag_boundaries(mesh, lo, hi, h)
    return mesh


# ---------------------------------------------------------------------------
# excavation
# ---------------------------------------------------------------------------

def _triangle_circumspheres(pts: np.ndarray,
                            tris: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = pts[tris[:, 0]]
    u = pts[tris[:, 1]] - a
    v = pts[tris[:, 2]] - a
    w = np.cross(u, v)
    w2 = np.einsum("ij,ij->i", w, w)
    if np.any(w2 <= 0.0):
        raise ValueError("degenerate fracture triangle")
    uu = np.einsum("ij,ij->i", u, u)
    vv = np.einsum("ij,ij->i", v, v)
    offset = (np.cross(w, u) * vv[:, None]
              + np.cross(v, w) * uu[:, None]) / (2.0 * w2[:, None])
    centers = a + offset
    radii = np.linalg.norm(offset, axis=1)
    return centers, radii


def excavate(background: VolumeMesh, surface: SurfaceMesh, h: float,
             pin_points: np.ndarray | None = None) -> np.ndarray:
    """Background vertices that survive near-fracture removal.

    A vertex is removed when it is inside or exactly on the
    circumsphere of any fracture triangle (the conservative side of
    the conformity condition) or within h/2 of any fracture vertex.
    Rows of ``pin_points`` matching background vertices exactly are
    retained no matter what; the mesher pins the box corners so the
    cloud's hull stays the full box.
    """
    pts = background.vertices
    keep = np.ones(len(pts), dtype=bool)
    if len(surface.triangles):
        grid = SpatialGrid(pts, cell_size=max(h / 2.0, 1e-12))
        centers, radii = _triangle_circumspheres(surface.vertices,
                                                 surface.triangles)
        for c, r in zip(centers, radii):
            idx = grid.query_ball(c, r)
            if len(idx):
                d = np.linalg.norm(pts[idx] - c, axis=1)
                keep[idx[d <= r]] = False
        for v in surface.vertices:
            idx = grid.query_ball(v, h / 2.0)
            keep[idx] = False
    if pin_points is not None:
        for p in np.atleast_2d(pin_points):
            hit = np.all(pts == p, axis=1)
            keep |= hit
    return pts[keep]


# ---------------------------------------------------------------------------
# reconnection
# ---------------------------------------------------------------------------

def reconnect(matrix_points: np.ndarray,
              surface_points: np.ndarray) -> VolumeMesh:
    """Delaunay pass over fracture vertices plus surviving background.

    Fracture vertices come first, so ids below ``n_surface`` agree
    with the surface mesh.  Exact symbolic-tie flats (zero volume,
    only ever on the hull) are stripped before the face table is
    built.
    """
    ns = len(surface_points)
    cloud = np.vstack([surface_points, matrix_points]) if ns else \
        np.asarray(matrix_points, dtype=np.float64)
    if len(cloud) < 4:
        raise ValueError("reconnect: need at least 4 points")
    tets = delaunay3d(cloud)
    if len(tets) == 0:
        raise ValueError("reconnect: point cloud is degenerate")

    vols = np.einsum("ij,ij->i",
                     np.cross(cloud[tets[:, 1]] - cloud[tets[:, 0]],
                              cloud[tets[:, 2]] - cloud[tets[:, 0]]),
                     cloud[tets[:, 3]] - cloud[tets[:, 0]]) / 6.0
    suspect = np.abs(vols) <= 1e-9 * np.median(np.abs(vols))
    if np.any(suspect):
        flat = np.zeros(len(tets), dtype=bool)
        for i in np.where(suspect)[0]:
            t = tets[i]
            flat[i] = orient3d(cloud[t[0]], cloud[t[1]], cloud[t[2]],
                               cloud[t[3]]) == 0.0
        tets = tets[~flat]
        vols = vols[~flat]
    if vols.min(initial=np.inf) <= 0.0:
        raise RuntimeError("reconnect: non-positive tetrahedron volume")
    return _face_table(tets, n_surface=ns, vertices=cloud)


# ---------------------------------------------------------------------------
# bookkeeping
# ---------------------------------------------------------------------------

def _pack_triples(tri: np.ndarray, nv: int) -> np.ndarray:
    t = tri.astype(np.int64)
    return (t[:, 0] * nv + t[:, 1]) * nv + t[:, 2]


def recover_correspondence(volume: VolumeMesh,
                           surface: SurfaceMesh) -> FaceCorrespondence:
    """Locate every fracture triangle in the volume face table."""
    nv = len(volume.vertices)
    if len(surface.triangles) == 0:
        return FaceCorrespondence(tri_face=np.zeros(0, np.int64),
                                  recovered_fraction=1.0)
    tri = np.sort(surface.triangles, axis=1)
    keys = _pack_triples(tri, nv)
    face_keys = _pack_triples(volume.faces, nv)
    pos = np.searchsorted(face_keys, keys)
    pos_c = np.minimum(pos, len(face_keys) - 1)
    hit = face_keys[pos_c] == keys
    tri_face = np.where(hit, pos_c, -1)
    misses = np.where(~hit)[0].astype(np.int64)
    frac = float(hit.sum()) / len(keys)
    return FaceCorrespondence(tri_face=tri_face, recovered_fraction=frac,
                              misses=misses)


def tag_boundaries(volume: VolumeMesh, domain_lo, domain_hi,
                   h: float) -> VolumeMesh:
    """Assign a box-side tag to every boundary face."""
    lo = np.asarray(domain_lo, dtype=np.float64)
    hi = np.asarray(domain_hi, dtype=np.float64)
    tol = 1e-9 * h
    bidx = np.where(volume.face_tets[:, 1] == -1)[0]
    coords = volume.vertices[volume.faces[bidx]]
    tagged = np.zeros(len(bidx), dtype=bool)
    for axis in range(3):
        for side, value in ((0, lo[axis]), (1, hi[axis])):
            on = np.all(np.abs(coords[:, :, axis] - value) <= tol, axis=1)
            volume.face_tag[bidx[on]] = 2 * axis + side
            tagged |= on
    if not np.all(tagged):
        k = bidx[np.where(~tagged)[0][0]]
        raise RuntimeError(
            f"boundary face {k} with vertices "
            f"{volume.vertices[volume.faces[k]].tolist()} lies on no box "
            f"plane")
    return volume


def murphy_violations(volume: VolumeMesh, surface: SurfaceMesh) -> int:
    """Count matrix vertices strictly inside fracture-triangle
    circumspheres (must be zero after a valid excavation)."""
    if len(surface.triangles) == 0:
        return 0
    matrix_pts = volume.vertices[volume.n_surface:]
    if len(matrix_pts) == 0:
        return 0
    grid = SpatialGrid(matrix_pts, cell_size=max(
        1e-12, float(np.median(np.linalg.norm(
            surface.vertices[surface.triangles[:, 1]]
            - surface.vertices[surface.triangles[:, 0]], axis=1)))))
    centers, radii = _triangle_circumspheres(surface.vertices,
                                             surface.triangles)
    bad = 0
    for c, r in zip(centers, radii):
        idx = grid.query_ball(c, r)
        if len(idx):
            d = np.linalg.norm(matrix_pts[idx] - c, axis=1)
            bad += int(np.sum(d < r))
    return bad


# ---------------------------------------------------------------------------
# orchestration
# ---------------------------------------------------------------------------

def build_volume_mesh(surface: SurfaceMesh, domain_lo, domain_hi, h: float,
                      min_recovered: float = 0.98
                      ) -> tuple[VolumeMesh, FaceCorrespondence]:
    """Background, excavation, reconnection, tagging, bookkeeping.

    Raises when the recovered fraction falls below ``min_recovered``
    or the mesh fails its volume audit.
    """
    lo = np.asarray(domain_lo, dtype=np.float64)
    hi = np.asarray(domain_hi, dtype=np.float64)
    background = build_background(lo, hi, h)
    corners = np.array([[lo[0] if i & 1 else hi[0],
                         lo[1] if i & 2 else hi[1],
                         lo[2] if i & 4 else hi[2]] for i in range(8)])
    kept = excavate(background, surface, h, pin_points=corners)
    volume = reconnect(kept, surface.vertices)
    tag_boundaries(volume, lo, hi, h)

    box = float(np.prod(hi - lo))
    total = float(volume.tet_volumes().sum())
    if abs(total - box) > 1e-8 * box:
        raise RuntimeError(
            f"volume audit failed: tet volumes sum to {total}, box is {box}")

    corr = recover_correspondence(volume, surface)
    if corr.recovered_fraction < min_recovered:
        raise RuntimeError(
            f"only {corr.recovered_fraction:.4f} of fracture triangles were "
            f"recovered as tetrahedron faces (threshold {min_recovered})")
    return volume, corr
