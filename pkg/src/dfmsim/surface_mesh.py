"""Conforming triangulation of a fracture network.

Every intersection segment is split at triple points, subdivided into
sub-segments no longer than h/2, and the resulting vertices are shared
verbatim by all owner fractures.  Each fracture is then triangulated
in its own plane: a regular triangular lattice fills the interior, rim
points sample the polygon boundary, lattice and rim points falling
inside the protective disc of an intersection vertex are removed (the
disc radius is the local sub-segment length, which keeps the diametral
circles of intersection edges empty), and a planar Delaunay pass
connects everything.  Because the traces enter each owner fracture as
the same global vertices, the merged mesh is conforming by
construction; sub-segment recovery is still verified and a failure
raises, since it indicates an inadmissible input network.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .delaunay import delaunay2d
from .dfn import FractureNetwork, Fracture
from .geometry import segment_segment_closest

__all__ = ["IntersectionDiscretization", "FractureTriangulation",
           "SurfaceMesh", "discretize_intersections",
           "triangulate_fracture", "merge_fracture_meshes",
           "build_surface_mesh"]

_JITTER_SEED = 61409
_JITTER_REL = 1e-6


@dataclass
class IntersectionDiscretization:
    """Shared vertices of all discretized intersection segments.

    ``chains[k]`` lists the ordered vertex ids along intersection k;
    consecutive pairs are the sub-segments that must survive as mesh
    edges on both fractures of ``chain_owners[k]``.
    """

    points: np.ndarray
    owners: list[set[int]]
    chains: list[list[int]]
    chain_owners: list[tuple[int, int]]

    def protective_radii(self) -> np.ndarray:
        """Per-vertex clearance: the longest adjacent sub-segment."""
        r = np.zeros(len(self.points))
        for chain in self.chains:
            for a, b in zip(chain, chain[1:]):
                length = float(np.linalg.norm(self.points[a] - self.points[b]))
                r[a] = max(r[a], length)
                r[b] = max(r[b], length)
        return r


@dataclass
class FractureTriangulation:
    """One fracture's planar triangulation before merging.

    The first ``len(global_ids)`` points are the fracture's
    intersection vertices, stored with their exact global coordinates;
    the rest are rim and interior lattice points owned by this
    fracture alone.
    """

    fracture_id: int
    global_ids: list[int]
    points: np.ndarray
    triangles: np.ndarray


@dataclass
class SurfaceMesh:
    vertices: np.ndarray
    owners: list[set[int]]
    on_intersection: np.ndarray
    triangles: np.ndarray
    tri_fracture: np.ndarray
    intersection_edges: np.ndarray
    edge_intersection: np.ndarray
    chains: list[list[int]] = field(default_factory=list)

    def edge_set_of_fracture(self, fid: int) -> set[tuple[int, int]]:
        edges = set()
        for t in self.triangles[self.tri_fracture == fid]:
            for i in range(3):
                a, b = int(t[i]), int(t[(i + 1) % 3])
                edges.add((min(a, b), max(a, b)))
        return edges


# ---------------------------------------------------------------------------
# intersection discretization
# ---------------------------------------------------------------------------

def discretize_intersections(network: FractureNetwork
                             ) -> IntersectionDiscretization:
    h = network.h
    tol = 1e-9 * h
    target = h / 2.0
    segs = [x.segment for x in network.intersections]

    # crossing parameters mark triple points; segments must be split
    # there so the shared point becomes a vertex of every chain
    splits: list[list[float]] = [[] for _ in segs]
    for i in range(len(segs)):
        for j in range(i + 1, len(segs)):
            s, t, d = segment_segment_closest(segs[i].a, segs[i].b,
                                              segs[j].a, segs[j].b)
            if d <= tol:
                splits[i].append(s)
                splits[j].append(t)

    points: list[np.ndarray] = []
    owners: list[set[int]] = []

    def add_point(p: np.ndarray, own: set[int]) -> int:
        if points:
            arr = np.asarray(points)
            dist = np.linalg.norm(arr - p, axis=1)
            k = int(np.argmin(dist))
            if dist[k] <= tol:
                owners[k] |= own
                return k
        points.append(np.asarray(p, dtype=np.float64))
        owners.append(set(own))
        return len(points) - 1

    chains: list[list[int]] = []
    for k, x in enumerate(network.intersections):
        own = {x.a, x.b}
        seg = x.segment
        length = seg.length
        ptol = tol / length
        knots = [0.0]
        for t in sorted(splits[k]):
            if t > knots[-1] + ptol and t < 1.0 - ptol:
                knots.append(t)
        knots.append(1.0)
        chain: list[int] = []
        for t0, t1 in zip(knots, knots[1:]):
            n = max(1, math.ceil((t1 - t0) * length / target))
            for i in range(n + 1):
                t = t0 + (t1 - t0) * i / n
                vid = add_point(seg.point_at(t), own)
                if not chain or vid != chain[-1]:
                    chain.append(vid)
        chains.append(chain)

    pts = np.asarray(points) if points else np.zeros((0, 3))
    return IntersectionDiscretization(
        points=pts, owners=owners, chains=chains,
        chain_owners=[(x.a, x.b) for x in network.intersections])


# ---------------------------------------------------------------------------
# per-fracture triangulation
# ---------------------------------------------------------------------------

def _rim_points(poly, target: float, rng) -> tuple[np.ndarray, np.ndarray]:
    """Boundary sample points and a corner flag for each.

    Non-corner points get a tiny deterministic slide along their edge.
    Evenly spaced rim points and lattice columns form exactly
    cocircular quadruples on symmetric polygons, and such ties come
    back later as zero-volume tetrahedra wedged into the fracture
    plane when the matrix mesh is rebuilt around it.  Corner points
    and intersection vertices stay exact, so the slide never moves the
    polygon boundary or anything shared across fractures.
    """
    pts = []
    corner = []
    v = poly.vertices
    m = len(v)
    for i in range(m):
        a, b = v[i], v[(i + 1) % m]
        length = float(np.linalg.norm(b - a))
        n = max(1, math.ceil(length / target))
        slide = rng.uniform(-1.0, 1.0, n) * (_JITTER_REL * target / length)
        slide[0] = 0.0
        for s in range(n):
            pts.append(a + (b - a) * (s / n + slide[s]))
            corner.append(s == 0)
    return np.asarray(pts), np.asarray(corner, dtype=bool)


def _lattice_points(poly, target: float, margin: float,
                    rng) -> np.ndarray:
    """Triangular lattice in the polygon's plane, clear of the rim.

    Anchored at the polygon centroid so the layout is deterministic.
    Points get the same symmetry-breaking jitter as the rim (see
    _rim_points) and are then dropped when closer than ``margin`` to
    any rim line, so the margin holds for the final coordinates.
    """
    loc = poly.to_local(poly.vertices)
    m = len(loc)
    # inward edge normals for the CCW local ring
    normals = np.empty((m, 2))
    anchors = loc
    for i in range(m):
        d = loc[(i + 1) % m] - loc[i]
        ln = float(np.hypot(d[0], d[1]))
        normals[i] = (-d[1] / ln, d[0] / ln)
    umin, vmin = loc.min(axis=0)
    umax, vmax = loc.max(axis=0)
    dy = target * math.sqrt(3.0) / 2.0
    out = []
    jmin = int(math.floor(vmin / dy)) - 1
    jmax = int(math.ceil(vmax / dy)) + 1
    for j in range(jmin, jmax + 1):
        y = j * dy
        xoff = 0.5 * target if j % 2 else 0.0
        imin = int(math.floor((umin - xoff) / target)) - 1
        imax = int(math.ceil((umax - xoff) / target)) + 1
        for i in range(imin, imax + 1):
            p = np.array([xoff + i * target, y])
            p = p + rng.uniform(-1.0, 1.0, 2) * (_JITTER_REL * target)
            d = np.einsum("ij,ij->i", normals, p[None, :] - anchors)
            if np.all(d >= margin):
                out.append(p)
    if not out:
        return np.zeros((0, 3))
    return poly.from_local(np.asarray(out))


def triangulate_fracture(fracture: Fracture,
                         disc: IntersectionDiscretization,
                         h: float) -> FractureTriangulation:
    poly = fracture.polygon
    fid = fracture.id
    target = h / 2.0
    tol = 1e-9 * h

    gids = sorted(i for i, own in enumerate(disc.owners) if fid in own)
    gpts = disc.points[gids] if gids else np.zeros((0, 3))
    prot = disc.protective_radii()
    rng = np.random.default_rng([_JITTER_SEED, fid])

    rim, corner = _rim_points(poly, target, rng)
    keep = np.ones(len(rim), dtype=bool)
    for gi in gids:
        d = np.linalg.norm(rim - disc.points[gi], axis=1)
        # a rim point coinciding with an intersection vertex is that
        # vertex; otherwise corners survive and the rest clear the disc
        keep &= (d > tol) & (corner | (d >= prot[gi]))
    rim = rim[keep]

    lattice = _lattice_points(poly, target, margin=h / 4.0, rng=rng)
    if len(lattice) and gids:
        keep = np.ones(len(lattice), dtype=bool)
        for gi in gids:
            d = np.linalg.norm(lattice - disc.points[gi], axis=1)
            keep &= d >= prot[gi]
        lattice = lattice[keep]

    pts3 = np.vstack([gpts, rim, lattice])
    uv = poly.to_local(pts3)
    tris = delaunay2d(uv)

    # drop the degenerate slivers that collinear rim points leave on
    # the hull, then make sure nothing real was lost
    u = uv[tris[:, 1]] - uv[tris[:, 0]]
    v = uv[tris[:, 2]] - uv[tris[:, 0]]
    area2 = u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]
    tris = tris[np.abs(area2) > 1e-10 * target * target]
    total = 0.5 * float(np.abs(area2).sum())
    if abs(total - poly.area) > 1e-9 * poly.area:
        raise RuntimeError(
            f"fracture {fid}: triangulation area {total} does not match "
            f"polygon area {poly.area}")

    edge_set = set()
    for t in tris:
        for i in range(3):
            a, b = int(t[i]), int(t[(i + 1) % 3])
            edge_set.add((min(a, b), max(a, b)))
    gid_local = {g: i for i, g in enumerate(gids)}
    for k, chain in enumerate(disc.chains):
        if fid not in disc.chain_owners[k]:
            continue
        for a, b in zip(chain, chain[1:]):
            la, lb = gid_local[a], gid_local[b]
            if (min(la, lb), max(la, lb)) not in edge_set:
                raise RuntimeError(
                    f"fracture {fid}: intersection sub-segment "
                    f"({a}, {b}) was not recovered as a mesh edge")

    return FractureTriangulation(fracture_id=fid, global_ids=gids,
                                 points=pts3, triangles=tris)


# ---------------------------------------------------------------------------
# merge
# ---------------------------------------------------------------------------

def merge_fracture_meshes(disc: IntersectionDiscretization,
                          parts: list[FractureTriangulation]) -> SurfaceMesh:
    nglob = len(disc.points)
    vertices = [disc.points] if nglob else []
    owners: list[set[int]] = [set(o) for o in disc.owners]
    on_int = [True] * nglob
    triangles = []
    tri_frac = []
    total = nglob
    for ft in parts:
        k = len(ft.global_ids)
        remap = np.empty(len(ft.points), dtype=np.int64)
        remap[:k] = ft.global_ids
        remap[k:] = total + np.arange(len(ft.points) - k)
        vertices.append(ft.points[k:])
        owners.extend({ft.fracture_id} for _ in range(len(ft.points) - k))
        on_int.extend([False] * (len(ft.points) - k))
        total += len(ft.points) - k
        triangles.append(remap[ft.triangles])
        tri_frac.append(np.full(len(ft.triangles), ft.fracture_id,
                                dtype=np.int64))

    edges = []
    edge_int = []
    for k, chain in enumerate(disc.chains):
        for a, b in zip(chain, chain[1:]):
            edges.append((a, b))
            edge_int.append(k)

    return SurfaceMesh(
        vertices=np.vstack(vertices) if vertices else np.zeros((0, 3)),
        owners=owners,
        on_intersection=np.asarray(on_int, dtype=bool),
        triangles=np.vstack(triangles) if triangles else
        np.zeros((0, 3), dtype=np.int64),
        tri_fracture=np.concatenate(tri_frac) if tri_frac else
        np.zeros(0, dtype=np.int64),
        intersection_edges=np.asarray(edges, dtype=np.int64).reshape(-1, 2),
        edge_intersection=np.asarray(edge_int, dtype=np.int64),
        chains=disc.chains)


def build_surface_mesh(network: FractureNetwork) -> SurfaceMesh:
    """Discretize intersections, triangulate every fracture, merge."""
    disc = discretize_intersections(network)
    parts = [triangulate_fracture(f, disc, network.h)
             for f in network.fractures]
    return merge_fracture_meshes(disc, parts)
