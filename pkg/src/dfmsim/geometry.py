"""Geometric primitives for mixed-dimensional meshing.

Coordinates are plain ``float64`` numpy arrays.  All tolerances used
here are relative to the local coordinate scale of the inputs, never
absolute, so domains measured in millimetres and in kilometres behave
identically.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _predicates as _pred


def _as_point(p) -> np.ndarray:
    a = np.asarray(p, dtype=np.float64)
    if a.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {a.shape}")
    return a


def local_scale(*points) -> float:
    """Largest absolute coordinate among the inputs, floored at 1."""
    s = 1.0
    for p in points:
        m = float(np.max(np.abs(p)))
        if m > s:
            s = m
    return s


# ---------------------------------------------------------------------------
# robust predicates (wrappers over the compiled kernels)
# ---------------------------------------------------------------------------

def orient3d(a, b, c, d) -> float:
    """Sign of the orientation of d against plane (a, b, c).

    Returns +1.0 when d lies on the positive side (the side pointed to
    by the right-handed normal of the triangle a, b, c), -1.0 on the
    negative side, 0.0 when the four points are exactly coplanar.
    """
    a = _as_point(a)
    b = _as_point(b)
    c = _as_point(c)
    d = _as_point(d)
    return float(_pred._orient3d_sign(a[0], a[1], a[2], b[0], b[1], b[2],
                                      c[0], c[1], c[2], d[0], d[1], d[2]))


def insphere(a, b, c, d, e) -> float:
    """Sign test of e against the circumsphere of tet (a, b, c, d).

    Requires a positively oriented tet (``orient3d(a, b, c, d) > 0``)
    and raises ``ValueError`` otherwise.  Returns +1.0 when e is
    strictly inside the circumsphere, -1.0 strictly outside, 0.0 when
    exactly cospherical.
    """
    a = _as_point(a)
    b = _as_point(b)
    c = _as_point(c)
    d = _as_point(d)
    e = _as_point(e)
    o = _pred._orient3d_sign(a[0], a[1], a[2], b[0], b[1], b[2],
                             c[0], c[1], c[2], d[0], d[1], d[2])
    if o == 0.0:
        raise ValueError("insphere: base tet is degenerate (coplanar); "
                         "perturb the input")
    if o < 0.0:
        raise ValueError("insphere: base tet must be positively oriented")
    return float(_pred._insphere_sign(a[0], a[1], a[2], b[0], b[1], b[2],
                                      c[0], c[1], c[2], d[0], d[1], d[2],
                                      e[0], e[1], e[2]))


def orient2d(a, b, c) -> float:
    """Planar orientation sign; +1.0 for counterclockwise (a, b, c)."""
    return float(_pred._orient2d_sign(float(a[0]), float(a[1]),
                                      float(b[0]), float(b[1]),
                                      float(c[0]), float(c[1])))


def incircle(a, b, c, d) -> float:
    """+1.0 when d is strictly inside the circumcircle of CCW (a, b, c)."""
    o = _pred._orient2d_sign(float(a[0]), float(a[1]), float(b[0]),
                             float(b[1]), float(c[0]), float(c[1]))
    if o == 0.0:
        raise ValueError("incircle: base triangle is degenerate")
    if o < 0.0:
        raise ValueError("incircle: base triangle must be counterclockwise")
    return float(_pred._incircle_sign(float(a[0]), float(a[1]),
                                      float(b[0]), float(b[1]),
                                      float(c[0]), float(c[1]),
                                      float(d[0]), float(d[1])))


# ---------------------------------------------------------------------------
# basic measures
# ---------------------------------------------------------------------------

def triangle_area(a, b, c) -> float:
    return 0.5 * float(np.linalg.norm(np.cross(np.subtract(b, a),
                                               np.subtract(c, a))))


def triangle_normal(a, b, c) -> np.ndarray:
    """Unit right-handed normal of triangle (a, b, c)."""
    n = np.cross(np.subtract(b, a), np.subtract(c, a))
    ln = np.linalg.norm(n)
    if ln == 0.0:
        raise ValueError("degenerate triangle has no normal")
    return n / ln


def tet_volume(a, b, c, d) -> float:
    """Signed volume; positive when orient3d(a, b, c, d) > 0."""
    m = np.stack([np.subtract(b, a), np.subtract(c, a), np.subtract(d, a)])
    return float(np.linalg.det(m)) / 6.0


@dataclass
class Sphere:
    center: np.ndarray
    radius: float

    def contains(self, p, tol: float = 0.0) -> bool:
        """True when p is inside or on the sphere (inflated by tol)."""
        d = np.linalg.norm(np.subtract(p, self.center))
        return bool(d <= self.radius + tol)


@dataclass
class Segment3:
    a: np.ndarray
    b: np.ndarray

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.b - self.a))

    def point_at(self, t: float) -> np.ndarray:
        return self.a + t * (self.b - self.a)


def circumsphere(a, b, c) -> Sphere:
    """Circumsphere of a triangle: the smallest sphere through its three
    vertices (centered in the triangle plane).

    Raises ``ValueError`` for collinear input.
    """
    a = _as_point(a)
    u = _as_point(b) - a
    v = _as_point(c) - a
    w = np.cross(u, v)
    w2 = float(w @ w)
    scale = local_scale(u, v)
    if w2 <= (1e-14 * scale * scale) ** 2:
        raise ValueError("circumsphere: collinear points")
    offset = (np.cross(w, u) * float(v @ v) +
              np.cross(v, w) * float(u @ u)) / (2.0 * w2)
    return Sphere(center=a + offset, radius=float(np.linalg.norm(offset)))


def circumsphere_of_tet(a, b, c, d) -> Sphere:
    """Circumsphere of a non-degenerate tetrahedron."""
    a = _as_point(a)
    m = np.stack([np.subtract(b, a), np.subtract(c, a), np.subtract(d, a)])
    rhs = 0.5 * np.einsum("ij,ij->i", m, m)
    try:
        x = np.linalg.solve(m, rhs)
    except np.linalg.LinAlgError as exc:
        raise ValueError("circumsphere_of_tet: degenerate tet") from exc
    return Sphere(center=a + x, radius=float(np.linalg.norm(x)))


# ---------------------------------------------------------------------------
# planar convex polygons embedded in 3D
# ---------------------------------------------------------------------------

def plane_frame(normal) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic right-handed in-plane basis (e1, e2) for a normal."""
    n = _as_point(normal)
    n = n / np.linalg.norm(n)
    k = int(np.argmin(np.abs(n)))
    aux = np.zeros(3)
    aux[k] = 1.0
    e1 = np.cross(aux, n)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(n, e1)
    return e1, e2


@dataclass
class Polygon3:
    """Planar convex polygon in 3D with a cached plane frame.

    Vertices must be ordered (either winding); planarity and convexity
    are validated on construction relative to the polygon scale.
    """

    vertices: np.ndarray
    normal: np.ndarray = field(init=False)
    centroid: np.ndarray = field(init=False)
    e1: np.ndarray = field(init=False)
    e2: np.ndarray = field(init=False)

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] != 3 or v.shape[0] < 3:
            raise ValueError("Polygon3 needs an (n, 3) array with n >= 3")
        self.vertices = v
        # Newell normal is robust for nearly-degenerate orderings
        n = np.zeros(3)
        for i in range(len(v)):
            p, q = v[i], v[(i + 1) % len(v)]
            n[0] += (p[1] - q[1]) * (p[2] + q[2])
            n[1] += (p[2] - q[2]) * (p[0] + q[0])
            n[2] += (p[0] - q[0]) * (p[1] + q[1])
        ln = np.linalg.norm(n)
        scale = local_scale(*v)
        if ln <= 1e-12 * scale * scale:
            raise ValueError("Polygon3: degenerate (zero-area) polygon")
        self.normal = n / ln
        self.centroid = v.mean(axis=0)
        self.e1, self.e2 = plane_frame(self.normal)
        rel = v - self.centroid
        off = rel @ self.normal
        if np.max(np.abs(off)) > 1e-9 * scale:
            raise ValueError("Polygon3: vertices are not coplanar")
        # convexity: all cross products of consecutive edges within the
        # plane must share one sign (zeros allowed for collinear chains)
        loc = self.to_local(v)
        m = len(loc)
        sign = 0.0
        for i in range(m):
            a = loc[(i + 1) % m] - loc[i]
            b = loc[(i + 2) % m] - loc[(i + 1) % m]
            cr = a[0] * b[1] - a[1] * b[0]
            if abs(cr) <= 1e-12 * scale * scale:
                continue
            if sign == 0.0:
                sign = np.sign(cr)
            elif np.sign(cr) != sign:
                raise ValueError("Polygon3: polygon is not convex")

    def to_local(self, points) -> np.ndarray:
        """Project 3D points into the polygon's in-plane coordinates."""
        rel = np.atleast_2d(np.asarray(points, dtype=np.float64)) - self.centroid
        return np.column_stack([rel @ self.e1, rel @ self.e2])

    def from_local(self, uv) -> np.ndarray:
        uv = np.atleast_2d(np.asarray(uv, dtype=np.float64))
        return (self.centroid + np.outer(uv[:, 0], self.e1)
                + np.outer(uv[:, 1], self.e2))

    @property
    def area(self) -> float:
        v = self.vertices
        s = np.zeros(3)
        for i in range(1, len(v) - 1):
            s += np.cross(v[i] - v[0], v[i + 1] - v[0])
        return 0.5 * float(np.linalg.norm(s))

    def plane_offset(self) -> float:
        return float(self.normal @ self.centroid)

    def contains_point(self, p, tol: float | None = None) -> bool:
        """True when p lies on the polygon: on its plane and inside or
        on the rim."""
        scale = local_scale(*self.vertices)
        if tol is None:
            tol = 1e-9 * scale
        p = _as_point(p)
        if abs(float((p - self.centroid) @ self.normal)) > tol:
            return False
        uv = self.to_local(p)[0]
        loc = self.to_local(self.vertices)
        m = len(loc)
        # consistent winding sign
        wind = 0.0
        for i in range(m):
            a, b = loc[i], loc[(i + 1) % m]
            cr = (b[0] - a[0]) * (uv[1] - a[1]) - (b[1] - a[1]) * (uv[0] - a[0])
            if abs(cr) > tol * scale and wind == 0.0:
                wind = np.sign(cr)
            elif abs(cr) > tol * scale and np.sign(cr) != wind:
                return False
        return True

    def boundary_distance(self, p) -> float:
        """Distance from a point to the polygon's rim (its edges)."""
        v = self.vertices
        best = np.inf
        for i in range(len(v)):
            d = point_segment_distance(p, v[i], v[(i + 1) % len(v)])
            if d < best:
                best = d
        return best


# ---------------------------------------------------------------------------
# clipping
# ---------------------------------------------------------------------------

def clip_polygon_halfspace(vertices, normal, offset, tol: float = 0.0):
    """Sutherland-Hodgman clip of a polygon against ``x . n <= offset``.

    Returns an (m, 3) array (possibly empty).  ``tol`` widens the kept
    side; vertices with ``x . n <= offset + tol`` are retained.
    """
    v = np.asarray(vertices, dtype=np.float64)
    n = np.asarray(normal, dtype=np.float64)
    if len(v) == 0:
        return v.reshape(0, 3)
    d = v @ n - offset
    keep = d <= tol
    out = []
    m = len(v)
    for i in range(m):
        j = (i + 1) % m
        if keep[i]:
            out.append(v[i])
            if not keep[j]:
                t = d[i] / (d[i] - d[j])
                out.append(v[i] + t * (v[j] - v[i]))
        elif keep[j]:
            t = d[i] / (d[i] - d[j])
            out.append(v[i] + t * (v[j] - v[i]))
    if not out:
        return np.zeros((0, 3))
    return np.asarray(out)


def clip_polygon_box(vertices, box_lo, box_hi, tol: float = 0.0) -> np.ndarray:
    """Clip a polygon against an axis-aligned box; may return empty."""
    v = np.asarray(vertices, dtype=np.float64)
    lo = np.asarray(box_lo, dtype=np.float64)
    hi = np.asarray(box_hi, dtype=np.float64)
    for ax in range(3):
        n = np.zeros(3)
        n[ax] = 1.0
        v = clip_polygon_halfspace(v, n, hi[ax], tol)
        if len(v) == 0:
            return v
        v = clip_polygon_halfspace(v, -n, -lo[ax], tol)
        if len(v) == 0:
            return v
    return _dedup_ring(v)


def _dedup_ring(v, rel_tol: float = 1e-12) -> np.ndarray:
    """Drop consecutive duplicate vertices from a polygon ring."""
    if len(v) == 0:
        return v
    scale = local_scale(*v)
    out = []
    for p in v:
        if not out or np.linalg.norm(p - out[-1]) > rel_tol * scale:
            out.append(p)
    while len(out) > 1 and np.linalg.norm(out[0] - out[-1]) <= rel_tol * scale:
        out.pop()
    return np.asarray(out)


def polygon_area_3d(vertices) -> float:
    v = np.asarray(vertices, dtype=np.float64)
    if len(v) < 3:
        return 0.0
    s = np.zeros(3)
    for i in range(1, len(v) - 1):
        s += np.cross(v[i] - v[0], v[i + 1] - v[0])
    return 0.5 * float(np.linalg.norm(s))


# ---------------------------------------------------------------------------
# polygon-polygon intersection segment
# ---------------------------------------------------------------------------

def _poly_line_interval(poly: Polygon3, p0, direction, tol):
    """Parameter interval of line p0 + t*direction inside the polygon,
    computed in the polygon's plane.  Returns (tmin, tmax) or None."""
    loc = poly.to_local(poly.vertices)
    q0 = poly.to_local(p0)[0]
    dvec3 = np.asarray(direction)
    d = np.array([dvec3 @ poly.e1, dvec3 @ poly.e2])
    m = len(loc)
    # polygon interior = intersection of edge halfplanes (winding-aware)
    area2 = 0.0
    for i in range(m):
        a, b = loc[i], loc[(i + 1) % m]
        area2 += a[0] * b[1] - a[1] * b[0]
    wind = 1.0 if area2 > 0 else -1.0
    tmin, tmax = -np.inf, np.inf
    for i in range(m):
        a, b = loc[i], loc[(i + 1) % m]
        e = b - a
        # inward normal for CCW winding is (-e[1], e[0])
        nx, ny = -e[1] * wind, e[0] * wind
        # inside the halfplane means n . (q - a) >= 0, so the line
        # points q0 + t*d satisfy denom * t >= num
        denom = nx * d[0] + ny * d[1]
        num = nx * (a[0] - q0[0]) + ny * (a[1] - q0[1])
        if abs(denom) <= tol:
            if num > tol:
                return None  # line parallel to and outside this halfplane
            continue
        t = num / denom
        if denom > 0:
            tmin = max(tmin, t)
        else:
            tmax = min(tmax, t)
        if tmin > tmax + tol:
            return None
    if tmin > tmax:
        return None
    return tmin, tmax


def polygon_intersection(pa: Polygon3, pb: Polygon3) -> Segment3 | None:
    """Intersection segment of two convex planar polygons in 3D.

    Returns ``None`` for disjoint or point-touching polygons.  Raises
    ``ValueError`` for coplanar (or parallel-plane) inputs, whose
    intersection is not a segment; callers reject such pairs upstream.
    """
    scale = local_scale(*pa.vertices, *pb.vertices)
    d = np.cross(pa.normal, pb.normal)
    ld = np.linalg.norm(d)
    if ld <= 1e-12:
        raise ValueError("polygon_intersection: parallel or coplanar planes")
    d = d / ld
    # a point on the plane-plane line: solve the two plane equations,
    # pinning the coordinate axis most aligned with the line direction
    oa = pa.plane_offset()
    ob = pb.plane_offset()
    k = int(np.argmax(np.abs(d)))
    idx = [i for i in range(3) if i != k]
    m = np.array([[pa.normal[idx[0]], pa.normal[idx[1]]],
                  [pb.normal[idx[0]], pb.normal[idx[1]]]])
    rhs = np.array([oa, ob])
    sol = np.linalg.solve(m, rhs)
    p0 = np.zeros(3)
    p0[idx[0]] = sol[0]
    p0[idx[1]] = sol[1]

    tol = 1e-12 * scale
    ia = _poly_line_interval(pa, p0, d, tol)
    if ia is None:
        return None
    ib = _poly_line_interval(pb, p0, d, tol)
    if ib is None:
        return None
    t0 = max(ia[0], ib[0])
    t1 = min(ia[1], ib[1])
    if t1 - t0 <= 1e-12 * scale:
        return None
    return Segment3(a=p0 + t0 * d, b=p0 + t1 * d)


# ---------------------------------------------------------------------------
# distances
# ---------------------------------------------------------------------------

def point_segment_distance(p, a, b) -> float:
    p = _as_point(p)
    a = _as_point(a)
    b = _as_point(b)
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return float(np.linalg.norm(p - a))
    t = float((p - a) @ ab) / denom
    t = min(1.0, max(0.0, t))
    return float(np.linalg.norm(p - (a + t * ab)))


def segment_segment_closest(p1, q1, p2, q2) -> tuple[float, float, float]:
    """Closest approach of segments [p1,q1] and [p2,q2].

    Returns (s, t, distance) with the closest points at p1 + s*(q1-p1)
    and p2 + t*(q2-p2), parameters clamped to [0, 1].
    """
    p1 = _as_point(p1)
    q1 = _as_point(q1)
    p2 = _as_point(p2)
    q2 = _as_point(q2)
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = float(d1 @ d1)
    e = float(d2 @ d2)
    f = float(d2 @ r)
    if a == 0.0 and e == 0.0:
        return 0.0, 0.0, float(np.linalg.norm(r))
    if a == 0.0:
        t = min(1.0, max(0.0, f / e))
        return 0.0, t, float(np.linalg.norm(p1 - (p2 + t * d2)))
    c = float(d1 @ r)
    if e == 0.0:
        s = min(1.0, max(0.0, -c / a))
        return s, 0.0, float(np.linalg.norm(p1 + s * d1 - p2))
    b = float(d1 @ d2)
    denom = a * e - b * b
    if denom > 0.0:
        s = min(1.0, max(0.0, (b * f - c * e) / denom))
    else:
        s = 0.0
    t = (b * s + f) / e
    if t < 0.0:
        t = 0.0
        s = min(1.0, max(0.0, -c / a))
    elif t > 1.0:
        t = 1.0
        s = min(1.0, max(0.0, (b - c) / a))
    return s, t, float(np.linalg.norm(p1 + s * d1 - (p2 + t * d2)))


def segment_segment_distance(p1, q1, p2, q2) -> float:
    """Minimum distance between segments [p1,q1] and [p2,q2]."""
    return segment_segment_closest(p1, q1, p2, q2)[2]


def point_polygon_distance(p, poly: Polygon3) -> float:
    """Distance from a point to a convex polygon (interior included)."""
    p = _as_point(p)
    off = float((p - poly.centroid) @ poly.normal)
    proj = p - off * poly.normal
    if poly.contains_point(proj):
        return abs(off)
    return poly.boundary_distance(p)


def polygon_polygon_distance(pa: Polygon3, pb: Polygon3) -> float:
    """Minimum distance between two convex polygons (with interiors).

    Zero (or nearly so) when they intersect.
    """
    try:
        seg = polygon_intersection(pa, pb)
        if seg is not None:
            return 0.0
    except ValueError:
        pass  # coplanar/parallel handled by the edge and face terms below
    best = np.inf
    va, vb = pa.vertices, pb.vertices
    na, nb = len(va), len(vb)
    for i in range(na):
        a0, a1 = va[i], va[(i + 1) % na]
        for j in range(nb):
            b0, b1 = vb[j], vb[(j + 1) % nb]
            d = segment_segment_distance(a0, a1, b0, b1)
            if d < best:
                best = d
    for i in range(na):
        d = point_polygon_distance(va[i], pb)
        if d < best:
            best = d
    for j in range(nb):
        d = point_polygon_distance(vb[j], pa)
        if d < best:
            best = d
    return float(best)


# ---------------------------------------------------------------------------
# spatial grid acceleration
# ---------------------------------------------------------------------------

class SpatialGrid:
    """Uniform hash grid over a point set for range queries.

    Pure acceleration: query results are exact (candidates are filtered
    with exact arithmetic before being returned).
    """

    def __init__(self, points, cell_size: float):
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError("SpatialGrid expects an (n, 3) array")
        if cell_size <= 0.0:
            raise ValueError("cell_size must be positive")
        self.points = pts
        self.cell = float(cell_size)
        if len(pts) == 0:
            self.origin = np.zeros(3)
            self._table: dict[tuple[int, int, int], np.ndarray] = {}
            return
        self.origin = pts.min(axis=0)
        keys = np.floor((pts - self.origin) / self.cell).astype(np.int64)
        order = np.lexsort((keys[:, 2], keys[:, 1], keys[:, 0]))
        skeys = keys[order]
        breaks = np.nonzero(np.any(np.diff(skeys, axis=0) != 0, axis=1))[0] + 1
        starts = np.concatenate([[0], breaks, [len(skeys)]])
        self._table = {}
        for s, e in zip(starts[:-1], starts[1:]):
            k = (int(skeys[s, 0]), int(skeys[s, 1]), int(skeys[s, 2]))
            self._table[k] = order[s:e]
        self._kmin = keys.min(axis=0)
        self._kmax = keys.max(axis=0)

    def query_ball(self, center, radius: float) -> np.ndarray:
        """Indices of all points within ``radius`` of ``center`` (exact)."""
        if len(self.points) == 0:
            return np.zeros(0, dtype=np.int64)
        c = np.asarray(center, dtype=np.float64)
        lo = np.floor((c - radius - self.origin) / self.cell).astype(np.int64)
        hi = np.floor((c + radius - self.origin) / self.cell).astype(np.int64)
        chunks = []
        for i in range(lo[0], hi[0] + 1):
            for j in range(lo[1], hi[1] + 1):
                for k in range(lo[2], hi[2] + 1):
                    got = self._table.get((i, j, k))
                    if got is not None:
                        chunks.append(got)
        if not chunks:
            return np.zeros(0, dtype=np.int64)
        cand = np.concatenate(chunks)
        d2 = np.einsum("ij,ij->i", self.points[cand] - c, self.points[cand] - c)
        return cand[d2 <= radius * radius]

    def nearest_distance(self, p) -> float:
        """Exact minimum distance from p to the point set.

        Expands Chebyshev rings of cells around p; points in an
        unexplored ring m are at least ``(m - 1) * cell`` away, which
        bounds when the search may stop.
        """
        if len(self.points) == 0:
            return np.inf
        c = np.asarray(p, dtype=np.float64)
        base = np.floor((c - self.origin) / self.cell).astype(np.int64)
        max_ring = int(max(np.max(base - self._kmin), np.max(self._kmax - base),
                           0))
        best = np.inf
        for ring in range(0, max_ring + 1):
            for i in range(base[0] - ring, base[0] + ring + 1):
                for j in range(base[1] - ring, base[1] + ring + 1):
                    for k in range(base[2] - ring, base[2] + ring + 1):
                        if ring > 0 and (abs(i - base[0]) != ring
                                         and abs(j - base[1]) != ring
                                         and abs(k - base[2]) != ring):
                            continue  # interior cells already visited
                        got = self._table.get((int(i), int(j), int(k)))
                        if got is None:
                            continue
                        d = np.sqrt(np.min(np.einsum(
                            "ij,ij->i", self.points[got] - c,
                            self.points[got] - c)))
                        if d < best:
                            best = d
            if best <= ring * self.cell:
                break
        return float(best)


def point_set_distance(p, points, grid: SpatialGrid | None = None) -> float:
    """Minimum distance from p to a point cloud.

    The grid is acceleration only; with or without it the result is the
    exact minimum.  Returns ``inf`` for an empty cloud.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.size == 0:
        return np.inf
    if grid is not None:
        return grid.nearest_distance(p)
    d2 = np.einsum("ij,ij->i", pts - p, pts - p)
    return float(np.sqrt(np.min(d2)))
