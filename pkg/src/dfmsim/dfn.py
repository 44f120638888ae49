"""Fracture network generation with feature-size rejection.

Networks are built from planar square fractures whose radii follow a
truncated power law and whose unit normals follow a von Mises-Fisher
distribution.  Candidates are inserted largest first, and every
insertion is screened by feature-rejection rules (the FRAM idea): no
admitted configuration may contain a geometric feature smaller than
the meshing length scale h, where features are intersection segments,
their endpoints and crossing points, and gaps between disjoint
fractures.  Deterministic networks can also be read from JSON fixture
files, bypassing the samplers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import (Polygon3, Segment3, clip_polygon_box, plane_frame,
                       polygon_intersection, polygon_polygon_distance,
                       segment_segment_closest)


def cubic_law_permeability(aperture: float) -> float:
    """Permeability of a parallel-plate opening, a^2 / 12."""
    return aperture * aperture / 12.0


@dataclass
class FractureFamily:
    """Statistical description of one set of fractures.

    ``permeability=None`` means the cubic law ``aperture^2 / 12`` is
    applied to every sampled fracture.
    """

    mean_normal: np.ndarray
    kappa: float
    alpha: float
    r_min: float
    r_max: float
    aperture: float
    porosity: float = 1.0
    count: int = 0
    permeability: float | None = None

    def __post_init__(self):
        n = np.asarray(self.mean_normal, dtype=np.float64)
        ln = float(np.linalg.norm(n))
        if ln == 0.0:
            raise ValueError("FractureFamily: zero mean normal")
        self.mean_normal = n / ln
        if self.kappa < 0.0:
            raise ValueError("FractureFamily: kappa must be >= 0")
        if self.alpha <= 0.0:
            raise ValueError("FractureFamily: alpha must be > 0")
        if not 0.0 < self.r_min < self.r_max:
            raise ValueError("FractureFamily: need 0 < r_min < r_max")
        if self.aperture <= 0.0:
            raise ValueError("FractureFamily: aperture must be > 0")
        if not 0.0 < self.porosity <= 1.0:
            raise ValueError("FractureFamily: porosity must be in (0, 1]")
        if self.count < 0:
            raise ValueError("FractureFamily: count must be >= 0")


@dataclass
class Fracture:
    """One planar fracture: a convex polygon with hydraulic properties."""

    id: int
    polygon: Polygon3
    aperture: float
    permeability: float
    porosity: float

    def __post_init__(self):
        if self.aperture <= 0.0:
            raise ValueError("Fracture: aperture must be > 0")
        if self.permeability <= 0.0:
            raise ValueError("Fracture: permeability must be > 0")
        if not 0.0 < self.porosity <= 1.0:
            raise ValueError("Fracture: porosity must be in (0, 1]")

    @property
    def center(self) -> np.ndarray:
        return self.polygon.centroid


@dataclass
class Intersection:
    """Intersection segment between fractures ``a`` and ``b`` (a < b)."""

    a: int
    b: int
    segment: Segment3


@dataclass
class FractureNetwork:
    domain_lo: np.ndarray
    domain_hi: np.ndarray
    h: float
    fractures: list[Fracture] = field(default_factory=list)
    intersections: list[Intersection] = field(default_factory=list)

    def __post_init__(self):
        self.domain_lo = np.asarray(self.domain_lo, dtype=np.float64)
        self.domain_hi = np.asarray(self.domain_hi, dtype=np.float64)
        if not np.all(self.domain_hi > self.domain_lo):
            raise ValueError("FractureNetwork: empty domain box")
        if self.h <= 0.0:
            raise ValueError("FractureNetwork: h must be > 0")

    def segments_on(self, frac_id: int) -> list[Intersection]:
        """All intersection records involving one fracture."""
        return [x for x in self.intersections
                if x.a == frac_id or x.b == frac_id]


# ---------------------------------------------------------------------------
# samplers
# ---------------------------------------------------------------------------

def sample_radius(family: FractureFamily, u: float) -> float:
    """Truncated power-law radius by inverse CDF, u in [0, 1)."""
    ratio = (family.r_min / family.r_max) ** family.alpha
    return family.r_min * (1.0 - u * (1.0 - ratio)) ** (-1.0 / family.alpha)


def sample_orientation(family: FractureFamily,
                       rng: np.random.Generator) -> np.ndarray:
    """Unit normal drawn from von Mises-Fisher(mean_normal, kappa).

    Uses Wood's rejection scheme for the polar cosine; kappa = 0
    degenerates to the uniform distribution on the sphere without a
    special case.
    """
    kappa = float(family.kappa)
    # conjugate form of -kappa + sqrt(kappa^2 + 1), stable for large kappa
    b = 1.0 / (kappa + math.hypot(kappa, 1.0))
    x0 = (1.0 - b) / (1.0 + b)
    c = kappa * x0 + 2.0 * math.log1p(-x0 * x0)
    while True:
        z = rng.random()
        u = rng.random()
        w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z)
        if kappa * w + 2.0 * math.log1p(-x0 * w) - c >= math.log(u):
            break
    phi = 2.0 * math.pi * rng.random()
    s = math.sqrt(max(0.0, 1.0 - w * w))
    local = np.array([s * math.cos(phi), s * math.sin(phi), w])

    mu = family.mean_normal
    # rotate the pole e_z onto mu (Rodrigues about e_z x mu)
    axis = np.array([-mu[1], mu[0], 0.0])
    sin_a = float(np.linalg.norm(axis))
    cos_a = float(mu[2])
    if sin_a < 1e-15:
        return local if cos_a > 0.0 else local * np.array([1.0, -1.0, -1.0])
    axis /= sin_a
    k_cross = np.cross(axis, local)
    k_dot = float(axis @ local)
    out = local * cos_a + k_cross * sin_a + axis * k_dot * (1.0 - cos_a)
    return out / np.linalg.norm(out)


def square_fracture(center, normal, radius: float, angle: float,
                    frac_id: int, aperture: float, porosity: float,
                    permeability: float | None = None) -> Fracture:
    """Square of side 2*radius centered on ``center`` with the given
    plane normal, rotated in-plane by ``angle``."""
    e1, e2 = plane_frame(normal)
    ca, sa = math.cos(angle), math.sin(angle)
    u = ca * e1 + sa * e2
    v = -sa * e1 + ca * e2
    c = np.asarray(center, dtype=np.float64)
    verts = np.array([c + radius * (u + v), c + radius * (-u + v),
                      c + radius * (-u - v), c + radius * (u - v)])
    k = cubic_law_permeability(aperture) if permeability is None \
        else permeability
    return Fracture(id=frac_id, polygon=Polygon3(verts), aperture=aperture,
                    permeability=k, porosity=porosity)


# ---------------------------------------------------------------------------
# intersections
# ---------------------------------------------------------------------------

def _pair_intersection(fa: Fracture, fb: Fracture,
                       tol: float) -> Segment3 | None:
    """Intersection segment of two fractures, or None.

    Raises ``ValueError`` for a coplanar overlapping pair, whose
    intersection is two-dimensional.
    """
    pa, pb = fa.polygon, fb.polygon
    if np.linalg.norm(np.cross(pa.normal, pb.normal)) <= 1e-12:
        off = abs(float((pb.centroid - pa.centroid) @ pa.normal))
        if off <= tol and polygon_polygon_distance(pa, pb) <= tol:
            raise ValueError(
                f"coplanar overlapping fractures {fa.id} and {fb.id}")
        return None
    return polygon_intersection(pa, pb)


def compute_intersections(fractures: list[Fracture],
                          tol: float = 1e-12) -> list[Intersection]:
    """All pairwise intersection segments, each clipped to both polygons."""
    out = []
    for i in range(len(fractures)):
        for j in range(i + 1, len(fractures)):
            scale = max(1.0, float(np.max(np.abs(fractures[i].polygon.vertices))),
                        float(np.max(np.abs(fractures[j].polygon.vertices))))
            seg = _pair_intersection(fractures[i], fractures[j], tol * scale)
            if seg is not None:
                out.append(Intersection(a=fractures[i].id,
                                        b=fractures[j].id, segment=seg))
    return out


# ---------------------------------------------------------------------------
# feature rejection
# ---------------------------------------------------------------------------

REJECT_SHORT_INTERSECTION = "short-intersection"
REJECT_CLOSE_SEGMENTS = "close-segments"
REJECT_ENDPOINT_NEAR_RIM = "endpoint-near-rim"
REJECT_CLOSE_DISJOINT = "close-disjoint"
REJECT_COPLANAR = "coplanar"
REJECT_SMALL_ANGLE = "small-angle"


def _crossing_admissible(sa: Segment3, sb: Segment3, h: float, tol: float,
                         min_angle_deg: float) -> tuple[bool, np.ndarray | None]:
    """Admissibility of one coplanar segment pair.

    Segments further apart than h are fine.  Segments that actually
    meet are fine only when they cross at a healthy angle and no
    endpoint (other than the crossing point itself) sits within h of
    the crossing; anything else closer than h is a small feature.
    Returns (ok, crossing point or None).
    """
    s, t, d = segment_segment_closest(sa.a, sa.b, sb.a, sb.b)
    if d >= h:
        return True, None
    if d > tol:
        return False, None
    x = sa.point_at(s)
    ua = sa.b - sa.a
    ub = sb.b - sb.a
    cosang = abs(float(ua @ ub)) / (np.linalg.norm(ua) * np.linalg.norm(ub))
    if math.degrees(math.acos(min(1.0, cosang))) < min_angle_deg:
        return False, None
    for e in (sa.a, sa.b, sb.a, sb.b):
        r = float(np.linalg.norm(e - x))
        if tol < r < h:
            return False, None
    return True, x


def _plane_features_ok(segments: list[Segment3], h: float, tol: float,
                       min_angle_deg: float) -> bool:
    """Feature-size screen for all intersection segments on one plane."""
    crossings = []
    for i in range(len(segments)):
        for j in range(i + 1, len(segments)):
            ok, x = _crossing_admissible(segments[i], segments[j], h, tol,
                                         min_angle_deg)
            if not ok:
                return False
            if x is not None:
                crossings.append(x)
    for i in range(len(crossings)):
        for j in range(i + 1, len(crossings)):
            r = float(np.linalg.norm(crossings[i] - crossings[j]))
            if tol < r < h:
                return False
    return True


def _evaluate_candidate(candidate: Fracture, network: FractureNetwork,
                        min_angle_deg: float
                        ) -> tuple[bool, str, list[Intersection]]:
    h = network.h
    tol = 1e-9 * h
    new = []
    partners = []
    for f in network.fractures:
        try:
            seg = _pair_intersection(candidate, f, tol)
        except ValueError:
            return False, REJECT_COPLANAR, []
        if seg is None:
            if polygon_polygon_distance(candidate.polygon, f.polygon) < h:
                return False, REJECT_CLOSE_DISJOINT, []
            continue
        cosang = abs(float(candidate.polygon.normal @ f.polygon.normal))
        if math.degrees(math.acos(min(1.0, cosang))) < min_angle_deg:
            return False, REJECT_SMALL_ANGLE, []
        if seg.length < h:
            return False, REJECT_SHORT_INTERSECTION, []
        for p in (seg.a, seg.b):
            for poly in (candidate.polygon, f.polygon):
                d = poly.boundary_distance(p)
                if tol < d < h:
                    return False, REJECT_ENDPOINT_NEAR_RIM, []
        new.append(Intersection(a=min(candidate.id, f.id),
                                b=max(candidate.id, f.id), segment=seg))
        partners.append(f.id)

    # candidate plane carries all new segments; each partner plane gains
    # one new segment next to that fracture's existing ones
    if not _plane_features_ok([x.segment for x in new], h, tol,
                              min_angle_deg):
        return False, REJECT_CLOSE_SEGMENTS, []
    for fid, x in zip(partners, new):
        existing = [e.segment for e in network.segments_on(fid)]
        if not _plane_features_ok(existing + [x.segment], h, tol,
                                  min_angle_deg):
            return False, REJECT_CLOSE_SEGMENTS, []
    return True, "", new


def fram_accept(candidate: Fracture, network: FractureNetwork,
                min_angle_deg: float = 10.0) -> tuple[bool, str]:
    """Screen one candidate fracture against the current network.

    Returns (True, "") or (False, reason), where reason is one of the
    REJECT_* constants.
    """
    ok, reason, _ = _evaluate_candidate(candidate, network, min_angle_deg)
    return ok, reason


def network_self_check(network: FractureNetwork,
                       min_angle_deg: float = 10.0) -> list[tuple[int, str]]:
    """Replay the acceptance screen for every fracture against the rest.

    Returns a list of (fracture id, reason) violations; empty means the
    network is feature-admissible as a whole.
    """
    bad = []
    for i, f in enumerate(network.fractures):
        rest = FractureNetwork(
            domain_lo=network.domain_lo, domain_hi=network.domain_hi,
            h=network.h,
            fractures=[g for j, g in enumerate(network.fractures) if j != i])
        rest.intersections = [x for x in network.intersections
                              if x.a != f.id and x.b != f.id]
        ok, reason = fram_accept(f, rest, min_angle_deg)
        if not ok:
            bad.append((f.id, reason))
    return bad


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------

def _clip_quality_ok(verts: np.ndarray, h: float) -> bool:
    """Meshability screen for a domain-clipped polygon: no edge shorter
    than h and area at least h^2."""
    if len(verts) < 3:
        return False
    edges = np.linalg.norm(np.roll(verts, -1, axis=0) - verts, axis=1)
    if edges.min() < h:
        return False
    s = np.zeros(3)
    for i in range(1, len(verts) - 1):
        s += np.cross(verts[i] - verts[0], verts[i + 1] - verts[0])
    return 0.5 * float(np.linalg.norm(s)) >= h * h


def generate_network(families: list[FractureFamily], domain_lo, domain_hi,
                     h: float, seed: int, max_attempts: int = 400,
                     min_angle_deg: float = 10.0) -> FractureNetwork:
    """Sample a feature-admissible fracture network.

    Initial radii are drawn for every requested fracture, slots are
    ordered by descending radius so large fractures are placed first,
    and each slot is then sampled until its candidate passes both the
    domain-clip quality screen and the feature-rejection screen.
    Raises ``RuntimeError`` when a slot exhausts ``max_attempts``.
    """
    network = FractureNetwork(domain_lo=domain_lo, domain_hi=domain_hi, h=h)
    lo, hi = network.domain_lo, network.domain_hi
    rng = np.random.default_rng(seed)

    slots = []
    for fam in families:
        for _ in range(fam.count):
            slots.append((fam, sample_radius(fam, rng.random())))
    order = np.argsort([-r for _, r in slots], kind="stable")

    reasons: dict[str, int] = {}
    next_id = 0
    for k in order:
        fam, radius = slots[k]
        placed = False
        for _ in range(max_attempts):
            normal = sample_orientation(fam, rng)
            center = lo + rng.random(3) * (hi - lo)
            angle = 2.0 * math.pi * rng.random()
            e1, e2 = plane_frame(normal)
            ca, sa = math.cos(angle), math.sin(angle)
            u = ca * e1 + sa * e2
            v = -sa * e1 + ca * e2
            square = np.array([center + radius * (u + v),
                               center + radius * (-u + v),
                               center + radius * (-u - v),
                               center + radius * (u - v)])
            verts = clip_polygon_box(square, lo, hi)
            if not _clip_quality_ok(verts, h):
                reasons["clip-quality"] = reasons.get("clip-quality", 0) + 1
                radius = sample_radius(fam, rng.random())
                continue
            k_f = cubic_law_permeability(fam.aperture) \
                if fam.permeability is None else fam.permeability
            cand = Fracture(id=next_id, polygon=Polygon3(verts),
                            aperture=fam.aperture, permeability=k_f,
                            porosity=fam.porosity)
            ok, reason, new = _evaluate_candidate(cand, network,
                                                  min_angle_deg)
            if not ok:
                reasons[reason] = reasons.get(reason, 0) + 1
                radius = sample_radius(fam, rng.random())
                continue
            network.fractures.append(cand)
            network.intersections.extend(new)
            next_id += 1
            placed = True
            break
        if not placed:
            dominant = max(reasons, key=reasons.get) if reasons else "none"
            raise RuntimeError(
                f"fracture placement failed after {max_attempts} attempts; "
                f"dominant rejection reason: {dominant} "
                f"({reasons.get(dominant, 0)} hits)")
    return network


# ---------------------------------------------------------------------------
# fixtures
# ---------------------------------------------------------------------------

def save_network(network: FractureNetwork, path) -> None:
    """Write a network fixture as JSON (deterministic bytes)."""
    doc = {
        "domain": {"lo": list(network.domain_lo),
                   "hi": list(network.domain_hi)},
        "h": network.h,
        "fractures": [
            {"id": f.id,
             "vertices": [list(v) for v in f.polygon.vertices],
             "aperture": f.aperture,
             "permeability": f.permeability,
             "porosity": f.porosity}
            for f in network.fractures
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_network(path) -> FractureNetwork:
    """Read a network fixture and recompute its intersections.

    Fracture ids must be 0..n-1 in listing order so they double as
    indices everywhere downstream.
    """
    doc = json.loads(Path(path).read_text())
    fractures = []
    for i, rec in enumerate(doc["fractures"]):
        if rec["id"] != i:
            raise ValueError(
                f"fixture fracture ids must be 0..n-1 in order, got "
                f"{rec['id']} at position {i}")
        fractures.append(Fracture(
            id=i, polygon=Polygon3(np.asarray(rec["vertices"], dtype=np.float64)),
            aperture=float(rec["aperture"]),
            permeability=float(rec["permeability"]),
            porosity=float(rec["porosity"])))
    network = FractureNetwork(
        domain_lo=np.asarray(doc["domain"]["lo"], dtype=np.float64),
        domain_hi=np.asarray(doc["domain"]["hi"], dtype=np.float64),
        h=float(doc["h"]), fractures=fractures)
    network.intersections = compute_intersections(fractures)
    return network
