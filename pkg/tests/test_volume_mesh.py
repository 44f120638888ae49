"""Matrix meshing: background lattice, excavation, reconnection."""

import numpy as np
import pytest

from dfmsim.delaunay import count_insphere_violations
from dfmsim.dfn import FractureNetwork, compute_intersections, square_fracture
from dfmsim.surface_mesh import build_surface_mesh
from dfmsim.volume_mesh import (BOUNDARY_TAG_NAMES, build_background,
                                build_volume_mesh, excavate,
                                murphy_violations, reconnect,
                                recover_correspondence, tag_boundaries)


def make_square(center, normal, half, frac_id, angle=0.0):
    return square_fracture(center, normal, half, angle, frac_id,
                           aperture=1e-5, porosity=1.0)


def network_with(fractures, h=1.0, lo=(0, 0, 0), hi=(10, 10, 10)):
    net = FractureNetwork(domain_lo=np.array(lo, float),
                          domain_hi=np.array(hi, float), h=h)
    net.fractures = list(fractures)
    net.intersections = compute_intersections(net.fractures)
    return net


def tet_edge_set(tets):
    pairs = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
    edges = set()
    for t in tets:
        for i, j in pairs:
            a, b = int(t[i]), int(t[j])
            edges.add((min(a, b), max(a, b)))
    return edges


def brute_force_excavation(points, surface, h):
    """Independent double loop over (vertex, sphere) pairs."""
    keep = np.ones(len(points), dtype=bool)
    for t in surface.triangles:
        a, b, c = surface.vertices[t]
        u, v = b - a, c - a
        w = np.cross(u, v)
        off = (np.cross(w, u) * float(v @ v)
               + np.cross(v, w) * float(u @ u)) / (2.0 * float(w @ w))
        center, radius = a + off, np.linalg.norm(off)
        keep &= np.linalg.norm(points - center, axis=1) > radius
    for sv in surface.vertices:
        keep &= np.linalg.norm(points - sv, axis=1) > h / 2.0
    return keep


class TestBackground:
    def test_unit_cube_edge_band(self):
        h = 0.25
        mesh = build_background((0, 0, 0), (1, 1, 1), h=h)
        edges = np.array(sorted(tet_edge_set(mesh.tets)))
        lengths = np.linalg.norm(mesh.vertices[edges[:, 0]]
                                 - mesh.vertices[edges[:, 1]], axis=1)
        assert lengths.min() >= 0.27 * h
        assert lengths.max() <= 0.65 * h

    def test_no_flat_tets(self):
        # the clamped boundary layer is the dangerous region: without
        # the in-face shift of the clamp points, clamp/center
        # quadruples are exactly cocircular and the tie-break emits
        # near-flat tets there.  min/max tet volume stays bounded by a
        # fixed factor independent of h and box shape.
        for box, h in [((1, 1, 1), 0.25), ((2, 1, 1), 0.2)]:
            mesh = build_background((0, 0, 0), box, h=h)
            vols = mesh.tet_volumes()
            assert vols.max() / vols.min() < 15.0

    def test_interior_edges_in_spec_band(self):
        h = 0.25
        mesh = build_background((0, 0, 0), (1, 1, 1), h=h)
        on_boundary = (np.isclose(mesh.vertices, 0.0, atol=1e-12)
                       | np.isclose(mesh.vertices, 1.0, atol=1e-12)).any(1)
        edges = np.array(sorted(tet_edge_set(mesh.tets)))
        interior = ~on_boundary[edges[:, 0]] & ~on_boundary[edges[:, 1]]
        lengths = np.linalg.norm(mesh.vertices[edges[interior, 0]]
                                 - mesh.vertices[edges[interior, 1]], axis=1)
        assert lengths.min() >= 0.4 * h
        assert lengths.max() <= 0.75 * h

    def test_volume_fills_any_box(self):
        mesh = build_background((0, 0, 0), (2, 1.5, 1), h=0.25)
        box = 2 * 1.5 * 1
        assert abs(mesh.tet_volumes().sum() - box) <= 1e-8 * box
        assert mesh.tet_volumes().min() > 0

    def test_deterministic(self):
        a = build_background((0, 0, 0), (1, 1, 1), h=0.25)
        b = build_background((0, 0, 0), (1, 1, 1), h=0.25)
        assert np.array_equal(a.vertices, b.vertices)
        assert np.array_equal(a.tets, b.tets)

    def test_boundary_tags_close_the_box(self):
        mesh = build_background((0, 0, 0), (2, 1, 1), h=0.2)
        total = 0.0
        for tag in BOUNDARY_TAG_NAMES:
            idx = mesh.boundary_faces(tag)
            v = mesh.vertices[mesh.faces[idx]]
            areas = 0.5 * np.linalg.norm(
                np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), axis=1)
            total += float(areas.sum())
        want = 2 * (2 * 1 + 2 * 1 + 1 * 1)
        assert abs(total - want) <= 1e-8 * want
        assert len(mesh.boundary_faces()) == sum(
            len(mesh.boundary_faces(t)) for t in BOUNDARY_TAG_NAMES)

    def test_small_box_rejected(self):
        with pytest.raises(ValueError, match="4h"):
            build_background((0, 0, 0), (1, 1, 1), h=0.3)


class TestExcavate:
    def setup_method(self):
        self.net = network_with([make_square((3, 3, 3), (0, 0, 1), 1.5, 0)],
                                h=1.0, hi=(6, 6, 6))
        self.surface = build_surface_mesh(self.net)
        self.background = build_background((0, 0, 0), (6, 6, 6), h=1.0)

    def test_matches_brute_force_oracle(self):
        kept = excavate(self.background, self.surface, h=1.0)
        want = self.background.vertices[
            brute_force_excavation(self.background.vertices, self.surface,
                                   h=1.0)]
        assert np.array_equal(kept, want)

    def test_circumcenter_vertex_removed(self):
        t = self.surface.triangles[0]
        a, b, c = self.surface.vertices[t]
        u, v = b - a, c - a
        w = np.cross(u, v)
        off = (np.cross(w, u) * float(v @ v)
               + np.cross(v, w) * float(u @ u)) / (2.0 * float(w @ w))
        center = a + off
        doped = self.background
        doped.vertices[0] = center
        kept = excavate(doped, self.surface, h=1.0)
        assert not np.any(np.all(kept == center, axis=1))

    def test_far_vertex_retained(self):
        far = np.array([0.11, 0.07, 5.9])
        assert np.linalg.norm(far - np.array([3, 3, 3])) > 2.0
        doped = self.background
        doped.vertices[1] = far
        kept = excavate(doped, self.surface, h=1.0)
        assert np.any(np.all(kept == far, axis=1))

    def test_pinned_points_survive(self):
        surface_on_corner = build_surface_mesh(network_with(
            [make_square((0.4, 0.4, 0.4), (1, 1, 1), 1.2, 0)],
            h=1.0, hi=(6, 6, 6)))
        corner = np.zeros((1, 3))
        kept = excavate(self.background, surface_on_corner, h=1.0,
                        pin_points=corner)
        assert np.any(np.all(kept == corner[0], axis=1))


class TestReconnect:
    def test_four_points_one_tet(self):
        pts = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])
        mesh = reconnect(pts, np.zeros((0, 3)))
        assert len(mesh.tets) == 1
        assert mesh.tet_volumes()[0] == pytest.approx(1.0 / 6.0)

    def test_cube_corners_tie_broken(self):
        pts = np.array([[float(i & 1), float(i >> 1 & 1), float(i >> 2)]
                        for i in range(8)])
        mesh = reconnect(pts, np.zeros((0, 3)))
        assert len(mesh.tets) in (5, 6)
        assert mesh.tet_volumes().sum() == pytest.approx(1.0)
        again = reconnect(pts, np.zeros((0, 3)))
        assert np.array_equal(mesh.tets, again.tets)

    def test_random_cloud_is_delaunay(self):
        rng = np.random.default_rng(8)
        pts = rng.random((1000, 3))
        mesh = reconnect(pts, np.zeros((0, 3)))
        assert count_insphere_violations(mesh.vertices, mesh.tets,
                                         samples=200, seed=1) == 0

    def test_too_few_points(self):
        with pytest.raises(ValueError, match="4 points"):
            reconnect(np.zeros((3, 3)), np.zeros((0, 3)))

    def test_coplanar_cloud_degenerate(self):
        pts = np.column_stack([np.random.default_rng(0).random((30, 2)),
                               np.zeros(30)])
        with pytest.raises(ValueError, match="degenerate"):
            reconnect(pts, np.zeros((0, 3)))


class TestSingleFracturePipeline:
    def setup_method(self):
        self.net = network_with([make_square((3, 3, 3), (0, 0, 1), 1.5, 0)],
                                h=1.0, hi=(6, 6, 6))
        self.surface = build_surface_mesh(self.net)
        self.volume, self.corr = build_volume_mesh(
            self.surface, (0, 0, 0), (6, 6, 6), h=1.0)

    def test_full_recovery(self):
        assert self.corr.recovered_fraction == 1.0
        assert len(self.corr.misses) == 0

    def test_recovered_faces_have_identical_vertices(self):
        tri = np.sort(self.surface.triangles, axis=1)
        assert np.array_equal(self.volume.faces[self.corr.tri_face], tri)

    def test_murphy_condition_exhaustive(self):
        assert murphy_violations(self.volume, self.surface) == 0

    def test_volume_conservation(self):
        box = 6.0 ** 3
        assert abs(self.volume.tet_volumes().sum() - box) <= 1e-8 * box

    def test_positive_orientation(self):
        assert self.volume.tet_volumes().min() > 0

    def test_delaunay_audit(self):
        assert count_insphere_violations(self.volume.vertices,
                                         self.volume.tets,
                                         samples=500, seed=3) == 0

    def test_deterministic(self):
        again, _ = build_volume_mesh(self.surface, (0, 0, 0), (6, 6, 6),
                                     h=1.0)
        assert np.array_equal(self.volume.tets, again.tets)
        assert np.array_equal(self.volume.vertices, again.vertices)


class TestCrossingFracturesPipeline:
    def setup_method(self):
        a = make_square((5, 5, 5), (0, 0, 1), 2.0, 0)
        b = make_square((5, 5, 5), (1, 0, 0), 2.0, 1)
        self.net = network_with([a, b], h=1.0)
        self.surface = build_surface_mesh(self.net)
        self.volume, self.corr = build_volume_mesh(
            self.surface, (0, 0, 0), (10, 10, 10), h=1.0)

    def test_full_recovery(self):
        assert self.corr.recovered_fraction == 1.0

    def test_intersection_edges_are_tet_edges(self):
        edges = tet_edge_set(self.volume.tets)
        for a, b in self.surface.intersection_edges:
            key = (min(int(a), int(b)), max(int(a), int(b)))
            assert key in edges

    def test_murphy_condition(self):
        assert murphy_violations(self.volume, self.surface) == 0

    def test_volume_conservation(self):
        box = 1000.0
        assert abs(self.volume.tet_volumes().sum() - box) <= 1e-8 * box

    def test_boundary_closure(self):
        total = 0.0
        for tag in BOUNDARY_TAG_NAMES:
            idx = self.volume.boundary_faces(tag)
            v = self.volume.vertices[self.volume.faces[idx]]
            areas = 0.5 * np.linalg.norm(
                np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), axis=1)
            total += float(areas.sum())
        assert total == pytest.approx(600.0, rel=1e-8)
