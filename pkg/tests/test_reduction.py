"""Backbone partition and secondary-fracture upscaling."""

import networkx as nx
import numpy as np
import pytest

from dfmsim.dfn import Fracture, FractureNetwork, compute_intersections
from dfmsim.geometry import Polygon3, clip_polygon_box, polygon_area_3d
from dfmsim.reduction import (INFLOW, OUTFLOW, FractureGraph, build_graph,
                              compute_backbone, upscale_secondary)
from dfmsim.volume_mesh import build_background, reconnect

_PHANTOM = 10 ** 6


def oracle_backbone(adj, pin=True):
    """Textbook k-core route: exempt nodes get a phantom triangle so
    they can never fall out of the 2-core."""
    g = nx.Graph()
    for u, vs in adj.items():
        g.add_node(u)
        for v in vs:
            g.add_edge(u, v)
    fractures = sorted(u for u in g.nodes if u >= 0)
    if not pin:
        g.remove_nodes_from([u for u in (INFLOW, OUTFLOW) if u in g])
        core = nx.k_core(g, 2)
        primary = sorted(u for u in core.nodes if u >= 0)
        return primary, sorted(set(fractures) - set(primary))
    for i, virt in enumerate((INFLOW, OUTFLOW)):
        p = _PHANTOM + 2 * i
        g.add_edge(virt, p)
        g.add_edge(virt, p + 1)
        g.add_edge(p, p + 1)
    core = nx.k_core(g, 2)
    comp = nx.node_connected_component(core, INFLOW)
    if OUTFLOW not in comp:
        return None
    primary = sorted(u for u in comp if 0 <= u < _PHANTOM)
    return primary, sorted(set(fractures) - set(primary))


def random_graph(seed):
    rng = np.random.default_rng(seed)
    g = FractureGraph()
    g.add_node(INFLOW)
    g.add_node(OUTFLOW)
    n = 50
    for u in range(n):
        g.add_node(u)
    for u in range(n):
        for v in range(u + 1, n):
            if rng.random() < 0.05:
                g.add_edge(u, v)
    for virt in (INFLOW, OUTFLOW):
        for u in rng.choice(n, size=3, replace=False):
            g.add_edge(virt, int(u))
    return g


def quad(verts, frac_id, aperture=1e-5, permeability=8.33e-12,
         porosity=1.0):
    return Fracture(id=frac_id, polygon=Polygon3(np.asarray(verts, float)),
                    aperture=aperture, permeability=permeability,
                    porosity=porosity)


def network_of(fractures, h=1.0, lo=(0, 0, 0), hi=(10, 10, 10)):
    net = FractureNetwork(domain_lo=np.array(lo, float),
                          domain_hi=np.array(hi, float), h=h)
    net.fractures = list(fractures)
    net.intersections = compute_intersections(net.fractures)
    return net


class TestBuildGraph:
    def test_chain_with_boundary_contacts(self):
        a = quad([(0, 3, 5), (4, 3, 5), (4, 7, 5), (0, 7, 5)], 0)
        b = quad([(3, 4, 3), (3, 6, 3), (3, 6, 7), (3, 4, 7)], 1)
        c = quad([(2, 4, 6), (10, 4, 6), (10, 6, 6), (2, 6, 6)], 2)
        g = build_graph(network_of([a, b, c]))
        assert g.edge_count() == 4
        assert g.adj[INFLOW] == {0}
        assert g.adj[OUTFLOW] == {2}
        assert g.adj[1] == {0, 2}

    def test_isolated_fracture_is_isolated_node(self):
        f = quad([(4, 4, 5), (6, 4, 5), (6, 6, 5), (4, 6, 5)], 0)
        g = build_graph(network_of([f]))
        assert g.adj[0] == set()
        assert g.edge_count() == 0

    def test_edge_count_matches_intersections(self):
        a = quad([(0, 3, 5), (4, 3, 5), (4, 7, 5), (0, 7, 5)], 0)
        b = quad([(3, 4, 3), (3, 6, 3), (3, 6, 7), (3, 4, 7)], 1)
        c = quad([(2, 4, 6), (10, 4, 6), (10, 6, 6), (2, 6, 6)], 2)
        net = network_of([a, b, c])
        g = build_graph(net, inflow="ymin", outflow="ymax")
        contacts = 0
        for f in net.fractures:
            for value in (0.0, 10.0):
                if np.any(np.abs(f.polygon.vertices[:, 1] - value) < 1e-9):
                    contacts += 1
        assert g.edge_count() == len(net.intersections) + contacts

    def test_self_loop_rejected(self):
        g = FractureGraph()
        with pytest.raises(ValueError):
            g.add_edge(3, 3)


class TestBackbone:
    def test_path_graph_all_primary(self):
        g = FractureGraph()
        g.add_edge(INFLOW, 0)
        g.add_edge(0, 1)
        g.add_edge(1, OUTFLOW)
        primary, secondary = compute_backbone(g)
        assert primary == [0, 1]
        assert secondary == []

    def test_dangling_fracture_is_secondary(self):
        a = quad([(0, 3, 5), (6, 3, 5), (6, 7, 5), (0, 7, 5)], 0)
        b = quad([(5, 4, 3), (5, 6, 3), (5, 6, 10), (5, 4, 10)], 1)
        c = quad([(4, 4, 8), (6, 4, 8), (6, 6, 8), (4, 6, 8)], 2)
        net = network_of([a, b, c])
        g = build_graph(net, inflow="xmin", outflow="zmax")
        primary, secondary = compute_backbone(g)
        assert primary == [0, 1]
        assert secondary == [2]

    def test_no_percolation_raises(self):
        g = FractureGraph()
        g.add_node(OUTFLOW)
        g.add_edge(INFLOW, 0)
        g.add_edge(0, 1)
        with pytest.raises(RuntimeError, match="percolating"):
            compute_backbone(g)

    def test_matches_kcore_oracle(self):
        for seed in range(50):
            g = random_graph(seed)
            want = oracle_backbone(g.adj)
            if want is None:
                with pytest.raises(RuntimeError, match="percolating"):
                    compute_backbone(g)
                continue
            assert compute_backbone(g) == want

    def test_matches_kcore_oracle_unpinned(self):
        for seed in range(50):
            g = random_graph(seed)
            want = oracle_backbone(g.adj, pin=False)
            assert compute_backbone(g, pin_to_boundaries=False) == want

    def test_primary_is_a_fixed_point(self):
        for seed in range(20):
            g = random_graph(seed)
            try:
                primary, _ = compute_backbone(g)
            except RuntimeError:
                continue
            sub = FractureGraph()
            keep = set(primary) | {INFLOW, OUTFLOW}
            for u in keep:
                sub.add_node(u)
                for v in g.adj[u]:
                    if v in keep:
                        sub.add_edge(u, v)
            again, gone = compute_backbone(sub)
            assert again == primary
            assert gone == []

    def test_partition_covers_all_fractures(self):
        for seed in range(20):
            g = random_graph(seed)
            try:
                primary, secondary = compute_backbone(g)
            except RuntimeError:
                continue
            assert not set(primary) & set(secondary)
            assert sorted(primary + secondary) == g.fracture_nodes()


class TestUpscaling:
    def unit_tet(self):
        pts = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])
        return reconnect(pts, np.zeros((0, 3)))

    def test_single_tet_hand_value(self):
        vol = self.unit_tet()
        f = quad([(-2, -2, 0.25), (2, -2, 0.25), (2, 2, 0.25),
                  (-2, 2, 0.25)], 0, aperture=1e-4, permeability=5e-10)
        props = upscale_secondary([f], vol, phi_m=0.01, k_m=1e-15)
        assert len(props) == 1
        p = props[0]
        assert p.cell_id == 0
        # cross-section at z=0.25 is the triangle with legs 0.75
        w = (0.75 ** 2 / 2.0) * 1e-4 / (1.0 / 6.0)
        assert p.porosity_eq == pytest.approx(0.01 + w, rel=1e-12)
        want = np.diag([1e-15 + w * 5e-10, 1e-15 + w * 5e-10, 1e-15])
        assert np.allclose(p.permeability_eq, want, rtol=1e-12, atol=0)

    def test_fracture_missing_all_tets(self):
        vol = self.unit_tet()
        f = quad([(-2, -2, 5), (2, -2, 5), (2, 2, 5), (-2, 2, 5)], 0)
        assert upscale_secondary([f], vol, phi_m=0.01, k_m=1e-15) == []

    def test_two_fractures_accumulate_on_one_cell(self):
        vol = self.unit_tet()
        fa = quad([(-2, -2, 0.25), (2, -2, 0.25), (2, 2, 0.25),
                   (-2, 2, 0.25)], 0, aperture=1e-4)
        fb = quad([(-2, -2, 0.5), (2, -2, 0.5), (2, 2, 0.5),
                   (-2, 2, 0.5)], 1, aperture=2e-4)
        props = upscale_secondary([fa, fb], vol, phi_m=0.0, k_m=1e-15)
        wa = (0.75 ** 2 / 2.0) * 1e-4 * 6.0
        wb = (0.5 ** 2 / 2.0) * 2e-4 * 6.0
        assert len(props) == 1
        assert props[0].porosity_eq == pytest.approx(wa + wb, rel=1e-12)

    def test_porosity_clamped_with_warning(self):
        vol = self.unit_tet()
        f = quad([(-2, -2, 0.25), (2, -2, 0.25), (2, 2, 0.25),
                  (-2, 2, 0.25)], 0, aperture=1.0)
        with pytest.warns(UserWarning, match="clamped"):
            props = upscale_secondary([f], vol, phi_m=0.01, k_m=1e-15)
        assert props[0].porosity_eq == 1.0

    def random_clipped_fractures(self, seed, count=10):
        rng = np.random.default_rng(seed)
        out = []
        for i in range(count):
            center = rng.uniform(1, 9, 3)
            normal = rng.normal(size=3)
            normal /= np.linalg.norm(normal)
            u = np.cross(normal, [1.0, 0.3, 0.2])
            u /= np.linalg.norm(u)
            v = np.cross(normal, u)
            r = rng.uniform(1.5, 4.0)
            ring = [center + r * (np.cos(t) * u + np.sin(t) * v)
                    for t in np.linspace(0, 2 * np.pi, 5)[:-1]]
            clipped = clip_polygon_box(np.asarray(ring), (0, 0, 0),
                                       (10, 10, 10))
            if len(clipped) >= 3 and polygon_area_3d(clipped) > 1e-6:
                out.append(quad(clipped, len(out),
                                aperture=float(rng.uniform(1e-5, 1e-3))))
        return out

    def test_pore_volume_conservation(self):
        vol = build_background((0, 0, 0), (10, 10, 10), h=2.0)
        fractures = self.random_clipped_fractures(4)
        assert len(fractures) >= 8
        phi_m = 0.01
        props = upscale_secondary(fractures, vol, phi_m=phi_m, k_m=1e-15)
        vols = vol.tet_volumes()
        got = sum((p.porosity_eq - phi_m) * vols[p.cell_id] for p in props)
        want = sum(polygon_area_3d(f.polygon.vertices) * f.aperture
                   for f in fractures)
        assert got == pytest.approx(want, rel=1e-10)

    def test_tensor_symmetric_and_bounded_below(self):
        vol = build_background((0, 0, 0), (10, 10, 10), h=2.0)
        fractures = self.random_clipped_fractures(11)
        base = np.diag([1e-15, 2e-15, 3e-15])
        props = upscale_secondary(fractures, vol, phi_m=0.01, k_m=base)
        assert len(props) > 100
        for p in props:
            assert np.array_equal(p.permeability_eq, p.permeability_eq.T)
            assert np.linalg.eigvalsh(p.permeability_eq).min() \
                >= 1e-15 * (1 - 1e-12)
