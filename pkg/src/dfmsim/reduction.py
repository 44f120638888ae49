"""Backbone extraction and upscaling of the remaining fractures.

The fracture network is reduced before meshing: fractures that cannot
carry flow between the inflow and outflow boundaries (dead ends and
isolated clusters) are split off by taking the 2-core of the
intersection graph, with two virtual nodes pinning the core to the
flow boundaries.  The split-off fractures are not meshed; instead each
one is painted into the matrix cells it crosses as an additive
porosity and permeability contribution.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .dfn import Fracture, FractureNetwork
from .geometry import clip_polygon_halfspace, polygon_area_3d
from .volume_mesh import BOUNDARY_TAG_NAMES, VolumeMesh

__all__ = ["INFLOW", "OUTFLOW", "FractureGraph", "UpscaledCellProps",
           "build_graph", "compute_backbone", "upscale_secondary"]

INFLOW = -1
OUTFLOW = -2


@dataclass
class FractureGraph:
    """Undirected intersection graph plus two virtual boundary nodes."""

    adj: dict[int, set[int]] = field(default_factory=dict)

    def add_node(self, u: int) -> None:
        self.adj.setdefault(u, set())

    def add_edge(self, u: int, v: int) -> None:
        if u == v:
            raise ValueError("self-loop")
        self.adj.setdefault(u, set()).add(v)
        self.adj.setdefault(v, set()).add(u)

    def fracture_nodes(self) -> list[int]:
        return sorted(u for u in self.adj if u >= 0)

    def edge_count(self) -> int:
        return sum(len(v) for v in self.adj.values()) // 2


@dataclass
class UpscaledCellProps:
    cell_id: int
    porosity_eq: float
    permeability_eq: np.ndarray


def build_graph(network: FractureNetwork, inflow: str = "xmin",
                outflow: str = "xmax") -> FractureGraph:
    """One node per fracture, an edge per intersection, and edges to
    the virtual inflow/outflow nodes for fractures whose polygon
    touches that box face."""
    g = FractureGraph()
    g.add_node(INFLOW)
    g.add_node(OUTFLOW)
    for f in network.fractures:
        g.add_node(f.id)
    for x in network.intersections:
        g.add_edge(x.a, x.b)
    tol = 1e-9 * network.h
    for node, tag in ((INFLOW, inflow), (OUTFLOW, outflow)):
        code = BOUNDARY_TAG_NAMES.index(tag)
        axis, side = code // 2, code % 2
        value = (network.domain_hi if side else network.domain_lo)[axis]
        for f in network.fractures:
            if np.any(np.abs(f.polygon.vertices[:, axis] - value) <= tol):
                g.add_edge(node, f.id)
    return g


def compute_backbone(graph: FractureGraph, pin_to_boundaries: bool = True
                     ) -> tuple[list[int], list[int]]:
    """Split fracture ids into (primary, secondary).

    Primary is the 2-core under iterative removal of degree-one
    fracture nodes (the virtual nodes are exempt), restricted to the
    connected component holding both virtual nodes.  With the pinning
    flag off the virtual nodes are ignored entirely and the plain
    2-core of the intersection graph is returned.
    """
    alive = set(graph.adj)
    deg = {u: len(vs) for u, vs in graph.adj.items()}
    if not pin_to_boundaries:
        for virt in (INFLOW, OUTFLOW):
            if virt in alive:
                alive.discard(virt)
                for v in graph.adj[virt]:
                    deg[v] -= 1
    stack = [u for u in alive if u >= 0 and deg[u] <= 1]
    dead = set()
    while stack:
        u = stack.pop()
        if u in dead or u not in alive:
            continue
        dead.add(u)
        alive.discard(u)
        for v in graph.adj[u]:
            if v in alive:
                deg[v] -= 1
                if v >= 0 and deg[v] <= 1:
                    stack.append(v)

    if pin_to_boundaries:
        seen = {INFLOW}
        stack = [INFLOW]
        while stack:
            u = stack.pop()
            for v in graph.adj[u]:
                if v in alive and v not in seen:
                    seen.add(v)
                    stack.append(v)
        if OUTFLOW not in seen:
            raise RuntimeError("no percolating backbone")
        primary = sorted(u for u in seen if u >= 0)
    else:
        primary = sorted(u for u in alive if u >= 0)
    secondary = sorted(u for u in graph.adj
                       if u >= 0 and u not in set(primary))
    return primary, secondary


# ---------------------------------------------------------------------------
# upscaling
# ---------------------------------------------------------------------------

def _clip_polygon_tet(vertices: np.ndarray, tet: np.ndarray) -> np.ndarray:
    """Clip a planar polygon against one tetrahedron's four faces."""
    local = ((1, 2, 3, 0), (0, 2, 3, 1), (0, 1, 3, 2), (0, 1, 2, 3))
    v = vertices
    for i, j, k, o in local:
        n = np.cross(tet[j] - tet[i], tet[k] - tet[i])
        if n @ (tet[o] - tet[i]) > 0.0:
            n = -n
        v = clip_polygon_halfspace(v, n, float(n @ tet[i]))
        if len(v) < 3:
            return v[:0]
    return v


def upscale_secondary(fractures: list[Fracture], volume: VolumeMesh,
                      phi_m, k_m) -> list[UpscaledCellProps]:
    """Equivalent cell properties for fractures absent from the mesh.

    Each fracture adds its in-cell volume fraction A*a_f/V_T to the
    cell porosity and the planar projection of its permeability,
    (A*a_f/V_T) * K_f * (I - n n^T), to the cell tensor.  Returned
    cells carry totals on top of the matrix base, sorted by cell id;
    cells no fracture cuts are omitted.
    """
    nt = len(volume.tets)
    vols = volume.tet_volumes()
    phi = np.broadcast_to(np.asarray(phi_m, dtype=np.float64), (nt,))
    km = np.asarray(k_m, dtype=np.float64)
    if km.ndim == 0:
        km = km * np.eye(3)
    if km.ndim == 2:
        km = np.broadcast_to(km, (nt, 3, 3))

    tet_pts = volume.vertices[volume.tets]
    tet_lo = tet_pts.min(axis=1)
    tet_hi = tet_pts.max(axis=1)

    dphi: dict[int, float] = {}
    dk: dict[int, np.ndarray] = {}
    for f in fractures:
        verts = f.polygon.vertices
        n = f.polygon.normal
        proj = np.eye(3) - np.outer(n, n)
        plo, phi_box = verts.min(axis=0), verts.max(axis=0)
        cand = np.where(np.all(tet_lo <= phi_box, axis=1)
                        & np.all(tet_hi >= plo, axis=1))[0]
        for t in cand:
            clipped = _clip_polygon_tet(verts, tet_pts[t])
            area = polygon_area_3d(clipped)
            if area <= 0.0:
                continue
            w = area * f.aperture / float(vols[t])
            dphi[t] = dphi.get(t, 0.0) + w
            dk[t] = dk.get(t, 0.0) + (w * f.permeability) * proj

    out = []
    for t in sorted(dphi):
        total = float(phi[t]) + dphi[t]
        if total > 1.0:
            warnings.warn(f"cell {t}: equivalent porosity {total:.3g} "
                          f"clamped to 1", stacklevel=2)
            total = 1.0
        out.append(UpscaledCellProps(cell_id=int(t), porosity_eq=total,
                                     permeability_eq=km[t] + dk[t]))
    return out
