"""Incremental Bowyer-Watson Delaunay triangulation (3D and 2D).

Points are inserted in Morton order inside one huge enclosing
super-simplex whose vertices are dropped from the result.  Every
orientation and empty-circumsphere decision goes through the robust
predicates in :mod:`dfmsim._predicates`; exact ties are broken by the
deterministic index-keyed perturbation, so rebuilding from the same
input reproduces the same triangulation bit for bit.

Exactly degenerate inputs (lattices, cocircular rims) are handled
consistently, with one caveat inherent to symbolic perturbation: a
quadruple that is exactly concyclic can come back as a zero-volume
simplex lying on the convex hull, which callers strip.  Decisions rest
on ~32-digit arithmetic, so clouds whose circumsphere determinants are
nonzero yet below that resolution (coordinate ratios beyond roughly
1e6) may triangulate slightly off the true Delaunay; the meshing
pipeline stays many orders of magnitude inside this envelope.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from ._predicates import (insphere_idx, orient3d_idx, orient2d_idx,
                          incircle_idx, _insphere_sign, _incircle_sign)

_FACE3 = np.array([[1, 3, 2], [0, 2, 3], [0, 3, 1], [0, 1, 2]],
                  dtype=np.int32)


# ---------------------------------------------------------------------------
# 3D kernel
# ---------------------------------------------------------------------------

@njit(cache=True)
def _bw3d(pts, face_tbl):
    """Bowyer-Watson over pts; the last 4 rows are the super vertices.

    Returns (tets, status): status 0 ok, 2 duplicate point, 3
    degenerate super tet, 4/5 point location failures, 6 inconsistent
    cavity.  Tets are positively oriented and reference only real
    points (super tets are dropped).
    """
    n_all = pts.shape[0]
    n = n_all - 4
    sv = n  # first super vertex index

    cap = 8 * n_all + 64
    tets = np.empty((cap, 4), np.int32)
    adj = np.empty((cap, 4), np.int32)
    alive = np.zeros(cap, np.uint8)
    incav = np.zeros(cap, np.uint8)
    free = np.empty(cap, np.int32)
    nfree = 0
    ntop = 0

    if orient3d_idx(pts, sv, sv + 1, sv + 2, sv + 3) < 0.0:
        return tets[:0], 3

    tets[0, 0] = sv
    tets[0, 1] = sv + 1
    tets[0, 2] = sv + 2
    tets[0, 3] = sv + 3
    adj[0, 0] = -1
    adj[0, 1] = -1
    adj[0, 2] = -1
    adj[0, 3] = -1
    alive[0] = 1
    ntop = 1
    hint = 0

    scratch = 4096
    cav = np.empty(scratch, np.int32)
    stack = np.empty(scratch, np.int32)
    bnd_f = np.empty((scratch, 3), np.int32)
    bnd_out = np.empty(scratch, np.int32)
    bnd_outf = np.empty(scratch, np.int8)
    ekey = np.empty(3 * scratch, np.int64)
    eslot = np.empty(3 * scratch, np.int32)
    eloc = np.empty(3 * scratch, np.int8)

    for p in range(n):
        # ---------------- locate by visibility walk
        t = hint
        if alive[t] == 0:
            t = -1
            for s in range(ntop):
                if alive[s] == 1:
                    t = s
                    break
            if t == -1:
                return tets[:0], 1
        steps = 0
        max_steps = 8 * ntop + 128
        while True:
            steps += 1
            if steps > max_steps:
                return tets[:0], 4
            moved = False
            for fi in range(4):
                a = tets[t, face_tbl[fi, 0]]
                b = tets[t, face_tbl[fi, 1]]
                c = tets[t, face_tbl[fi, 2]]
                if orient3d_idx(pts, a, b, c, p) < 0.0:
                    nb = adj[t, fi]
                    if nb == -1:
                        return tets[:0], 5
                    t = nb
                    moved = True
                    break
            if not moved:
                break
        # duplicate guard: exact coordinate match with a corner of t
        for vi in range(4):
            v = tets[t, vi]
            if (pts[v, 0] == pts[p, 0] and pts[v, 1] == pts[p, 1]
                    and pts[v, 2] == pts[p, 2]):
                return tets[:0], 2

        # ---------------- grow cavity (conflict region of p)
        ncav = 1
        nbnd = 0
        nstack = 1
        cav[0] = t
        stack[0] = t
        incav[t] = 1
        while nstack > 0:
            nstack -= 1
            cur = stack[nstack]
            for fi in range(4):
                nb = adj[cur, fi]
                take = False
                if nb != -1 and incav[nb] == 0:
                    s = insphere_idx(pts, tets[nb, 0], tets[nb, 1],
                                     tets[nb, 2], tets[nb, 3], p)
                    take = s > 0.0
                    if take:
                        if ncav >= cav.shape[0]:
                            cav2 = np.empty(2 * cav.shape[0], np.int32)
                            cav2[:ncav] = cav[:ncav]
                            cav = cav2
                        if nstack >= stack.shape[0]:
                            st2 = np.empty(2 * stack.shape[0], np.int32)
                            st2[:nstack] = stack[:nstack]
                            stack = st2
                        incav[nb] = 1
                        cav[ncav] = nb
                        ncav += 1
                        stack[nstack] = nb
                        nstack += 1
                if nb == -1 or (incav[nb] == 0 and not take):
                    if nbnd >= bnd_f.shape[0]:
                        nb2 = 2 * bnd_f.shape[0]
                        bf2 = np.empty((nb2, 3), np.int32)
                        bf2[:nbnd] = bnd_f[:nbnd]
                        bnd_f = bf2
                        bo2 = np.empty(nb2, np.int32)
                        bo2[:nbnd] = bnd_out[:nbnd]
                        bnd_out = bo2
                        bl2 = np.empty(nb2, np.int8)
                        bl2[:nbnd] = bnd_outf[:nbnd]
                        bnd_outf = bl2
                        ek2 = np.empty(3 * nb2, np.int64)
                        ek2[:3 * nbnd] = ekey[:3 * nbnd]
                        ekey = ek2
                        es2 = np.empty(3 * nb2, np.int32)
                        es2[:3 * nbnd] = eslot[:3 * nbnd]
                        eslot = es2
                        el2 = np.empty(3 * nb2, np.int8)
                        el2[:3 * nbnd] = eloc[:3 * nbnd]
                        eloc = el2
                    bnd_f[nbnd, 0] = tets[cur, face_tbl[fi, 0]]
                    bnd_f[nbnd, 1] = tets[cur, face_tbl[fi, 1]]
                    bnd_f[nbnd, 2] = tets[cur, face_tbl[fi, 2]]
                    bnd_out[nbnd] = nb
                    loc = np.int8(-1)
                    if nb != -1:
                        for fj in range(4):
                            if adj[nb, fj] == cur:
                                loc = np.int8(fj)
                                break
                    bnd_outf[nbnd] = loc
                    nbnd += 1

        # ---------------- retire cavity tets
        for i in range(ncav):
            ct = cav[i]
            incav[ct] = 0
            alive[ct] = 0
            free[nfree] = ct
            nfree += 1

        # ---------------- ensure slot capacity for the new tets
        if ntop + nbnd + 8 > cap:
            cap2 = 2 * cap + nbnd
            tets2 = np.empty((cap2, 4), np.int32)
            tets2[:ntop] = tets[:ntop]
            tets = tets2
            adj2 = np.empty((cap2, 4), np.int32)
            adj2[:ntop] = adj[:ntop]
            adj = adj2
            al2 = np.zeros(cap2, np.uint8)
            al2[:ntop] = alive[:ntop]
            alive = al2
            ic2 = np.zeros(cap2, np.uint8)
            ic2[:ntop] = incav[:ntop]
            incav = ic2
            fr2 = np.empty(cap2, np.int32)
            fr2[:nfree] = free[:nfree]
            free = fr2
            cap = cap2

        # ---------------- create a tet over each boundary face
        # Boundary faces are oriented into the cavity, so (f0, f1, f2, p)
        # is positively oriented.  Local face 3 is the base face; local
        # faces 0, 1, 2 are shared with sibling new tets along the base
        # edges (f1, f2), (f0, f2), (f0, f1).
        nmap = 0
        for i in range(nbnd):
            if nfree > 0:
                nfree -= 1
                slot = free[nfree]
            else:
                slot = ntop
                ntop += 1
            f0 = bnd_f[i, 0]
            f1 = bnd_f[i, 1]
            f2 = bnd_f[i, 2]
            tets[slot, 0] = f0
            tets[slot, 1] = f1
            tets[slot, 2] = f2
            tets[slot, 3] = p
            alive[slot] = 1
            out = bnd_out[i]
            adj[slot, 3] = out
            if out != -1:
                adj[out, bnd_outf[i]] = slot
            for li in range(3):
                if li == 0:
                    u, v = f1, f2
                elif li == 1:
                    u, v = f0, f2
                else:
                    u, v = f0, f1
                if u > v:
                    u, v = v, u
                key = np.int64(u) * np.int64(n_all) + np.int64(v)
                found = -1
                for m in range(nmap):
                    if ekey[m] == key:
                        found = m
                        break
                if found >= 0:
                    oslot = eslot[found]
                    olo = eloc[found]
                    adj[slot, li] = oslot
                    adj[oslot, olo] = slot
                    nmap -= 1
                    ekey[found] = ekey[nmap]
                    eslot[found] = eslot[nmap]
                    eloc[found] = eloc[nmap]
                else:
                    ekey[nmap] = key
                    eslot[nmap] = slot
                    eloc[nmap] = np.int8(li)
                    nmap += 1
            hint = slot
        if nmap != 0:
            return tets[:0], 6

    # ---------------- collect tets that touch no super vertex
    count = 0
    for s in range(ntop):
        if alive[s] == 1 and tets[s, 0] < n and tets[s, 1] < n \
                and tets[s, 2] < n and tets[s, 3] < n:
            count += 1
    out_t = np.empty((count, 4), np.int32)
    w = 0
    for s in range(ntop):
        if alive[s] == 1 and tets[s, 0] < n and tets[s, 1] < n \
                and tets[s, 2] < n and tets[s, 3] < n:
            out_t[w, 0] = tets[s, 0]
            out_t[w, 1] = tets[s, 1]
            out_t[w, 2] = tets[s, 2]
            out_t[w, 3] = tets[s, 3]
            w += 1
    return out_t, 0


# ---------------------------------------------------------------------------
# 2D kernel
# ---------------------------------------------------------------------------

@njit(cache=True)
def _bw2d(pts):
    """Bowyer-Watson in the plane; the last 3 rows are super vertices.

    Returns (tris, status) with the same status codes as `_bw3d`; tris
    are counterclockwise.
    """
    n_all = pts.shape[0]
    n = n_all - 3
    sv = n

    cap = 4 * n_all + 32
    tris = np.empty((cap, 3), np.int32)
    adj = np.empty((cap, 3), np.int32)
    alive = np.zeros(cap, np.uint8)
    incav = np.zeros(cap, np.uint8)
    free = np.empty(cap, np.int32)
    nfree = 0
    ntop = 0

    if orient2d_idx(pts, sv, sv + 1, sv + 2) < 0.0:
        return tris[:0], 3

    tris[0, 0] = sv
    tris[0, 1] = sv + 1
    tris[0, 2] = sv + 2
    adj[0, 0] = -1
    adj[0, 1] = -1
    adj[0, 2] = -1
    alive[0] = 1
    ntop = 1
    hint = 0

    scratch = 2048
    cav = np.empty(scratch, np.int32)
    stack = np.empty(scratch, np.int32)
    bnd_e = np.empty((scratch, 2), np.int32)
    bnd_out = np.empty(scratch, np.int32)
    bnd_outf = np.empty(scratch, np.int8)
    vkey = np.empty(scratch, np.int32)
    vslot = np.empty(scratch, np.int32)
    vloc = np.empty(scratch, np.int8)

    for p in range(n):
        t = hint
        if alive[t] == 0:
            t = -1
            for s in range(ntop):
                if alive[s] == 1:
                    t = s
                    break
            if t == -1:
                return tris[:0], 1
        steps = 0
        max_steps = 8 * ntop + 128
        while True:
            steps += 1
            if steps > max_steps:
                return tris[:0], 1
            moved = False
            for ei in range(3):
                a = tris[t, (ei + 1) % 3]
                b = tris[t, (ei + 2) % 3]
                if orient2d_idx(pts, a, b, p) < 0.0:
                    nb = adj[t, ei]
                    if nb == -1:
                        return tris[:0], 1
                    t = nb
                    moved = True
                    break
            if not moved:
                break
        for vi in range(3):
            v = tris[t, vi]
            if pts[v, 0] == pts[p, 0] and pts[v, 1] == pts[p, 1]:
                return tris[:0], 2

        ncav = 1
        nbnd = 0
        nstack = 1
        cav[0] = t
        stack[0] = t
        incav[t] = 1
        while nstack > 0:
            nstack -= 1
            cur = stack[nstack]
            for ei in range(3):
                nb = adj[cur, ei]
                take = False
                if nb != -1 and incav[nb] == 0:
                    s = incircle_idx(pts, tris[nb, 0], tris[nb, 1],
                                     tris[nb, 2], p)
                    take = s > 0.0
                    if take:
                        if ncav >= cav.shape[0]:
                            cav2 = np.empty(2 * cav.shape[0], np.int32)
                            cav2[:ncav] = cav[:ncav]
                            cav = cav2
                        if nstack >= stack.shape[0]:
                            st2 = np.empty(2 * stack.shape[0], np.int32)
                            st2[:nstack] = stack[:nstack]
                            stack = st2
                        incav[nb] = 1
                        cav[ncav] = nb
                        ncav += 1
                        stack[nstack] = nb
                        nstack += 1
                if nb == -1 or (incav[nb] == 0 and not take):
                    if nbnd >= bnd_e.shape[0]:
                        nb2 = 2 * bnd_e.shape[0]
                        be2 = np.empty((nb2, 2), np.int32)
                        be2[:nbnd] = bnd_e[:nbnd]
                        bnd_e = be2
                        bo2 = np.empty(nb2, np.int32)
                        bo2[:nbnd] = bnd_out[:nbnd]
                        bnd_out = bo2
                        bl2 = np.empty(nb2, np.int8)
                        bl2[:nbnd] = bnd_outf[:nbnd]
                        bnd_outf = bl2
                        vk2 = np.empty(nb2, np.int32)
                        vk2[:nbnd] = vkey[:nbnd]
                        vkey = vk2
                        vs2 = np.empty(nb2, np.int32)
                        vs2[:nbnd] = vslot[:nbnd]
                        vslot = vs2
                        vl2 = np.empty(nb2, np.int8)
                        vl2[:nbnd] = vloc[:nbnd]
                        vloc = vl2
                    bnd_e[nbnd, 0] = tris[cur, (ei + 1) % 3]
                    bnd_e[nbnd, 1] = tris[cur, (ei + 2) % 3]
                    bnd_out[nbnd] = nb
                    loc = np.int8(-1)
                    if nb != -1:
                        for fj in range(3):
                            if adj[nb, fj] == cur:
                                loc = np.int8(fj)
                                break
                    bnd_outf[nbnd] = loc
                    nbnd += 1

        for i in range(ncav):
            ct = cav[i]
            incav[ct] = 0
            alive[ct] = 0
            free[nfree] = ct
            nfree += 1

        if ntop + nbnd + 8 > cap:
            cap2 = 2 * cap + nbnd
            tris2 = np.empty((cap2, 3), np.int32)
            tris2[:ntop] = tris[:ntop]
            tris = tris2
            adj2 = np.empty((cap2, 3), np.int32)
            adj2[:ntop] = adj[:ntop]
            adj = adj2
            al2 = np.zeros(cap2, np.uint8)
            al2[:ntop] = alive[:ntop]
            alive = al2
            ic2 = np.zeros(cap2, np.uint8)
            ic2[:ntop] = incav[:ntop]
            incav = ic2
            fr2 = np.empty(cap2, np.int32)
            fr2[:nfree] = free[:nfree]
            free = fr2
            cap = cap2

        # New triangle over boundary edge (e0, e1): (e0, e1, p) is CCW.
        # Local edge 2 is the base; edge 0 (opposite e0) = (e1, p) pairs
        # with the sibling whose base starts at e1; edge 1 = (p, e0).
        nmap = 0
        for i in range(nbnd):
            if nfree > 0:
                nfree -= 1
                slot = free[nfree]
            else:
                slot = ntop
                ntop += 1
            e0 = bnd_e[i, 0]
            e1 = bnd_e[i, 1]
            tris[slot, 0] = e0
            tris[slot, 1] = e1
            tris[slot, 2] = p
            alive[slot] = 1
            out = bnd_out[i]
            adj[slot, 2] = out
            if out != -1:
                adj[out, bnd_outf[i]] = slot
            # pair across the spoke (e1, p): key by the base vertex
            found = -1
            for m in range(nmap):
                if vkey[m] == e1:
                    found = m
                    break
            if found >= 0:
                oslot = vslot[found]
                adj[slot, 0] = oslot
                adj[oslot, 1] = slot
                nmap -= 1
                vkey[found] = vkey[nmap]
                vslot[found] = vslot[nmap]
                vloc[found] = vloc[nmap]
            else:
                vkey[nmap] = e1
                vslot[nmap] = slot
                vloc[nmap] = np.int8(0)
                nmap += 1
            found = -1
            for m in range(nmap):
                if vkey[m] == e0:
                    found = m
                    break
            if found >= 0:
                oslot = vslot[found]
                adj[slot, 1] = oslot
                adj[oslot, 0] = slot
                nmap -= 1
                vkey[found] = vkey[nmap]
                vslot[found] = vslot[nmap]
                vloc[found] = vloc[nmap]
            else:
                vkey[nmap] = e0
                vslot[nmap] = slot
                vloc[nmap] = np.int8(1)
                nmap += 1
            hint = slot
        if nmap != 0:
            return tris[:0], 1

    count = 0
    for s in range(ntop):
        if alive[s] == 1 and tris[s, 0] < n and tris[s, 1] < n \
                and tris[s, 2] < n:
            count += 1
    out_t = np.empty((count, 3), np.int32)
    w = 0
    for s in range(ntop):
        if alive[s] == 1 and tris[s, 0] < n and tris[s, 1] < n \
                and tris[s, 2] < n:
            out_t[w, 0] = tris[s, 0]
            out_t[w, 1] = tris[s, 1]
            out_t[w, 2] = tris[s, 2]
            w += 1
    return out_t, 0


# ---------------------------------------------------------------------------
# Morton ordering
# ---------------------------------------------------------------------------

def _spread_bits(x):
    x = x.astype(np.uint64) & np.uint64(0x1FFFFF)
    x = (x | (x << np.uint64(32))) & np.uint64(0x1F00000000FFFF)
    x = (x | (x << np.uint64(16))) & np.uint64(0x1F0000FF0000FF)
    x = (x | (x << np.uint64(8))) & np.uint64(0x100F00F00F00F00F)
    x = (x | (x << np.uint64(4))) & np.uint64(0x10C30C30C30C30C3)
    x = (x | (x << np.uint64(2))) & np.uint64(0x1249249249249249)
    return x


def _morton_order(points):
    """A permutation sorting points along a 3D (or 2D) Z-order curve."""
    pts = np.asarray(points, dtype=np.float64)
    lo = pts.min(axis=0)
    span = pts.max(axis=0) - lo
    span[span <= 0.0] = 1.0
    q = (pts - lo) / span
    cells = np.minimum((q * (2 ** 21 - 1)).astype(np.uint64),
                       np.uint64(2 ** 21 - 1))
    code = _spread_bits(cells[:, 0])
    code |= _spread_bits(cells[:, 1]) << np.uint64(1)
    if pts.shape[1] == 3:
        code |= _spread_bits(cells[:, 2]) << np.uint64(2)
    return np.argsort(code, kind="stable")


# ---------------------------------------------------------------------------
# wrappers
# ---------------------------------------------------------------------------

_STATUS_MSG = {
    2: "duplicate point in input",
    3: "degenerate enclosing simplex",
    4: "point location walk exceeded its step budget",
    5: "point location walk escaped the enclosing simplex",
    6: "cavity boundary was not a closed surface",
}


def delaunay3d(points):
    """Delaunay tetrahedralization of a 3D point cloud.

    Returns an (m, 4) int32 array of positively oriented tets indexing
    into `points`.  Fewer than 4 points, or a degenerate (coplanar)
    cloud, yields an empty array.  Exact duplicate points raise.
    """
    pts = np.ascontiguousarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError("points must be an (n, 3) array")
    n = pts.shape[0]
    if n < 4:
        return np.empty((0, 4), np.int32)

    order = _morton_order(pts)
    sorted_pts = pts[order]

    center = 0.5 * (pts.min(axis=0) + pts.max(axis=0))
    radius = float(np.max(np.linalg.norm(pts - center, axis=1)))
    # Far enough that no realistic circumsphere reaches a super vertex
    # (which would wrongly suppress large-circumsphere hull tets), yet
    # near enough that extended-precision determinants mixing the two
    # coordinate scales keep a comfortable margin.
    big = 1e8 * max(radius, 1e-300)
    s3 = 1.0 / np.sqrt(3.0)
    corners = np.array([[1.0, 1.0, 1.0],
                        [1.0, -1.0, -1.0],
                        [-1.0, -1.0, 1.0],
                        [-1.0, 1.0, -1.0]]) * (big * s3) + center

    cloud = np.vstack([sorted_pts, corners])
    tets, status = _bw3d(cloud, _FACE3)
    if status == 2:
        raise ValueError("duplicate points in input")
    if status != 0:
        raise RuntimeError(_STATUS_MSG.get(status, "triangulation failed"))
    if tets.shape[0] == 0:
        return np.empty((0, 4), np.int32)
    back = np.asarray(order, dtype=np.int32)
    return np.ascontiguousarray(back[tets])


def delaunay2d(points):
    """Delaunay triangulation of a planar point cloud.

    Returns an (m, 3) int32 array of counterclockwise triangles.
    Fewer than 3 points or a collinear cloud yields an empty array.
    """
    pts = np.ascontiguousarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must be an (n, 2) array")
    n = pts.shape[0]
    if n < 3:
        return np.empty((0, 3), np.int32)

    order = _morton_order(pts)
    sorted_pts = pts[order]

    center = 0.5 * (pts.min(axis=0) + pts.max(axis=0))
    radius = float(np.max(np.linalg.norm(pts - center, axis=1)))
    big = 1e8 * max(radius, 1e-300)
    corners = np.array([[2.0, 0.0],
                        [-1.0, np.sqrt(3.0)],
                        [-1.0, -np.sqrt(3.0)]]) * big + center

    cloud = np.vstack([sorted_pts, corners])
    tris, status = _bw2d(cloud)
    if status == 2:
        raise ValueError("duplicate points in input")
    if status != 0:
        raise RuntimeError(_STATUS_MSG.get(status, "triangulation failed"))
    if tris.shape[0] == 0:
        return np.empty((0, 3), np.int32)
    back = np.asarray(order, dtype=np.int32)
    return np.ascontiguousarray(back[tris])


# ---------------------------------------------------------------------------
# audits
# ---------------------------------------------------------------------------

@njit(cache=True)
def _audit2d_kernel(pts, tris, tri_ids, vert_ids):
    bad = 0
    for k in range(tri_ids.shape[0]):
        t = tri_ids[k]
        v = vert_ids[k]
        a = tris[t, 0]
        b = tris[t, 1]
        c = tris[t, 2]
        if v == a or v == b or v == c:
            continue
        s = _incircle_sign(pts[a, 0], pts[a, 1], pts[b, 0], pts[b, 1],
                           pts[c, 0], pts[c, 1], pts[v, 0], pts[v, 1])
        if s > 0:
            bad += 1
    return bad


def count_incircle_violations(points, tris, samples=20000, seed=0):
    """Sampled check that no vertex lies strictly inside a triangle's
    circumcircle.  Returns the number of violating (triangle, vertex)
    pairs; exact cocircularity does not count.
    """
    pts = np.ascontiguousarray(points, dtype=np.float64)
    tris = np.ascontiguousarray(tris, dtype=np.int32)
    m = tris.shape[0]
    n = pts.shape[0]
    if m == 0 or n == 0:
        return 0
    rng = np.random.default_rng(seed)
    if m * n <= samples:
        tri_ids = np.repeat(np.arange(m, dtype=np.int64), n)
        vert_ids = np.tile(np.arange(n, dtype=np.int64), m)
    else:
        tri_ids = rng.integers(0, m, size=samples)
        vert_ids = rng.integers(0, n, size=samples)
    return int(_audit2d_kernel(pts, tris, tri_ids, vert_ids))


@njit(cache=True)
def _audit_kernel(pts, tets, tet_ids, vert_ids):
    bad = 0
    for k in range(tet_ids.shape[0]):
        t = tet_ids[k]
        v = vert_ids[k]
        a = tets[t, 0]
        b = tets[t, 1]
        c = tets[t, 2]
        d = tets[t, 3]
        if v == a or v == b or v == c or v == d:
            continue
        s = _insphere_sign(pts[a, 0], pts[a, 1], pts[a, 2],
                           pts[b, 0], pts[b, 1], pts[b, 2],
                           pts[c, 0], pts[c, 1], pts[c, 2],
                           pts[d, 0], pts[d, 1], pts[d, 2],
                           pts[v, 0], pts[v, 1], pts[v, 2])
        if s > 0:
            bad += 1
    return bad


def count_insphere_violations(points, tets, samples=20000, seed=0):
    """Sampled check that no vertex lies strictly inside a tet's
    circumsphere.  Points exactly on a sphere do not count as
    violations.  Returns the number of violating (tet, vertex) pairs.
    """
    pts = np.ascontiguousarray(points, dtype=np.float64)
    tets = np.ascontiguousarray(tets, dtype=np.int32)
    m = tets.shape[0]
    n = pts.shape[0]
    if m == 0 or n == 0:
        return 0
    total = m * n
    rng = np.random.default_rng(seed)
    if total <= samples:
        tet_ids = np.repeat(np.arange(m, dtype=np.int64), n)
        vert_ids = np.tile(np.arange(n, dtype=np.int64), m)
    else:
        tet_ids = rng.integers(0, m, size=samples)
        vert_ids = rng.integers(0, n, size=samples)
    return int(_audit_kernel(pts, tets, tet_ids, vert_ids))
