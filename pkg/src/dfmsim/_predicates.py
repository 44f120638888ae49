"""Robust geometric predicate kernels.

Each predicate is evaluated three ways, cheapest first:

1. plain float64 with a conservative forward-error filter,
2. compensated double-double arithmetic (~106 bit mantissa),
3. for the index-keyed variants only: a deterministic symbolic
   perturbation derived from hashing the global vertex indices, applied
   at an escalating scale inside the predicate until the sign is
   decisive.  Input coordinates are never modified, so identical inputs
   always reproduce identical decisions.

Sign conventions (see the wrappers in :mod:`dfmsim.geometry`):

* ``orient3d(a, b, c, d) > 0`` when ``d`` is on the side of plane
  ``(a, b, c)`` pointed to by the right-handed normal
  ``(b - a) x (c - a)``.
* ``insphere(a, b, c, d, e) > 0`` when ``e`` is strictly inside the
  circumsphere of the positively oriented tet ``(a, b, c, d)``.
* ``orient2d`` / ``incircle`` are the planar analogues (counterclockwise
  positive).
"""

import numpy as np
from numba import njit

# Static filter constants.  Shewchuk's bounds for the naive expressions
# are ~7.8e-16 (orient3d) and ~1.8e-15 (insphere) times the permanent;
# we inflate them, trading a few extra double-double evaluations for
# slack against the constant derivations.
_O3D_FILTER = 1e-14
_INS_FILTER = 1e-13
_O2D_FILTER = 1e-14
_INC_FILTER = 1e-13
# Double-double noise floor: relative error per dd op is ~4.9e-32 and the
# expressions below chain a few dozen ops.
_DD_FILTER = 1e-28

_SPLITTER = 134217729.0  # 2**27 + 1


# ---------------------------------------------------------------------------
# error-free transforms and double-double arithmetic
# ---------------------------------------------------------------------------

@njit(cache=True)
def _two_sum(a, b):
    s = a + b
    bb = s - a
    err = (a - (s - bb)) + (b - bb)
    return s, err


@njit(cache=True)
def _fast_two_sum(a, b):
    # requires |a| >= |b|
    s = a + b
    err = b - (s - a)
    return s, err


@njit(cache=True)
def _two_diff(a, b):
    s = a - b
    bb = s - a
    err = (a - (s - bb)) - (b + bb)
    return s, err


@njit(cache=True)
def _two_prod(a, b):
    p = a * b
    c = _SPLITTER * a
    ahi = c - (c - a)
    alo = a - ahi
    c = _SPLITTER * b
    bhi = c - (c - b)
    blo = b - bhi
    err = ((ahi * bhi - p) + ahi * blo + alo * bhi) + alo * blo
    return p, err


@njit(cache=True)
def _dd_add(ah, al, bh, bl):
    s, e = _two_sum(ah, bh)
    e = e + al + bl
    return _fast_two_sum(s, e)


@njit(cache=True)
def _dd_sub(ah, al, bh, bl):
    s, e = _two_sum(ah, -bh)
    e = e + al - bl
    return _fast_two_sum(s, e)


@njit(cache=True)
def _dd_mul(ah, al, bh, bl):
    p, e = _two_prod(ah, bh)
    e = e + ah * bl + al * bh
    return _fast_two_sum(p, e)


# ---------------------------------------------------------------------------
# deterministic index-keyed perturbation
# ---------------------------------------------------------------------------

@njit(cache=True)
def _splitmix64(x):
    z = (x + np.uint64(0x9E3779B97F4A7C15)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def _jitter(idx, axis):
    """Deterministic pseudo-random offset in [-1, 1) for (vertex, axis)."""
    key = np.uint64(idx) * np.uint64(4) + np.uint64(axis) + np.uint64(1)
    h = _splitmix64(key)
    return float(h >> np.uint64(11)) * (2.0 ** -52) - 1.0


@njit(cache=True)
def _point_scale3(pts, i):
    s = abs(pts[i, 0])
    v = abs(pts[i, 1])
    if v > s:
        s = v
    v = abs(pts[i, 2])
    if v > s:
        s = v
    return s if s > 1.0 else 1.0


@njit(cache=True)
def _point_scale2(pts, i):
    s = abs(pts[i, 0])
    v = abs(pts[i, 1])
    if v > s:
        s = v
    return s if s > 1.0 else 1.0


# ---------------------------------------------------------------------------
# orient3d
# ---------------------------------------------------------------------------

@njit(cache=True)
def _orient3d_float(ax, ay, az, bx, by, bz, cx, cy, cz, dx, dy, dz):
    """Naive det[[b-a],[c-a],[d-a]] plus its permanent."""
    bax = bx - ax
    bay = by - ay
    baz = bz - az
    cax = cx - ax
    cay = cy - ay
    caz = cz - az
    dax = dx - ax
    day = dy - ay
    daz = dz - az
    m1 = cay * daz - caz * day
    m2 = cax * daz - caz * dax
    m3 = cax * day - cay * dax
    det = bax * m1 - bay * m2 + baz * m3
    perm = (abs(bax) * (abs(cay * daz) + abs(caz * day))
            + abs(bay) * (abs(cax * daz) + abs(caz * dax))
            + abs(baz) * (abs(cax * day) + abs(cay * dax)))
    return det, perm


@njit(cache=True)
def _orient3d_dd(ax, ay, az, bx, by, bz, cx, cy, cz, dx, dy, dz):
    """det[[b-a],[c-a],[d-a]] in double-double; returns (hi, lo)."""
    baxh, baxl = _two_diff(bx, ax)
    bayh, bayl = _two_diff(by, ay)
    bazh, bazl = _two_diff(bz, az)
    caxh, caxl = _two_diff(cx, ax)
    cayh, cayl = _two_diff(cy, ay)
    cazh, cazl = _two_diff(cz, az)
    daxh, daxl = _two_diff(dx, ax)
    dayh, dayl = _two_diff(dy, ay)
    dazh, dazl = _two_diff(dz, az)

    t1h, t1l = _dd_mul(cayh, cayl, dazh, dazl)
    t2h, t2l = _dd_mul(cazh, cazl, dayh, dayl)
    m1h, m1l = _dd_sub(t1h, t1l, t2h, t2l)

    t1h, t1l = _dd_mul(caxh, caxl, dazh, dazl)
    t2h, t2l = _dd_mul(cazh, cazl, daxh, daxl)
    m2h, m2l = _dd_sub(t1h, t1l, t2h, t2l)

    t1h, t1l = _dd_mul(caxh, caxl, dayh, dayl)
    t2h, t2l = _dd_mul(cayh, cayl, daxh, daxl)
    m3h, m3l = _dd_sub(t1h, t1l, t2h, t2l)

    s1h, s1l = _dd_mul(baxh, baxl, m1h, m1l)
    s2h, s2l = _dd_mul(bayh, bayl, m2h, m2l)
    s3h, s3l = _dd_mul(bazh, bazl, m3h, m3l)

    rh, rl = _dd_sub(s1h, s1l, s2h, s2l)
    rh, rl = _dd_add(rh, rl, s3h, s3l)
    return rh, rl


@njit(cache=True)
def _orient3d_sign(ax, ay, az, bx, by, bz, cx, cy, cz, dx, dy, dz):
    """Robust sign without symbolic perturbation: -1, 0 or +1."""
    det, perm = _orient3d_float(ax, ay, az, bx, by, bz, cx, cy, cz, dx, dy, dz)
    if abs(det) > _O3D_FILTER * perm:
        return 1.0 if det > 0.0 else -1.0
    dh, _dl = _orient3d_dd(ax, ay, az, bx, by, bz, cx, cy, cz, dx, dy, dz)
    if abs(dh) > _DD_FILTER * perm:
        return 1.0 if dh > 0.0 else -1.0
    return 0.0


# ---------------------------------------------------------------------------
# insphere
# ---------------------------------------------------------------------------

@njit(cache=True)
def _insphere_float(ax, ay, az, bx, by, bz, cx, cy, cz, dx, dy, dz,
                    ex, ey, ez):
    """Naive lifted determinant with pivot e; e inside <=> det < 0
    for a positively oriented (a, b, c, d).  Returns (det, permanent)."""
    aex = ax - ex
    aey = ay - ey
    aez = az - ez
    bex = bx - ex
    bey = by - ey
    bez = bz - ez
    cex = cx - ex
    cey = cy - ey
    cez = cz - ez
    dex = dx - ex
    dey = dy - ey
    dez = dz - ez

    ab = aex * bey - bex * aey
    bc = bex * cey - cex * bey
    cd = cex * dey - dex * cey
    da = dex * aey - aex * dey
    ac = aex * cey - cex * aey
    bd = bex * dey - dex * bey

    abc = aez * bc - bez * ac + cez * ab
    bcd = bez * cd - cez * bd + dez * bc
    cda = cez * da + dez * ac + aez * cd
    dab = dez * ab + aez * bd + bez * da

    alift = aex * aex + aey * aey + aez * aez
    blift = bex * bex + bey * bey + bez * bez
    clift = cex * cex + cey * cey + cez * cez
    dlift = dex * dex + dey * dey + dez * dez

    det = (dlift * abc - clift * dab) + (blift * cda - alift * bcd)

    aezp = abs(aez)
    bezp = abs(bez)
    cezp = abs(cez)
    dezp = abs(dez)
    abp = abs(aex * bey) + abs(bex * aey)
    bcp = abs(bex * cey) + abs(cex * bey)
    cdp = abs(cex * dey) + abs(dex * cey)
    dap = abs(dex * aey) + abs(aex * dey)
    acp = abs(aex * cey) + abs(cex * aey)
    bdp = abs(bex * dey) + abs(dex * bey)
    perm = (dlift * (aezp * bcp + bezp * acp + cezp * abp)
            + clift * (dezp * abp + aezp * bdp + bezp * dap)
            + blift * (cezp * dap + dezp * acp + aezp * cdp)
            + alift * (bezp * cdp + cezp * bdp + dezp * bcp))
    return det, perm


@njit(cache=True)
def _insphere_dd(ax, ay, az, bx, by, bz, cx, cy, cz, dx, dy, dz, ex, ey, ez):
    """Lifted determinant with pivot e in double-double; returns hi part."""
    aexh, aexl = _two_diff(ax, ex)
    aeyh, aeyl = _two_diff(ay, ey)
    aezh, aezl = _two_diff(az, ez)
    bexh, bexl = _two_diff(bx, ex)
    beyh, beyl = _two_diff(by, ey)
    bezh, bezl = _two_diff(bz, ez)
    cexh, cexl = _two_diff(cx, ex)
    ceyh, ceyl = _two_diff(cy, ey)
    cezh, cezl = _two_diff(cz, ez)
    dexh, dexl = _two_diff(dx, ex)
    deyh, deyl = _two_diff(dy, ey)
    dezh, dezl = _two_diff(dz, ez)

    t1h, t1l = _dd_mul(aexh, aexl, beyh, beyl)
    t2h, t2l = _dd_mul(bexh, bexl, aeyh, aeyl)
    abh, abl = _dd_sub(t1h, t1l, t2h, t2l)

    t1h, t1l = _dd_mul(bexh, bexl, ceyh, ceyl)
    t2h, t2l = _dd_mul(cexh, cexl, beyh, beyl)
    bch, bcl = _dd_sub(t1h, t1l, t2h, t2l)

    t1h, t1l = _dd_mul(cexh, cexl, deyh, deyl)
    t2h, t2l = _dd_mul(dexh, dexl, ceyh, ceyl)
    cdh, cdl = _dd_sub(t1h, t1l, t2h, t2l)

    t1h, t1l = _dd_mul(dexh, dexl, aeyh, aeyl)
    t2h, t2l = _dd_mul(aexh, aexl, deyh, deyl)
    dah, dal = _dd_sub(t1h, t1l, t2h, t2l)

    t1h, t1l = _dd_mul(aexh, aexl, ceyh, ceyl)
    t2h, t2l = _dd_mul(cexh, cexl, aeyh, aeyl)
    ach, acl = _dd_sub(t1h, t1l, t2h, t2l)

    t1h, t1l = _dd_mul(bexh, bexl, deyh, deyl)
    t2h, t2l = _dd_mul(dexh, dexl, beyh, beyl)
    bdh, bdl = _dd_sub(t1h, t1l, t2h, t2l)

    # abc = aez*bc - bez*ac + cez*ab
    t1h, t1l = _dd_mul(aezh, aezl, bch, bcl)
    t2h, t2l = _dd_mul(bezh, bezl, ach, acl)
    t3h, t3l = _dd_mul(cezh, cezl, abh, abl)
    abch, abcl = _dd_sub(t1h, t1l, t2h, t2l)
    abch, abcl = _dd_add(abch, abcl, t3h, t3l)

    # bcd = bez*cd - cez*bd + dez*bc
    t1h, t1l = _dd_mul(bezh, bezl, cdh, cdl)
    t2h, t2l = _dd_mul(cezh, cezl, bdh, bdl)
    t3h, t3l = _dd_mul(dezh, dezl, bch, bcl)
    bcdh, bcdl = _dd_sub(t1h, t1l, t2h, t2l)
    bcdh, bcdl = _dd_add(bcdh, bcdl, t3h, t3l)

    # cda = cez*da + dez*ac + aez*cd
    t1h, t1l = _dd_mul(cezh, cezl, dah, dal)
    t2h, t2l = _dd_mul(dezh, dezl, ach, acl)
    t3h, t3l = _dd_mul(aezh, aezl, cdh, cdl)
    cdah, cdal = _dd_add(t1h, t1l, t2h, t2l)
    cdah, cdal = _dd_add(cdah, cdal, t3h, t3l)

    # dab = dez*ab + aez*bd + bez*da
    t1h, t1l = _dd_mul(dezh, dezl, abh, abl)
    t2h, t2l = _dd_mul(aezh, aezl, bdh, bdl)
    t3h, t3l = _dd_mul(bezh, bezl, dah, dal)
    dabh, dabl = _dd_add(t1h, t1l, t2h, t2l)
    dabh, dabl = _dd_add(dabh, dabl, t3h, t3l)

    # lifts
    t1h, t1l = _dd_mul(aexh, aexl, aexh, aexl)
    t2h, t2l = _dd_mul(aeyh, aeyl, aeyh, aeyl)
    alh, all_ = _dd_add(t1h, t1l, t2h, t2l)
    t1h, t1l = _dd_mul(aezh, aezl, aezh, aezl)
    alh, all_ = _dd_add(alh, all_, t1h, t1l)

    t1h, t1l = _dd_mul(bexh, bexl, bexh, bexl)
    t2h, t2l = _dd_mul(beyh, beyl, beyh, beyl)
    blh, bll = _dd_add(t1h, t1l, t2h, t2l)
    t1h, t1l = _dd_mul(bezh, bezl, bezh, bezl)
    blh, bll = _dd_add(blh, bll, t1h, t1l)

    t1h, t1l = _dd_mul(cexh, cexl, cexh, cexl)
    t2h, t2l = _dd_mul(ceyh, ceyl, ceyh, ceyl)
    clh, cll = _dd_add(t1h, t1l, t2h, t2l)
    t1h, t1l = _dd_mul(cezh, cezl, cezh, cezl)
    clh, cll = _dd_add(clh, cll, t1h, t1l)

    t1h, t1l = _dd_mul(dexh, dexl, dexh, dexl)
    t2h, t2l = _dd_mul(deyh, deyl, deyh, deyl)
    dlh, dll = _dd_add(t1h, t1l, t2h, t2l)
    t1h, t1l = _dd_mul(dezh, dezl, dezh, dezl)
    dlh, dll = _dd_add(dlh, dll, t1h, t1l)

    t1h, t1l = _dd_mul(dlh, dll, abch, abcl)
    t2h, t2l = _dd_mul(clh, cll, dabh, dabl)
    r1h, r1l = _dd_sub(t1h, t1l, t2h, t2l)
    t1h, t1l = _dd_mul(blh, bll, cdah, cdal)
    t2h, t2l = _dd_mul(alh, all_, bcdh, bcdl)
    r2h, r2l = _dd_sub(t1h, t1l, t2h, t2l)
    rh, rl = _dd_add(r1h, r1l, r2h, r2l)
    return rh


@njit(cache=True)
def _insphere_sign(ax, ay, az, bx, by, bz, cx, cy, cz, dx, dy, dz,
                   ex, ey, ez):
    """Robust sign, +1 when e is strictly inside; 0 on a tie.
    Assumes (a, b, c, d) positively oriented."""
    det, perm = _insphere_float(ax, ay, az, bx, by, bz, cx, cy, cz,
                                dx, dy, dz, ex, ey, ez)
    if abs(det) > _INS_FILTER * perm:
        return -1.0 if det > 0.0 else 1.0
    dh = _insphere_dd(ax, ay, az, bx, by, bz, cx, cy, cz, dx, dy, dz,
                      ex, ey, ez)
    if abs(dh) > _DD_FILTER * perm:
        return -1.0 if dh > 0.0 else 1.0
    return 0.0


# ---------------------------------------------------------------------------
# 2D predicates
# ---------------------------------------------------------------------------

@njit(cache=True)
def _orient2d_sign(ax, ay, bx, by, cx, cy):
    detl = (bx - ax) * (cy - ay)
    detr = (by - ay) * (cx - ax)
    det = detl - detr
    perm = abs(detl) + abs(detr)
    if abs(det) > _O2D_FILTER * perm:
        return 1.0 if det > 0.0 else -1.0
    t1h, t1l = _two_diff(bx, ax)
    t2h, t2l = _two_diff(cy, ay)
    lh, ll = _dd_mul(t1h, t1l, t2h, t2l)
    t1h, t1l = _two_diff(by, ay)
    t2h, t2l = _two_diff(cx, ax)
    rh, rl = _dd_mul(t1h, t1l, t2h, t2l)
    dh, dl = _dd_sub(lh, ll, rh, rl)
    if abs(dh) > _DD_FILTER * perm:
        return 1.0 if dh > 0.0 else -1.0
    return 0.0


@njit(cache=True)
def _incircle_float(ax, ay, bx, by, cx, cy, dx, dy):
    adx = ax - dx
    ady = ay - dy
    bdx = bx - dx
    bdy = by - dy
    cdx = cx - dx
    cdy = cy - dy
    al = adx * adx + ady * ady
    bl = bdx * bdx + bdy * bdy
    cl = cdx * cdx + cdy * cdy
    bxc = bdx * cdy - cdx * bdy
    axc = adx * cdy - cdx * ady
    axb = adx * bdy - bdx * ady
    det = al * bxc - bl * axc + cl * axb
    perm = (al * (abs(bdx * cdy) + abs(cdx * bdy))
            + bl * (abs(adx * cdy) + abs(cdx * ady))
            + cl * (abs(adx * bdy) + abs(bdx * ady)))
    return det, perm


@njit(cache=True)
def _incircle_dd(ax, ay, bx, by, cx, cy, dx, dy):
    adxh, adxl = _two_diff(ax, dx)
    adyh, adyl = _two_diff(ay, dy)
    bdxh, bdxl = _two_diff(bx, dx)
    bdyh, bdyl = _two_diff(by, dy)
    cdxh, cdxl = _two_diff(cx, dx)
    cdyh, cdyl = _two_diff(cy, dy)

    t1h, t1l = _dd_mul(adxh, adxl, adxh, adxl)
    t2h, t2l = _dd_mul(adyh, adyl, adyh, adyl)
    alh, all_ = _dd_add(t1h, t1l, t2h, t2l)
    t1h, t1l = _dd_mul(bdxh, bdxl, bdxh, bdxl)
    t2h, t2l = _dd_mul(bdyh, bdyl, bdyh, bdyl)
    blh, bll = _dd_add(t1h, t1l, t2h, t2l)
    t1h, t1l = _dd_mul(cdxh, cdxl, cdxh, cdxl)
    t2h, t2l = _dd_mul(cdyh, cdyl, cdyh, cdyl)
    clh, cll = _dd_add(t1h, t1l, t2h, t2l)

    t1h, t1l = _dd_mul(bdxh, bdxl, cdyh, cdyl)
    t2h, t2l = _dd_mul(cdxh, cdxl, bdyh, bdyl)
    bxch, bxcl = _dd_sub(t1h, t1l, t2h, t2l)
    t1h, t1l = _dd_mul(adxh, adxl, cdyh, cdyl)
    t2h, t2l = _dd_mul(cdxh, cdxl, adyh, adyl)
    axch, axcl = _dd_sub(t1h, t1l, t2h, t2l)
    t1h, t1l = _dd_mul(adxh, adxl, bdyh, bdyl)
    t2h, t2l = _dd_mul(bdxh, bdxl, adyh, adyl)
    axbh, axbl = _dd_sub(t1h, t1l, t2h, t2l)

    t1h, t1l = _dd_mul(alh, all_, bxch, bxcl)
    t2h, t2l = _dd_mul(blh, bll, axch, axcl)
    r1h, r1l = _dd_sub(t1h, t1l, t2h, t2l)
    t1h, t1l = _dd_mul(clh, cll, axbh, axbl)
    rh, rl = _dd_add(r1h, r1l, t1h, t1l)
    return rh


@njit(cache=True)
def _incircle_sign(ax, ay, bx, by, cx, cy, dx, dy):
    """+1 when d strictly inside the circumcircle of CCW (a, b, c)."""
    det, perm = _incircle_float(ax, ay, bx, by, cx, cy, dx, dy)
    if abs(det) > _INC_FILTER * perm:
        return 1.0 if det > 0.0 else -1.0
    dh = _incircle_dd(ax, ay, bx, by, cx, cy, dx, dy)
    if abs(dh) > _DD_FILTER * perm:
        return 1.0 if dh > 0.0 else -1.0
    return 0.0


# ---------------------------------------------------------------------------
# index-keyed variants (used by the Delaunay kernels); ties are broken by
# the deterministic perturbation and the returned sign is never 0.
# ---------------------------------------------------------------------------

@njit(cache=True)
def _sort4(i0, i1, i2, i3):
    """Insertion sort of 4 indices; returns sorted tuple and parity (+-1)."""
    a, b, c, d = i0, i1, i2, i3
    sign = 1.0
    if a > b:
        a, b = b, a
        sign = -sign
    if c > d:
        c, d = d, c
        sign = -sign
    if a > c:
        a, c = c, a
        sign = -sign
    if b > d:
        b, d = d, b
        sign = -sign
    if b > c:
        b, c = c, b
        sign = -sign
    return a, b, c, d, sign


@njit(cache=True)
def _sort3(i0, i1, i2):
    a, b, c = i0, i1, i2
    sign = 1.0
    if a > b:
        a, b = b, a
        sign = -sign
    if b > c:
        b, c = c, b
        sign = -sign
    if a > b:
        a, b = b, a
        sign = -sign
    return a, b, c, sign


@njit(cache=True)
def orient3d_idx(pts, i, j, k, l):
    """Sign of orient3d on rows of ``pts``; ties broken symbolically.

    Arguments are canonicalized by index order first, so every argument
    permutation of the same four vertices returns a consistent
    (parity-adjusted) answer.
    """
    a, b, c, d, sign = _sort4(np.int64(i), np.int64(j), np.int64(k),
                              np.int64(l))
    s = _orient3d_sign(pts[a, 0], pts[a, 1], pts[a, 2],
                       pts[b, 0], pts[b, 1], pts[b, 2],
                       pts[c, 0], pts[c, 1], pts[c, 2],
                       pts[d, 0], pts[d, 1], pts[d, 2])
    if s != 0.0:
        return s * sign
    # Perturbation magnitudes are per point, not per tuple, so a point
    # shared by many tuples is always displaced the same way and the
    # tie-broken answers stay mutually consistent.
    sa = _point_scale3(pts, a)
    sb = _point_scale3(pts, b)
    sc = _point_scale3(pts, c)
    sd = _point_scale3(pts, d)
    for level in range(1, 28):
        eps = 2.0 ** (-46 + 2 * level)
        axc = pts[a, 0] + eps * sa * _jitter(a, 0)
        ayc = pts[a, 1] + eps * sa * _jitter(a, 1)
        azc = pts[a, 2] + eps * sa * _jitter(a, 2)
        bxc = pts[b, 0] + eps * sb * _jitter(b, 0)
        byc = pts[b, 1] + eps * sb * _jitter(b, 1)
        bzc = pts[b, 2] + eps * sb * _jitter(b, 2)
        cxc = pts[c, 0] + eps * sc * _jitter(c, 0)
        cyc = pts[c, 1] + eps * sc * _jitter(c, 1)
        czc = pts[c, 2] + eps * sc * _jitter(c, 2)
        dxc = pts[d, 0] + eps * sd * _jitter(d, 0)
        dyc = pts[d, 1] + eps * sd * _jitter(d, 1)
        dzc = pts[d, 2] + eps * sd * _jitter(d, 2)
        det, perm = _orient3d_float(axc, ayc, azc, bxc, byc, bzc,
                                    cxc, cyc, czc, dxc, dyc, dzc)
        if abs(det) > _O3D_FILTER * perm:
            return (1.0 if det > 0.0 else -1.0) * sign
        dh, _dl = _orient3d_dd(axc, ayc, azc, bxc, byc, bzc,
                               cxc, cyc, czc, dxc, dyc, dzc)
        if abs(dh) > _DD_FILTER * perm and abs(dh) > 0.0:
            return (1.0 if dh > 0.0 else -1.0) * sign
    # unreachable for distinct points; fall back to index parity
    return sign


@njit(cache=True)
def insphere_idx(pts, i, j, k, l, m):
    """+1 when vertex m is inside the circumsphere of positively oriented
    tet (i, j, k, l); ties broken symbolically, never returns 0."""
    m = np.int64(m)
    a, b, c, d, sign = _sort4(np.int64(i), np.int64(j), np.int64(k),
                              np.int64(l))
    s = _insphere_sign(pts[a, 0], pts[a, 1], pts[a, 2],
                       pts[b, 0], pts[b, 1], pts[b, 2],
                       pts[c, 0], pts[c, 1], pts[c, 2],
                       pts[d, 0], pts[d, 1], pts[d, 2],
                       pts[m, 0], pts[m, 1], pts[m, 2])
    if s != 0.0:
        return s * sign
    sa = _point_scale3(pts, a)
    sb = _point_scale3(pts, b)
    sc = _point_scale3(pts, c)
    sd = _point_scale3(pts, d)
    sm = _point_scale3(pts, m)
    for level in range(1, 28):
        eps = 2.0 ** (-46 + 2 * level)
        axc = pts[a, 0] + eps * sa * _jitter(a, 0)
        ayc = pts[a, 1] + eps * sa * _jitter(a, 1)
        azc = pts[a, 2] + eps * sa * _jitter(a, 2)
        bxc = pts[b, 0] + eps * sb * _jitter(b, 0)
        byc = pts[b, 1] + eps * sb * _jitter(b, 1)
        bzc = pts[b, 2] + eps * sb * _jitter(b, 2)
        cxc = pts[c, 0] + eps * sc * _jitter(c, 0)
        cyc = pts[c, 1] + eps * sc * _jitter(c, 1)
        czc = pts[c, 2] + eps * sc * _jitter(c, 2)
        dxc = pts[d, 0] + eps * sd * _jitter(d, 0)
        dyc = pts[d, 1] + eps * sd * _jitter(d, 1)
        dzc = pts[d, 2] + eps * sd * _jitter(d, 2)
        exc = pts[m, 0] + eps * sm * _jitter(m, 0)
        eyc = pts[m, 1] + eps * sm * _jitter(m, 1)
        ezc = pts[m, 2] + eps * sm * _jitter(m, 2)
        det, perm = _insphere_float(axc, ayc, azc, bxc, byc, bzc,
                                    cxc, cyc, czc, dxc, dyc, dzc,
                                    exc, eyc, ezc)
        if abs(det) > _INS_FILTER * perm:
            return (-1.0 if det > 0.0 else 1.0) * sign
        dh = _insphere_dd(axc, ayc, azc, bxc, byc, bzc, cxc, cyc, czc,
                          dxc, dyc, dzc, exc, eyc, ezc)
        if abs(dh) > _DD_FILTER * perm and abs(dh) > 0.0:
            return (-1.0 if dh > 0.0 else 1.0) * sign
    return sign


@njit(cache=True)
def orient2d_idx(pts, i, j, k):
    a, b, c, sign = _sort3(np.int64(i), np.int64(j), np.int64(k))
    s = _orient2d_sign(pts[a, 0], pts[a, 1], pts[b, 0], pts[b, 1],
                       pts[c, 0], pts[c, 1])
    if s != 0.0:
        return s * sign
    sa = _point_scale2(pts, a)
    sb = _point_scale2(pts, b)
    sc = _point_scale2(pts, c)
    for level in range(1, 28):
        eps = 2.0 ** (-46 + 2 * level)
        axc = pts[a, 0] + eps * sa * _jitter(a, 0)
        ayc = pts[a, 1] + eps * sa * _jitter(a, 1)
        bxc = pts[b, 0] + eps * sb * _jitter(b, 0)
        byc = pts[b, 1] + eps * sb * _jitter(b, 1)
        cxc = pts[c, 0] + eps * sc * _jitter(c, 0)
        cyc = pts[c, 1] + eps * sc * _jitter(c, 1)
        s = _orient2d_sign(axc, ayc, bxc, byc, cxc, cyc)
        if s != 0.0:
            return s * sign
    return sign


@njit(cache=True)
def incircle_idx(pts, i, j, k, m):
    m = np.int64(m)
    a, b, c, sign = _sort3(np.int64(i), np.int64(j), np.int64(k))
    s = _incircle_sign(pts[a, 0], pts[a, 1], pts[b, 0], pts[b, 1],
                       pts[c, 0], pts[c, 1], pts[m, 0], pts[m, 1])
    if s != 0.0:
        return s * sign
    sa = _point_scale2(pts, a)
    sb = _point_scale2(pts, b)
    sc = _point_scale2(pts, c)
    sm = _point_scale2(pts, m)
    for level in range(1, 28):
        eps = 2.0 ** (-46 + 2 * level)
        axc = pts[a, 0] + eps * sa * _jitter(a, 0)
        ayc = pts[a, 1] + eps * sa * _jitter(a, 1)
        bxc = pts[b, 0] + eps * sb * _jitter(b, 0)
        byc = pts[b, 1] + eps * sb * _jitter(b, 1)
        cxc = pts[c, 0] + eps * sc * _jitter(c, 0)
        cyc = pts[c, 1] + eps * sc * _jitter(c, 1)
        dxc = pts[m, 0] + eps * sm * _jitter(m, 0)
        dyc = pts[m, 1] + eps * sm * _jitter(m, 1)
        s = _incircle_sign(axc, ayc, bxc, byc, cxc, cyc, dxc, dyc)
        if s != 0.0:
            return s * sign
    return sign
