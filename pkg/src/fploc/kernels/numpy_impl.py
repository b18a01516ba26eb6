"""Pure-numpy fallback kernels, semantically identical to numba_impl.

Loops run over elements (small) with all per-query work vectorized, so
memory stays O(n_queries) even for million-point batches.
"""

import math

import numpy as np

TWO_PI = 2.0 * math.pi


def _dist_dir_element(qx, qy, kind, p):
    """Vectorized distance + unit gradient direction to one element.

    Returns (d, ux, uy) arrays matching numba_impl._dist_point_element.
    """
    if kind == 0:
        ex, ey = p[2] - p[0], p[3] - p[1]
        t = np.clip(((qx - p[0]) * ex + (qy - p[1]) * ey) / (ex * ex + ey * ey), 0.0, 1.0)
        fx = p[0] + t * ex
        fy = p[1] + t * ey
        d = np.hypot(qx - fx, qy - fy)
        safe = d > 1e-12
        ln = math.hypot(ex, ey)
        ux = np.where(safe, (qx - fx) / np.where(safe, d, 1.0), -ey / ln)
        uy = np.where(safe, (qy - fy) / np.where(safe, d, 1.0), ex / ln)
        return d, ux, uy
    vx = qx - p[0]
    vy = qy - p[1]
    norm = np.hypot(vx, vy)
    nz = norm > 1e-12
    norm_safe = np.where(nz, norm, 1.0)
    rad = np.abs(norm - p[2])
    s = np.where(norm >= p[2], 1.0, -1.0)
    rux = np.where(nz, s * vx / norm_safe, 1.0)
    ruy = np.where(nz, s * vy / norm_safe, 0.0)
    rd = np.where(nz, rad, p[2])
    if kind == 2:
        return rd, rux, ruy
    # Arc: radial projection where the angle lies in the sweep, else the
    # nearer endpoint.
    theta = np.arctan2(vy, vx) % TWO_PI
    theta = np.where(theta < p[3], theta + TWO_PI, theta)
    interior = (theta >= p[3]) & (theta < p[4]) & nz
    e1x, e1y = p[0] + p[2] * math.cos(p[3]), p[1] + p[2] * math.sin(p[3])
    e2x, e2y = p[0] + p[2] * math.cos(p[4]), p[1] + p[2] * math.sin(p[4])
    d1 = np.hypot(qx - e1x, qy - e1y)
    d2 = np.hypot(qx - e2x, qy - e2y)
    pick1 = d1 <= d2
    dep = np.where(pick1, d1, d2)
    epx = np.where(pick1, e1x, e2x)
    epy = np.where(pick1, e1y, e2y)
    dsafe = np.where(dep > 1e-12, dep, 1.0)
    eux = np.where(dep > 1e-12, (qx - epx) / dsafe, np.where(nz, vx / norm_safe, 1.0))
    euy = np.where(dep > 1e-12, (qy - epy) / dsafe, np.where(nz, vy / norm_safe, 0.0))
    d = np.where(interior, rd, dep)
    ux = np.where(interior, rux, eux)
    uy = np.where(interior, ruy, euy)
    return d, ux, uy


def nearest_two(qx, qy, kinds, params):
    m = qx.shape[0]
    b0 = np.full(m, -1, dtype=np.int32)
    b1 = np.full(m, -1, dtype=np.int32)
    d0 = np.full(m, np.inf)
    d1 = np.full(m, np.inf)
    for e in range(kinds.shape[0]):
        d, _, _ = _dist_dir_element(qx, qy, kinds[e], params[e])
        first = d < d0
        d1 = np.where(first, d0, d1)
        b1 = np.where(first, b0, b1)
        d0 = np.where(first, d, d0)
        b0 = np.where(first, np.int32(e), b0)
        second = ~first & (d < d1)
        d1 = np.where(second, d, d1)
        b1 = np.where(second, np.int32(e), b1)
    single = b1 < 0
    b1 = np.where(single, b0, b1)
    d1 = np.where(single, d0, d1)
    return b0, b1, d0, d1


def point_residuals(px, py, ids, kinds, params):
    m = px.shape[0]
    dist = np.empty(m)
    ux = np.empty(m)
    uy = np.empty(m)
    for e in np.unique(ids):
        sel = ids == e
        d, gx, gy = _dist_dir_element(px[sel], py[sel], kinds[e], params[e])
        dist[sel] = d
        ux[sel] = gx
        uy[sel] = gy
    return dist, ux, uy


def annf_lookup(qx, qy, origin_x, origin_y, root_length, nx, ny,
                root_index, cx, cy, first_child, n0, n1):
    gx = np.floor((qx - origin_x) / root_length).astype(np.int64)
    gy = np.floor((qy - origin_y) / root_length).astype(np.int64)
    ok = ((gx >= 0) & (gx < nx) & (gy >= 0) & (gy < ny)).astype(np.uint8)
    node = root_index[np.where(ok == 1, gy * nx + gx, 0)].astype(np.int64)
    while True:
        fc = first_child[node]
        active = fc >= 0
        if not active.any():
            break
        off = (qx >= cx[node]).astype(np.int64) + 2 * (qy >= cy[node]).astype(np.int64)
        node = np.where(active, fc + off, node)
    i0 = np.where(ok == 1, n0[node], np.int32(-1)).astype(np.int32)
    i1 = np.where(ok == 1, n1[node], np.int32(-1)).astype(np.int32)
    return i0, i1, ok


def _ray_circle(ox, oy, dx, dy, ccx, ccy, r):
    mx = ox - ccx
    my = oy - ccy
    a = dx * dx + dy * dy
    b = mx * dx + my * dy
    c = mx * mx + my * my - r * r
    disc = b * b - a * c
    valid = (disc >= 0.0) & (a > 1e-18)
    s = np.sqrt(np.where(valid, disc, 0.0))
    asafe = np.where(a > 1e-18, a, 1.0)
    t1 = np.where(valid, (-b - s) / asafe, np.inf)
    t2 = np.where(valid, (-b + s) / asafe, np.inf)
    return t1, t2


def raycast(ox, oy, oz, dirs, kinds, params, ground_z, ceiling_z,
            boxes, cylinders, max_range):
    eps = 1e-9
    dx, dy, dz = dirs[:, 0], dirs[:, 1], dirs[:, 2]
    best = np.full(dirs.shape[0], max_range)

    def consider(t, extra_ok=True):
        nonlocal best
        z = oz + t * dz
        good = (t > eps) & (t < best) & (z >= ground_z) & (z <= ceiling_z) & extra_ok
        best = np.where(good, t, best)

    with np.errstate(divide="ignore", invalid="ignore"):
        up = dz > eps
        t = np.where(up, (ceiling_z - oz) / np.where(up, dz, 1.0), np.inf)
        best = np.where(up & (t > eps) & (t < best), t, best)
        down = dz < -eps
        t = np.where(down, (ground_z - oz) / np.where(down, dz, 1.0), np.inf)
        best = np.where(down & (t > eps) & (t < best), t, best)

        for e in range(kinds.shape[0]):
            p = params[e]
            if kinds[e] == 0:
                exx, eyy = p[2] - p[0], p[3] - p[1]
                den = dx * eyy - dy * exx
                denok = np.abs(den) > 1e-18
                t = np.where(denok, ((p[0] - ox) * eyy - (p[1] - oy) * exx)
                             / np.where(denok, den, 1.0), np.inf)
                if abs(exx) >= abs(eyy):
                    s = (ox + t * dx - p[0]) / exx
                else:
                    s = (oy + t * dy - p[1]) / eyy
                consider(t, (s >= 0.0) & (s <= 1.0))
            else:
                t1, t2 = _ray_circle(ox, oy, dx, dy, p[0], p[1], p[2])
                for t in (t1, t2):
                    if kinds[e] == 1:
                        hx = ox + t * dx - p[0]
                        hy = oy + t * dy - p[1]
                        theta = np.arctan2(hy, hx) % TWO_PI
                        theta = np.where(theta < p[3], theta + TWO_PI, theta)
                        consider(t, (theta >= p[3]) & (theta < p[4]))
                    else:
                        consider(t)

        for b in range(boxes.shape[0]):
            tmin = np.full_like(best, eps)
            tmax = best.copy()
            okb = np.ones_like(best, dtype=bool)
            for o, d, lo, hi in ((ox, dx, boxes[b, 0], boxes[b, 3]),
                                 (oy, dy, boxes[b, 1], boxes[b, 4]),
                                 (oz, dz, boxes[b, 2], boxes[b, 5])):
                par = np.abs(d) < 1e-18
                dsafe = np.where(par, 1.0, d)
                ta = (lo - o) / dsafe
                tb = (hi - o) / dsafe
                lo_t = np.minimum(ta, tb)
                hi_t = np.maximum(ta, tb)
                okb &= np.where(par, (o >= lo) & (o <= hi), True)
                tmin = np.where(par, tmin, np.maximum(tmin, lo_t))
                tmax = np.where(par, tmax, np.minimum(tmax, hi_t))
            good = okb & (tmin <= tmax) & (tmin > eps) & (tmin < best)
            best = np.where(good, tmin, best)

        for c in range(cylinders.shape[0]):
            ccx, ccy, r, zlo, zhi = cylinders[c]
            t1, t2 = _ray_circle(ox, oy, dx, dy, ccx, ccy, r)
            for t in (t1, t2):
                z = oz + t * dz
                good = (t > eps) & (t < best) & (z >= zlo) & (z <= zhi)
                best = np.where(good, t, best)
            dzok = np.abs(dz) > eps
            dzsafe = np.where(dzok, dz, 1.0)
            for zcap in (zlo, zhi):
                t = np.where(dzok, (zcap - oz) / dzsafe, np.inf)
                hx = ox + t * dx - ccx
                hy = oy + t * dy - ccy
                good = (t > eps) & (t < best) & (hx * hx + hy * hy <= r * r)
                best = np.where(good, t, best)

    return np.where(best < max_range, best, np.inf)
