"""Numba-compiled kernels. Element encoding matches geometry.pack_elements:
kind 0 = segment (x1 y1 x2 y2), 1 = arc (cx cy r th_start th_end),
2 = circle (cx cy r). Arc containment is half-open [th_start, th_end) with
th_start in [0, 2pi) and th_end in (th_start, th_start + 2pi).
"""

import math

import numpy as np
from numba import njit, prange

TWO_PI = 2.0 * math.pi


@njit(cache=True, inline="always")
def _dist_point_element(qx, qy, kind, p0, p1, p2, p3, p4):
    """Distance, closest point, and unit gradient direction d(dist)/dq.

    Returns (d, fx, fy, ux, uy). The direction falls back to the element
    normal (segment) / outward radial (circle, arc) when d == 0 so that
    registration jacobians stay well-defined for on-element points.
    """
    if kind == 0:
        dx = p2 - p0
        dy = p3 - p1
        t = ((qx - p0) * dx + (qy - p1) * dy) / (dx * dx + dy * dy)
        if t < 0.0:
            t = 0.0
        elif t > 1.0:
            t = 1.0
        fx = p0 + t * dx
        fy = p1 + t * dy
        d = math.hypot(qx - fx, qy - fy)
        if d > 1e-12:
            ux = (qx - fx) / d
            uy = (qy - fy) / d
        else:
            ln = math.hypot(dx, dy)
            ux = -dy / ln
            uy = dx / ln
        return d, fx, fy, ux, uy
    elif kind == 2:
        vx = qx - p0
        vy = qy - p1
        norm = math.hypot(vx, vy)
        if norm < 1e-12:
            # Query at center: convention is the angle-0 point.
            return p2, p0 + p2, p1, 1.0, 0.0
        fx = p0 + p2 * vx / norm
        fy = p1 + p2 * vy / norm
        d = abs(norm - p2)
        s = 1.0 if norm >= p2 else -1.0
        return d, fx, fy, s * vx / norm, s * vy / norm
    else:
        vx = qx - p0
        vy = qy - p1
        norm = math.hypot(vx, vy)
        theta = math.atan2(vy, vx) % TWO_PI
        if theta < p3:
            theta += TWO_PI
        if p3 <= theta < p4 and norm > 1e-12:
            fx = p0 + p2 * math.cos(theta)
            fy = p1 + p2 * math.sin(theta)
            d = abs(norm - p2)
            s = 1.0 if norm >= p2 else -1.0
            return d, fx, fy, s * vx / norm, s * vy / norm
        e1x = p0 + p2 * math.cos(p3)
        e1y = p1 + p2 * math.sin(p3)
        e2x = p0 + p2 * math.cos(p4)
        e2y = p1 + p2 * math.sin(p4)
        d1 = math.hypot(qx - e1x, qy - e1y)
        d2 = math.hypot(qx - e2x, qy - e2y)
        if d1 <= d2:
            fx, fy, d = e1x, e1y, d1
        else:
            fx, fy, d = e2x, e2y, d2
        if d > 1e-12:
            return d, fx, fy, (qx - fx) / d, (qy - fy) / d
        if norm > 1e-12:
            return d, fx, fy, vx / norm, vy / norm
        return d, fx, fy, 1.0, 0.0


@njit(cache=True, parallel=True)
def nearest_two(qx, qy, kinds, params):
    """Two nearest element ids (ascending distance, ties by smaller id)
    and their distances, for a batch of query points."""
    m = qx.shape[0]
    n = kinds.shape[0]
    i0 = np.empty(m, dtype=np.int32)
    i1 = np.empty(m, dtype=np.int32)
    d0 = np.empty(m, dtype=np.float64)
    d1 = np.empty(m, dtype=np.float64)
    for q in prange(m):
        b0 = -1
        b1 = -1
        bd0 = np.inf
        bd1 = np.inf
        for e in range(n):
            d, _, _, _, _ = _dist_point_element(
                qx[q], qy[q], kinds[e],
                params[e, 0], params[e, 1], params[e, 2], params[e, 3], params[e, 4])
            if d < bd0:
                bd1 = bd0
                b1 = b0
                bd0 = d
                b0 = e
            elif d < bd1:
                bd1 = d
                b1 = e
        if b1 < 0:
            b1 = b0
            bd1 = bd0
        i0[q] = b0
        i1[q] = b1
        d0[q] = bd0
        d1[q] = bd1
    return i0, i1, d0, d1


@njit(cache=True, parallel=True)
def point_residuals(px, py, ids, kinds, params):
    """Exact distance and unit gradient direction to an assigned element
    per point."""
    m = px.shape[0]
    dist = np.empty(m, dtype=np.float64)
    ux = np.empty(m, dtype=np.float64)
    uy = np.empty(m, dtype=np.float64)
    for q in prange(m):
        e = ids[q]
        d, _, _, gx, gy = _dist_point_element(
            px[q], py[q], kinds[e],
            params[e, 0], params[e, 1], params[e, 2], params[e, 3], params[e, 4])
        dist[q] = d
        ux[q] = gx
        uy[q] = gy
    return dist, ux, uy


@njit(cache=True, parallel=True)
def annf_lookup(qx, qy, origin_x, origin_y, root_length, nx, ny,
                root_index, cx, cy, first_child, n0, n1):
    """Quad-tree descent for a batch of queries.

    Child order below a parent: index offset (x >= cx) + 2*(y >= cy).
    ok[q] = 0 flags out-of-grid queries (ids set to -1).
    """
    m = qx.shape[0]
    i0 = np.empty(m, dtype=np.int32)
    i1 = np.empty(m, dtype=np.int32)
    ok = np.empty(m, dtype=np.uint8)
    for q in prange(m):
        gx = int(math.floor((qx[q] - origin_x) / root_length))
        gy = int(math.floor((qy[q] - origin_y) / root_length))
        if gx < 0 or gx >= nx or gy < 0 or gy >= ny:
            i0[q] = -1
            i1[q] = -1
            ok[q] = 0
            continue
        node = root_index[gy * nx + gx]
        while first_child[node] >= 0:
            off = 0
            if qx[q] >= cx[node]:
                off += 1
            if qy[q] >= cy[node]:
                off += 2
            node = first_child[node] + off
        i0[q] = n0[node]
        i1[q] = n1[node]
        ok[q] = 1
    return i0, i1, ok


@njit(cache=True, inline="always")
def _ray_circle(ox, oy, dx, dy, ccx, ccy, r):
    """Smaller/larger positive ray parameters hitting circle |p-c|=r
    in the xy plane (inf when none)."""
    mx = ox - ccx
    my = oy - ccy
    a = dx * dx + dy * dy
    if a < 1e-18:
        return np.inf, np.inf
    b = mx * dx + my * dy
    c = mx * mx + my * my - r * r
    disc = b * b - a * c
    if disc < 0.0:
        return np.inf, np.inf
    s = math.sqrt(disc)
    t1 = (-b - s) / a
    t2 = (-b + s) / a
    return t1, t2


@njit(cache=True, parallel=True)
def raycast(ox, oy, oz, dirs, kinds, params, ground_z, ceiling_z,
            boxes, cylinders, max_range):
    """Nearest positive hit range per ray against ground/ceiling planes,
    plan elements extruded over [ground_z, ceiling_z], clutter boxes
    (xmin ymin zmin xmax ymax zmax) and vertical cylinders
    (cx cy r zmin zmax). Misses return inf."""
    m = dirs.shape[0]
    n = kinds.shape[0]
    out = np.empty(m, dtype=np.float64)
    eps = 1e-9
    for q in prange(m):
        dx = dirs[q, 0]
        dy = dirs[q, 1]
        dz = dirs[q, 2]
        best = max_range
        hit = False
        # Horizontal planes.
        if dz > eps:
            t = (ceiling_z - oz) / dz
            if eps < t < best:
                best = t
                hit = True
        elif dz < -eps:
            t = (ground_z - oz) / dz
            if eps < t < best:
                best = t
                hit = True
        # Extruded plan elements.
        for e in range(n):
            k = kinds[e]
            if k == 0:
                x1 = params[e, 0]
                y1 = params[e, 1]
                ex = params[e, 2] - x1
                ey = params[e, 3] - y1
                den = dx * ey - dy * ex
                if abs(den) < 1e-18:
                    continue
                t = ((x1 - ox) * ey - (y1 - oy) * ex) / den
                if t <= eps or t >= best:
                    continue
                if abs(ex) >= abs(ey):
                    s = (ox + t * dx - x1) / ex
                else:
                    s = (oy + t * dy - y1) / ey
                if s < 0.0 or s > 1.0:
                    continue
                z = oz + t * dz
                if ground_z <= z <= ceiling_z:
                    best = t
                    hit = True
            else:
                ccx = params[e, 0]
                ccy = params[e, 1]
                r = params[e, 2]
                t1, t2 = _ray_circle(ox, oy, dx, dy, ccx, ccy, r)
                for ti in (t1, t2):
                    if ti <= eps or ti >= best:
                        continue
                    z = oz + ti * dz
                    if z < ground_z or z > ceiling_z:
                        continue
                    if k == 1:
                        hx = ox + ti * dx - ccx
                        hy = oy + ti * dy - ccy
                        theta = math.atan2(hy, hx) % TWO_PI
                        if theta < params[e, 3]:
                            theta += TWO_PI
                        if not (params[e, 3] <= theta < params[e, 4]):
                            continue
                    best = ti
                    hit = True
        # Clutter boxes: slab test.
        for b in range(boxes.shape[0]):
            tmin = eps
            tmax = best
            inside = True
            for ax in range(3):
                if ax == 0:
                    o, d, lo, hi = ox, dx, boxes[b, 0], boxes[b, 3]
                elif ax == 1:
                    o, d, lo, hi = oy, dy, boxes[b, 1], boxes[b, 4]
                else:
                    o, d, lo, hi = oz, dz, boxes[b, 2], boxes[b, 5]
                if abs(d) < 1e-18:
                    if o < lo or o > hi:
                        inside = False
                        break
                else:
                    ta = (lo - o) / d
                    tb = (hi - o) / d
                    if ta > tb:
                        ta, tb = tb, ta
                    if ta > tmin:
                        tmin = ta
                    if tb < tmax:
                        tmax = tb
                    if tmin > tmax:
                        inside = False
                        break
            if inside and eps < tmin < best:
                best = tmin
                hit = True
        # Clutter cylinders: side surface plus caps.
        for c in range(cylinders.shape[0]):
            ccx = cylinders[c, 0]
            ccy = cylinders[c, 1]
            r = cylinders[c, 2]
            zlo = cylinders[c, 3]
            zhi = cylinders[c, 4]
            t1, t2 = _ray_circle(ox, oy, dx, dy, ccx, ccy, r)
            for ti in (t1, t2):
                if eps < ti < best:
                    z = oz + ti * dz
                    if zlo <= z <= zhi:
                        best = ti
                        hit = True
            if abs(dz) > eps:
                for zcap in (zlo, zhi):
                    t = (zcap - oz) / dz
                    if eps < t < best:
                        hx = ox + t * dx - ccx
                        hy = oy + t * dy - ccy
                        if hx * hx + hy * hy <= r * r:
                            best = t
                            hit = True
        out[q] = best if hit else np.inf
    return out
