"""Procedural floor-plan generators used by tests, benchmarks, and the
simulate CLI. All plans are valid closed indoor scenes so rays always
terminate on a wall, pillar, ceiling, or ground.
"""

from __future__ import annotations

import math

import numpy as np

from .geometry import Arc, Circle, FloorPlan, Segment


def _rect_walls(x0, y0, x1, y1, pieces: int = 1):
    """Axis-aligned rectangle outline, each side split into `pieces`
    collinear segments (raises element counts without changing geometry)."""
    out = []
    corners = [(x0, y0), (x1, y0), (x1, y1), (x0, y1), (x0, y0)]
    for (ax, ay), (bx, by) in zip(corners[:-1], corners[1:]):
        for i in range(pieces):
            t0, t1 = i / pieces, (i + 1) / pieces
            out.append(Segment(ax + t0 * (bx - ax), ay + t0 * (by - ay),
                               ax + t1 * (bx - ax), ay + t1 * (by - ay)))
    return out


def square_room(size: float = 8.0) -> FloorPlan:
    """Plain square room centered on the origin."""
    h = size / 2.0
    return FloorPlan(_rect_walls(-h, -h, h, h))


def room_with_pillars(size: float = 20.0, grid: int = 4,
                      pillar_radius: float = 0.3, seed: int = 0) -> FloorPlan:
    """Square room with a grid of alternating circular and square pillars.

    grid=4 gives 4 walls + 8 circles + 8*4 segments = 44 elements;
    grid=6 gives 148, grid=8 gives 260.
    """
    rng = np.random.default_rng(seed)
    h = size / 2.0
    elements = _rect_walls(-h, -h, h, h)
    step = size / (grid + 1)
    for i in range(grid):
        for j in range(grid):
            cx = -h + (i + 1) * step + rng.uniform(-0.15, 0.15)
            cy = -h + (j + 1) * step + rng.uniform(-0.15, 0.15)
            if (i + j) % 2 == 0:
                elements.append(Circle(cx, cy, pillar_radius))
            else:
                r = pillar_radius
                elements.extend(_rect_walls(cx - r, cy - r, cx + r, cy + r))
    return FloorPlan(elements)


def corridor_maze(cells: int = 4, cell: float = 6.0, width: float = 2.0,
                  pieces: int = 3, seed: int = 0) -> FloorPlan:
    """Serpentine corridor: a boustrophedon path through a cells x cells
    block, walls on both sides, long walls chopped into `pieces` segments.
    """
    rng = np.random.default_rng(seed)
    # Corridor centerline: sweep rows left->right->left...
    pts = []
    for row in range(cells):
        y = row * cell
        xs = [0.0, (cells - 1) * cell]
        if row % 2 == 1:
            xs.reverse()
        pts.append((xs[0], y))
        pts.append((xs[1], y))
    elements = []
    hw = width / 2.0
    # Offset both sides of each centerline leg; simple rectangles per leg
    # leave overlapping joints at turns, which is fine for localization
    # testing (walls are thin obstacles, duplicates only near corners).
    for (ax, ay), (bx, by) in zip(pts[:-1], pts[1:]):
        if ax == bx and ay == by:
            continue
        dx, dy = bx - ax, by - ay
        ln = math.hypot(dx, dy)
        nxv, nyv = -dy / ln * hw, dx / ln * hw
        for sgn in (1.0, -1.0):
            x0, y0 = ax + sgn * nxv, ay + sgn * nyv
            x1, y1 = bx + sgn * nxv, by + sgn * nyv
            # Shift wall ends outward so side walls meet at turns.
            ex, ey = dx / ln * hw, dy / ln * hw
            x0, y0, x1, y1 = x0 - ex, y0 - ey, x1 + ex, y1 + ey
            for i in range(pieces):
                t0, t1 = i / pieces, (i + 1) / pieces
                jx = rng.uniform(-0.01, 0.01)
                elements.append(Segment(x0 + t0 * (x1 - x0) + jx, y0 + t0 * (y1 - y0),
                                        x0 + t1 * (x1 - x0) + jx, y0 + t1 * (y1 - y0)))
    return FloorPlan(elements)


def mixed_arcs(size: float = 16.0, n_arcs: int = 12, seed: int = 0) -> FloorPlan:
    """Square room with rounded corners (quarter arcs), interior circular
    columns, and freestanding arc walls."""
    rng = np.random.default_rng(seed)
    h = size / 2.0
    r = 1.5
    elements = [
        # Sides between the rounded corners.
        Segment(-h + r, -h, h - r, -h),
        Segment(h, -h + r, h, h - r),
        Segment(h - r, h, -h + r, h),
        Segment(-h, h - r, -h, -h + r),
        # Quarter arcs at the corners (centers inset by r).
        Arc(h - r, -h + r, r, -math.pi / 2.0, 0.0),
        Arc(h - r, h - r, r, 0.0, math.pi / 2.0),
        Arc(-h + r, h - r, r, math.pi / 2.0, math.pi),
        Arc(-h + r, -h + r, r, math.pi, 3.0 * math.pi / 2.0),
    ]
    for _ in range(n_arcs):
        cx = rng.uniform(-h + 3.0, h - 3.0)
        cy = rng.uniform(-h + 3.0, h - 3.0)
        kind = rng.integers(0, 3)
        if kind == 0:
            elements.append(Circle(cx, cy, rng.uniform(0.2, 0.5)))
        elif kind == 1:
            a0 = rng.uniform(0.0, 2.0 * math.pi)
            elements.append(Arc(cx, cy, rng.uniform(0.5, 1.5), a0,
                                a0 + rng.uniform(0.8, 2.5)))
        else:
            ang = rng.uniform(0.0, math.pi)
            ln = rng.uniform(1.0, 3.0)
            elements.append(Segment(cx, cy, cx + ln * math.cos(ang),
                                    cy + ln * math.sin(ang)))
    return FloorPlan(elements)
