"""Parametric floor-plan model: wall primitives, exact point-to-element
geometry, and a brute-force nearest-element reference implementation.

All coordinates are meters, angles radians. A plan is a flat list of
elements (segments, circular arcs, full circles) with dense integer ids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

# Element kind codes shared with the numeric kernels.
KIND_SEGMENT = 0
KIND_ARC = 1
KIND_CIRCLE = 2

TWO_PI = 2.0 * math.pi

MIN_SEGMENT_LENGTH = 1e-9


class FloorPlanError(ValueError):
    """Malformed or invalid floor-plan input."""


@dataclass(frozen=True)
class Segment:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        for name in ("x1", "y1", "x2", "y2"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if math.hypot(self.x2 - self.x1, self.y2 - self.y1) <= MIN_SEGMENT_LENGTH:
            raise FloorPlanError("zero-length segment")

    @property
    def length(self) -> float:
        return math.hypot(self.x2 - self.x1, self.y2 - self.y1)


@dataclass(frozen=True)
class Arc:
    """Counter-clockwise arc from theta_start to theta_end.

    Angles are normalized on construction: theta_start to [0, 2pi),
    theta_end so that the sweep theta_end - theta_start lies in (0, 2pi).
    Angle containment is half-open: [theta_start, theta_end).
    """

    cx: float
    cy: float
    r: float
    theta_start: float
    theta_end: float

    def __post_init__(self):
        for name in ("cx", "cy", "r", "theta_start", "theta_end"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if self.r <= 0.0:
            raise FloorPlanError("arc radius must be positive")
        # Already-normalized angles pass through untouched so that
        # parse(dump(plan)) reproduces the exact float values.
        if 0.0 <= self.theta_start < TWO_PI and \
                self.theta_start < self.theta_end < self.theta_start + TWO_PI:
            return
        start = self.theta_start % TWO_PI
        sweep = (self.theta_end - self.theta_start) % TWO_PI
        if sweep == 0.0:
            raise FloorPlanError("arc sweep must be in (0, 2*pi); use CIRCLE for full circles")
        object.__setattr__(self, "theta_start", start)
        object.__setattr__(self, "theta_end", start + sweep)

    @property
    def sweep(self) -> float:
        return self.theta_end - self.theta_start

    def point_at(self, theta: float) -> tuple[float, float]:
        return (self.cx + self.r * math.cos(theta), self.cy + self.r * math.sin(theta))


@dataclass(frozen=True)
class Circle:
    cx: float
    cy: float
    r: float

    def __post_init__(self):
        for name in ("cx", "cy", "r"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if self.r <= 0.0:
            raise FloorPlanError("circle radius must be positive")


GeometricElement = Union[Segment, Arc, Circle]


@dataclass(frozen=True)
class ClosestPointResult:
    element_id: int
    point: tuple[float, float]
    distance: float


def _element_bounds(elem: GeometricElement) -> tuple[float, float, float, float]:
    if isinstance(elem, Segment):
        return (min(elem.x1, elem.x2), min(elem.y1, elem.y2),
                max(elem.x1, elem.x2), max(elem.y1, elem.y2))
    if isinstance(elem, Circle):
        return (elem.cx - elem.r, elem.cy - elem.r, elem.cx + elem.r, elem.cy + elem.r)
    # Arc: endpoints plus any axis-crossing angles inside the sweep.
    xs, ys = [], []
    for theta in (elem.theta_start, elem.theta_end):
        px, py = elem.point_at(theta)
        xs.append(px)
        ys.append(py)
    # Axis extremes at multiples of pi/2 that fall within [start, end].
    k0 = math.ceil(elem.theta_start / (math.pi / 2.0))
    theta = k0 * math.pi / 2.0
    while theta <= elem.theta_end:
        px, py = elem.point_at(theta)
        xs.append(px)
        ys.append(py)
        theta += math.pi / 2.0
    return (min(xs), min(ys), max(xs), max(ys))


class FloorPlan:
    """Immutable list of wall elements with dense ids and cached bounds.

    Also caches a packed ``(kinds, params)`` array representation consumed
    by the numeric kernels: one row of up to 5 floats per element.
    """

    def __init__(self, elements: list[GeometricElement]):
        if not elements:
            raise FloorPlanError("floor plan must contain at least one element")
        self.elements: tuple[GeometricElement, ...] = tuple(elements)
        bxs, bys, bxe, bye = zip(*(_element_bounds(e) for e in self.elements))
        self.bounds = (min(bxs), min(bys), max(bxe), max(bye))
        self.kinds, self.params = pack_elements(self.elements)

    def __len__(self) -> int:
        return len(self.elements)

    def __eq__(self, other) -> bool:
        return isinstance(other, FloorPlan) and self.elements == other.elements


def pack_elements(elements) -> tuple[np.ndarray, np.ndarray]:
    """Pack elements into (kinds int8 (n,), params float64 (n,5)) arrays.

    Segment: x1 y1 x2 y2 -; Arc: cx cy r theta_start theta_end;
    Circle: cx cy r - -.
    """
    n = len(elements)
    kinds = np.empty(n, dtype=np.int8)
    params = np.zeros((n, 5), dtype=np.float64)
    for i, e in enumerate(elements):
        if isinstance(e, Segment):
            kinds[i] = KIND_SEGMENT
            params[i, :4] = (e.x1, e.y1, e.x2, e.y2)
        elif isinstance(e, Arc):
            kinds[i] = KIND_ARC
            params[i] = (e.cx, e.cy, e.r, e.theta_start, e.theta_end)
        elif isinstance(e, Circle):
            kinds[i] = KIND_CIRCLE
            params[i, :3] = (e.cx, e.cy, e.r)
        else:
            raise TypeError(f"unknown element type {type(e)!r}")
    return kinds, params


def closest_point(query, element: GeometricElement, element_id: int = 0) -> ClosestPointResult:
    """Globally closest point on ``element`` to ``query``.

    Conventions for degenerate cases: a query at a circle center maps to
    the angle-0 point; arc containment is half-open [theta_start, theta_end).
    """
    qx, qy = float(query[0]), float(query[1])
    if isinstance(element, Segment):
        dx, dy = element.x2 - element.x1, element.y2 - element.y1
        t = ((qx - element.x1) * dx + (qy - element.y1) * dy) / (dx * dx + dy * dy)
        t = min(1.0, max(0.0, t))
        px, py = element.x1 + t * dx, element.y1 + t * dy
    elif isinstance(element, Circle):
        vx, vy = qx - element.cx, qy - element.cy
        norm = math.hypot(vx, vy)
        if norm == 0.0:
            px, py = element.cx + element.r, element.cy
        else:
            px = element.cx + element.r * vx / norm
            py = element.cy + element.r * vy / norm
    elif isinstance(element, Arc):
        vx, vy = qx - element.cx, qy - element.cy
        theta = math.atan2(vy, vx) % TWO_PI
        # Bring into [theta_start, theta_start + 2pi) before the sweep test.
        if theta < element.theta_start:
            theta += TWO_PI
        if element.theta_start <= theta < element.theta_end and math.hypot(vx, vy) > 0.0:
            px, py = element.point_at(theta)
        else:
            e1 = element.point_at(element.theta_start)
            e2 = element.point_at(element.theta_end)
            d1 = math.hypot(qx - e1[0], qy - e1[1])
            d2 = math.hypot(qx - e2[0], qy - e2[1])
            px, py = e1 if d1 <= d2 else e2
    else:
        raise TypeError(f"unknown element type {type(element)!r}")
    return ClosestPointResult(element_id, (px, py), math.hypot(qx - px, qy - py))


def brute_force_nearest(query, plan: FloorPlan, k: int = 1) -> list[ClosestPointResult]:
    """Exact k nearest elements by point-to-element distance.

    Ties broken by smaller element_id; k past the element count returns all.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    results = [closest_point(query, e, i) for i, e in enumerate(plan.elements)]
    results.sort(key=lambda r: (r.distance, r.element_id))
    return results[:k]


def sample_points(element: GeometricElement, spacing: float) -> np.ndarray:
    """Points along the element at arc-length intervals <= spacing, (m, 2).

    Open elements include both endpoints; circles are closed with no
    duplicated endpoint.
    """
    if spacing <= 0.0:
        raise ValueError("spacing must be positive")
    if isinstance(element, Segment):
        n = max(1, math.ceil(element.length / spacing))
        t = np.linspace(0.0, 1.0, n + 1)
        return np.column_stack((element.x1 + t * (element.x2 - element.x1),
                                element.y1 + t * (element.y2 - element.y1)))
    if isinstance(element, Circle):
        n = max(3, math.ceil(TWO_PI * element.r / spacing))
        theta = np.arange(n) * (TWO_PI / n)
        return np.column_stack((element.cx + element.r * np.cos(theta),
                                element.cy + element.r * np.sin(theta)))
    n = max(1, math.ceil(element.sweep * element.r / spacing))
    theta = np.linspace(element.theta_start, element.theta_end, n + 1)
    return np.column_stack((element.cx + element.r * np.cos(theta),
                            element.cy + element.r * np.sin(theta)))


def parse_floor_plan(text: str) -> FloorPlan:
    """Parse the plan text format: one element per line, '#' comments.

    SEGMENT x1 y1 x2 y2 | ARC cx cy r theta_start theta_end | CIRCLE cx cy r
    """
    elements: list[GeometricElement] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        tag, args = parts[0].upper(), parts[1:]
        try:
            vals = [float(a) for a in args]
        except ValueError as exc:
            raise FloorPlanError(f"line {lineno}: bad number in {line!r}") from exc
        try:
            if tag == "SEGMENT" and len(vals) == 4:
                elements.append(Segment(*vals))
            elif tag == "ARC" and len(vals) == 5:
                elements.append(Arc(*vals))
            elif tag == "CIRCLE" and len(vals) == 3:
                elements.append(Circle(*vals))
            else:
                raise FloorPlanError(f"line {lineno}: unrecognized element {line!r}")
        except FloorPlanError as exc:
            raise FloorPlanError(f"line {lineno}: {exc}") from exc
    return FloorPlan(elements)


def dump_floor_plan(plan: FloorPlan) -> str:
    """Serialize back to the text format; round-trips bit-exactly
    (floats written with repr, arc angles already normalized)."""
    lines = []
    for e in plan.elements:
        if isinstance(e, Segment):
            lines.append(f"SEGMENT {e.x1!r} {e.y1!r} {e.x2!r} {e.y2!r}")
        elif isinstance(e, Arc):
            lines.append(f"ARC {e.cx!r} {e.cy!r} {e.r!r} {e.theta_start!r} {e.theta_end!r}")
        else:
            lines.append(f"CIRCLE {e.cx!r} {e.cy!r} {e.r!r}")
    return "\n".join(lines) + "\n"
