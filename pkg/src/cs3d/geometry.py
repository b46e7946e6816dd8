"""Oriented-box geometry on the ground (BEV) plane.

Boxes are 7-DoF: center (x, y, z), dimensions (l, w, h) and yaw theta about
the vertical axis, with the sensor at the origin. The "closer surfaces" of a
box are the two BEV edges adjacent to the corner nearest the origin; the gap
measured against them drives the penalized detection scores in this package.

All BEV math here is scalar Python on purpose: the polygons are tiny (4-8
vertices) and per-pair calls dominate evaluation time, where small-array
numpy overhead costs more than it saves.
"""

import math
from dataclasses import dataclass

TWO_PI = 2.0 * math.pi

# Cross products below this magnitude are treated as collinear/degenerate.
COLLINEAR_EPS = 1e-12

Point2 = tuple[float, float]


def wrap_angle(theta: float) -> float:
    """Wrap an angle into [-pi, pi)."""
    wrapped = math.fmod(theta + math.pi, TWO_PI)
    if wrapped < 0.0:
        wrapped += TWO_PI
    return wrapped - math.pi


@dataclass(frozen=True)
class Box7:
    """7-DoF oriented box: center (x, y, z), dimensions (l, w, h), yaw theta.

    l extends along the box's local x axis (heading), w along local y, h
    vertically. Dimensions must be strictly positive, every field finite;
    theta is normalized to [-pi, pi) on construction.
    """

    x: float
    y: float
    z: float
    l: float
    w: float
    h: float
    theta: float

    def __post_init__(self) -> None:
        values = (self.x, self.y, self.z, self.l, self.w, self.h, self.theta)
        if not all(math.isfinite(v) for v in values):
            raise ValueError("box fields must be finite")
        if self.l <= 0.0 or self.w <= 0.0 or self.h <= 0.0:
            raise ValueError("box dimensions must be positive")
        object.__setattr__(self, "theta", wrap_angle(self.theta))


def bev_corners(box: Box7) -> list[Point2]:
    """Return the four BEV corners of ``box`` in counter-clockwise order."""
    c, s = math.cos(box.theta), math.sin(box.theta)
    hl, hw = 0.5 * box.l, 0.5 * box.w
    return [
        (box.x + dx * c - dy * s, box.y + dx * s + dy * c)
        for dx, dy in ((hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw))
    ]


def _order_key(p: Point2) -> tuple[float, float, float, float]:
    # Distance to origin first; |x|, y, then x make every tie deterministic.
    return (math.hypot(p[0], p[1]), abs(p[0]), p[1], p[0])


def _mid_key(p: Point2) -> tuple[float, float, float]:
    return (abs(p[0]), p[1], p[0])


@dataclass(frozen=True)
class OrderedBevVertices:
    """BEV corners ordered by the closer-surfaces convention.

    v1 is the corner nearest the origin and v4 the farthest; the remaining
    pair is ordered so that ``abs(v2[0]) <= abs(v3[0])``. Distance ties break
    by smaller |x|, then smaller y, then smaller x, so the ordering is a
    deterministic permutation of ``bev_corners``.
    """

    v1: Point2
    v2: Point2
    v3: Point2
    v4: Point2


def sort_bev_vertices(box: Box7) -> OrderedBevVertices:
    """Order the BEV corners of ``box`` as nearest, middle pair, farthest."""
    ordered = sorted(bev_corners(box), key=_order_key)
    mid = sorted(ordered[1:3], key=_mid_key)
    return OrderedBevVertices(ordered[0], mid[0], mid[1], ordered[3])


def point_to_line_distance(p: Point2, a: Point2, b: Point2) -> float:
    """Perpendicular distance from ``p`` to the infinite line through a and b.

    The distance is to the supporting line, not the clamped segment, so a
    point sliding along an extended box edge stays at distance zero. Raises
    ValueError when a and b are closer than the collinearity epsilon.
    """
    ux, uy = b[0] - a[0], b[1] - a[1]
    norm = math.hypot(ux, uy)
    if norm <= COLLINEAR_EPS:
        raise ValueError("degenerate edge: line endpoints coincide")
    return abs(ux * (p[1] - a[1]) - uy * (p[0] - a[0])) / norm


def closer_surfaces_gap(pred: Box7, gt: Box7) -> float:
    """Gap between the closer surfaces of a predicted and a ground-truth box.

    Sum of the distance between the two nearest-to-origin vertices, plus the
    perpendicular distances from the prediction's v2/v3 to the ground-truth
    lines through (v1, v2) and (v1, v3). Zero iff the surfaces facing the
    sensor coincide; deliberately not translation invariant, because the
    vertex ordering depends on where the sensor sits.
    """
    vp = sort_bev_vertices(pred)
    vg = sort_bev_vertices(gt)
    d1 = math.hypot(vp.v1[0] - vg.v1[0], vp.v1[1] - vg.v1[1])
    d2 = point_to_line_distance(vp.v2, vg.v1, vg.v2)
    d3 = point_to_line_distance(vp.v3, vg.v1, vg.v3)
    return d1 + d2 + d3


def _polygon_area(poly: list[Point2]) -> float:
    """Shoelace area (absolute) of a simple polygon."""
    n = len(poly)
    acc = 0.0
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        acc += x0 * y1 - x1 * y0
    return 0.5 * abs(acc)


def _clip_convex(subject: list[Point2], clip: list[Point2]) -> list[Point2]:
    """Sutherland-Hodgman clip of one convex CCW polygon by another."""
    output = list(subject)
    n = len(clip)
    for i in range(n):
        if not output:
            break
        ax, ay = clip[i]
        bx, by = clip[(i + 1) % n]
        ex, ey = bx - ax, by - ay
        source = output
        output = []
        # Signed area cross product; >= -eps counts as inside (left of edge).
        vals = [ex * (py - ay) - ey * (px - ax) for px, py in source]
        m = len(source)
        for j in range(m):
            cur, cv = source[j], vals[j]
            nxt, nv = source[(j + 1) % m], vals[(j + 1) % m]
            cur_in = cv >= -COLLINEAR_EPS
            nxt_in = nv >= -COLLINEAR_EPS
            if nxt_in:
                if not cur_in:
                    t = cv / (cv - nv)
                    output.append(
                        (cur[0] + t * (nxt[0] - cur[0]), cur[1] + t * (nxt[1] - cur[1]))
                    )
                output.append(nxt)
            elif cur_in:
                t = cv / (cv - nv)
                output.append(
                    (cur[0] + t * (nxt[0] - cur[0]), cur[1] + t * (nxt[1] - cur[1]))
                )
    return output


def bev_intersection_area(a: Box7, b: Box7) -> float:
    """Area of the BEV overlap of two boxes."""
    poly = _clip_convex(bev_corners(a), bev_corners(b))
    if len(poly) < 3:
        return 0.0
    return _polygon_area(poly)


def bev_iou(a: Box7, b: Box7) -> float:
    """BEV intersection-over-union of two oriented boxes, in [0, 1]."""
    inter = bev_intersection_area(a, b)
    union = a.l * a.w + b.l * b.w - inter
    if union <= 0.0:
        return 0.0
    return min(max(inter / union, 0.0), 1.0)


def iou_3d(a: Box7, b: Box7) -> float:
    """3D IoU: BEV overlap times vertical overlap over the union volume."""
    overlap_z = min(a.z + 0.5 * a.h, b.z + 0.5 * b.h) - max(
        a.z - 0.5 * a.h, b.z - 0.5 * b.h
    )
    if overlap_z <= 0.0:
        return 0.0
    inter = bev_intersection_area(a, b) * overlap_z
    union = a.l * a.w * a.h + b.l * b.w * b.h - inter
    if union <= 0.0:
        return 0.0
    return min(max(inter / union, 0.0), 1.0)


def cs_abs_score(pred: Box7, gt: Box7, alpha: float = 1.0) -> float:
    """Absolute closer-surfaces score 1 / (1 + alpha * gap), in (0, 1]."""
    if alpha < 0.0:
        raise ValueError("invalid penalty ratio: alpha must be >= 0")
    return 1.0 / (1.0 + alpha * closer_surfaces_gap(pred, gt))


def cs_bev_score(pred: Box7, gt: Box7, alpha: float = 1.0) -> float:
    """BEV IoU discounted by the closer-surfaces gap.

    Equals ``bev_iou / (1 + alpha * gap)``; with alpha = 0 this reduces to
    the plain BEV IoU bit for bit.
    """
    if alpha < 0.0:
        raise ValueError("invalid penalty ratio: alpha must be >= 0")
    return bev_iou(pred, gt) / (1.0 + alpha * closer_surfaces_gap(pred, gt))
