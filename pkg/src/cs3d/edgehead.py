"""Closest-vertex regression codec for second-stage box refinement.

Instead of regressing center residuals, the codec aligns the vertex nearest
the sensor: the anchor is first swung to the target yaw about its own
center, and the residual is the displacement between the rotated anchor's
closest vertex and the ground truth's closest vertex. Rotating first is what
makes the two vertices actually coincide after decoding; skipping it leaves
a systematic gap. Depth and dimensions are not re-regressed: the decoded box
keeps the anchor's z, l, w, h.
"""

import math
from dataclasses import dataclass, replace

from .geometry import Box7, bev_corners, sort_bev_vertices, wrap_angle

ROTATION_MODES = ("set", "add")

# Decoded placements matching the target vertex tighter than this are exact.
_COINCIDENCE_TOL = 1e-9


@dataclass(frozen=True)
class EdgeResiduals:
    """Closest-vertex displacement (meters) plus the yaw residual (radians)."""

    dx_cv: float
    dy_cv: float
    dtheta: float

    def __post_init__(self) -> None:
        if not all(map(math.isfinite, (self.dx_cv, self.dy_cv, self.dtheta))):
            raise ValueError("residuals must be finite")


@dataclass(frozen=True)
class StandardResiduals:
    """Plain first-stage residuals: center, dimensions, yaw."""

    dx: float
    dy: float
    dz: float
    dl: float
    dw: float
    dh: float
    dtheta: float


def closest_vertex(box: Box7) -> tuple[float, float]:
    """BEV vertex of ``box`` nearest the origin (deterministic under ties)."""
    return sort_bev_vertices(box).v1


def _check_rotation(rotation: str) -> None:
    if rotation not in ROTATION_MODES:
        raise ValueError(f"rotation mode must be one of {ROTATION_MODES}")


def _rotated_anchor(anchor: Box7, theta_gt: float, rotation: str) -> Box7:
    # "set" swings the anchor to the target yaw; "add" treats the target yaw
    # as an increment on top of the anchor's own.
    target = theta_gt if rotation == "set" else anchor.theta + theta_gt
    return replace(anchor, theta=target)


def edgehead_residuals(anchor: Box7, gt: Box7, rotation: str = "set") -> EdgeResiduals:
    """Encode a ground truth against an anchor as closest-vertex residuals.

    The anchor is rotated to the ground-truth yaw about its own center
    before the vertex displacement is measured, so the residual is purely
    translational. The yaw residual is the wrapped difference of the raw
    yaws.
    """
    _check_rotation(rotation)
    rotated = _rotated_anchor(anchor, gt.theta, rotation)
    ax, ay = closest_vertex(rotated)
    gx, gy = closest_vertex(gt)
    return EdgeResiduals(gx - ax, gy - ay, wrap_angle(gt.theta - anchor.theta))


def apply_edgehead_residuals(
    anchor: Box7, residuals: EdgeResiduals, rotation: str = "set"
) -> Box7:
    """Decode closest-vertex residuals into a refined box.

    The output keeps the anchor's z and dimensions and takes yaw
    anchor.theta + dtheta. Its center is placed so that its own closest
    vertex sits exactly on (rotated-anchor closest vertex) + (dx_cv, dy_cv):
    each of the four corners is tried as the one pinned to that point and
    the placement whose nearest corner is the pinned one wins. Ties fall
    back to the placement minimizing the vertex mismatch.
    """
    _check_rotation(rotation)
    theta_gt = wrap_angle(anchor.theta + residuals.dtheta)
    rotated = _rotated_anchor(anchor, theta_gt, rotation)
    rx, ry = closest_vertex(rotated)
    tx, ty = rx + residuals.dx_cv, ry + residuals.dy_cv
    offsets = bev_corners(replace(anchor, x=0.0, y=0.0, theta=theta_gt))
    best: tuple[float, int, Box7] | None = None
    for i, (vx, vy) in enumerate(offsets):
        candidate = Box7(tx - vx, ty - vy, anchor.z, anchor.l, anchor.w, anchor.h, theta_gt)
        cx, cy = closest_vertex(candidate)
        err = math.hypot(cx - tx, cy - ty)
        if err <= _COINCIDENCE_TOL:
            return candidate
        if best is None or err < best[0]:
            best = (err, i, candidate)
    assert best is not None
    return best[2]


def standard_residuals(anchor: Box7, gt: Box7) -> StandardResiduals:
    """Field-wise first-stage residuals: gt minus anchor, yaw wrapped."""
    return StandardResiduals(
        gt.x - anchor.x,
        gt.y - anchor.y,
        gt.z - anchor.z,
        gt.l - anchor.l,
        gt.w - anchor.w,
        gt.h - anchor.h,
        wrap_angle(gt.theta - anchor.theta),
    )


def control_group_residuals(anchor: Box7, gt: Box7) -> tuple[float, float, float]:
    """Center-only refinement residuals (dx, dy, dtheta), dims left alone."""
    return (gt.x - anchor.x, gt.y - anchor.y, wrap_angle(gt.theta - anchor.theta))
