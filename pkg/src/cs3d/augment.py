"""Object-level augmentation: random scaling and size normalization.

Both transforms work in the box's local frame so that point membership is
preserved exactly: points are expressed relative to the box center and
heading, scaled per axis together with the box dimensions, and mapped back.
Center and yaw are never touched.
"""

from dataclasses import dataclass, replace

import math

import numpy as np

from .geometry import Box7

DEFAULT_SCALE_RANGE = (0.85, 1.15)

_MEMBERSHIP_SLACK = 1e-9


def _to_local(box: Box7, points: np.ndarray) -> np.ndarray:
    c, s = math.cos(box.theta), math.sin(box.theta)
    dx = points[:, 0] - box.x
    dy = points[:, 1] - box.y
    return np.stack(
        [dx * c + dy * s, -dx * s + dy * c, points[:, 2] - box.z], axis=1
    )


def _to_world(box: Box7, local: np.ndarray) -> np.ndarray:
    c, s = math.cos(box.theta), math.sin(box.theta)
    return np.stack(
        [
            box.x + local[:, 0] * c - local[:, 1] * s,
            box.y + local[:, 0] * s + local[:, 1] * c,
            box.z + local[:, 2],
        ],
        axis=1,
    )


@dataclass(frozen=True)
class ObjectSample:
    """A box together with the LiDAR points inside it.

    Construction verifies membership: every point must lie within the box
    (a tiny slack absorbs round-off from frame changes).
    """

    box: Box7
    points: np.ndarray

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError("points must be an (N, 3) array")
        object.__setattr__(self, "points", pts)
        if len(pts) == 0:
            return
        local = _to_local(self.box, pts)
        half = np.array([self.box.l, self.box.w, self.box.h]) * 0.5 + _MEMBERSHIP_SLACK
        if not np.all(np.abs(local) <= half):
            raise ValueError("points must lie inside the box")


@dataclass(frozen=True)
class SizeStats:
    """Mean object dimensions of a dataset, used for size normalization."""

    mean_l: float
    mean_w: float
    mean_h: float

    def __post_init__(self) -> None:
        if min(self.mean_l, self.mean_w, self.mean_h) <= 0.0:
            raise ValueError("mean dimensions must be positive")


def ros_scale(sample: ObjectSample, factors: tuple[float, float, float]) -> ObjectSample:
    """Scale a sample's dimensions and interior points by per-axis factors.

    Points scale about the box center in the box's local frame, so every
    point stays inside and the count never changes; center and yaw are
    bit-identical to the input.
    """
    sl, sw, sh = factors
    if min(sl, sw, sh) <= 0.0:
        raise ValueError("scale factors must be positive")
    box = sample.box
    new_box = replace(box, l=box.l * sl, w=box.w * sw, h=box.h * sh)
    local = _to_local(box, sample.points)
    local *= np.array([sl, sw, sh])
    return ObjectSample(new_box, _to_world(new_box, local))


def sn_normalize(sample: ObjectSample, source: SizeStats, target: SizeStats) -> ObjectSample:
    """Shift a sample's dimensions by the target-minus-source mean deltas.

    The additive delta per axis is (target mean - source mean); interior
    points rescale in the local frame by new/old dimension ratios. Raises
    when a delta would drive a dimension to zero or below.
    """
    box = sample.box
    new_dims = (
        box.l + (target.mean_l - source.mean_l),
        box.w + (target.mean_w - source.mean_w),
        box.h + (target.mean_h - source.mean_h),
    )
    if min(new_dims) <= 0.0:
        raise ValueError("normalization collapses box: resulting dimension <= 0")
    factors = (new_dims[0] / box.l, new_dims[1] / box.w, new_dims[2] / box.h)
    new_box = replace(box, l=new_dims[0], w=new_dims[1], h=new_dims[2])
    local = _to_local(box, sample.points)
    local *= np.array(factors)
    return ObjectSample(new_box, _to_world(new_box, local))


def rng_factors(
    factor_range: tuple[float, float] = DEFAULT_SCALE_RANGE,
    seed: int | None = None,
) -> tuple[float, float, float]:
    """Draw three independent uniform scale factors from ``factor_range``."""
    lo, hi = factor_range
    if not (0.0 < lo <= hi):
        raise ValueError("invalid scale range: need 0 < lo <= hi")
    draw = np.random.default_rng(seed).uniform(lo, hi, 3)
    return (float(draw[0]), float(draw[1]), float(draw[2]))
