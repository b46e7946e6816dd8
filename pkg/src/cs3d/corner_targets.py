"""Nearest-corner heatmap targets and corner-based box decoding.

Objects are keyed by the BEV corner nearest the sensor instead of the box
center: a Gaussian is splatted on that corner's grid pixel and the full box
is recovered from per-pixel regression channels, including a corner-to-center
vector that disambiguates which of the four corners the peak is.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .geometry import Box7, _order_key, bev_corners
from .metrics import GtObject, PredObject

# Gaussian contributions beyond this many sigmas are dropped (< exp(-18)).
SPLAT_CUTOFF_SIGMAS = 6.0

SIGMA_MODES = ("radius", "radius_over_3")


@dataclass(frozen=True)
class GridConfig:
    """BEV grid geometry plus heatmap shaping knobs.

    cell_size is meters per grid cell and stride the number of cells per
    heatmap pixel, so one pixel spans cell_size*stride meters. tau is the
    smallest allowed Gaussian radius (pixels) and min_overlap the IoU the
    radius formula must guarantee. sigma_mode "radius" uses the clamped
    radius directly as the Gaussian standard deviation; "radius_over_3"
    divides it by three, the convention of most center-keypoint pipelines.
    """

    x_range: tuple[float, float] = (-75.2, 75.2)
    y_range: tuple[float, float] = (-75.2, 75.2)
    cell_size: float = 0.1
    stride: int = 1
    tau: float = 2.0
    min_overlap: float = 0.7
    sigma_mode: str = "radius"
    dtype: str = "float32"

    def __post_init__(self) -> None:
        if self.x_range[0] >= self.x_range[1] or self.y_range[0] >= self.y_range[1]:
            raise ValueError("ranges must satisfy min < max")
        if self.cell_size <= 0.0:
            raise ValueError("cell_size must be positive")
        if int(self.stride) != self.stride or self.stride < 1:
            raise ValueError("stride must be a positive integer")
        if self.tau <= 0.0:
            raise ValueError("tau must be positive")
        if not (0.0 < self.min_overlap < 1.0):
            raise ValueError("min_overlap must lie in (0, 1)")
        if self.sigma_mode not in SIGMA_MODES:
            raise ValueError(f"sigma_mode must be one of {SIGMA_MODES}")
        np.dtype(self.dtype)  # fail fast on bad dtype strings

    @property
    def pixel_size(self) -> float:
        return self.cell_size * self.stride

    @property
    def width(self) -> int:
        return int(round((self.x_range[1] - self.x_range[0]) / self.pixel_size))

    @property
    def height(self) -> int:
        return int(round((self.y_range[1] - self.y_range[0]) / self.pixel_size))

    def to_pixel(self, x: float, y: float) -> tuple[float, float]:
        """Continuous pixel coordinates of a metric point."""
        return (
            (x - self.x_range[0]) / self.pixel_size,
            (y - self.y_range[0]) / self.pixel_size,
        )


@dataclass
class TargetGrid:
    """Dense regression targets on the BEV grid.

    heatmap is (num_classes, H, W) in [0, 1]; regression channels are
    written only at ground-truth corner pixels: offset (2) in pixels,
    corner_z (meters, the box center height), size (l, w, h), yaw as
    (cos, sin), and c2c, the corner-to-center vector in meters. ``skipped``
    counts ground truths dropped because their corner fell off the grid or
    their class is not in ``classes``.
    """

    heatmap: np.ndarray
    offset: np.ndarray
    corner_z: np.ndarray
    size: np.ndarray
    yaw: np.ndarray
    c2c: np.ndarray
    classes: tuple[str, ...]
    skipped: int = 0


def nearest_corner(box: Box7) -> tuple[tuple[float, float], int]:
    """The BEV corner of ``box`` nearest the origin and its corner index.

    Uses the same distance-then-|x|-then-y tie-break as the vertex ordering,
    so this always equals v1 of ``sort_bev_vertices``.
    """
    corners = bev_corners(box)
    idx = min(range(4), key=lambda i: _order_key(corners[i]))
    return corners[idx], idx


def gaussian_radius(height: float, width: float, min_overlap: float = 0.7) -> float:
    """Largest corner displacement (pixels) keeping IoU >= min_overlap.

    Solves the three worst-case overlap configurations, each a quadratic in
    the radius, and returns the smallest of the meaningful roots: the shifted
    box fully containing the original, fully contained by it, or offset
    diagonally. Dimensions are in pixels.
    """
    if height <= 0.0 or width <= 0.0:
        raise ValueError("box dimensions must be positive")
    if not (0.0 < min_overlap < 1.0):
        raise ValueError("min_overlap must lie in (0, 1)")
    o, h, w = min_overlap, height, width

    # Enclosing: hw / ((h + 2r)(w + 2r)) = o; single positive root.
    a1, b1, c1 = 4.0 * o, 2.0 * o * (h + w), h * w * (o - 1.0)
    r1 = (-b1 + math.sqrt(b1 * b1 - 4.0 * a1 * c1)) / (2.0 * a1)

    # Enclosed: (h - 2r)(w - 2r) / hw = o; the smaller root keeps 2r < min(h, w).
    a2, b2, c2 = 4.0, -2.0 * (h + w), (1.0 - o) * h * w
    r2 = (-b2 - math.sqrt(b2 * b2 - 4.0 * a2 * c2)) / (2.0 * a2)

    # Diagonal shift: (h - r)(w - r) / (2hw - (h - r)(w - r)) = o.
    a3, b3, c3 = 1.0, -(h + w), (1.0 - o) / (1.0 + o) * h * w
    r3 = (-b3 - math.sqrt(b3 * b3 - 4.0 * a3 * c3)) / (2.0 * a3)

    return min(r1, r2, r3)


def gaussian_sigma(box: Box7, grid: GridConfig) -> float:
    """Gaussian standard deviation (pixels) for one box's corner splat.

    The overlap-derived radius is clamped below by tau before the optional
    division by three, so tiny boxes still spread over a few pixels.
    """
    ps = grid.pixel_size
    radius = gaussian_radius(box.l / ps, box.w / ps, grid.min_overlap)
    sigma = max(radius, grid.tau)
    if grid.sigma_mode == "radius_over_3":
        sigma /= 3.0
    return sigma


def splat_gaussian(
    heatmap: np.ndarray, center_pix: tuple[int, int], sigma: float
) -> np.ndarray:
    """Max-merge a unit-peak isotropic Gaussian onto a (H, W) heatmap.

    ``center_pix`` is an integer (x, y) pixel; the peak value there is
    exactly 1. Existing values win wherever they are larger, so overlapping
    objects keep the pointwise maximum. A center outside the grid leaves the
    map untouched and emits a warning. Values beyond SPLAT_CUTOFF_SIGMAS
    standard deviations are omitted.
    """
    if sigma <= 0.0:
        raise ValueError("sigma must be positive")
    h, w = heatmap.shape
    cx, cy = int(center_pix[0]), int(center_pix[1])
    if not (0 <= cx < w and 0 <= cy < h):
        warnings.warn(f"gaussian center {center_pix} outside {w}x{h} grid; skipped")
        return heatmap
    reach = int(math.ceil(SPLAT_CUTOFF_SIGMAS * sigma))
    x0, x1 = max(cx - reach, 0), min(cx + reach, w - 1)
    y0, y1 = max(cy - reach, 0), min(cy + reach, h - 1)
    xs = np.arange(x0, x1 + 1) - cx
    ys = np.arange(y0, y1 + 1) - cy
    patch = np.exp(-(xs[None, :] ** 2 + ys[:, None] ** 2) / (2.0 * sigma * sigma))
    region = heatmap[y0 : y1 + 1, x0 : x1 + 1]
    np.maximum(region, patch.astype(heatmap.dtype), out=region)
    return heatmap


def build_targets(
    gts: list[GtObject],
    grid: GridConfig,
    classes: tuple[str, ...] | None = None,
) -> TargetGrid:
    """Encode ground truths into dense corner-keyed targets.

    Objects are processed in input order; when two share a corner pixel the
    heatmap keeps the pointwise maximum while the regression channels keep
    the later object. Ground truths whose corner pixel falls off the grid
    (or whose class is not listed) are skipped and counted.
    """
    if classes is None:
        classes = tuple(sorted({g.cls for g in gts})) or ("Car",)
    class_index = {c: i for i, c in enumerate(classes)}
    H, W = grid.height, grid.width
    dt = np.dtype(grid.dtype)
    target = TargetGrid(
        heatmap=np.zeros((len(classes), H, W), dt),
        offset=np.zeros((2, H, W), dt),
        corner_z=np.zeros((H, W), dt),
        size=np.zeros((3, H, W), dt),
        yaw=np.zeros((2, H, W), dt),
        c2c=np.zeros((2, H, W), dt),
        classes=classes,
    )
    skipped = 0
    for gt in gts:
        ci = class_index.get(gt.cls)
        if ci is None:
            skipped += 1
            continue
        box = gt.box
        corner, _ = nearest_corner(box)
        fx, fy = grid.to_pixel(corner[0], corner[1])
        px, py = int(math.floor(fx)), int(math.floor(fy))
        if not (0 <= px < W and 0 <= py < H):
            warnings.warn(f"corner pixel ({px}, {py}) outside grid; object skipped")
            skipped += 1
            continue
        splat_gaussian(target.heatmap[ci], (px, py), gaussian_sigma(box, grid))
        target.heatmap[ci, py, px] = 1.0
        target.offset[:, py, px] = (fx - px, fy - py)
        target.corner_z[py, px] = box.z
        target.size[:, py, px] = (box.l, box.w, box.h)
        target.yaw[:, py, px] = (math.cos(box.theta), math.sin(box.theta))
        target.c2c[:, py, px] = (box.x - corner[0], box.y - corner[1])
    target.skipped = skipped
    return target


def extract_peaks(
    heatmap: np.ndarray, top_k: int = 100, score_thresh: float = 0.1
) -> list[tuple[tuple[int, int], float]]:
    """3x3 local maxima of one (H, W) heatmap channel.

    Returns at most ``top_k`` peaks with value >= score_thresh as
    ((x, y), score), sorted by descending score with row-major pixel index
    breaking ties. Plateau pixels equal to their neighbors all qualify.
    """
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    hm = np.asarray(heatmap)
    if hm.ndim != 2:
        raise ValueError("heatmap must be a 2D array")
    padded = np.pad(hm.astype(float), 1, constant_values=-np.inf)
    neighborhood = sliding_window_view(padded, (3, 3)).max(axis=(2, 3))
    ys, xs = np.nonzero((hm >= neighborhood) & (hm >= score_thresh))
    if len(ys) == 0:
        return []
    scores = hm[ys, xs].astype(float)
    order = np.lexsort((ys * hm.shape[1] + xs, -scores))[:top_k]
    return [((int(xs[i]), int(ys[i])), float(scores[i])) for i in order]


def decode_boxes(
    peaks: list[tuple[tuple[int, int], float]],
    maps: TargetGrid,
    grid: GridConfig,
    cls: str = "Car",
    corner_tol: float | None = None,
) -> tuple[list[PredObject], int]:
    """Decode peak pixels back into boxes via the corner-to-center vector.

    For each peak the continuous corner is pixel + offset scaled to meters,
    and the center is corner + c2c. A candidate is kept only if the decoded
    box's own nearest corner lands within ``corner_tol`` meters of the peak
    corner (default: one pixel), which rejects centers pointing at the wrong
    one of the four corners; candidates whose c2c magnitude exceeds twice
    the box half-diagonal are rejected outright. Returns the surviving
    predictions and the rejected count.
    """
    ps = grid.pixel_size
    tol = ps if corner_tol is None else corner_tol
    preds: list[PredObject] = []
    rejected = 0
    for (px, py), score in peaks:
        ox, oy = (float(v) for v in maps.offset[:, py, px])
        corner = (
            (px + ox) * ps + grid.x_range[0],
            (py + oy) * ps + grid.y_range[0],
        )
        dl, dw, dh = (float(v) for v in maps.size[:, py, px])
        if dl <= 0.0 or dw <= 0.0 or dh <= 0.0:
            rejected += 1
            continue
        dx, dy = (float(v) for v in maps.c2c[:, py, px])
        if math.hypot(dx, dy) > math.hypot(dl, dw):  # 2x the half-diagonal
            rejected += 1
            continue
        cos_t, sin_t = (float(v) for v in maps.yaw[:, py, px])
        box = Box7(
            corner[0] + dx,
            corner[1] + dy,
            float(maps.corner_z[py, px]),
            dl,
            dw,
            dh,
            math.atan2(sin_t, cos_t),
        )
        got, _ = nearest_corner(box)
        if math.hypot(got[0] - corner[0], got[1] - corner[1]) > tol:
            rejected += 1
            continue
        preds.append(PredObject(box=box, cls=cls, score=min(max(score, 0.0), 1.0)))
    return preds, rejected
