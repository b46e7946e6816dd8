"""Shared helpers for the test suite: synthetic datasets and box factories."""

import math
from pathlib import Path

import numpy as np

from cs3d import Box7, Frame, GtObject, PredObject

DATA_DIR = Path(__file__).parent / "data"


def random_car_box(rng: np.random.Generator, r_lo: float = 6.0, r_hi: float = 55.0) -> Box7:
    """A plausible car-sized box at a random polar position."""
    r = rng.uniform(r_lo, r_hi)
    phi = rng.uniform(0.0, 2.0 * math.pi)
    return Box7(
        r * math.cos(phi),
        r * math.sin(phi),
        rng.uniform(-1.0, 0.5),
        rng.uniform(3.6, 5.0),
        rng.uniform(1.6, 2.1),
        rng.uniform(1.4, 1.9),
        rng.uniform(-math.pi, math.pi),
    )


def perturbed_box(rng: np.random.Generator, box: Box7, pos_sigma: float = 0.15) -> Box7:
    """A slightly noised copy, as a realistic matched prediction."""
    return Box7(
        box.x + rng.normal(0.0, pos_sigma),
        box.y + rng.normal(0.0, pos_sigma),
        box.z + rng.normal(0.0, 0.05),
        box.l * (1.0 + rng.normal(0.0, 0.04)),
        box.w * (1.0 + rng.normal(0.0, 0.04)),
        box.h * (1.0 + rng.normal(0.0, 0.04)),
        box.theta + rng.normal(0.0, 0.05),
    )


def make_synthetic_dataset(
    n_frames: int = 50,
    seed: int = 11,
    miss_rate: float = 0.15,
    fp_per_frame: float = 0.8,
) -> list[Frame]:
    """Well-separated scenes with perturbed predictions, misses, and FPs.

    Objects within a frame keep >= 7 m center separation so each prediction
    overlaps at most one ground truth.
    """
    rng = np.random.default_rng(seed)
    frames = []
    for k in range(n_frames):
        centers: list[tuple[float, float]] = []
        gts, preds = [], []
        for _ in range(int(rng.integers(2, 6))):
            box = random_car_box(rng)
            tries = 0
            while any(math.hypot(box.x - cx, box.y - cy) < 7.0 for cx, cy in centers):
                box = random_car_box(rng)
                tries += 1
                if tries > 50:
                    break
            if any(math.hypot(box.x - cx, box.y - cy) < 7.0 for cx, cy in centers):
                continue
            centers.append((box.x, box.y))
            difficulty = str(rng.choice(["easy", "moderate", "hard"], p=[0.4, 0.4, 0.2]))
            gts.append(GtObject(box=box, cls="Car", difficulty=difficulty))
            if rng.uniform() >= miss_rate:
                score = float(np.clip(rng.uniform(0.3, 0.99), 0.0, 1.0))
                preds.append(PredObject(box=perturbed_box(rng, box), cls="Car", score=score))
        for _ in range(int(rng.poisson(fp_per_frame))):
            box = random_car_box(rng, r_lo=8.0, r_hi=60.0)
            if any(math.hypot(box.x - cx, box.y - cy) < 9.0 for cx, cy in centers):
                continue
            preds.append(PredObject(box=box, cls="Car", score=float(rng.uniform(0.02, 0.4))))
        frames.append(Frame(f"{k:06d}", gts, preds))
    return frames


def make_surface_discrimination_fixture(
    n_frames: int = 12, seed: int = 23
) -> tuple[list[Frame], list[Frame], list[Frame]]:
    """Two prediction sets with identical BEV IoU but opposite surface quality.

    Ground truths are axis-aligned and placed away from both axes so the
    vertex ordering is stable. Set A extends each box on the side facing
    away from the sensor (closer surfaces untouched, gap 0); set B extends
    it toward the sensor by the same amount (gap = 2 * delta). Corresponding
    predictions share dimensions, scores, and BEV IoU exactly.

    Returns (gt_frames, frames_with_preds_a, frames_with_preds_b).
    """
    rng = np.random.default_rng(seed)
    gt_frames, frames_a, frames_b = [], [], []
    score = 0.99
    for k in range(n_frames):
        gts, preds_a, preds_b = [], [], []
        for _ in range(3):
            sx = rng.choice([-1.0, 1.0])
            sy = rng.choice([-1.0, 1.0])
            x = sx * rng.uniform(8.0, 40.0)
            y = sy * rng.uniform(8.0, 40.0)
            l, w = rng.uniform(3.8, 4.8), rng.uniform(1.6, 2.0)
            z, h = rng.uniform(-0.5, 0.5), rng.uniform(1.4, 1.8)
            delta = 0.3 if rng.uniform() < 0.5 else 0.5
            gt = Box7(x, y, z, l, w, h, 0.0)
            gts.append(GtObject(box=gt, cls="Car", difficulty="easy"))
            # Away-from-origin direction of the box's x faces.
            ux = math.copysign(1.0, x)
            far = Box7(x + 0.5 * delta * ux, y, z, l + delta, w, h, 0.0)
            near = Box7(x - 0.5 * delta * ux, y, z, l + delta, w, h, 0.0)
            preds_a.append(PredObject(box=far, cls="Car", score=score))
            preds_b.append(PredObject(box=near, cls="Car", score=score))
            score -= 0.002
        frame_id = f"{k:06d}"
        gt_frames.append(Frame(frame_id, gts, []))
        frames_a.append(Frame(frame_id, list(gts), preds_a))
        frames_b.append(Frame(frame_id, list(gts), preds_b))
    return gt_frames, frames_a, frames_b


def lattice_boxes(rng: np.random.Generator, n: int, pitch: float = 12.0) -> list[Box7]:
    """Up to ``n`` random car-sized boxes on a jittered lattice.

    The 12 m pitch with +-2 m jitter keeps every pair of nearest corners
    at least ~25 heatmap pixels apart on the default 0.1 m grid, so corner
    splats never interact and every corner pixel is distinct.
    """
    half = 66.0
    centres = np.arange(-half, half + 1e-9, pitch)
    cells = [(cx, cy) for cx in centres for cy in centres]
    rng.shuffle(cells)
    boxes = []
    for cx, cy in cells[:n]:
        boxes.append(
            Box7(
                x=cx + rng.uniform(-2.0, 2.0),
                y=cy + rng.uniform(-2.0, 2.0),
                z=rng.uniform(-1.5, 1.5),
                l=rng.uniform(3.6, 5.0),
                w=rng.uniform(1.6, 2.0),
                h=rng.uniform(1.4, 1.9),
                theta=rng.uniform(-math.pi, math.pi),
            )
        )
    return boxes
