#!/usr/bin/env python3
"""Regenerate the committed test fixtures under tests/data/.

Everything is seeded, so reruns reproduce the files byte for byte:
  - eval_gt.jsonl / eval_pred.jsonl: a 200-frame synthetic detection set
    with difficulty labels, misses, duplicates, and false positives.
  - msgm_features.cs3d / msgm_params.cs3d / msgm_golden.cs3d: a tiny gated
    multi-scale merge instance whose golden output is computed here with
    naive loops, independent of the library's vectorized forward pass.
"""

import json
import math
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from cs3d.io import write_tensors  # noqa: E402

DATA_DIR = Path(__file__).resolve().parent.parent / "tests" / "data"

EVAL_SEED = 20250815
MSGM_SEED = 7


def _make_frame(rng: np.random.Generator, frame_id: str) -> dict:
    n_gt = int(rng.integers(2, 7))
    centers: list[tuple[float, float]] = []
    gts = []
    for _ in range(n_gt):
        for _attempt in range(60):
            r = rng.uniform(8.0, 55.0)
            phi = rng.uniform(0.0, 2.0 * math.pi)
            x, y = r * math.cos(phi), r * math.sin(phi)
            if all(math.hypot(x - cx, y - cy) >= 7.0 for cx, cy in centers):
                break
        else:
            continue
        centers.append((x, y))
        if rng.uniform() < 0.1:
            cls = "Pedestrian"
            l, w, h = rng.uniform(0.5, 0.9), rng.uniform(0.5, 0.9), rng.uniform(1.6, 1.9)
        else:
            cls = "Car"
            l, w, h = rng.uniform(3.6, 5.0), rng.uniform(1.6, 2.1), rng.uniform(1.4, 1.9)
        gts.append(
            {
                "cls": cls,
                "x": x,
                "y": y,
                "z": rng.uniform(-1.0, 0.5),
                "l": l,
                "w": w,
                "h": h,
                "theta": rng.uniform(-math.pi, math.pi),
                "difficulty": str(rng.choice(["easy", "moderate", "hard"], p=[0.4, 0.4, 0.2])),
            }
        )
    preds = []
    for gt in gts:
        if rng.uniform() >= 0.85:
            continue
        n_dup = 2 if rng.uniform() < 0.05 else 1
        for dup in range(n_dup):
            dx, dy = rng.normal(0.0, 0.18, 2)
            quality = math.exp(-(abs(dx) + abs(dy)))
            score = float(np.clip(0.35 + 0.6 * quality + rng.normal(0.0, 0.08), 0.01, 0.99))
            if dup > 0:
                dx, dy = rng.normal(0.0, 0.6, 2)
                score = float(np.clip(score * rng.uniform(0.3, 0.7), 0.01, 0.99))
            preds.append(
                {
                    "cls": gt["cls"],
                    "x": gt["x"] + dx,
                    "y": gt["y"] + dy,
                    "z": gt["z"] + rng.normal(0.0, 0.08),
                    "l": gt["l"] * (1.0 + rng.normal(0.0, 0.05)),
                    "w": gt["w"] * (1.0 + rng.normal(0.0, 0.05)),
                    "h": gt["h"] * (1.0 + rng.normal(0.0, 0.05)),
                    "theta": gt["theta"] + rng.normal(0.0, 0.06),
                    "score": score,
                }
            )
    for _ in range(int(rng.poisson(0.8))):
        for _attempt in range(60):
            r = rng.uniform(8.0, 60.0)
            phi = rng.uniform(0.0, 2.0 * math.pi)
            x, y = r * math.cos(phi), r * math.sin(phi)
            if all(math.hypot(x - cx, y - cy) >= 9.0 for cx, cy in centers):
                break
        else:
            continue
        preds.append(
            {
                "cls": "Car",
                "x": x,
                "y": y,
                "z": rng.uniform(-1.0, 0.5),
                "l": rng.uniform(3.6, 5.0),
                "w": rng.uniform(1.6, 2.1),
                "h": rng.uniform(1.4, 1.9),
                "theta": rng.uniform(-math.pi, math.pi),
                "score": rng.uniform(0.02, 0.45),
            }
        )
    return {"frame": frame_id, "gts": gts, "preds": preds}


def make_eval_fixture(n_frames: int = 200) -> None:
    rng = np.random.default_rng(EVAL_SEED)
    gt_lines, pred_lines = [], []
    for k in range(n_frames):
        frame = _make_frame(rng, f"{k:06d}")
        gt_lines.append(json.dumps({"frame": frame["frame"], "gts": frame["gts"]}, sort_keys=True))
        pred_lines.append(
            json.dumps({"frame": frame["frame"], "preds": frame["preds"]}, sort_keys=True)
        )
    (DATA_DIR / "eval_gt.jsonl").write_text("\n".join(gt_lines) + "\n")
    (DATA_DIR / "eval_pred.jsonl").write_text("\n".join(pred_lines) + "\n")


def _naive_conv(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray) -> np.ndarray:
    c_out, c_in, k, _ = kernel.shape
    _, h, w = x.shape
    pad = (k - 1) // 2
    out = np.zeros((c_out, h, w))
    for o in range(c_out):
        for yy in range(h):
            for xx in range(w):
                acc = bias[o]
                for c in range(c_in):
                    for i in range(k):
                        for j in range(k):
                            src_y, src_x = yy + i - pad, xx + j - pad
                            if 0 <= src_y < h and 0 <= src_x < w:
                                acc += x[c, src_y, src_x] * kernel[o, c, i, j]
                out[o, yy, xx] = acc
    return out


def make_msgm_fixture() -> None:
    rng = np.random.default_rng(MSGM_SEED)
    c_in, c_out, hh, ww = 4, 3, 6, 5
    hidden = max(4, math.ceil(c_in / 2))
    features = rng.normal(0.0, 1.0, (c_in, hh, ww))
    tensors = {}
    for k in (1, 3, 5):
        tensors[f"conv{k}/kernel"] = rng.normal(0.0, 0.2, (c_out, c_in, k, k))
        tensors[f"conv{k}/bias"] = rng.normal(0.0, 0.2, c_out)
    tensors["gate/w1"] = rng.normal(0.0, 0.5, (hidden, c_in))
    tensors["gate/b1"] = rng.normal(0.0, 0.5, hidden)
    tensors["gate/w2"] = rng.normal(0.0, 0.5, (3, hidden))
    tensors["gate/b2"] = rng.normal(0.0, 0.5, 3)

    pooled = features.mean(axis=(1, 2))
    hidden_act = np.maximum(tensors["gate/w1"] @ pooled + tensors["gate/b1"], 0.0)
    logits = tensors["gate/w2"] @ hidden_act + tensors["gate/b2"]
    exp = np.exp(logits - logits.max())
    weights = exp / exp.sum()
    branches = [
        _naive_conv(features, tensors[f"conv{k}/kernel"], tensors[f"conv{k}/bias"])
        for k in (1, 3, 5)
    ]
    golden = weights[0] * branches[0] + weights[1] * branches[1] + weights[2] * branches[2]

    write_tensors(DATA_DIR / "msgm_features.cs3d", {"features": features}, {"seed": MSGM_SEED})
    write_tensors(DATA_DIR / "msgm_params.cs3d", tensors, {"seed": MSGM_SEED})
    write_tensors(
        DATA_DIR / "msgm_golden.cs3d",
        {"output": golden, "gate": weights},
        {"note": "computed with naive loops in tools/make_fixtures.py"},
    )


if __name__ == "__main__":
    DATA_DIR.mkdir(parents=True, exist_ok=True)
    make_eval_fixture()
    make_msgm_fixture()
    print(f"fixtures written to {DATA_DIR}")
