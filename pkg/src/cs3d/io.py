"""File formats: JSONL frames, a binary tensor container, CSV reports.

Frames are one JSON object per line: {"frame": str, "gts": [...],
"preds": [...]}, either array optional. Tensors travel in a small
self-describing binary container (magic "CS3D") with a JSON sidecar, so the
contents are inspectable without parsing the binary.
"""

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import Box7
from .metrics import DIFFICULTIES, METRICS, EvalConfig, Frame, GtObject, PredObject

MAGIC = b"CS3D"
FORMAT_VERSION = 1

# Detection-range defaults: (x_min, y_min, z_min, x_max, y_max, z_max) meters.
DEFAULT_POINT_CLOUD_RANGE = (-75.2, -75.2, -2.0, 75.2, 75.2, 4.0)
DEFAULT_VOXEL_SIZE = (0.1, 0.1, 0.15)

_BOX_KEYS = ("x", "y", "z", "l", "w", "h", "theta")


class DataError(Exception):
    """Malformed input data; the CLI maps this to exit code 2."""


@dataclass(frozen=True)
class RangeConfig:
    """Detection range and voxel size of the BEV pipeline."""

    point_cloud_range: tuple[float, ...] = DEFAULT_POINT_CLOUD_RANGE
    voxel_size: tuple[float, float, float] = DEFAULT_VOXEL_SIZE

    def __post_init__(self) -> None:
        r = self.point_cloud_range
        if len(r) != 6:
            raise ValueError("point_cloud_range must have six entries")
        if any(r[i] >= r[i + 3] for i in range(3)):
            raise ValueError("point_cloud_range must satisfy min < max per axis")
        if len(self.voxel_size) != 3 or min(self.voxel_size) <= 0.0:
            raise ValueError("voxel_size entries must be positive")

    def grid_config(self, **overrides) -> "GridConfig":
        """Corner-target grid covering this range at the xy voxel size."""
        from .corner_targets import GridConfig

        if abs(self.voxel_size[0] - self.voxel_size[1]) > 1e-12:
            raise ValueError("grid requires square xy voxels")
        r = self.point_cloud_range
        values = {
            "x_range": (r[0], r[3]),
            "y_range": (r[1], r[4]),
            "cell_size": self.voxel_size[0],
        }
        values.update(overrides)
        return GridConfig(**values)


def _parse_box(obj: dict, where: str) -> Box7:
    try:
        return Box7(*(float(obj[k]) for k in _BOX_KEYS))
    except KeyError as exc:
        raise DataError(f"{where}: missing box field {exc.args[0]!r}") from exc
    except (TypeError, ValueError) as exc:
        raise DataError(f"{where}: {exc}") from exc


def _parse_gt(obj: dict, where: str) -> GtObject:
    difficulty = obj.get("difficulty", "unknown")
    if difficulty not in DIFFICULTIES:
        raise DataError(f"{where}: unknown difficulty {difficulty!r}")
    points = None
    if "points" in obj:
        pts = np.asarray(obj["points"], dtype=float)
        if pts.size == 0:
            pts = pts.reshape(0, 3)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise DataError(f"{where}: points must be an (N, 3) array")
        points = pts
    try:
        return GtObject(
            box=_parse_box(obj, where),
            cls=str(obj.get("cls", "")),
            difficulty=difficulty,
            points=points,
        )
    except ValueError as exc:
        raise DataError(f"{where}: {exc}") from exc


def _parse_pred(obj: dict, where: str) -> PredObject:
    if "score" not in obj:
        raise DataError(f"{where}: prediction missing score")
    try:
        return PredObject(
            box=_parse_box(obj, where),
            cls=str(obj.get("cls", "")),
            score=float(obj["score"]),
        )
    except ValueError as exc:
        raise DataError(f"{where}: {exc}") from exc


def load_frames(path: str | Path) -> list[Frame]:
    """Parse a JSONL frame file; errors carry the offending line number."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    frames: list[Frame] = []
    seen: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        where = f"{path.name}:{lineno}"
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{where}: invalid JSON ({exc.msg})") from exc
        if not isinstance(obj, dict) or "frame" not in obj:
            raise DataError(f"{where}: expected an object with a 'frame' key")
        frame_id = str(obj["frame"])
        if frame_id in seen:
            raise DataError(f"{where}: duplicate frame id {frame_id!r}")
        seen.add(frame_id)
        gts = [_parse_gt(g, where) for g in obj.get("gts", [])]
        preds = [_parse_pred(p, where) for p in obj.get("preds", [])]
        frames.append(Frame(frame_id, gts, preds))
    return frames


def _gt_to_json(gt: GtObject) -> dict:
    out = {k: getattr(gt.box, k) for k in _BOX_KEYS}
    out["cls"] = gt.cls
    out["difficulty"] = gt.difficulty
    if gt.points is not None:
        out["points"] = [[float(v) for v in p] for p in gt.points]
    return out


def _pred_to_json(pred: PredObject) -> dict:
    out = {k: getattr(pred.box, k) for k in _BOX_KEYS}
    out["cls"] = pred.cls
    out["score"] = pred.score
    return out


def write_frames(path: str | Path, frames: list[Frame]) -> None:
    """Write frames as JSONL, one frame per line, in the given order."""
    lines = []
    for frame in frames:
        lines.append(
            json.dumps(
                {
                    "frame": frame.frame_id,
                    "gts": [_gt_to_json(g) for g in frame.gts],
                    "preds": [_pred_to_json(p) for p in frame.preds],
                },
                sort_keys=True,
            )
        )
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def merge_eval_inputs(
    gt_frames: list[Frame], pred_frames: list[Frame]
) -> tuple[list[Frame], dict[str, int]]:
    """Join GT-only and prediction-only frame lists by frame id.

    Frames present on only one side keep an empty counterpart; the returned
    counts report how many ids lacked predictions or ground truths.
    """
    gt_by_id = {f.frame_id: f for f in gt_frames}
    pred_by_id = {f.frame_id: f for f in pred_frames}
    merged: list[Frame] = []
    for frame_id in sorted(set(gt_by_id) | set(pred_by_id)):
        gts = gt_by_id[frame_id].gts if frame_id in gt_by_id else []
        preds = pred_by_id[frame_id].preds if frame_id in pred_by_id else []
        merged.append(Frame(frame_id, list(gts), list(preds)))
    counts = {
        "missing_preds": len(set(gt_by_id) - set(pred_by_id)),
        "missing_gts": len(set(pred_by_id) - set(gt_by_id)),
    }
    return merged, counts


def write_tensors(
    path: str | Path, tensors: dict[str, np.ndarray], meta: dict | None = None
) -> None:
    """Write named arrays into one container file plus a JSON sidecar.

    Layout: magic, version, header length, JSON header (tensor names,
    dtypes, shapes, user metadata), then the raw row-major array bytes in
    header order. The sidecar at ``path + ".json"`` duplicates the header.
    """
    path = Path(path)
    # ascontiguousarray would promote 0-d arrays to 1-d and change the shape.
    arrays = {
        name: (np.ascontiguousarray(a) if np.asarray(a).ndim else np.asarray(a))
        for name, a in tensors.items()
    }
    header = {
        "version": FORMAT_VERSION,
        "tensors": [
            {"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape)}
            for name, arr in arrays.items()
        ],
        "meta": meta or {},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(blob)))
        fh.write(blob)
        for arr in arrays.values():
            fh.write(arr.tobytes())
    Path(str(path) + ".json").write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")


def read_tensors(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    """Read a tensor container; returns (name -> array, metadata)."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if len(raw) < 12 or raw[:4] != MAGIC:
        raise DataError(f"{path.name}: not a CS3D tensor file")
    version, header_len = struct.unpack("<II", raw[4:12])
    if version != FORMAT_VERSION:
        raise DataError(f"{path.name}: unsupported version {version}")
    try:
        header = json.loads(raw[12 : 12 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"{path.name}: corrupt header") from exc
    offset = 12 + header_len
    tensors: dict[str, np.ndarray] = {}
    for entry in header.get("tensors", []):
        dtype = np.dtype(entry["dtype"])
        shape = tuple(int(v) for v in entry["shape"])
        nbytes = dtype.itemsize * int(np.prod(shape, dtype=np.int64)) if shape else dtype.itemsize
        chunk = raw[offset : offset + nbytes]
        if len(chunk) != nbytes:
            raise DataError(f"{path.name}: truncated tensor {entry['name']!r}")
        tensors[entry["name"]] = np.frombuffer(chunk, dtype=dtype).reshape(shape).copy()
        offset += nbytes
    return tensors, header.get("meta", {})


@dataclass
class RunReport:
    """Evaluation or histogram results in tabular form.

    ``rows`` holds (metric, threshold, alpha, AP) tuples for evaluation
    runs; ``hist_rows`` holds (bin_lo, bin_hi, p_a, p_b, diff) tuples for
    histogram runs. ``counts`` carries dataset bookkeeping for the report
    footer.
    """

    task: str = ""
    method: str = ""
    rows: list[tuple[str, float, float, float]] = field(default_factory=list)
    hist_rows: list[tuple[float, float, float, float, float]] = field(default_factory=list)
    counts: dict[str, int] = field(default_factory=dict)

    def eval_csv(self) -> str:
        lines = ["metric,threshold,alpha,AP"]
        for metric, threshold, alpha, ap in self.rows:
            lines.append(f"{metric},{threshold:g},{alpha:g},{ap:.6f}")
        return "\n".join(lines) + "\n"

    def hist_csv(self) -> str:
        lines = ["bin_lo,bin_hi,p_a,p_b,diff"]
        for lo, hi, pa, pb, diff in self.hist_rows:
            lines.append(f"{lo:.6f},{hi:.6f},{pa:.9f},{pb:.9f},{diff:.9f}")
        return "\n".join(lines) + "\n"


def eval_report(outcome_aps: dict[str, float], cfg: EvalConfig, counts: dict[str, int],
                task: str = "", method: str = "") -> RunReport:
    """Arrange AP results into the canonical four-row report."""
    rows = [
        (metric, cfg.thresholds[metric], cfg.alpha, outcome_aps[metric])
        for metric in METRICS
    ]
    return RunReport(task=task, method=method, rows=rows, counts=dict(counts))
