"""Detection evaluation: greedy matching, average precision, gap histograms.

Four metrics share one harness: plain BEV IoU, 3D IoU, and the two
closer-surfaces variants (BEV IoU discounted by the gap, and the absolute
1/(1+alpha*gap) score). Each metric runs its own matching pass against its
own threshold; AP is the 40-point interpolated KITTI-style average.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .geometry import Box7, bev_iou, closer_surfaces_gap, iou_3d

METRICS = ("bev", "3d", "cs_bev", "cs_abs")

DIFFICULTIES = ("easy", "moderate", "hard", "unknown")
_DIFFICULTY_RANK = {name: i for i, name in enumerate(DIFFICULTIES)}


@dataclass(frozen=True)
class GtObject:
    """A ground-truth object: box, class name, annotation difficulty.

    ``points`` optionally carries the object's interior LiDAR points (N, 3)
    for augmentation workflows; it never affects matching or AP.
    """

    box: Box7
    cls: str
    difficulty: str = "unknown"
    points: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if self.difficulty not in _DIFFICULTY_RANK:
            raise ValueError(f"unknown difficulty {self.difficulty!r}")
        if not self.cls:
            raise ValueError("class name must be non-empty")


@dataclass(frozen=True)
class PredObject:
    """A detection: box, class name, confidence score in [0, 1]."""

    box: Box7
    cls: str
    score: float

    def __post_init__(self) -> None:
        if not self.cls:
            raise ValueError("class name must be non-empty")
        if not (0.0 <= self.score <= 1.0):
            raise ValueError("score must lie in [0, 1]")


@dataclass
class Frame:
    """One scene's ground truths and predictions under a shared frame id."""

    frame_id: str
    gts: list[GtObject] = field(default_factory=list)
    preds: list[PredObject] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.frame_id:
            raise ValueError("frame id must be non-empty")


@dataclass(frozen=True)
class EvalConfig:
    """Evaluation settings shared by all run entry points.

    thresholds maps metric name to its match threshold. difficulty_filter
    keeps GTs at or below that difficulty; harder (or unknown) GTs become
    "ignore" regions that absorb predictions without counting as TP or FP.
    cs_abs_via_bev switches the cs_abs pass to pair by BEV IoU at the bev
    threshold and then demand the absolute score on top.
    """

    alpha: float = 1.0
    thresholds: dict[str, float] = field(
        default_factory=lambda: {"bev": 0.7, "3d": 0.7, "cs_bev": 0.5, "cs_abs": 0.7}
    )
    recall_points: int = 40
    difficulty_filter: str = "moderate"
    class_filter: str = "Car"
    cs_abs_via_bev: bool = False

    def __post_init__(self) -> None:
        if self.alpha < 0.0:
            raise ValueError("invalid penalty ratio: alpha must be >= 0")
        if self.recall_points < 1:
            raise ValueError("recall_points must be >= 1")
        if self.difficulty_filter not in _DIFFICULTY_RANK:
            raise ValueError(f"unknown difficulty {self.difficulty_filter!r}")
        missing = [m for m in METRICS if m not in self.thresholds]
        if missing:
            raise ValueError(f"thresholds missing for metrics {missing}")
        for name, value in self.thresholds.items():
            if name not in METRICS:
                raise ValueError(f"unknown metric name {name!r}")
            if not (0.0 < value <= 1.0):
                raise ValueError(f"threshold for {name} must lie in (0, 1]")


@dataclass(frozen=True)
class MatchRecord:
    """Outcome for one prediction: tp / fp / ignored, plus the pair score."""

    pred: PredObject
    gt: GtObject | None
    score: float
    status: str


@dataclass
class FrameMatches:
    """Per-frame matching result, including ground truths left unmatched."""

    records: list[MatchRecord]
    unmatched_gts: list[GtObject]
    num_valid_gts: int


def _gt_is_valid(gt: GtObject, cfg: EvalConfig) -> bool:
    return _DIFFICULTY_RANK[gt.difficulty] <= _DIFFICULTY_RANK[cfg.difficulty_filter]


def _pair_cache(gts: list[GtObject], preds: list[PredObject]) -> dict[str, list[list[float]]]:
    """BEV IoU, 3D IoU and closer-surfaces gap for every (pred, gt) pair."""
    ious = [[bev_iou(p.box, g.box) for g in gts] for p in preds]
    ious3d = [[iou_3d(p.box, g.box) for g in gts] for p in preds]
    gaps = [[closer_surfaces_gap(p.box, g.box) for g in gts] for p in preds]
    return {"bev": ious, "3d": ious3d, "gap": gaps}


def _metric_scores(cache: dict[str, list[list[float]]], metric: str, alpha: float) -> list[list[float]]:
    if metric == "bev":
        return cache["bev"]
    if metric == "3d":
        return cache["3d"]
    if metric == "cs_bev":
        return [
            [iou / (1.0 + alpha * gap) for iou, gap in zip(iou_row, gap_row)]
            for iou_row, gap_row in zip(cache["bev"], cache["gap"])
        ]
    if metric == "cs_abs":
        return [[1.0 / (1.0 + alpha * gap) for gap in gap_row] for gap_row in cache["gap"]]
    raise ValueError(f"unknown metric name {metric!r}")


def _greedy_match(
    preds: list[PredObject],
    gts: list[GtObject],
    valid: list[bool],
    scores: list[list[float]],
    threshold: float,
    pair_gate: list[list[float]] | None = None,
    gate_threshold: float = 0.0,
) -> FrameMatches:
    """Greedy assignment in descending prediction score.

    Each valid GT matches at most once; ignored GTs absorb any number of
    predictions. When ``pair_gate`` is given, candidate pairs are chosen by
    the gate matrix at ``gate_threshold`` and the metric score is applied as
    an extra TP requirement afterwards.
    """
    order = sorted(range(len(preds)), key=lambda i: (-preds[i].score, i))
    taken = [False] * len(gts)
    records: list[MatchRecord] = []
    by_pred: list[MatchRecord | None] = [None] * len(preds)
    choose = pair_gate if pair_gate is not None else scores
    choose_thresh = gate_threshold if pair_gate is not None else threshold
    for i in order:
        best_j, best_val = -1, -math.inf
        for j in range(len(gts)):
            if taken[j] or not valid[j]:
                continue
            if choose[i][j] > best_val:
                best_j, best_val = j, choose[i][j]
        if best_j >= 0 and best_val >= choose_thresh:
            if pair_gate is not None and scores[i][best_j] < threshold:
                # Paired geometrically but failing the metric requirement.
                taken[best_j] = True
                by_pred[i] = MatchRecord(preds[i], None, scores[i][best_j], "fp")
                continue
            taken[best_j] = True
            by_pred[i] = MatchRecord(preds[i], gts[best_j], scores[i][best_j], "tp")
            continue
        # No valid GT above threshold; check ignore regions before calling FP.
        ign_val = -math.inf
        ign_j = -1
        for j in range(len(gts)):
            if valid[j]:
                continue
            if choose[i][j] > ign_val:
                ign_j, ign_val = j, choose[i][j]
        if ign_j >= 0 and ign_val >= choose_thresh:
            by_pred[i] = MatchRecord(preds[i], gts[ign_j], scores[i][ign_j], "ignored")
        else:
            by_pred[i] = MatchRecord(preds[i], None, max(best_val, 0.0), "fp")
    for i in range(len(preds)):
        rec = by_pred[i]
        assert rec is not None
        records.append(rec)
    unmatched = [gts[j] for j in range(len(gts)) if valid[j] and not taken[j]]
    return FrameMatches(records, unmatched, sum(valid))


def _match_with_cache(
    frame: Frame,
    metric: str,
    cfg: EvalConfig,
    cache: dict[str, list[list[float]]] | None = None,
) -> FrameMatches:
    gts = [g for g in frame.gts if g.cls == cfg.class_filter]
    preds = [p for p in frame.preds if p.cls == cfg.class_filter]
    valid = [_gt_is_valid(g, cfg) for g in gts]
    if cache is None:
        cache = _pair_cache(gts, preds)
    scores = _metric_scores(cache, metric, cfg.alpha)
    if metric == "cs_abs" and cfg.cs_abs_via_bev:
        return _greedy_match(
            preds,
            gts,
            valid,
            scores,
            cfg.thresholds["cs_abs"],
            pair_gate=cache["bev"],
            gate_threshold=cfg.thresholds["bev"],
        )
    return _greedy_match(preds, gts, valid, scores, cfg.thresholds[metric])


def match_frame(frame: Frame, metric: str, cfg: EvalConfig) -> FrameMatches:
    """Match one frame's predictions against its ground truths.

    Predictions are processed in descending confidence (ties keep input
    order); each takes the still-unmatched valid GT with the highest metric
    score, provided that score clears the metric's threshold. Predictions
    whose best remaining hit is a difficulty-ignored GT are flagged ignored.
    """
    if metric not in METRICS:
        raise ValueError(f"unknown metric name {metric!r}")
    return _match_with_cache(frame, metric, cfg)


def average_precision(
    scored_matches: list[tuple[float, bool]],
    total_gt: int,
    recall_points: int = 40,
) -> float:
    """Interpolated average precision on a 0-100 scale.

    ``scored_matches`` holds (confidence, is_tp) for every counted
    prediction, in a deterministic order; ignored predictions must already
    be excluded. Samples ``recall_points`` recall levels k/recall_points and
    averages the best precision achieved at or beyond each level.
    """
    if recall_points < 1:
        raise ValueError("recall_points must be >= 1")
    if total_gt <= 0:
        return 0.0
    if not scored_matches:
        return 0.0
    ordered = sorted(scored_matches, key=lambda m: -m[0])
    flags = np.array([1.0 if tp else 0.0 for _, tp in ordered])
    tp_cum = np.cumsum(flags)
    fp_cum = np.cumsum(1.0 - flags)
    precision = tp_cum / (tp_cum + fp_cum)
    recall = tp_cum / float(total_gt)
    # Precision envelope from the right: best precision at recall >= r.
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    levels = np.arange(1, recall_points + 1) / float(recall_points)
    idx = np.searchsorted(recall, levels - 1e-12, side="left")
    reachable = idx < len(recall)
    total = float(np.sum(np.where(reachable, envelope[np.minimum(idx, len(recall) - 1)], 0.0)))
    return 100.0 * total / float(recall_points)


@dataclass
class EvalOutcome:
    """Dataset-level APs plus the counts behind them."""

    aps: dict[str, float]
    num_frames: int
    num_valid_gts: int
    num_preds: int
    num_ignored: dict[str, int]


def _frame_task(frame: Frame, cfg: EvalConfig) -> dict[str, FrameMatches]:
    gts = [g for g in frame.gts if g.cls == cfg.class_filter]
    preds = [p for p in frame.preds if p.cls == cfg.class_filter]
    cache = _pair_cache(gts, preds)
    return {m: _match_with_cache(frame, m, cfg, cache) for m in METRICS}


def evaluate(frames: list[Frame], cfg: EvalConfig | None = None, threads: int = 1) -> EvalOutcome:
    """Evaluate a dataset under all four metrics.

    The result is invariant to frame ordering: frames are processed in
    sorted frame-id order and score ties in the dataset-level sweep break by
    (frame id, prediction index). Raises on duplicate frame ids.
    """
    cfg = cfg or EvalConfig()
    if threads < 1:
        raise ValueError("threads must be >= 1")
    seen: set[str] = set()
    for f in frames:
        if f.frame_id in seen:
            raise ValueError(f"duplicate frame id {f.frame_id!r}")
        seen.add(f.frame_id)
    ordered = sorted(frames, key=lambda f: f.frame_id)
    if threads == 1 or len(ordered) < 2:
        per_frame = [_frame_task(f, cfg) for f in ordered]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_frame = list(pool.map(lambda f: _frame_task(f, cfg), ordered))
    aps: dict[str, float] = {}
    ignored: dict[str, int] = {}
    total_valid = 0
    for metric in METRICS:
        scored: list[tuple[float, bool]] = []
        n_valid = 0
        n_ignored = 0
        for matches in per_frame:
            fm = matches[metric]
            n_valid += fm.num_valid_gts
            for rec in fm.records:
                if rec.status == "ignored":
                    n_ignored += 1
                    continue
                scored.append((rec.pred.score, rec.status == "tp"))
        aps[metric] = average_precision(scored, n_valid, cfg.recall_points)
        ignored[metric] = n_ignored
        total_valid = n_valid
    num_preds = sum(
        sum(1 for p in f.preds if p.cls == cfg.class_filter) for f in ordered
    )
    return EvalOutcome(aps, len(ordered), total_valid, num_preds, ignored)


@dataclass
class GapHistogram:
    """Closer-surfaces gap proportions over equal-width bins of an interval."""

    proportions: np.ndarray
    bin_edges: np.ndarray
    total_in_interval: int
    empty: bool


def gcs_histogram(
    frames: list[Frame],
    cfg: EvalConfig | None = None,
    interval: tuple[float, float] = (0.0, 2.0),
    bins: int = 20,
) -> GapHistogram:
    """Distribution of closer-surfaces gaps over BEV-matched true positives.

    Gaps outside ``interval`` are dropped; proportions are normalized over
    the in-interval count so comparable models share a common denominator.
    With no in-interval gaps the proportions are all zero and ``empty`` is
    set instead of dividing by zero.
    """
    cfg = cfg or EvalConfig()
    lo, hi = interval
    if not (lo < hi):
        raise ValueError("interval must satisfy lo < hi")
    if bins < 1:
        raise ValueError("bins must be >= 1")
    gaps: list[float] = []
    for frame in sorted(frames, key=lambda f: f.frame_id):
        for rec in match_frame(frame, "bev", cfg).records:
            if rec.status == "tp" and rec.gt is not None:
                gaps.append(closer_surfaces_gap(rec.pred.box, rec.gt.box))
    counts, edges = np.histogram(np.array(gaps, dtype=float), bins=bins, range=(lo, hi))
    inside = int(counts.sum())
    if inside == 0:
        return GapHistogram(np.zeros(bins), edges, 0, True)
    return GapHistogram(counts / float(inside), edges, inside, False)


def proportion_difference(model_a: np.ndarray, model_b: np.ndarray) -> np.ndarray:
    """Per-bin proportion difference, second model minus first.

    Positive values in low bins mean model B concentrates more of its
    matches at small gaps than model A. Both inputs must share bin count;
    when both are normalized histograms the differences sum to zero.
    """
    pa = np.asarray(model_a, dtype=float)
    pb = np.asarray(model_b, dtype=float)
    if pa.shape != pb.shape:
        raise ValueError("histograms must have the same number of bins")
    return pb - pa
