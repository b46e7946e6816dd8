"""Closer-surfaces metrics and corner-based box codecs for 3D detection."""

from .augment import (
    DEFAULT_SCALE_RANGE,
    ObjectSample,
    SizeStats,
    rng_factors,
    ros_scale,
    sn_normalize,
)
from .corner_targets import (
    GridConfig,
    TargetGrid,
    build_targets,
    decode_boxes,
    extract_peaks,
    gaussian_radius,
    gaussian_sigma,
    nearest_corner,
    splat_gaussian,
)
from .edgehead import (
    EdgeResiduals,
    StandardResiduals,
    apply_edgehead_residuals,
    closest_vertex,
    control_group_residuals,
    edgehead_residuals,
    standard_residuals,
)
from .geometry import (
    Box7,
    OrderedBevVertices,
    bev_corners,
    bev_iou,
    closer_surfaces_gap,
    cs_abs_score,
    cs_bev_score,
    iou_3d,
    point_to_line_distance,
    sort_bev_vertices,
    wrap_angle,
)
from .io import (
    DataError,
    RangeConfig,
    RunReport,
    eval_report,
    load_frames,
    merge_eval_inputs,
    read_tensors,
    write_frames,
    write_tensors,
)
from .metrics import (
    DIFFICULTIES,
    METRICS,
    EvalConfig,
    EvalOutcome,
    Frame,
    FrameMatches,
    GapHistogram,
    GtObject,
    MatchRecord,
    PredObject,
    average_precision,
    evaluate,
    gcs_histogram,
    match_frame,
    proportion_difference,
)
from .msgm import (
    MsgmParams,
    conv2d_same,
    gate_weights,
    global_avg_pool,
    hidden_width,
    msgm_forward,
)

__version__ = "0.1.0"
