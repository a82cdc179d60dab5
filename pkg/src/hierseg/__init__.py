"""Pseudo-label generation toolkit: adaptive region merging over patch
features, mask post-processing, part/whole hierarchies, teacher/student
schedule math, and class-agnostic AR/AP evaluation."""

from .clustering import ClusterConfig, MergeSnapshot, Region, build_adjacency, cluster, region_to_mask
from .crf import CrfParams
from .errors import (
    ConfigError,
    CyclicCoverageError,
    DimensionMismatchError,
    EmptyMasksError,
    HiersegError,
    IterOutOfRangeError,
    LengthMismatchError,
    MalformedHeaderError,
    NonFiniteValueError,
    ParseError,
    ZeroVectorError,
)
from .evaluation import (
    Detection,
    EvalResult,
    GroundTruth,
    MetricSet,
    average_precision,
    box_iou,
    evaluate,
    match_and_recall,
    size_bucket,
)
from .features import (
    FeatureMap,
    RgbImage,
    cosine_similarity,
    load_feature_map,
    load_numpy_feature_map,
    load_rgb_image,
    write_feature_map,
)
from .hierarchy import HierLevel, HierarchyForest, build_forest, covers, level_distribution
from .pipeline import PipelineConfig, generate, load_config, process_feature_map
from .postprocess import MaskRecord, crf_refine, ensemble, fill_holes, filter_masks
from .rle import RleMask, decode_counts, encode_counts, mask_iou
from .schedule import (
    ScheduleConfig,
    cosine_interp,
    ema_update,
    learning_rate,
    loss_weights,
    progress,
)

__version__ = "0.1.0"
