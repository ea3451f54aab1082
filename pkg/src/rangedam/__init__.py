"""Range-image machinery with a verified reverse-mode gradient tape.

Point clouds project onto range images (azimuth column, ring row, nearest
return per pixel); feature maps flow through ConvNeXt-style blocks whose
depth-aware variant recalibrates channels from pooled context plus a
sinusoidal channel encoding; IoU metrics and a deterministic toy training
harness exercise the whole path end to end.
"""

__version__ = "0.1.0"

from .autodiff import Tape, Tensor
from .blocks import (
    BlockSpec,
    BlockParams,
    StageSpec,
    ToyModel,
    block_forward,
    build_stages,
    init_block_params,
    load_checkpoint,
    param_count,
    save_checkpoint,
)
from .config import active_dtype, precision, precision_mode, set_precision
from .dam import (
    DamParams,
    SpeConfig,
    dam_forward,
    dam_scale,
    init_dam_params,
    scale_for_map,
    spe_vector,
)
from .errors import (
    BoundsError,
    DegeneratePointError,
    DegeneratePoolError,
    EvaluationError,
    FormatError,
    RangeDamError,
    RingInferenceError,
    ShapeError,
    TrainingDivergenceError,
    ValidationError,
)
from .estimators import DepthAwareSegmenter, ScanUnfoldProjector
from .gradcheck import gradient_check, run_suite
from .io import (
    IGNORE_ID,
    UNPROJECTED,
    LabelArray,
    PointCloud,
    RangeImage,
    read_labels,
    read_point_cloud_bin,
    read_range_image,
    read_rings,
    write_labels,
    write_point_cloud_bin,
    write_range_image,
    write_rings,
)
from .metrics import ConfusionMatrix, channel_cosine_distance, merge
from .projection import (
    FieldOfView,
    ProjectionGeometry,
    backproject,
    compute_azimuth,
    infer_rings,
    pixel_angles,
    project_cloud,
    rasterize,
    scan_unfold,
)
from .synthetic import SyntheticScene, generate
from .training import TrainConfig, TrainResult, ablation_run, evaluate, train

__all__ = [
    "__version__",
    "Tape",
    "Tensor",
    "BlockSpec",
    "BlockParams",
    "StageSpec",
    "ToyModel",
    "block_forward",
    "build_stages",
    "init_block_params",
    "load_checkpoint",
    "param_count",
    "save_checkpoint",
    "active_dtype",
    "precision",
    "precision_mode",
    "set_precision",
    "DamParams",
    "SpeConfig",
    "dam_forward",
    "dam_scale",
    "init_dam_params",
    "scale_for_map",
    "spe_vector",
    "BoundsError",
    "DegeneratePointError",
    "DegeneratePoolError",
    "EvaluationError",
    "FormatError",
    "RangeDamError",
    "RingInferenceError",
    "ShapeError",
    "TrainingDivergenceError",
    "ValidationError",
    "DepthAwareSegmenter",
    "ScanUnfoldProjector",
    "gradient_check",
    "run_suite",
    "IGNORE_ID",
    "UNPROJECTED",
    "LabelArray",
    "PointCloud",
    "RangeImage",
    "read_labels",
    "read_point_cloud_bin",
    "read_range_image",
    "read_rings",
    "write_labels",
    "write_point_cloud_bin",
    "write_range_image",
    "write_rings",
    "ConfusionMatrix",
    "channel_cosine_distance",
    "merge",
    "FieldOfView",
    "ProjectionGeometry",
    "backproject",
    "compute_azimuth",
    "infer_rings",
    "pixel_angles",
    "project_cloud",
    "rasterize",
    "scan_unfold",
    "SyntheticScene",
    "generate",
    "TrainConfig",
    "TrainResult",
    "ablation_run",
    "evaluate",
    "train",
]
