"""Edge-guided distillation for compact binary segmentation models.

A frozen teacher encoder guides a small student segmenter during training
via edge-aware embedding alignment; inference uses the student alone.
"""

from .config import ConfigError, TrainConfig
from .data import Batch, DataError, DatasetManifest, load_manifest, make_batches, merge_manifests
from .edge_ops import (
    canny_edges,
    compute_edge_map,
    laplacian_edges,
    resize_edge_map,
    sobel_edges,
    to_grayscale,
)
from .eg import BoundaryAttention, ChannelAttention, EdgeGuide, ProjectionHead, fuse
from .losses import LossBreakdown, bce_loss, dice_loss, guide_loss, seg_loss, total_loss
from .metrics import mean_dice, mean_iou
from .models import build_student, build_teacher, count_params, estimate_flops, gflops
from .harness import (
    NumericalError,
    RunRecord,
    evaluate,
    load_checkpoint,
    save_checkpoint,
    train,
)

__version__ = "0.1.0"
