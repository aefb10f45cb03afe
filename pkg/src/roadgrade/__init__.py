"""Road skeleton gap reconstruction, segment descriptors and hierarchy grading."""

__version__ = "0.1.0"

from .labels import BACKGROUND, Grade  # noqa: E402
from .raster_io import BinaryMask, GradeMask, Palette, load_mask, save_mask  # noqa: E402
from .skeleton import build_graph, prune_spurs, skeletonize  # noqa: E402
from .arr import ArrConfig, reconstruct  # noqa: E402
from .descriptors import DescriptorThresholds, describe, discretize  # noqa: E402
from .grading import FusionConfig, fuse, grade_segments, render_grade_mask  # noqa: E402
from .metrics import evaluate, pixel_confusion, pixel_metrics, segment_accuracy  # noqa: E402

__all__ = [
    "BACKGROUND", "Grade", "BinaryMask", "GradeMask", "Palette", "load_mask", "save_mask",
    "skeletonize", "prune_spurs", "build_graph", "ArrConfig", "reconstruct",
    "DescriptorThresholds", "describe", "discretize", "FusionConfig", "fuse", "grade_segments",
    "render_grade_mask", "evaluate", "pixel_confusion", "pixel_metrics", "segment_accuracy",
]
