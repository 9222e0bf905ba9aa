"""Differentiable rendering and fitting of IFS fractal curves."""

from .diff import evaluate_with_gradient, finite_difference_gradient
from .errors import (
    BudgetExceeded,
    DegenerateSegment,
    EmptySegmentList,
    IFSError,
    InvalidSpec,
    NonFiniteGradient,
    ShapeMismatch,
    TooFewSegments,
    UnknownPreset,
    ViewportTooSmall,
    ZeroSpan,
)
from .geometry import (
    GeneratorSpec,
    Similarity,
    apply_similarity,
    control_points_from_offsets,
    expand_ifs,
    generator_transforms,
    point_segment_distance,
    similarity_from_segments,
)
from .loss import LossConfig, LossReport, bmse, crossing_penalty, gaussian_blur, total_loss
from .optimizer import OptimConfig, RunRecord, optimize, perturb, preset, target_unit_square
from .renderer import (
    RasterImage,
    Viewport,
    crossing_heatmap,
    deepen_image,
    refine_resolution,
    render_segments,
    warp_image,
)

__version__ = "0.1.0"
