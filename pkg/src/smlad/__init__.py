"""Per-class standardized max logits for pixel-wise anomaly scoring.

Max logits are standardized by the statistics of their predicted class, boundary
scores are replaced by nearby interior values, and a dilated Gaussian removes
isolated irregular scores.
"""
from .baseline_scorers import Polarity, entropy, max_logit_and_pred, msp, to_anomaly
from .boundary_suppression import (
    BoundaryConfig,
    NonBoundaryMask,
    boundary_aware_pool,
    iterative_boundary_suppression,
    non_boundary_mask,
)
from .class_stats import ClassStats, accumulate, load_stats, save_stats, standardize
from .dilated_smoothing import SmoothingConfig, dilated_smooth, gaussian_kernel
from .metrics import EvalReport, evaluate, miou_with_rejection, per_class_distribution
from .pipeline import METHODS, PipelineConfig, PipelineError, score_volume
from .synth import Scene, SynthConfig, generate_corpus, generate_scene
from .tensor_io import (
    IGNORE,
    AnomalyMask,
    LabelMap,
    LogitVolume,
    ScoreMap,
    Stage,
    TensorError,
    read_tensor,
    write_tensor,
)

__version__ = "0.1.0"
