"""Image segmentation with spatially regularized Student-t mixture models."""
from .core import (
    FeatureField,
    LabelMap,
    Lattice,
    ProbabilityField,
    argmax_labels,
    entropy_map,
    renormalize_rows,
)
from .em import FitConfig, FitTrace, MixtureModel, fit, objective
from .errors import TsegError
from .evaluate import boundary_from_labels, f_boundary, pearson, rand_indices, subject_stats
from .features import image_features
from .pipeline import SegmentationResult, segment_features, segment_image
from .prior import SmoothingKernel, prior_update
from .studentt import ComponentParams, log_pdf, solve_nu
from .synth import SynthSpec, make_synthetic, recovery_mae

__all__ = [
    "ComponentParams",
    "FeatureField",
    "FitConfig",
    "FitTrace",
    "LabelMap",
    "Lattice",
    "MixtureModel",
    "ProbabilityField",
    "SegmentationResult",
    "SmoothingKernel",
    "SynthSpec",
    "TsegError",
    "argmax_labels",
    "boundary_from_labels",
    "entropy_map",
    "f_boundary",
    "fit",
    "image_features",
    "log_pdf",
    "make_synthetic",
    "objective",
    "pearson",
    "prior_update",
    "rand_indices",
    "recovery_mae",
    "renormalize_rows",
    "segment_features",
    "segment_image",
    "solve_nu",
    "subject_stats",
]
