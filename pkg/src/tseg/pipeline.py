"""End-to-end segmentation of an image or a precomputed feature field."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import FeatureField, LabelMap, ProbabilityField, argmax_labels, entropy_map
from .em import FitConfig, FitTrace, MixtureModel, fit
from .features import DEFAULT_SCALE, PcaModel, image_features


@dataclass(frozen=True, eq=False)
class SegmentationResult:
    labels: LabelMap
    # p for spatial-prior models, the responsibilities otherwise
    prob: ProbabilityField
    tau: ProbabilityField
    entropy: np.ndarray
    model: MixtureModel
    trace: FitTrace
    pca: PcaModel | None = None

    @property
    def k(self) -> int:
        return self.model.k


def segment_features(f: FeatureField, k: int, config: FitConfig = FitConfig()) -> SegmentationResult:
    model, tau, trace = fit(f, k, config)
    prob = model.prior.p if model.with_spatial_prior else tau
    return SegmentationResult(
        labels=argmax_labels(tau),
        prob=prob,
        tau=tau,
        entropy=entropy_map(prob),
        model=model,
        trace=trace,
    )


def segment_image(
    image,
    k: int,
    config: FitConfig = FitConfig(),
    *,
    pca_var: float = 0.999,
    n_orient: int = 4,
    filter_scale: float = DEFAULT_SCALE,
    color_space: str = "lab",
) -> SegmentationResult:
    f, pca = image_features(image, n_orient, filter_scale, color_space, pca_var)
    res = segment_features(f, k, config)
    return SegmentationResult(
        res.labels, res.prob, res.tau, res.entropy, res.model, res.trace, pca
    )
