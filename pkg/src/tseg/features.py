"""Per-pixel features: color channels plus oriented quadrature Gabor responses,
standardized per channel and reduced by PCA.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.signal import fftconvolve
from skimage.color import rgb2lab

from .core import FeatureField, Lattice
from .errors import DegenerateChannel, DimMismatch, TooFewSamples

ColorSpace = Literal["lab", "rgb"]

DEFAULT_SCALE = 8.0
ENVELOPE_RATIO = 0.56


@dataclass(frozen=True, eq=False)
class FilterBank:
    kernels: list
    orientations: list
    scale: float
    phases: list

    def __len__(self):
        return len(self.kernels)


def make_filter_bank(n_orient: int = 4, scale: float = DEFAULT_SCALE) -> FilterBank:
    """Even/odd Gabor pairs at angles ``k * pi / n_orient``.

    ``scale`` is the carrier wavelength in pixels; the Gaussian envelope has
    standard deviation ``0.56 * scale``.  The angle is the direction of the
    carrier's wave vector, with x along columns and y down the rows, so the
    0-angle odd kernel responds to vertical edges.  Kernels are DC-free and
    have unit L2 norm.  Order: ``[even_0, odd_0, even_1, odd_1, ...]``.
    """
    if n_orient < 1:
        raise ValueError("need at least one orientation")
    if scale < 2:
        raise ValueError("scale must be at least 2 pixels")
    sigma = ENVELOPE_RATIO * scale
    r = math.ceil(3 * sigma)
    y, x = np.mgrid[-r : r + 1, -r : r + 1].astype(float)
    env = np.exp(-(x**2 + y**2) / (2 * sigma**2))
    kernels, angles, phases = [], [], []
    for k in range(n_orient):
        theta = k * math.pi / n_orient
        u = x * math.cos(theta) + y * math.sin(theta)
        for phase, carrier in (("even", np.cos), ("odd", np.sin)):
            ker = env * carrier(2 * math.pi * u / scale)
            ker -= ker.mean()
            ker /= np.linalg.norm(ker)
            ker.setflags(write=False)
            kernels.append(ker)
            angles.append(theta)
            phases.append(phase)
    return FilterBank(kernels, angles, float(scale), phases)


def filter_image(channel, kernel) -> np.ndarray:
    """Correlate a 2D channel with ``kernel`` using mirror padding; same-size output."""
    channel = np.asarray(channel, dtype=float)
    r0, r1 = kernel.shape[0] // 2, kernel.shape[1] // 2
    padded = np.pad(channel, ((r0, r0), (r1, r1)), mode="symmetric")
    # fftconvolve flips the kernel; flip it back so this is a correlation
    return fftconvolve(padded, kernel[::-1, ::-1], mode="valid")


def rgb_to_lab(image) -> np.ndarray:
    """sRGB (8-bit or [0, 1] float) to CIELAB under D65."""
    img = np.asarray(image)
    if img.dtype == np.uint8:
        img = img.astype(float) / 255.0
    return rgb2lab(img[..., :3])


def _standardize(chans):
    mean = chans.mean(axis=0)
    sd = chans.std(axis=0)
    out = chans - mean
    flat = sd <= 1e-12 * np.maximum(1.0, np.abs(mean))
    if np.any(flat):
        warnings.warn(
            DegenerateChannel(f"channels {np.flatnonzero(flat).tolist()} have zero variance"),
            stacklevel=3,
        )
        out[:, flat] = 0.0
    out[:, ~flat] /= sd[~flat]
    return out


def extract_raw_features(
    image,
    n_orient: int = 4,
    scale: float = DEFAULT_SCALE,
    color_space: ColorSpace = "lab",
) -> FeatureField:
    """Color triple plus ``2 * n_orient`` filter responses per pixel.

    Filters run on the lightness channel (Lab) or the channel mean (RGB).
    Every channel is standardized over the image; a zero-variance channel
    is only centered and triggers a :class:`DegenerateChannel` warning.
    """
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[2] < 3:
        raise ValueError(f"expected an H x W x 3 color image, got shape {img.shape}")
    if color_space == "lab":
        color = rgb_to_lab(img)
        lum = color[..., 0]
    elif color_space == "rgb":
        color = img[..., :3].astype(float)
        if img.dtype == np.uint8:
            color /= 255.0
        lum = color.mean(axis=-1)
    else:
        raise ValueError(f"unknown color space {color_space!r}")
    h, w = img.shape[:2]
    bank = make_filter_bank(n_orient, scale)
    responses = [filter_image(lum, k) for k in bank.kernels]
    chans = np.concatenate(
        [color.reshape(h * w, 3), np.stack(responses, axis=-1).reshape(h * w, -1)], axis=1
    )
    return FeatureField(Lattice(h, w), _standardize(chans))


@dataclass(frozen=True, eq=False)
class PcaModel:
    mean: np.ndarray
    basis: np.ndarray  # (D_raw, D), orthonormal columns
    eigenvalues: np.ndarray  # all D_raw eigenvalues, decreasing
    retained_variance_fraction: float

    @property
    def dim(self) -> int:
        return self.basis.shape[1]


def pca_fit(f: FeatureField, var_keep: float = 0.999) -> PcaModel:
    """Keep the fewest leading components whose variance fraction reaches ``var_keep``."""
    if not 0 < var_keep <= 1:
        raise ValueError("var_keep must be in (0, 1]")
    x = f.data
    n, d = x.shape
    if n <= d:
        raise TooFewSamples(f"PCA needs more than {d} samples, got {n}")
    mean = x.mean(axis=0)
    cov = (x - mean).T @ (x - mean) / n
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order]
    total = evals.sum()
    if total <= 0:
        frac = np.ones(d)
    else:
        frac = np.cumsum(evals) / total
    keep = int(np.searchsorted(frac, var_keep - 1e-12) + 1)
    keep = min(keep, d)
    # deterministic sign: largest-magnitude entry of each basis vector positive
    basis = evecs[:, :keep]
    flip = np.sign(basis[np.argmax(np.abs(basis), axis=0), range(keep)])
    basis = basis * np.where(flip == 0, 1.0, flip)
    return PcaModel(mean, basis, evals, float(frac[keep - 1]))


def pca_apply(model: PcaModel, f: FeatureField) -> FeatureField:
    if f.dim != model.mean.shape[0]:
        raise DimMismatch(f"PCA fitted on {model.mean.shape[0]} channels, got {f.dim}")
    return FeatureField(f.lattice, (f.data - model.mean) @ model.basis)


def image_features(
    image,
    n_orient: int = 4,
    scale: float = DEFAULT_SCALE,
    color_space: ColorSpace = "lab",
    var_keep: float = 0.999,
) -> tuple[FeatureField, PcaModel]:
    """Full feature pipeline: raw features, then PCA fitted on the same image."""
    raw = extract_raw_features(image, n_orient, scale, color_space)
    model = pca_fit(raw, var_keep)
    return pca_apply(model, raw), model
