"""Lattice-aligned containers and simplex utilities.

Pixel data is always stored row-major: pixel ``n`` sits at
``(n // width, n % width)``.  Per-pixel vectors are rows of an
``(height * width, dim)`` array.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import entr

from .errors import DimMismatch, ZeroRow

SIMPLEX_TOL = 1e-9


@dataclass(frozen=True)
class Lattice:
    height: int
    width: int

    def __post_init__(self):
        if int(self.height) < 1 or int(self.width) < 1:
            raise ValueError(f"invalid lattice {self.height}x{self.width}")
        object.__setattr__(self, "height", int(self.height))
        object.__setattr__(self, "width", int(self.width))

    @property
    def size(self) -> int:
        return self.height * self.width

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def index(self, row, col):
        return np.asarray(row) * self.width + np.asarray(col)

    def coords(self, n):
        return np.divmod(np.asarray(n), self.width)


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class FeatureField:
    """Per-pixel feature vectors, shape ``(N, D)``."""

    lattice: Lattice
    data: np.ndarray

    def __post_init__(self):
        data = _frozen(self.data)
        if data.ndim == 1:
            data = _frozen(data[:, None])
        if data.ndim != 2 or data.shape[0] != self.lattice.size:
            raise DimMismatch(
                f"feature data of shape {data.shape} does not fit lattice {self.lattice.shape}"
            )
        if not np.all(np.isfinite(data)):
            raise ValueError("feature field contains non-finite values")
        object.__setattr__(self, "data", data)

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    @property
    def n(self) -> int:
        return self.data.shape[0]

    def image(self) -> np.ndarray:
        return self.data.reshape(self.lattice.height, self.lattice.width, self.dim)

    @classmethod
    def from_image(cls, img) -> "FeatureField":
        img = np.asarray(img, dtype=float)
        if img.ndim == 2:
            img = img[:, :, None]
        h, w, d = img.shape
        return cls(Lattice(h, w), img.reshape(h * w, d))


@dataclass(frozen=True, eq=False)
class ProbabilityField:
    """Per-pixel points on the K-simplex, shape ``(N, K)``.

    Used both for prior mixing probabilities and for posterior
    responsibilities.  Construction validates the simplex constraint.
    """

    lattice: Lattice
    data: np.ndarray

    def __post_init__(self):
        data = _frozen(self.data)
        if data.ndim != 2 or data.shape[0] != self.lattice.size:
            raise DimMismatch(
                f"probability data of shape {data.shape} does not fit lattice {self.lattice.shape}"
            )
        if not np.all(np.isfinite(data)):
            raise ValueError("probability field contains non-finite values")
        if data.min() < -SIMPLEX_TOL or data.max() > 1 + SIMPLEX_TOL:
            raise ValueError("probability entries outside [0, 1]")
        dev = np.abs(data.sum(axis=1) - 1.0).max()
        if dev > SIMPLEX_TOL:
            raise ValueError(f"rows do not sum to one (max deviation {dev:.3g})")
        object.__setattr__(self, "data", data)

    @property
    def k(self) -> int:
        return self.data.shape[1]

    def image(self) -> np.ndarray:
        return self.data.reshape(self.lattice.height, self.lattice.width, self.k)

    @classmethod
    def uniform(cls, lattice: Lattice, k: int) -> "ProbabilityField":
        return cls(lattice, np.full((lattice.size, k), 1.0 / k))

    @classmethod
    def from_image(cls, img) -> "ProbabilityField":
        img = np.asarray(img, dtype=float)
        h, w, k = img.shape
        return cls(Lattice(h, w), img.reshape(h * w, k))


@dataclass(frozen=True, eq=False)
class LabelMap:
    lattice: Lattice
    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.shape == self.lattice.shape:
            labels = labels.reshape(-1)
        if labels.shape != (self.lattice.size,):
            raise DimMismatch(f"label array of shape {labels.shape} does not fit lattice")
        if labels.size and labels.min() < 0:
            raise ValueError("labels must be nonnegative")
        object.__setattr__(self, "labels", _frozen(labels, dtype=np.int64))

    @property
    def n_labels(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0

    def image(self) -> np.ndarray:
        return self.labels.reshape(self.lattice.shape)

    @classmethod
    def from_image(cls, img) -> "LabelMap":
        img = np.asarray(img)
        return cls(Lattice(*img.shape), img.reshape(-1))


def argmax_labels(p: ProbabilityField) -> LabelMap:
    """Hard labels from soft assignments; ties go to the lowest index."""
    return LabelMap(p.lattice, np.argmax(p.data, axis=1))


def entropy_map(p: ProbabilityField) -> np.ndarray:
    """Per-pixel entropy in nats, as an ``(H, W)`` array."""
    h = entr(np.clip(p.data, 0.0, None)).sum(axis=1)
    return np.clip(h, 0.0, np.log(p.k)).reshape(p.lattice.shape)


def renormalize_rows(p, lattice: Lattice | None = None) -> ProbabilityField:
    """Rescale nonnegative rows to sum to one.

    Accepts a :class:`ProbabilityField` or a raw ``(N, K)`` array (in which
    case ``lattice`` defaults to a single row of ``N`` pixels).
    """
    if isinstance(p, ProbabilityField):
        lattice, data = p.lattice, p.data
    else:
        data = np.asarray(p, dtype=float)
        if lattice is None:
            lattice = Lattice(1, data.shape[0])
    data = np.clip(data, 0.0, None)
    sums = data.sum(axis=1, keepdims=True)
    bad = np.flatnonzero(sums[:, 0] <= 1e-300)
    if bad.size:
        raise ZeroRow(f"{bad.size} row(s) with zero mass, first at pixel {bad[0]}")
    return ProbabilityField(lattice, data / sums)
