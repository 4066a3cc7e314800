"""Segmentation scores and human-variability statistics."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .core import LabelMap, Lattice
from .errors import ConstantInput, DimMismatch


@dataclass(frozen=True, eq=False)
class ContingencyTable:
    counts: np.ndarray  # (K_pred, K_true)
    n: int


def contingency(pred: LabelMap, true: LabelMap) -> ContingencyTable:
    if pred.lattice.size != true.lattice.size:
        raise DimMismatch("label maps have different sizes")
    _, a = np.unique(pred.labels, return_inverse=True)
    _, b = np.unique(true.labels, return_inverse=True)
    ka, kb = a.max() + 1, b.max() + 1
    counts = np.bincount(a * kb + b, minlength=ka * kb).reshape(ka, kb)
    return ContingencyTable(counts, int(pred.labels.size))


def _pairs(v):
    return sum(int(x) * (int(x) - 1) // 2 for x in np.ravel(v))


def rand_indices(a: LabelMap, b: LabelMap) -> tuple[float, float]:
    """Rand index and adjusted Rand index from the contingency table.

    All pair counts are exact integers, so each score is one correctly
    rounded division.  The adjusted index is 0 when its denominator
    vanishes (both partitions trivial in the same way).
    """
    table = contingency(a, b)
    total = table.n * (table.n - 1) // 2
    both = _pairs(table.counts)
    sa = _pairs(table.counts.sum(axis=1))
    sb = _pairs(table.counts.sum(axis=0))
    if total == 0:
        return 1.0, 0.0
    ri = (total + 2 * both - sa - sb) / total
    num = 2 * (both * total - sa * sb)
    den = total * (sa + sb) - 2 * sa * sb
    ari = num / den if den != 0 else 0.0
    return ri, ari


@dataclass(frozen=True, eq=False)
class BoundaryMap:
    lattice: Lattice
    on_boundary: np.ndarray  # (H, W) bool

    @property
    def n_pixels(self) -> int:
        return int(self.on_boundary.sum())


def boundary_from_labels(m: LabelMap, thin: bool = True) -> BoundaryMap:
    """Pixels with a 4-neighbour of a different label.

    With ``thin`` only the first pixel (in row-major order) of each
    differing neighbour pair is marked, giving 1-pixel-wide boundaries.
    """
    img = m.image()
    right = img[:, :-1] != img[:, 1:]
    down = img[:-1, :] != img[1:, :]
    on = np.zeros(img.shape, dtype=bool)
    on[:, :-1] |= right
    on[:-1, :] |= down
    if not thin:
        on[:, 1:] |= right
        on[1:, :] |= down
    return BoundaryMap(m.lattice, on)


def _greedy_match(pred_pts, true_pts, radius):
    """One-to-one matches within ``radius``, closest pairs first."""
    matched_p = np.zeros(len(pred_pts), dtype=bool)
    matched_t = np.zeros(len(true_pts), dtype=bool)
    if len(pred_pts) == 0 or len(true_pts) == 0:
        return matched_p, matched_t
    dist = cKDTree(pred_pts).sparse_distance_matrix(
        cKDTree(true_pts), radius, output_type="ndarray"
    )
    order = np.lexsort((dist["j"], dist["i"], dist["v"]))
    for i, j in zip(dist["i"][order], dist["j"][order]):
        if not matched_p[i] and not matched_t[j]:
            matched_p[i] = matched_t[j] = True
    return matched_p, matched_t


def boundary_pr(pred: BoundaryMap, truths, tol_frac: float = 0.0075):
    """``(precision, recall, f)`` of ``pred`` against one or more human maps.

    Matching tolerance is ``tol_frac`` of the image diagonal.  A predicted
    pixel counts as correct if it is matched in any truth; recall is
    averaged over truths.
    """
    if isinstance(truths, BoundaryMap):
        truths = [truths]
    if not truths:
        raise ValueError("need at least one ground-truth boundary map")
    h, w = pred.lattice.shape
    radius = tol_frac * math.hypot(h, w)
    pred_pts = np.argwhere(pred.on_boundary)
    hit = np.zeros(len(pred_pts), dtype=bool)
    recalls = []
    for t in truths:
        if t.lattice.shape != pred.lattice.shape:
            raise DimMismatch("boundary maps have different shapes")
        true_pts = np.argwhere(t.on_boundary)
        mp, mt = _greedy_match(pred_pts, true_pts, radius)
        hit |= mp
        recalls.append(mt.mean() if len(true_pts) else 1.0)
    precision = hit.mean() if len(pred_pts) else 0.0
    recall = float(np.mean(recalls))
    f = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return float(precision), recall, float(f)


def f_boundary(pred: BoundaryMap, truths, tol_frac: float = 0.0075) -> float:
    return boundary_pr(pred, truths, tol_frac)[2]


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise DimMismatch("pearson needs two 1D sequences of equal length")
    if x.size < 3:
        raise ValueError("need at least three points")
    dx, dy = x - x.mean(), y - y.mean()
    sx, sy = np.sqrt(dx @ dx), np.sqrt(dy @ dy)
    if sx == 0 or sy == 0:
        raise ConstantInput("correlation is undefined for constant input")
    return float(np.clip(dx @ dy / (sx * sy), -1.0, 1.0))


@dataclass(frozen=True)
class SubjectStats:
    mean_segments: float
    sd_segments: float
    mean_entropy: float | None = None

    @property
    def cv_segments(self) -> float:
        return self.sd_segments / self.mean_segments


def count_segments(m: LabelMap, window=None) -> int:
    """Distinct labels, optionally inside ``window = (row0, row1, col0, col1)``."""
    img = m.image()
    if window is not None:
        r0, r1, c0, c1 = window
        img = img[r0:r1, c0:c1]
    return int(np.unique(img).size)


def subject_stats(human_maps, window=None, entropy=None) -> SubjectStats:
    """Across-subject mean and sample SD of segment counts.

    ``entropy`` is an optional ``(H, W)`` model entropy map, averaged over
    the same window.
    """
    if len(human_maps) < 2:
        raise ValueError("need at least two subjects")
    counts = np.array([count_segments(m, window) for m in human_maps], dtype=float)
    mean_ent = None
    if entropy is not None:
        e = np.asarray(entropy)
        if window is not None:
            r0, r1, c0, c1 = window
            e = e[r0:r1, c0:c1]
        mean_ent = float(e.mean())
    return SubjectStats(float(counts.mean()), float(counts.std(ddof=1)), mean_ent)
