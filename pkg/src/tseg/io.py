"""File formats: images, BSDS ``.seg`` ground truth, PSEG probability
fields, 16-bit PGM label/entropy maps, model parameter text and traces.

PSEG layout (little-endian)::

    b"PSEG" | version u16 | H u32 | W u32 | K u32 | H*W*K float32

Values are pixel-major (row-major pixels), channel-minor.
"""
from __future__ import annotations

import contextlib
import csv
import os
import shutil
import struct
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image

from .core import FeatureField, LabelMap, Lattice, ProbabilityField
from .errors import CoverageError, FormatError, ParseError

PSEG_MAGIC = b"PSEG"
PSEG_VERSION = 1
_PSEG_HEADER = struct.Struct("<4sHIII")


def read_image(path) -> np.ndarray:
    """8-bit RGB ``(H, W, 3)`` array from a PNG or binary PPM file."""
    with Image.open(path) as im:
        return np.array(im.convert("RGB"))


def write_ppm(path, rgb):
    rgb = np.asarray(rgb)
    if rgb.dtype != np.uint8:
        raise ValueError("PPM output expects uint8 data")
    Image.fromarray(rgb, mode="RGB").save(path, format="PPM")


def write_pgm16(path, values):
    values = np.asarray(values)
    if values.min() < 0 or values.max() > 65535:
        raise ValueError("values out of 16-bit range")
    Image.fromarray(values.astype(np.uint16)).save(path, format="PPM")


def read_pgm(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.array(im).astype(np.int64)


def read_label_pgm(path) -> LabelMap:
    return LabelMap.from_image(read_pgm(path))


def write_prob_field(p: ProbabilityField, path):
    h, w = p.lattice.shape
    header = _PSEG_HEADER.pack(PSEG_MAGIC, PSEG_VERSION, h, w, p.k)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(p.data, dtype="<f4").tobytes())


def read_prob_field(path) -> ProbabilityField:
    """Read a PSEG file.

    Values are stored as float32, so rows are renormalized in double
    precision on load; the stored bytes themselves round-trip exactly
    through :func:`read_prob_array`.
    """
    arr, lattice = read_prob_array(path)
    data = arr.astype(float)
    data /= data.sum(axis=1, keepdims=True)
    return ProbabilityField(lattice, data)


def read_prob_array(path) -> tuple[np.ndarray, Lattice]:
    """Raw float32 ``(N, K)`` payload of a PSEG file and its lattice."""
    raw = Path(path).read_bytes()
    if len(raw) < _PSEG_HEADER.size:
        raise FormatError("truncated PSEG header")
    magic, version, h, w, k = _PSEG_HEADER.unpack_from(raw)
    if magic != PSEG_MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != PSEG_VERSION:
        raise FormatError(f"unsupported PSEG version {version}")
    expected = _PSEG_HEADER.size + 4 * h * w * k
    if len(raw) != expected:
        raise FormatError(f"PSEG payload has {len(raw)} bytes, expected {expected}")
    if h < 1 or w < 1 or k < 1:
        raise FormatError("empty PSEG dimensions")
    arr = np.frombuffer(raw, dtype="<f4", offset=_PSEG_HEADER.size).reshape(h * w, k)
    return arr, Lattice(h, w)


def parse_seg_file(path) -> LabelMap:
    """Parse a BSDS ``.seg`` file.

    After the ``data`` line each row ``s r c1 c2`` assigns segment ``s`` to
    row ``r``, columns ``c1..c2`` inclusive.  Every pixel must be covered
    exactly once.  Labels are renumbered densely in raster order of first
    appearance.
    """
    header = {}
    runs = []
    with open(path) as fh:
        in_data = False
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if not in_data:
                if parts[0] == "data":
                    in_data = True
                elif len(parts) >= 2:
                    header[parts[0]] = parts[1]
                continue
            if len(parts) != 4:
                raise ParseError(f"{path}:{lineno}: expected 4 fields, got {len(parts)}")
            try:
                runs.append([int(v) for v in parts])
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-integer field") from None
    if not in_data:
        raise ParseError(f"{path}: missing 'data' line")
    try:
        w, h = int(header["width"]), int(header["height"])
    except (KeyError, ValueError):
        raise ParseError(f"{path}: header needs integer width and height") from None
    labels = np.full((h, w), -1, dtype=np.int64)
    cover = np.zeros((h, w), dtype=np.int64)
    for s, r, c1, c2 in runs:
        if not (0 <= r < h and 0 <= c1 <= c2 < w) or s < 0:
            raise ParseError(f"{path}: run {s} {r} {c1} {c2} outside a {h}x{w} image")
        labels[r, c1 : c2 + 1] = s
        cover[r, c1 : c2 + 1] += 1
    if np.any(cover != 1):
        n_miss = int((cover == 0).sum())
        n_dup = int((cover > 1).sum())
        raise CoverageError(f"{path}: {n_miss} uncovered and {n_dup} multiply covered pixels")
    _, first, inverse = np.unique(labels.ravel(), return_index=True, return_inverse=True)
    rank = np.argsort(np.argsort(first))
    return LabelMap(Lattice(h, w), rank[inverse])


def read_ground_truth(path) -> LabelMap:
    path = Path(path)
    if path.suffix == ".seg":
        return parse_seg_file(path)
    return read_label_pgm(path)


def read_features(path) -> FeatureField:
    """Precomputed ``(H, W, D)`` features saved with :func:`numpy.save`."""
    arr = np.load(path)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise FormatError(f"feature array must be H x W x D, got shape {arr.shape}")
    return FeatureField.from_image(arr)


def format_model(model) -> str:
    lines = [
        f"k = {model.k}",
        f"dim = {model.dim}",
        f"model_kind = {model.model_kind}",
        f"with_spatial_prior = {str(model.with_spatial_prior).lower()}",
    ]
    for j, c in enumerate(model.components):
        lines.append(f"component.{j}.nu = {c.nu!r}")
        lines.append(f"component.{j}.mu = " + " ".join(repr(float(v)) for v in c.mu))
        lines.append(f"component.{j}.sigma = " + " ".join(repr(float(v)) for v in c.sigma.ravel()))
    return "\n".join(lines) + "\n"


def parse_model_text(text: str) -> dict:
    out = {}
    for line in text.splitlines():
        if "=" in line:
            key, val = line.split("=", 1)
            out[key.strip()] = val.strip()
    return out


def write_trace(path, trace):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["iteration", "objective"])
        for i, v in enumerate(trace.objective_per_iter):
            wr.writerow([i, repr(v)])


@contextlib.contextmanager
def staged_output(out_dir):
    """Yield a scratch directory whose files move into ``out_dir`` only on success."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=".tseg-", dir=out_dir))
    try:
        yield tmp
        for item in sorted(tmp.iterdir()):
            os.replace(item, out_dir / item.name)
    finally:
        shutil.rmtree(tmp, ignore_errors=True)
