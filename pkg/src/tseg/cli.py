"""Command-line interface: ``tseg {segment,synth,eval,stats,sweep}``."""
from __future__ import annotations

import argparse
import csv
import math
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import io
from .core import LabelMap, Lattice, entropy_map
from .em import FitConfig
from .errors import ConstantInput, DimMismatch, TsegError
from .evaluate import (
    boundary_from_labels,
    f_boundary,
    pearson,
    rand_indices,
    subject_stats,
)
from .pipeline import SegmentationResult, segment_features, segment_image
from .synth import SynthSpec, make_synthetic

K_LIMITS = (1, 64)
IMAGE_SUFFIXES = (".png", ".ppm", ".pnm", ".jpg", ".jpeg", ".npy")
GT_SUFFIXES = (".seg", ".pgm")
SCORES = ("ri", "ari", "f_b")
SCORE_HEADER = ["image_id", "k", "ri", "ari", "f_b", "mean_entropy"]


@dataclass(frozen=True)
class RunConfig:
    command: str
    input: Path | None = None
    output_dir: Path | None = None
    k_values: tuple[int, ...] = ()
    sigma: float = 4.25
    model_kind: str = "student_t"
    with_spatial_prior: bool = True
    pca_var: float = 0.999
    max_iters: int = 200
    rel_tol: float = 1e-5
    seed: int = 0
    threads: int = 1
    filter_scale: float = 8.0
    color_space: str = "lab"

    def fit_config(self) -> FitConfig:
        return FitConfig(
            max_iters=self.max_iters,
            rel_tol=self.rel_tol,
            seed=self.seed,
            sigma=self.sigma,
            model_kind=self.model_kind,
            with_spatial_prior=self.with_spatial_prior,
        )


class UsageError(TsegError):
    pass


# ---------------------------------------------------------------- artifacts


def entropy_to_pgm(entropy, k: int) -> np.ndarray:
    if k <= 1:
        return np.zeros(entropy.shape, dtype=np.uint16)
    return np.clip(np.rint(entropy * (65535 / math.log(k))), 0, 65535).astype(np.uint16)


def pgm_to_entropy(values, k: int) -> np.ndarray:
    if k <= 1:
        return np.zeros(values.shape)
    return np.asarray(values, dtype=float) * (math.log(k) / 65535)


def write_result(result: SegmentationResult, out_dir):
    """Write the five segmentation artifacts; nothing appears unless all succeed."""
    with io.staged_output(out_dir) as tmp:
        io.write_pgm16(tmp / "labels.pgm", result.labels.image())
        io.write_prob_field(result.prob, tmp / "prob.pseg")
        io.write_pgm16(tmp / "entropy.pgm", entropy_to_pgm(result.entropy, result.k))
        (tmp / "model.txt").write_text(io.format_model(result.model))
        io.write_trace(tmp / "trace.csv", result.trace)


def _segment_path(path: Path, k: int, cfg: RunConfig) -> SegmentationResult:
    if path.suffix == ".npy":
        return segment_features(io.read_features(path), k, cfg.fit_config())
    return segment_image(
        io.read_image(path),
        k,
        cfg.fit_config(),
        pca_var=cfg.pca_var,
        filter_scale=cfg.filter_scale,
        color_space=cfg.color_space,
    )


# ---------------------------------------------------------------- scoring


def score_labels(pred: LabelMap, truths, entropy=None) -> dict:
    """RI and aRI averaged over subjects, boundary F against all subjects."""
    for t in truths:
        if t.lattice != pred.lattice:
            raise DimMismatch(
                f"prediction is {pred.lattice.shape}, ground truth is {t.lattice.shape}"
            )
    pairs = [rand_indices(pred, t) for t in truths]
    return {
        "ri": float(np.mean([p[0] for p in pairs])),
        "ari": float(np.mean([p[1] for p in pairs])),
        "f_b": f_boundary(boundary_from_labels(pred), [boundary_from_labels(t) for t in truths]),
        "mean_entropy": None if entropy is None else float(np.mean(entropy)),
    }


def find_ground_truth(gt_dir: Path, image_id: str) -> list[Path]:
    """Human maps for ``image_id`` anywhere under ``gt_dir``.

    Matches ``<id>.seg``, ``<id>_<subject>.pgm`` and files inside a
    directory named ``<id>``, which covers the usual per-subject layout.
    """
    hits = []
    for p in sorted(gt_dir.rglob("*")):
        if p.suffix not in GT_SUFFIXES or not p.is_file():
            continue
        if p.stem == image_id or p.stem.startswith(image_id + "_") or p.parent.name == image_id:
            hits.append(p)
    return hits


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path, header, rows):
    text_rows = [[_fmt(r.get(h)) for h in header] for r in rows]
    if path is None or str(path) == "-":
        wr = csv.writer(sys.stdout)
        wr.writerow(header)
        wr.writerows(text_rows)
        return
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp")
    with open(tmp, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        wr.writerows(text_rows)
    tmp.replace(path)


def best_per_image(rows) -> list[dict]:
    out = []
    for image_id in sorted({r["image_id"] for r in rows}):
        mine = [r for r in rows if r["image_id"] == image_id]
        for s in SCORES:
            best = max(mine, key=lambda r: (r[s], -r["k"]))
            out.append({"score": s, "image_id": image_id, "k": best["k"], "value": best[s]})
    return out


def best_per_dataset(rows) -> list[dict]:
    ks = sorted({r["k"] for r in rows})
    out = []
    for s in SCORES:
        means = {k: float(np.mean([r[s] for r in rows if r["k"] == k])) for k in ks}
        k_best = max(ks, key=lambda k: (means[k], -k))
        out.append({"score": s, "k": k_best, "value": means[k_best]})
    return out


# ---------------------------------------------------------------- commands


def _run_one_k(args):
    path, k, cfg, out_dir = args
    res = _segment_path(path, k, cfg)
    if out_dir is not None:
        write_result(res, out_dir)
    return res


def _map(fn, jobs, threads):
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, jobs))
    return [fn(j) for j in jobs]


def cmd_segment(cfg: RunConfig, gt_paths) -> int:
    truths = [io.read_ground_truth(p) for p in gt_paths]
    multi = len(cfg.k_values) > 1
    jobs = [
        (cfg.input, k, cfg, cfg.output_dir / f"k{k:02d}" if multi else cfg.output_dir)
        for k in cfg.k_values
    ]
    results = _map(_run_one_k, jobs, cfg.threads)
    if truths:
        rows = [
            {"image_id": cfg.input.stem, "k": r.k, **score_labels(r.labels, truths, r.entropy)}
            for r in results
        ]
        write_csv(cfg.output_dir / "scores.csv", SCORE_HEADER, rows)
    return 0


def cmd_synth(args) -> int:
    spec = SynthSpec(
        lattice=Lattice(args.size, args.size), uncertainty=args.uncertainty, seed=args.seed
    )
    p, f, labels = make_synthetic(spec)
    img = f.image()
    lo, hi = img.min(axis=(0, 1)), img.max(axis=(0, 1))
    rgb = np.rint(255 * (img - lo) / np.where(hi > lo, hi - lo, 1.0)).astype(np.uint8)
    with io.staged_output(args.output_dir) as tmp:
        io.write_ppm(tmp / "image.ppm", rgb)
        np.save(tmp / "features.npy", img)
        io.write_prob_field(p, tmp / "p_true.pseg")
        io.write_pgm16(tmp / "labels.pgm", labels.image())
    return 0


def _prediction_entropy(pred_dir: Path):
    pseg = pred_dir / "prob.pseg"
    if pseg.exists():
        return entropy_map(io.read_prob_field(pseg))
    return None


def _eval_one(args):
    image_id, pred_dir, gt_files = args
    pred = io.read_label_pgm(pred_dir / "labels.pgm")
    truths = [io.read_ground_truth(p) for p in gt_files]
    entropy = _prediction_entropy(pred_dir)
    k = int(pred.labels.max()) + 1
    model_file = pred_dir / "model.txt"
    if model_file.exists():
        k = int(io.parse_model_text(model_file.read_text()).get("k", k))
    return {"image_id": image_id, "k": k, **score_labels(pred, truths, entropy)}


def _pred_dirs(root: Path) -> list[Path]:
    if (root / "labels.pgm").exists():
        return [root]
    return sorted(p.parent for p in root.glob("*/labels.pgm"))


def cmd_eval(args) -> int:
    jobs = []
    for d in _pred_dirs(args.pred_dir):
        image_id = d.name
        gts = find_ground_truth(args.gt_dir, image_id)
        if not gts:
            raise UsageError(f"no ground truth for {image_id!r} under {args.gt_dir}")
        jobs.append((image_id, d, gts))
    if not jobs:
        raise UsageError(f"no labels.pgm found under {args.pred_dir}")
    rows = _map(_eval_one, jobs, args.threads)
    write_csv(args.output, SCORE_HEADER, rows)
    return 0


def _windows(lattice: Lattice, size):
    if size is None:
        return [None]
    h, w = lattice.shape
    return [
        (r, min(r + size, h), c, min(c + size, w))
        for r in range(0, h - size + 1, size)
        for c in range(0, w - size + 1, size)
    ]


def _gt_image_id(p: Path) -> str:
    # <id>.seg (subject in the directory), <id>_<subject>.pgm or <id>/<subject>.pgm
    if p.suffix == ".seg":
        return p.stem
    return p.stem.split("_")[0] if "_" in p.stem else p.parent.name


def _group_by_image(gt_dir: Path) -> dict[str, list[Path]]:
    groups: dict[str, list[Path]] = {}
    for p in sorted(gt_dir.rglob("*")):
        if p.suffix in GT_SUFFIXES and p.is_file():
            image_id = _gt_image_id(p)
            groups.setdefault(image_id, []).append(p)
    return groups


def cmd_stats(args) -> int:
    rows = []
    for image_id, files in _group_by_image(args.gt_dir).items():
        if len(files) < 2:
            continue
        maps = [io.read_ground_truth(p) for p in files]
        entropy = None
        if args.pred_dir is not None:
            entropy = _prediction_entropy(args.pred_dir / image_id)
        for win in _windows(maps[0].lattice, args.window):
            st = subject_stats(maps, win, entropy)
            rows.append({
                "image_id": image_id,
                "window": "" if win is None else "{}:{},{}:{}".format(*win),
                "n_subjects": len(maps),
                "mean_segments": st.mean_segments,
                "sd_segments": st.sd_segments,
                "mean_entropy": st.mean_entropy,
            })
    if not rows:
        raise UsageError(f"no image with at least two human maps under {args.gt_dir}")
    header = ["image_id", "window", "n_subjects", "mean_segments", "sd_segments", "mean_entropy"]
    write_csv(args.output, header, rows)
    pairs = [("mean_segments", "sd_segments")]
    if all(r["mean_entropy"] is not None for r in rows):
        pairs += [("mean_entropy", "mean_segments"), ("mean_entropy", "sd_segments")]
    for a, b in pairs:
        try:
            r = pearson([row[a] for row in rows], [row[b] for row in rows])
            print(f"pearson({a}, {b}) = {r:.4f}", file=sys.stderr)
        except (ConstantInput, ValueError) as exc:
            print(f"pearson({a}, {b}) undefined: {exc}", file=sys.stderr)
    return 0


def _sweep_one(args):
    path, k, cfg, gt_files = args
    res = _segment_path(path, k, cfg)
    truths = [io.read_ground_truth(p) for p in gt_files]
    return {"image_id": path.stem, "k": k, **score_labels(res.labels, truths, res.entropy)}


def cmd_sweep(cfg: RunConfig, gt_dir: Path) -> int:
    if cfg.input.is_dir():
        images = sorted(p for p in cfg.input.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    else:
        images = [cfg.input]
    if not images:
        raise UsageError(f"no images under {cfg.input}")
    jobs = []
    for path in images:
        gts = find_ground_truth(gt_dir, path.stem)
        if not gts:
            raise UsageError(f"no ground truth for {path.stem!r} under {gt_dir}")
        jobs.extend((path, k, cfg, gts) for k in cfg.k_values)
    rows = _map(_sweep_one, jobs, cfg.threads)
    out = cfg.output_dir
    write_csv(out / "scores.csv", SCORE_HEADER, rows)
    write_csv(out / "best_per_image.csv", ["score", "image_id", "k", "value"], best_per_image(rows))
    write_csv(out / "best_per_dataset.csv", ["score", "k", "value"], best_per_dataset(rows))
    return 0


# ---------------------------------------------------------------- parsing


def _add_fit_flags(p):
    p.add_argument("--k", type=int, help="number of segments")
    p.add_argument("--k-min", type=int)
    p.add_argument("--k-max", type=int)
    p.add_argument("--sigma", type=float, default=4.25, help="smoothing kernel width in pixels")
    p.add_argument("--model", choices=("student-t", "gaussian"), default="student-t")
    p.add_argument("--no-spatial-prior", action="store_true")
    p.add_argument("--pca-var", type=float, default=0.999)
    p.add_argument("--max-iters", type=int, default=200)
    p.add_argument("--tol", type=float, default=1e-5, help="relative objective change to stop")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--filter-scale", type=float, default=8.0)
    p.add_argument("--color-space", choices=("lab", "rgb"), default="lab")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tseg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("segment", help="segment one image (PNG/PPM) or feature array (.npy)")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--output-dir", type=Path, required=True)
    p.add_argument("--gt", type=Path, nargs="*", default=[], help="human maps to score against")
    _add_fit_flags(p)

    p = sub.add_parser("synth", help="write a synthetic image with known probabilities")
    p.add_argument("--output-dir", type=Path, required=True)
    p.add_argument("--uncertainty", choices=("low", "high"), default="low")
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("eval", help="score saved label maps against human maps")
    p.add_argument("--pred-dir", type=Path, required=True)
    p.add_argument("--gt-dir", type=Path, required=True)
    p.add_argument("--output", type=Path, default=None, help="CSV path (stdout if omitted)")

    p = sub.add_parser("stats", help="segment-count variability across human subjects")
    p.add_argument("--gt-dir", type=Path, required=True)
    p.add_argument("--pred-dir", type=Path, default=None, help="segment outputs per image id")
    p.add_argument("--window", type=int, default=None, help="square window side in pixels")
    p.add_argument("--output", type=Path, default=None)

    p = sub.add_parser("sweep", help="segment a dataset over a range of K and score each run")
    p.add_argument("--input", type=Path, required=True, help="image file or directory")
    p.add_argument("--gt-dir", type=Path, required=True)
    p.add_argument("--output-dir", type=Path, required=True)
    _add_fit_flags(p)

    for p in sub.choices.values():
        p.add_argument("--threads", type=int, default=1, help="worker processes")
    return parser


def _k_values(args) -> tuple[int, ...]:
    if args.k is not None and (args.k_min is not None or args.k_max is not None):
        raise UsageError("give either --k or --k-min/--k-max, not both")
    if args.k is not None:
        ks = (args.k,)
    elif args.k_min is not None and args.k_max is not None:
        if args.k_min > args.k_max:
            raise UsageError("--k-min exceeds --k-max")
        ks = tuple(range(args.k_min, args.k_max + 1))
    else:
        raise UsageError("need --k or both --k-min and --k-max")
    lo, hi = K_LIMITS
    if ks[0] < lo or ks[-1] > hi:
        raise UsageError(f"K must lie in [{lo}, {hi}]")
    return ks


def _run_config(args) -> RunConfig:
    if not args.input.exists():
        raise UsageError(f"input {args.input} does not exist")
    if args.output_dir.exists() and not args.output_dir.is_dir():
        raise UsageError(f"output path {args.output_dir} is not a directory")
    if not 0 < args.pca_var <= 1:
        raise UsageError("--pca-var must be in (0, 1]")
    if args.sigma <= 0:
        raise UsageError("--sigma must be positive")
    return RunConfig(
        command=args.command,
        input=args.input,
        output_dir=args.output_dir,
        k_values=_k_values(args),
        sigma=args.sigma,
        model_kind="gaussian" if args.model == "gaussian" else "student_t",
        with_spatial_prior=not args.no_spatial_prior,
        pca_var=args.pca_var,
        max_iters=args.max_iters,
        rel_tol=args.tol,
        seed=args.seed,
        threads=max(1, args.threads),
        filter_scale=args.filter_scale,
        color_space=args.color_space,
    )


def _provenance(exc: BaseException) -> str:
    """Name of the innermost package module the error passed through."""
    mod = "cli"
    for frame, _ in traceback.walk_tb(exc.__traceback__):
        name = frame.f_globals.get("__name__", "")
        if name.startswith("tseg."):
            mod = name.split(".", 1)[1]
    return mod


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "segment":
            for p in args.gt:
                if not p.exists():
                    raise UsageError(f"ground truth {p} does not exist")
            return cmd_segment(_run_config(args), args.gt)
        if args.command == "sweep":
            if not args.gt_dir.is_dir():
                raise UsageError(f"ground-truth directory {args.gt_dir} does not exist")
            return cmd_sweep(_run_config(args), args.gt_dir)
        for attr in ("pred_dir", "gt_dir"):
            path = getattr(args, attr, None)
            if path is not None and not path.is_dir():
                raise UsageError(f"{path} is not a directory")
        return {"synth": cmd_synth, "eval": cmd_eval, "stats": cmd_stats}[args.command](args)
    except (TsegError, OSError, ValueError) as exc:
        print(f"tseg {args.command}: error in {_provenance(exc)}: {exc}", file=sys.stderr)
        return 1
