"""Corpus-level evaluation of a face-identification method.

A report holds per-shape and aggregate scores.  Wall-clock timings go to a
separate sidecar so that the report itself is byte-identical across runs.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .baseline import run_baseline
from .brep import FaceLoopSet, WireframeDrawing
from .mesh import TriangleMesh, assemble_mesh, mesh_from_points
from .metrics import CATEGORIES, chamfer, precision_recall
from .postprocess import postprocess
from .reconstruct import (
    ReconstructionError,
    depth_error,
    fit_circles,
    polygonize_curved_faces,
    reconstruct,
    truth_points,
)
from .synth import load_corpus

SCHEMA = "wirefaces.report/1"
METHODS = ("neural", "baseline", "truth")
CHAMFER_THRESHOLD = 1e-3
CHAMFER_DEFINITION = (
    "mean Euclidean distance from seeded area-weighted surface samples to the other mesh, "
    "averaged over both directions, divided by the ground-truth half bounding-box diagonal; "
    "both meshes shifted so their smallest depth is 1"
)


@dataclass
class Options:
    method: str
    checkpoint: str | None = None
    seed: int = 0
    chamfer_samples: int = 1000
    reconstruct: bool = True


def truth_mesh(drawing: WireframeDrawing, truth: dict, canonical: bool = True) -> TriangleMesh:
    """Mesh of the ground-truth solid, by default with its smallest depth moved to 1."""
    poly = polygonize_curved_faces(drawing, drawing.faces)
    pts = truth_points(drawing, poly, truth)
    if canonical:
        used = {poly.drawing.start(c) for f in poly.faces for c in f.coedges}
        pts[:, 2] += 1.0 - min(pts[v, 2] for v in used)
    circles = fit_circles(poly, pts, np.ones(len(pts), dtype=bool))
    return mesh_from_points(drawing, drawing.faces, pts, poly, circles)


_MODEL_CACHE: dict = {}


def _model(path):
    from .model import load_checkpoint

    if path not in _MODEL_CACHE:
        _MODEL_CACHE[path] = load_checkpoint(path)
    return _MODEL_CACHE[path]


def predict(drawing: WireframeDrawing, opts: Options) -> list[FaceLoopSet]:
    if opts.method == "truth":
        return list(drawing.faces)
    if opts.method == "baseline":
        return run_baseline(drawing)
    if opts.method == "neural":
        from .model import predict_faces

        params, cfg, _ = _model(opts.checkpoint)
        return [v.face for v in postprocess(drawing, predict_faces(drawing, params, cfg))]
    raise ValueError(f"unknown method {opts.method!r}")


def evaluate_shape(name: str, drawing: WireframeDrawing, truth: dict, opts: Options) -> tuple[dict, float]:
    """Scores for one shape and the seconds spent predicting its faces."""
    t0 = time.perf_counter()
    pred = predict(drawing, opts)
    runtime = time.perf_counter() - t0
    rep = precision_recall(pred, drawing.faces)
    rec = {"name": name, "family": truth.get("family"), **rep.to_dict(),
           "multi_loop_truth": sum(1 for f in drawing.faces if len(f.loops) > 1),
           "multi_loop_found": sum(1 for _, j in rep.matched if len(drawing.faces[j].loops) > 1)}
    if opts.reconstruct:
        rec.update(_reconstruction_scores(drawing, truth, pred, opts))
    return rec, runtime


def _reconstruction_scores(drawing, truth, pred, opts) -> dict:
    out = {"chamfer": None, "under_constrained": None, "depth_error": None, "objective": None}
    if not pred:
        out["reconstruction_error"] = "no faces"
        return out
    try:
        r = reconstruct(drawing, pred)
    except ReconstructionError as exc:
        out["reconstruction_error"] = str(exc)
        return out
    out["under_constrained"] = r.solution.under_constrained
    out["objective"] = r.solution.objective
    nv = len(drawing.vertices)
    ok = r.solid.reconstructed[:nv]
    if ok.any():
        out["depth_error"] = depth_error(r.depths[:nv][ok], np.asarray(truth["depths"])[ok])
    mesh = assemble_mesh(r.solid, drawing)
    gt = truth_mesh(drawing, truth)
    if len(mesh.triangles) == 0:
        out["reconstruction_error"] = "empty mesh"
        return out
    rep = chamfer(mesh, gt, opts.chamfer_samples, opts.seed, gt.half_diagonal())
    out["chamfer"] = rep.distance
    return out


def _job(args):
    name, drawing, truth, opts = args
    return evaluate_shape(name, drawing, truth, opts)


def aggregate(shapes: Sequence[dict]) -> dict:
    tp = sum(s["matched"] for s in shapes)
    npred = sum(s["num_pred"] for s in shapes)
    ntrue = sum(s["num_true"] for s in shapes)
    cats = {k: sum(s["categories"][k] for s in shapes) for k in CATEGORIES}
    typed = cats["correct"] + cats["wrong-type"]
    agg = {
        "shapes": len(shapes),
        "precision": tp / npred if npred else 0.0,
        "recall": tp / ntrue if ntrue else 0.0,
        "macro_precision": float(np.mean([s["precision"] for s in shapes])) if shapes else 0.0,
        "macro_recall": float(np.mean([s["recall"] for s in shapes])) if shapes else 0.0,
        "classification_rate": cats["correct"] / typed if typed else None,
        "categories": cats,
        "multi_loop_truth": sum(s["multi_loop_truth"] for s in shapes),
        "multi_loop_found": sum(s["multi_loop_found"] for s in shapes),
    }
    if shapes and "chamfer" in shapes[0]:
        ch = [s["chamfer"] for s in shapes]
        good = [c for c in ch if c is not None]
        agg["chamfer"] = {
            "threshold": CHAMFER_THRESHOLD,
            "below_threshold": sum(1 for c in good if c < CHAMFER_THRESHOLD) / len(shapes) if shapes else 0.0,
            "reconstructed": len(good),
            "median": float(np.median(good)) if good else None,
            "mean": float(np.mean(good)) if good else None,
        }
        agg["under_constrained"] = sum(1 for s in shapes if s.get("under_constrained"))
    return agg


def run_experiment(data_dir, method: str, checkpoint=None, split: str | None = "test", seed: int = 0,
                   jobs: int = 1, chamfer_samples: int = 1000, with_reconstruction: bool = True,
                   limit: int | None = None) -> tuple[dict, dict]:
    """Evaluate ``method`` on a corpus split; returns (report, timing)."""
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    if method == "neural":
        if checkpoint is None or not Path(checkpoint).exists():
            raise FileNotFoundError("the neural method needs an existing checkpoint")
        checkpoint = str(checkpoint)
    opts = Options(method, checkpoint, seed, chamfer_samples, with_reconstruction)
    items = [(n, d, t, opts) for n, d, t in load_corpus(data_dir, split)]
    if limit is not None:
        items = items[:limit]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            results = list(ex.map(_job, items))
    else:
        results = [_job(it) for it in items]
    shapes = [r for r, _ in results]
    report = {
        "schema": SCHEMA,
        "method": method,
        "checkpoint": Path(checkpoint).name if checkpoint else None,
        "split": split,
        "seed": int(seed),
        "chamfer_definition": {"text": CHAMFER_DEFINITION, "samples": chamfer_samples},
        "aggregate": aggregate(shapes),
        "shapes": shapes,
    }
    times = [t for _, t in results]
    timing = {"schema": SCHEMA + "+timing", "per_shape_seconds": dict(zip([s["name"] for s in shapes], times)),
              "mean_seconds": float(np.mean(times)) if times else 0.0}
    return report, timing


def dump_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n")


def chamfer_histogram_svg(values: Sequence[float | None], threshold: float = CHAMFER_THRESHOLD,
                          bins: int = 16, lo: float = -16.0, hi: float = 0.0) -> str:
    """Histogram of log10 Chamfer distances; failed reconstructions go in the last bin."""
    counts = [0] * bins
    width = (hi - lo) / bins
    for v in values:
        if v is None or not math.isfinite(v):
            k = bins - 1
        else:
            x = math.log10(max(v, 10 ** lo))
            k = min(bins - 1, max(0, int((x - lo) / width)))
        counts[k] += 1
    W, H, pad = 640, 320, 40
    top = max(counts) or 1
    bw = (W - 2 * pad) / bins
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
             f'<rect width="{W}" height="{H}" fill="white"/>']
    for k, c in enumerate(counts):
        h = (H - 2 * pad) * c / top
        x = pad + k * bw
        parts.append(f'<rect x="{x:.1f}" y="{H - pad - h:.1f}" width="{bw - 2:.1f}" height="{h:.1f}" fill="#4a78b5"/>')
        if c:
            parts.append(f'<text x="{x + bw / 2:.1f}" y="{H - pad - h - 4:.1f}" font-size="10" '
                         f'text-anchor="middle">{c}</text>')
    for k in range(0, bins + 1, 2):
        x = pad + k * bw
        parts.append(f'<text x="{x:.1f}" y="{H - pad + 14}" font-size="10" text-anchor="middle">'
                     f'1e{int(lo + k * width)}</text>')
    tx = pad + (math.log10(threshold) - lo) / width * bw
    parts.append(f'<line x1="{tx:.1f}" y1="{pad}" x2="{tx:.1f}" y2="{H - pad}" stroke="#c0392b" '
                 f'stroke-dasharray="4 3"/>')
    parts.append(f'<text x="{W / 2}" y="{H - 8}" font-size="12" text-anchor="middle">'
                 f'normalized Chamfer distance (log scale)</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
