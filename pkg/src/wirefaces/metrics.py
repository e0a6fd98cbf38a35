"""Face-level matching scores and surface distances."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .brep import FaceLoopSet, FaceType, canonical_face_key
from .mesh import TriangleMesh

CORRECT = "correct"
WRONG_LOOP = "wrong-loop"
WRONG_TYPE = "wrong-type"
MISSED = "missed"
CATEGORIES = (CORRECT, WRONG_LOOP, WRONG_TYPE, MISSED)


@dataclass
class FaceMatchReport:
    """Exact edge-set matching between predicted and true faces.

    Every prediction is either matched (``correct`` or ``wrong-type``) or a
    ``wrong-loop``; every unmatched true face is ``missed``.
    """

    matched: list[tuple[int, int]]  # (prediction index, truth index)
    num_pred: int
    num_true: int
    pred_status: list[str]
    missed: list[int]
    type_pairs: list[tuple[FaceType, FaceType]] = field(default_factory=list)

    @property
    def precision(self) -> float:
        return len(self.matched) / self.num_pred if self.num_pred else 0.0

    @property
    def recall(self) -> float:
        return len(self.matched) / self.num_true if self.num_true else 0.0

    @property
    def counts(self) -> dict[str, int]:
        c = {k: 0 for k in CATEGORIES}
        for s in self.pred_status:
            c[s] += 1
        c[MISSED] = len(self.missed)
        return c

    @property
    def classification_rate(self) -> float | None:
        return classification_rate(self.type_pairs)

    def to_dict(self) -> dict:
        return {"precision": self.precision, "recall": self.recall,
                "classification_rate": self.classification_rate,
                "num_pred": self.num_pred, "num_true": self.num_true,
                "matched": len(self.matched), "categories": self.counts}


def precision_recall(pred: Sequence[FaceLoopSet], truth: Sequence[FaceLoopSet]) -> FaceMatchReport:
    tkeys: dict[tuple[int, ...], int] = {}
    for j, f in enumerate(truth):
        tkeys.setdefault(canonical_face_key(f), j)
    used = set()
    matched, status, types = [], [], []
    for i, f in enumerate(pred):
        j = tkeys.get(canonical_face_key(f))
        if j is None or j in used:
            status.append(WRONG_LOOP)
            continue
        used.add(j)
        matched.append((i, j))
        types.append((f.face_type, truth[j].face_type))
        status.append(CORRECT if f.face_type is truth[j].face_type else WRONG_TYPE)
    missed = [j for j in range(len(truth)) if j not in used]
    return FaceMatchReport(matched, len(pred), len(truth), status, missed, types)


def classification_rate(pairs: Iterable[tuple[FaceType, FaceType]]) -> float | None:
    """Share of matched faces whose predicted type is right; None without matches."""
    pairs = list(pairs)
    if not pairs:
        return None
    return sum(1 for p, t in pairs if FaceType(p) is FaceType(t)) / len(pairs)


# -- surface distances ----------------------------------------------------------

def sample_surface(mesh: TriangleMesh, n: int, seed: int) -> np.ndarray:
    """``n`` points uniformly distributed over the mesh area."""
    areas = mesh.areas
    total = float(areas.sum())
    if len(mesh.triangles) == 0 or total <= 0:
        raise ValueError("empty mesh")
    rng = np.random.default_rng(seed)
    tri = rng.choice(len(areas), size=n, p=areas / total)
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    a, b, c = (mesh.vertices[mesh.triangles[tri, i]] for i in range(3))
    return (1 - r1)[:, None] * a + (r1 * (1 - r2))[:, None] * b + (r1 * r2)[:, None] * c


def _closest_on_triangles(p: np.ndarray, a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Closest points on triangles (T, 3) to points (P, 3); result (P, T, 3)."""
    p = p[:, None, :]
    ab, ac = b - a, c - a
    ap = p - a
    d1 = (ab * ap).sum(-1)
    d2 = (ac * ap).sum(-1)
    bp = p - b
    d3 = (ab * bp).sum(-1)
    d4 = (ac * bp).sum(-1)
    cp = p - c
    d5 = (ab * cp).sum(-1)
    d6 = (ac * cp).sum(-1)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    with np.errstate(divide="ignore", invalid="ignore"):
        denom = va + vb + vc
        v = np.where(denom != 0, vb / denom, 0.0)
        w = np.where(denom != 0, vc / denom, 0.0)
        out = a + v[..., None] * ab + w[..., None] * ac  # interior

        t_ab = np.where(d1 - d3 != 0, d1 / (d1 - d3), 0.0)
        m = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
        out = np.where(m[..., None], a + t_ab[..., None] * ab, out)
        t_ac = np.where(d2 - d6 != 0, d2 / (d2 - d6), 0.0)
        m = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
        out = np.where(m[..., None], a + t_ac[..., None] * ac, out)
        t_bc = np.where((d4 - d3) + (d5 - d6) != 0, (d4 - d3) / ((d4 - d3) + (d5 - d6)), 0.0)
        m = (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)
        out = np.where(m[..., None], b + t_bc[..., None] * (c - b), out)

    out = np.where(((d1 <= 0) & (d2 <= 0))[..., None], a + 0 * p, out)
    out = np.where(((d3 >= 0) & (d4 <= d3))[..., None], b + 0 * p, out)
    out = np.where(((d6 >= 0) & (d5 <= d6))[..., None], c + 0 * p, out)
    return out


def point_mesh_distance(points: np.ndarray, mesh: TriangleMesh, chunk: int = 512) -> np.ndarray:
    """Euclidean distance from each point to the nearest point of the mesh surface."""
    if len(mesh.triangles) == 0:
        raise ValueError("empty mesh")
    a, b, c = (mesh.vertices[mesh.triangles[:, i]] for i in range(3))
    out = np.empty(len(points))
    for s in range(0, len(points), chunk):
        p = points[s:s + chunk]
        q = _closest_on_triangles(p, a, b, c)
        out[s:s + chunk] = np.sqrt(((q - p[:, None, :]) ** 2).sum(-1)).min(axis=1)
    return out


@dataclass
class ChamferReport:
    distance: float
    samples: tuple[int, int]
    scale: float

    def to_dict(self) -> dict:
        return {"distance": self.distance, "samples": list(self.samples), "scale": self.scale}


def chamfer(mesh_a: TriangleMesh, mesh_b: TriangleMesh, samples_n: int = 2000, seed: int = 0,
            scale: float | None = None) -> ChamferReport:
    """Symmetric mean distance between two surfaces.

    ``samples_n`` seeded area-weighted points are drawn on each mesh and
    measured to the nearest point of the other surface; the two means are
    averaged and divided by ``scale`` (1 when None).
    """
    pa = sample_surface(mesh_a, samples_n, seed)
    pb = sample_surface(mesh_b, samples_n, seed)
    d_ab = float(point_mesh_distance(pa, mesh_b).mean())
    d_ba = float(point_mesh_distance(pb, mesh_a).mean())
    s = 1.0 if scale is None else float(scale)
    return ChamferReport(0.5 * (d_ab + d_ba) / s, (samples_n, samples_n), s)


def chamfer_points(a, b) -> float:
    """Symmetric mean nearest-neighbour distance between two point clouds."""
    a = np.asarray(a, dtype=float).reshape(-1, 3)
    b = np.asarray(b, dtype=float).reshape(-1, 3)
    if len(a) == 0 or len(b) == 0:
        raise ValueError("empty point cloud")
    d_ab = cKDTree(b).query(a)[0].mean()
    d_ba = cKDTree(a).query(b)[0].mean()
    return float(0.5 * (d_ab + d_ba))
