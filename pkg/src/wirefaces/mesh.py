"""Triangle meshes of reconstructed solids.

Planar faces are triangulated by ear clipping after bridging every hole into
the outer loop.  A cylindrical face bounded by two arc runs is zipped between
them.  Arcs are redrawn from their fitted circles with 16 segments per full
turn, and the points are shared by both faces on an arc so the surface stays
closed.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .brep import FaceLoopSet, FaceType, WireframeDrawing
from .reconstruct import Circle, Polygonized, Solid3D

log = logging.getLogger(__name__)

SEGMENTS_PER_TURN = 16


@dataclass
class TriangleMesh:
    vertices: np.ndarray  # (V, 3)
    triangles: np.ndarray  # (T, 3) int
    face_of: np.ndarray  # source face per triangle
    skipped: tuple[int, ...] = ()

    @property
    def areas(self) -> np.ndarray:
        if len(self.triangles) == 0:
            return np.zeros(0)
        a, b, c = (self.vertices[self.triangles[:, i]] for i in range(3))
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    @property
    def area(self) -> float:
        return float(self.areas.sum())

    def half_diagonal(self) -> float:
        if len(self.vertices) == 0:
            return 0.0
        lo, hi = self.vertices.min(axis=0), self.vertices.max(axis=0)
        return 0.5 * float(np.linalg.norm(hi - lo))

    def is_closed(self) -> bool:
        """Every directed edge is matched by exactly one opposite edge."""
        directed: dict[tuple[int, int], int] = {}
        for t in self.triangles:
            for i in range(3):
                e = (int(t[i]), int(t[(i + 1) % 3]))
                directed[e] = directed.get(e, 0) + 1
        return all(n == 1 and directed.get((b, a), 0) == 1 for (a, b), n in directed.items())

    def translated(self, offset) -> "TriangleMesh":
        return TriangleMesh(self.vertices + np.asarray(offset, dtype=float), self.triangles,
                            self.face_of, self.skipped)


# -- 2D polygon triangulation -----------------------------------------------------

def signed_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _cross(o, a, b) -> float:
    return float((a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]))


def _in_triangle(p, a, b, c, eps) -> bool:
    return _cross(a, b, p) > eps and _cross(b, c, p) > eps and _cross(c, a, p) > eps


def _segments_cross(p1, p2, q1, q2, eps=1e-12) -> bool:
    d1, d2 = _cross(q1, q2, p1), _cross(q1, q2, p2)
    d3, d4 = _cross(p1, p2, q1), _cross(p1, p2, q2)
    return ((d1 > eps and d2 < -eps) or (d1 < -eps and d2 > eps)) and \
           ((d3 > eps and d4 < -eps) or (d3 < -eps and d4 > eps))


def self_intersects(loops: Sequence[np.ndarray]) -> bool:
    segs = [(loop[i], loop[(i + 1) % len(loop)]) for loop in loops for i in range(len(loop))]
    for i in range(len(segs)):
        for j in range(i + 1, len(segs)):
            if _segments_cross(*segs[i], *segs[j]):
                return True
    return False


def _bridge(outer: list[int], hole: list[int], pts: np.ndarray) -> list[int]:
    """Splice ``hole`` into ``outer`` through a mutually visible vertex pair."""
    h = max(range(len(hole)), key=lambda i: (pts[hole[i], 0], -pts[hole[i], 1]))
    hp = pts[hole[h]]
    n = len(outer)
    segs = [(outer[i], outer[(i + 1) % n]) for i in range(n)]
    all_segs = segs + [(hole[i], hole[(i + 1) % len(hole)]) for i in range(len(hole))]

    def visible(v):
        q = pts[v]
        return not any(_segments_cross(hp, q, pts[a], pts[b]) for a, b in all_segs
                       if v not in (a, b) and hole[h] not in (a, b))

    # nearest visible outer vertex to the right first, any visible one otherwise
    order = sorted(range(n), key=lambda i: (pts[outer[i], 0] < hp[0],
                                            float(np.linalg.norm(pts[outer[i]] - hp))))
    for i in order:
        if visible(outer[i]):
            rot = hole[h:] + hole[:h]
            return outer[:i + 1] + rot + [rot[0], outer[i]] + outer[i + 1:]
    raise ValueError("no bridge found")


def ear_clip(pts: np.ndarray, poly: list[int]) -> list[tuple[int, int, int]]:
    """Triangulate a counter-clockwise simple polygon given by point indices."""
    idx = list(poly)
    tris = []
    scale = max(1e-12, float(np.ptp(pts[idx], axis=0).max()) if idx else 1.0)
    eps = 1e-12 * scale * scale
    guard = 0
    while len(idx) > 3:
        n = len(idx)
        found = False
        for i in range(n):
            a, b, c = idx[i - 1], idx[i], idx[(i + 1) % n]
            pa, pb, pc = pts[a], pts[b], pts[c]
            if _cross(pa, pb, pc) <= eps:
                continue
            blocked = False
            for j in idx:
                if j in (a, b, c):
                    continue
                pj = pts[j]
                if any(np.array_equal(pj, q) for q in (pa, pb, pc)):
                    continue
                if _in_triangle(pj, pa, pb, pc, -eps):
                    blocked = True
                    break
            if blocked:
                continue
            tris.append((a, b, c))
            idx.pop(i)
            found = True
            break
        if not found:
            # only degenerate corners are left; drop the flattest one
            i = min(range(n), key=lambda k: abs(_cross(pts[idx[k - 1]], pts[idx[k]], pts[idx[(k + 1) % n]])))
            idx.pop(i)
            guard += 1
            if guard > len(poly):
                raise ValueError("polygon cannot be triangulated")
    if len(idx) == 3 and _cross(pts[idx[0]], pts[idx[1]], pts[idx[2]]) > eps:
        tris.append(tuple(idx))
    return tris


def triangulate_loops(loops2d: Sequence[np.ndarray]) -> tuple[np.ndarray, list[tuple[int, int, int]]]:
    """Triangulate an outer loop (first, counter-clockwise) with holes.

    Returns the stacked points and triangles indexing into them.
    """
    pts = np.vstack([np.asarray(l, dtype=float) for l in loops2d])
    offsets = np.cumsum([0] + [len(l) for l in loops2d])
    idx_loops = [list(range(offsets[i], offsets[i + 1])) for i in range(len(loops2d))]
    outer = idx_loops[0]
    if signed_area(pts[outer]) < 0:
        outer = outer[::-1]
    holes = []
    for h in idx_loops[1:]:
        if signed_area(pts[h]) > 0:
            h = h[::-1]
        holes.append(h)
    holes.sort(key=lambda h: -float(pts[h, 0].max()))
    merged = outer
    for h in holes:
        merged = _bridge(merged, h, pts)
    return pts, ear_clip(pts, merged)


# -- 3D assembly ------------------------------------------------------------------

def newell_normal(p: np.ndarray) -> np.ndarray:
    q = np.roll(p, -1, axis=0)
    n = np.array([
        np.sum((p[:, 1] - q[:, 1]) * (p[:, 2] + q[:, 2])),
        np.sum((p[:, 2] - q[:, 2]) * (p[:, 0] + q[:, 0])),
        np.sum((p[:, 0] - q[:, 0]) * (p[:, 1] + q[:, 1])),
    ])
    nn = float(np.linalg.norm(n))
    return n / nn if nn > 0 else n


def plane_basis(n: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.eye(3)[int(np.argmin(np.abs(n)))]
    e1 = np.cross(a, n)
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(n, e1)


def arc_points(circle: Circle | None, p0, pm, p1) -> list[np.ndarray]:
    """Interior points of an arc from p0 through pm to p1 (endpoints excluded)."""
    if circle is None:
        return [np.asarray(pm, dtype=float)]
    c, ax = circle.center, circle.axis
    u = np.asarray(p0, dtype=float) - c
    u /= np.linalg.norm(u)
    w = np.cross(ax, u)

    def ang(p):
        d = np.asarray(p, dtype=float) - c
        return math.atan2(float(d @ w), float(d @ u)) % (2 * math.pi)

    tm, t1 = ang(pm), ang(p1)
    sweep = t1 if tm <= t1 else t1 - 2 * math.pi
    if abs(sweep) < 1e-12:
        sweep = 2 * math.pi
    nseg = max(2, math.ceil(abs(sweep) / (2 * math.pi / SEGMENTS_PER_TURN) - 1e-9))
    return [c + circle.radius * (math.cos(t) * u + math.sin(t) * w)
            for t in (sweep * i / nseg for i in range(1, nseg))]


class _Builder:
    def __init__(self, drawing: WireframeDrawing, points: np.ndarray, poly: Polygonized | None,
                 circles: dict[int, Circle]):
        self.drawing = drawing
        self.points = points
        self.poly = poly
        self.circles = circles
        self.verts: list[np.ndarray] = []
        self.keys: dict = {}
        self.tris: list[tuple[int, int, int]] = []
        self.face_of: list[int] = []

    def vid(self, key, p) -> int:
        if key not in self.keys:
            self.keys[key] = len(self.verts)
            self.verts.append(np.asarray(p, dtype=float))
        return self.keys[key]

    def coedge_chain(self, c: int) -> list[int]:
        """Mesh vertex ids from the start of co-edge c up to (not including) its end."""
        d = self.drawing
        k = c >> 1
        e = d.edges[k]
        ids = [self.vid(("v", e.v0), self.points[e.v0])]
        if e.kind == "arc" and self.poly is not None and k in self.poly.registry:
            a, m, b = self.poly.registry[k]
            inner = arc_points(self.circles.get(k), self.points[a], self.points[m], self.points[b])
            ids += [self.vid(("a", k, i), p) for i, p in enumerate(inner)]
        ids.append(self.vid(("v", e.v1), self.points[e.v1]))
        if c % 2:
            ids = ids[::-1]
        return ids[:-1]

    def loop_ids(self, loop) -> list[int]:
        return [i for c in loop for i in self.coedge_chain(c)]

    def add_planar(self, fi: int, face: FaceLoopSet) -> bool:
        loops = [self.loop_ids(l) for l in face.loops]
        P = np.array(self.verts)
        n = newell_normal(P[loops[0]])
        if not np.any(n):
            return False
        e1, e2 = plane_basis(n)
        loops2d = [np.column_stack([P[l] @ e1, P[l] @ e2]) for l in loops]
        if self_intersects(loops2d):
            return False
        try:
            _, tris = triangulate_loops(loops2d)
        except ValueError:
            return False
        flat = [i for l in loops for i in l]
        for a, b, c in tris:
            self.tris.append((flat[a], flat[b], flat[c]))
            self.face_of.append(fi)
        return True

    def add_zipper(self, fi: int, face: FaceLoopSet) -> bool:
        if len(face.loops) != 1:
            return False
        loop = list(face.loops[0])
        is_arc = [self.drawing.edges[c >> 1].kind == "arc" for c in loop]
        if all(is_arc) or not any(is_arc):
            return False
        r = next(i for i in range(len(loop)) if is_arc[i] and not is_arc[i - 1])
        loop, is_arc = loop[r:] + loop[:r], is_arc[r:] + is_arc[:r]
        runs = []
        for i, a in enumerate(is_arc):
            if a and (i == 0 or not is_arc[i - 1]):
                runs.append([])
            if a:
                runs[-1].append(loop[i])
        if len(runs) != 2:
            return False
        seams = [c for c, a in zip(loop, is_arc) if not a]
        if len(seams) != 2:
            return False
        A = [i for c in runs[0] for i in self.coedge_chain(c)] + [self.coedge_chain(seams[0])[0]]
        B = [i for c in runs[1] for i in self.coedge_chain(c)] + [self.coedge_chain(seams[1])[0]]
        Bp = B[::-1]
        P = np.array(self.verts)
        i = j = 0
        while i < len(A) - 1 or j < len(Bp) - 1:
            adv_a = j == len(Bp) - 1 or (
                i < len(A) - 1 and
                np.linalg.norm(P[A[i + 1]] - P[Bp[j]]) <= np.linalg.norm(P[A[i]] - P[Bp[j + 1]]))
            if adv_a:
                self.tris.append((A[i], A[i + 1], Bp[j]))
                i += 1
            else:
                self.tris.append((A[i], Bp[j + 1], Bp[j]))
                j += 1
            self.face_of.append(fi)
        return True


def assemble_mesh(solid: Solid3D, drawing: WireframeDrawing) -> TriangleMesh:
    return mesh_from_points(drawing, solid.faces, solid.vertices, solid.poly, solid.circles)


def mesh_from_points(drawing: WireframeDrawing, faces: Sequence[FaceLoopSet], points: np.ndarray,
                     poly: Polygonized | None, circles: dict[int, Circle]) -> TriangleMesh:
    b = _Builder(drawing, np.asarray(points, dtype=float), poly, circles)
    skipped = []
    for fi, f in enumerate(faces):
        ok = False
        if f.face_type is FaceType.CYLINDER:
            ok = b.add_zipper(fi, f)
        if not ok:
            ok = b.add_planar(fi, f)
        if not ok:
            log.warning("face %d skipped: loop cannot be triangulated", fi)
            skipped.append(fi)
    verts = np.array(b.verts) if b.verts else np.zeros((0, 3))
    tris = np.array(b.tris, dtype=np.int64).reshape(-1, 3)
    return TriangleMesh(verts, tris, np.array(b.face_of, dtype=np.int64), tuple(skipped))


def write_obj(mesh: TriangleMesh, path, flip_depth: bool = True) -> None:
    """OBJ with ``v x y z`` and 1-based ``f i j k`` records.

    Depth grows away from the viewer; with ``flip_depth`` the file stores
    ``z = -depth`` so the axes form a right-handed frame.
    """
    lines = []
    for x, y, z in mesh.vertices:
        lines.append(f"v {x:.9f} {y:.9f} {(-z if flip_depth else z):.9f}")
    for a, b, c in mesh.triangles:
        lines.append(f"f {a + 1} {b + 1} {c + 1}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_obj(path) -> TriangleMesh:
    verts, tris = [], []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(v) for v in parts[1:4]])
            elif parts[0] == "f":
                tris.append([int(p.split("/")[0]) - 1 for p in parts[1:4]])
    return TriangleMesh(np.array(verts).reshape(-1, 3), np.array(tris, dtype=np.int64).reshape(-1, 3),
                        np.zeros(len(tris), dtype=np.int64))
