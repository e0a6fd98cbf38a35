"""Procedural manifold solids and their orthographic wireframe drawings.

Five template families stand in for a CAD corpus: boxes, boxes with a
rectangular through hole, L-shaped prisms, cylinders and a box stacked on a
box.  Each template is a small B-rep whose faces are consistently oriented
vertex cycles; projecting it through a random hemisphere camera gives a
:class:`~wirefaces.brep.WireframeDrawing` with exact ground-truth faces.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .brep import (
    FACE_TYPES,
    K_SAMPLES,
    VERTEX_TOL,
    Edge,
    FaceLoopSet,
    FaceType,
    TopologyError,
    WireframeDrawing,
    canonical_sequence,
    coedge_owners,
)

FAMILIES = ("box", "hole", "lprism", "cylinder", "boxbox")
FAMILY_KINDS = {
    "box": "box",
    "hole": "box_through_hole",
    "lprism": "l_prism",
    "cylinder": "cylinder",
    "boxbox": "box_plus_box",
}
MAX_FACES = 42
MAX_FACE_EDGES = 37
MAX_VIEW_RESAMPLES = 50
# Projected axes shorter than this, or closer in angle than this, make the
# direction test ambiguous; such views are resampled.
MIN_AXIS_LENGTH = 0.1
MIN_AXIS_ANGLE = math.radians(10.0)


class DegenerateView(Exception):
    """The projection makes two features coincide; pick another viewpoint."""


@dataclass
class Arc:
    center: np.ndarray
    u: np.ndarray  # unit, in the circle plane
    w: np.ndarray  # unit, in the circle plane, orthogonal to u
    radius: float
    t0: float
    t1: float

    def point(self, t):
        t = np.asarray(t, dtype=float)[..., None]
        return self.center + self.radius * (np.cos(t) * self.u + np.sin(t) * self.w)


@dataclass
class SolidEdge:
    v0: int
    v1: int
    arc: Arc | None = None

    @property
    def kind(self) -> str:
        return "line" if self.arc is None else "arc"


@dataclass
class Solid:
    vertices: np.ndarray  # (V, 3)
    edges: list[SolidEdge]
    faces: list[tuple[list[list[int]], FaceType]]  # loops of vertex cycles
    family: str = ""
    params: dict = field(default_factory=dict)

    def edge_points(self, k: int, n: int = K_SAMPLES) -> np.ndarray:
        e = self.edges[k]
        if e.arc is None:
            t = np.linspace(0.0, 1.0, n)[:, None]
            return (1 - t) * self.vertices[e.v0] + t * self.vertices[e.v1]
        return e.arc.point(np.linspace(e.arc.t0, e.arc.t1, n))

    def dense_points(self) -> np.ndarray:
        return np.concatenate([self.edge_points(k, 64) for k in range(len(self.edges))])

    def edge_lookup(self) -> dict[frozenset, int]:
        return {frozenset((e.v0, e.v1)): k for k, e in enumerate(self.edges)}

    def transformed(self, scale: float, shift: np.ndarray) -> "Solid":
        verts = (self.vertices + shift) * scale
        edges = []
        for e in self.edges:
            arc = None
            if e.arc is not None:
                a = e.arc
                arc = Arc((a.center + shift) * scale, a.u, a.w, a.radius * scale, a.t0, a.t1)
            edges.append(SolidEdge(e.v0, e.v1, arc))
        params = dict(self.params, scale=float(scale) * self.params.get("scale", 1.0))
        return Solid(verts, edges, self.faces, self.family, params)

    @property
    def num_faces(self) -> int:
        return len(self.faces)

    def face_edge_counts(self) -> list[int]:
        return [sum(len(loop) for loop in loops) for loops, _ in self.faces]


class _Builder:
    def __init__(self):
        self.points: list[np.ndarray] = []
        self.edges: list[SolidEdge] = []
        self.faces: list[tuple[list[list[int]], FaceType]] = []
        self._pairs: dict[frozenset, int] = {}

    def vertex(self, p) -> int:
        self.points.append(np.asarray(p, dtype=float))
        return len(self.points) - 1

    def arc(self, a: int, b: int, arc: Arc) -> None:
        self._pairs[frozenset((a, b))] = len(self.edges)
        self.edges.append(SolidEdge(a, b, arc))

    def _edge(self, a: int, b: int) -> None:
        key = frozenset((a, b))
        if key not in self._pairs:
            self._pairs[key] = len(self.edges)
            self.edges.append(SolidEdge(a, b))

    def face(self, loops: Sequence[Sequence[int]], normal=None, face_type=FaceType.PLANE) -> None:
        """Add a face; with ``normal`` the first loop is oriented CCW about it
        and every further loop CW (holes)."""
        fixed = []
        for i, loop in enumerate(loops):
            loop = list(loop)
            if normal is not None:
                n = _newell(np.array([self.points[v] for v in loop]))
                want = 1.0 if i == 0 else -1.0
                if want * float(n @ np.asarray(normal, dtype=float)) < 0:
                    loop = loop[::-1]
            for a, b in zip(loop, loop[1:] + loop[:1]):
                self._edge(a, b)
            fixed.append(loop)
        self.faces.append((fixed, FaceType(face_type)))

    def build(self, family: str, params: dict) -> Solid:
        return Solid(np.array(self.points), self.edges, self.faces, family, params)


def _newell(pts: np.ndarray) -> np.ndarray:
    nxt = np.roll(pts, -1, axis=0)
    return np.array([
        np.sum((pts[:, 1] - nxt[:, 1]) * (pts[:, 2] + nxt[:, 2])),
        np.sum((pts[:, 2] - nxt[:, 2]) * (pts[:, 0] + nxt[:, 0])),
        np.sum((pts[:, 0] - nxt[:, 0]) * (pts[:, 1] + nxt[:, 1])),
    ])


def _add_prism(b: _Builder, poly: Sequence[Sequence[float]], z0: float, z1: float,
               bottom=True, top=True, top_holes=(), bottom_holes=()):
    """Extrude a CCW polygon; returns (bottom ids, top ids)."""
    lo = [b.vertex((x, y, z0)) for x, y in poly]
    hi = [b.vertex((x, y, z1)) for x, y in poly]
    n = len(poly)
    for i in range(n):
        j = (i + 1) % n
        dx, dy = poly[j][0] - poly[i][0], poly[j][1] - poly[i][1]
        b.face([[lo[i], lo[j], hi[j], hi[i]]], normal=(dy, -dx, 0.0))
    if bottom:
        b.face([lo, *bottom_holes], normal=(0, 0, -1))
    if top:
        b.face([hi, *top_holes], normal=(0, 0, 1))
    return lo, hi


def make_box(sx: float, sy: float, sz: float) -> Solid:
    b = _Builder()
    _add_prism(b, [(0, 0), (sx, 0), (sx, sy), (0, sy)], 0.0, sz)
    return b.build("box", {"sx": sx, "sy": sy, "sz": sz})


def make_box_through_hole(sx, sy, sz, hx0, hx1, hy0, hy1) -> Solid:
    b = _Builder()
    outer = [(0, 0), (sx, 0), (sx, sy), (0, sy)]
    hole = [(hx0, hy0), (hx1, hy0), (hx1, hy1), (hx0, hy1)]
    lo = [b.vertex((x, y, 0.0)) for x, y in outer]
    hi = [b.vertex((x, y, sz)) for x, y in outer]
    hlo = [b.vertex((x, y, 0.0)) for x, y in hole]
    hhi = [b.vertex((x, y, sz)) for x, y in hole]
    for i in range(4):
        j = (i + 1) % 4
        dx, dy = outer[j][0] - outer[i][0], outer[j][1] - outer[i][1]
        b.face([[lo[i], lo[j], hi[j], hi[i]]], normal=(dy, -dx, 0.0))
        # hole walls face into the hole
        dx, dy = hole[j][0] - hole[i][0], hole[j][1] - hole[i][1]
        b.face([[hlo[i], hlo[j], hhi[j], hhi[i]]], normal=(-dy, dx, 0.0))
    b.face([lo, hlo], normal=(0, 0, -1))
    b.face([hi, hhi], normal=(0, 0, 1))
    return b.build("hole", {"sx": sx, "sy": sy, "sz": sz,
                            "hx0": hx0, "hx1": hx1, "hy0": hy0, "hy1": hy1})


def make_l_prism(a, b_, c, d, h) -> Solid:
    """L-shaped section (0,0)-(a,0)-(a,c)-(d,c)-(d,b)-(0,b), extruded by h."""
    b = _Builder()
    _add_prism(b, [(0, 0), (a, 0), (a, c), (d, c), (d, b_), (0, b_)], 0.0, h)
    return b.build("lprism", {"a": a, "b": b_, "c": c, "d": d, "h": h})


def make_cylinder(r: float, h: float) -> Solid:
    """Circles split into four quarter arcs; seams at 0 and 180 degrees."""
    b = _Builder()
    ex, ey, ez = np.eye(3)
    angles = [0.0, 0.5 * math.pi, math.pi, 1.5 * math.pi]
    bot = [b.vertex(r * (math.cos(t) * ex + math.sin(t) * ey)) for t in angles]
    top = [b.vertex(r * (math.cos(t) * ex + math.sin(t) * ey) + h * ez) for t in angles]
    for ring, z in ((bot, 0.0), (top, h)):
        for i in range(4):
            t0 = angles[i]
            b.arc(ring[i], ring[(i + 1) % 4], Arc(z * ez, ex, ey, r, t0, t0 + 0.5 * math.pi))
    b.face([top], face_type=FaceType.PLANE)
    b.face([[bot[0], bot[3], bot[2], bot[1]]], face_type=FaceType.PLANE)
    b.face([[bot[0], bot[1], bot[2], top[2], top[1], top[0]]], face_type=FaceType.CYLINDER)
    b.face([[bot[2], bot[3], bot[0], top[0], top[3], top[2]]], face_type=FaceType.CYLINDER)
    return b.build("cylinder", {"r": r, "h": h})


def make_box_plus_box(sx, sy, sz, ux0, ux1, uy0, uy1, tz) -> Solid:
    """A smaller box standing strictly inside the top face of a larger one."""
    b = _Builder()
    outer = [(0, 0), (sx, 0), (sx, sy), (0, sy)]
    inner = [(ux0, uy0), (ux1, uy0), (ux1, uy1), (ux0, uy1)]
    lo, hi = _add_prism(b, outer, 0.0, sz, top=False)
    slo, shi = _add_prism(b, inner, sz, sz + tz, bottom=False)
    b.face([hi, slo], normal=(0, 0, 1))
    return b.build("boxbox", {"sx": sx, "sy": sy, "sz": sz, "ux0": ux0, "ux1": ux1,
                              "uy0": uy0, "uy1": uy1, "tz": tz})


def random_solid(family: str, rng: np.random.Generator) -> Solid:
    u = rng.uniform
    if family == "box":
        return make_box(u(0.5, 2.0), u(0.5, 2.0), u(0.5, 2.0))
    if family == "hole":
        sx, sy, sz = u(1.0, 2.0), u(1.0, 2.0), u(0.4, 1.5)
        hx0, hx1 = sx * u(0.2, 0.4), sx * u(0.6, 0.8)
        hy0, hy1 = sy * u(0.2, 0.4), sy * u(0.6, 0.8)
        return make_box_through_hole(sx, sy, sz, hx0, hx1, hy0, hy1)
    if family == "lprism":
        a, b_ = u(1.0, 2.0), u(1.0, 2.0)
        return make_l_prism(a, b_, b_ * u(0.25, 0.6), a * u(0.25, 0.6), u(0.4, 1.5))
    if family == "cylinder":
        return make_cylinder(u(0.4, 1.0), u(0.4, 2.0))
    if family == "boxbox":
        sx, sy, sz = u(1.0, 2.0), u(1.0, 2.0), u(0.3, 1.0)
        return make_box_plus_box(sx, sy, sz, sx * u(0.15, 0.35), sx * u(0.65, 0.85),
                                 sy * u(0.15, 0.35), sy * u(0.65, 0.85), u(0.3, 1.0))
    raise ValueError(f"unknown family {family!r}")


def filter_complexity(solid: Solid) -> bool:
    return solid.num_faces <= MAX_FACES and max(solid.face_edge_counts()) <= MAX_FACE_EDGES


def normalize_solid(solid: Solid) -> Solid:
    """Center the bounding box at the origin and scale its half diagonal to 1."""
    pts = solid.dense_points()
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    half = 0.5 * float(np.linalg.norm(hi - lo))
    if half <= 0:
        raise ValueError("solid has zero extent")
    return solid.transformed(1.0 / half, -(lo + hi) / 2)


# -- camera ---------------------------------------------------------------

@dataclass
class Camera:
    rotation: np.ndarray  # rows: image x axis, image y axis, view direction
    distance: float

    @property
    def view_direction(self) -> np.ndarray:
        return self.rotation[2]

    def frame(self) -> np.ndarray:
        """Linear map from world to (x, y, depth) drawing coordinates."""
        return np.vstack([self.rotation[0], self.rotation[1], -self.rotation[2]])

    def to_dict(self) -> dict:
        return {"rotation": self.rotation.tolist(), "distance": float(self.distance)}


def sample_viewpoint(rng: np.random.Generator) -> Camera:
    """Uniform view direction on the z >= 0 hemisphere, no roll."""
    z = rng.uniform(0.0, 1.0)
    phi = rng.uniform(0.0, 2.0 * math.pi)
    s = math.sqrt(max(0.0, 1.0 - z * z))
    v = np.array([s * math.cos(phi), s * math.sin(phi), z])
    right = np.cross([0.0, 0.0, 1.0], v)
    if np.linalg.norm(right) < 1e-9:
        right = np.array([1.0, 0.0, 0.0])
    right /= np.linalg.norm(right)
    up = np.cross(v, right)
    distance = rng.uniform(1.25, 1.5)
    return Camera(np.vstack([right, up, v]), float(distance))


@dataclass
class Projection:
    drawing: WireframeDrawing
    depths: np.ndarray  # per vertex
    sample_depths: np.ndarray  # (E, K)


def _point_segments_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distances from points (P, 2) to segments (S, 2)-(S, 2), shape (P, S)."""
    ab = b - a
    denom = np.maximum((ab * ab).sum(-1), 1e-300)
    t = np.clip(((p[:, None] - a[None]) * ab[None]).sum(-1) / denom, 0.0, 1.0)
    q = a[None] + t[..., None] * ab[None]
    return np.linalg.norm(p[:, None] - q, axis=-1)


def check_degenerate(drawing: WireframeDrawing, tol: float = VERTEX_TOL) -> None:
    v = drawing.vertices
    d = np.linalg.norm(v[:, None] - v[None], axis=-1)
    np.fill_diagonal(d, np.inf)
    if d.min() < tol:
        raise DegenerateView("coincident vertices")
    for k, e in enumerate(drawing.edges):
        dist = _point_segments_distance(v, e.samples[:-1], e.samples[1:]).min(axis=1)
        dist[[e.v0, e.v1]] = np.inf
        if dist.min() < tol:
            raise DegenerateView(f"vertex {int(dist.argmin())} touches edge {k}")


def check_directions(directions: np.ndarray) -> None:
    p = directions[:, :2]
    lens = np.linalg.norm(p, axis=1)
    if lens.min() < MIN_AXIS_LENGTH:
        raise DegenerateView("dominant direction nearly parallel to view")
    for i in range(3):
        for j in range(i + 1, 3):
            s = abs(p[i, 0] * p[j, 1] - p[i, 1] * p[j, 0]) / (lens[i] * lens[j])
            if s < math.sin(MIN_AXIS_ANGLE):
                raise DegenerateView("dominant directions project parallel")


def project(solid: Solid, camera: Camera) -> Projection:
    frame = camera.frame()
    pts = solid.vertices @ frame.T
    lookup = solid.edge_lookup()
    edges, sdepth = [], []
    for k, e in enumerate(solid.edges):
        s = solid.edge_points(k) @ frame.T
        s[0], s[-1] = pts[e.v0], pts[e.v1]
        edges.append(Edge(e.kind, e.v0, e.v1, s[:, :2].copy()))
        sdepth.append(s[:, 2] + camera.distance)
    faces = []
    for loops, ftype in solid.faces:
        co_loops = []
        for loop in loops:
            cl = []
            for a, b in zip(loop, loop[1:] + loop[:1]):
                k = lookup[frozenset((a, b))]
                cl.append(2 * k if solid.edges[k].v0 == a else 2 * k + 1)
            co_loops.append(cl)
        faces.append(FaceLoopSet.make(co_loops, ftype))
    # world axes expressed in drawing coordinates
    directions = frame.T.copy()
    drawing = WireframeDrawing(pts[:, :2].copy(), tuple(edges), tuple(faces), directions)
    check_degenerate(drawing)
    check_directions(drawing.directions)
    return Projection(drawing, pts[:, 2] + camera.distance, np.array(sdepth))


# -- training instances --------------------------------------------------

@dataclass(frozen=True)
class Instance:
    start: int
    target: tuple[int, ...]  # co-edge ids, then N + face type index


def make_instances(drawing: WireframeDrawing) -> list[Instance]:
    owner = coedge_owners(drawing)
    n = drawing.num_coedges
    out = []
    for c in range(n):
        face = drawing.faces[owner[c]]
        seq = canonical_sequence(drawing, face, c)
        out.append(Instance(c, tuple(seq[1:]) + (n + face.face_type.index,)))
    return out


def decode_target(n: int, target: Sequence[int]) -> tuple[list[int], FaceType | None]:
    coedges = [t for t in target if t < n]
    ftype = FACE_TYPES[target[-1] - n] if target and target[-1] >= n else None
    return coedges, ftype


# -- corpus generation ------------------------------------------------------

@dataclass
class Sample:
    name: str
    family: str
    solid: Solid
    camera: Camera
    projection: Projection


def shape_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(index)])


def generate_shape(family: str, seed: int, index: int) -> Sample | None:
    rng = shape_rng(seed, index)
    solid = normalize_solid(random_solid(family, rng))
    if not filter_complexity(solid):
        return None
    for _ in range(MAX_VIEW_RESAMPLES):
        cam = sample_viewpoint(rng)
        try:
            proj = project(solid, cam)
        except DegenerateView:
            continue
        return Sample(f"shape_{index:05d}", family, solid, cam, proj)
    return None


def iter_shapes(families: Sequence[str], count: int, seed: int):
    for i in range(count):
        s = generate_shape(families[i % len(families)], seed, i)
        if s is not None:
            yield s


def split_assignment(names: Sequence[str], split: Sequence[float], seed: int) -> dict[str, str]:
    """Deterministic train/val/test assignment from fractions or counts."""
    n = len(names)
    split = [float(x) for x in split]
    if abs(sum(split) - n) < 1e-9 and all(float(x).is_integer() for x in split):
        counts = [int(x) for x in split]
    else:
        total = sum(split)
        counts = [int(math.floor(n * x / total)) for x in split]
        counts[0] += n - sum(counts)
    order = np.random.default_rng([int(seed), 0x5EED]).permutation(n)
    labels = ["train"] * counts[0] + ["val"] * counts[1] + ["test"] * counts[2]
    return {names[int(i)]: labels[r] for r, i in enumerate(order)}


FULL_SPLIT = (9370, 202, 504)


def truth_record(sample: Sample) -> dict:
    p = sample.projection
    return {
        "family": sample.family,
        "depths": [float(z) for z in p.depths],
        "sample_depths": [[float(z) for z in row] for row in p.sample_depths],
        "params": {k: float(v) for k, v in sample.solid.params.items()},
    }


def write_corpus(out_dir, families: Sequence[str], count: int, seed: int,
                 split: Sequence[float] = FULL_SPLIT) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    samples = list(iter_shapes(families, count, seed))
    assignment = split_assignment([s.name for s in samples], split, seed)
    shapes = []
    for s in samples:
        (out / f"{s.name}.json").write_text(s.projection.drawing.dumps())
        (out / f"{s.name}.truth.json").write_text(json.dumps(truth_record(s)))
        shapes.append({
            "name": s.name,
            "family": s.family,
            "kind": FAMILY_KINDS[s.family],
            "split": assignment[s.name],
            "camera": s.camera.to_dict(),
            "params": {k: float(v) for k, v in s.solid.params.items()},
        })
    manifest = {"seed": int(seed), "families": list(families), "requested": int(count),
                "shapes": shapes}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1))
    return manifest


def load_corpus(data_dir, split: str | None = None):
    """Yield (name, drawing, truth) for shapes of a split (all when None)."""
    from .brep import load_drawing

    d = Path(data_dir)
    manifest = json.loads((d / "manifest.json").read_text())
    for entry in manifest["shapes"]:
        if split is not None and entry["split"] != split:
            continue
        name = entry["name"]
        truth = json.loads((d / f"{name}.truth.json").read_text())
        yield name, load_drawing(d / f"{name}.json"), truth


def validate_sample_topology(drawing: WireframeDrawing) -> None:
    """Raise TopologyError unless co-edge ownership is a partition."""
    coedge_owners(drawing)
    if drawing.faces is None:
        raise TopologyError("no faces")
