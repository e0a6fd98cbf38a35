"""Topology of 2D wireframe drawings.

A drawing is an edge-vertex graph in normalized image coordinates.  Every
edge ``k`` owns two directed co-edges: ``2k`` runs from its first endpoint to
its second, ``2k + 1`` runs back.  Faces are lists of closed co-edge loops
plus a face type.

Loops follow the usual B-rep convention: walking along a loop with the
outward normal pointing up, the owning face lies on the left.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

#: Points sampled along every edge, endpoints included.
K_SAMPLES = 10
#: Projected vertices closer than this are considered coincident.
VERTEX_TOL = 1e-3


class TopologyError(ValueError):
    pass


class FaceType(str, Enum):
    PLANE = "PLANE"
    CYLINDER = "CYLINDER"
    OTHERS = "OTHERS"

    @property
    def index(self) -> int:
        return FACE_TYPES.index(self)


FACE_TYPES = (FaceType.PLANE, FaceType.CYLINDER, FaceType.OTHERS)


@dataclass(frozen=True, eq=False)
class Edge:
    kind: str  # "line" or "arc"
    v0: int
    v1: int
    samples: np.ndarray  # (K, 2), samples[0] at v0, samples[-1] at v1


@dataclass(frozen=True)
class CoEdge:
    id: int
    edge: int
    start: int
    end: int


@dataclass(frozen=True)
class FaceLoopSet:
    loops: tuple[tuple[int, ...], ...]
    face_type: FaceType = FaceType.PLANE

    @classmethod
    def make(cls, loops: Iterable[Iterable[int]], face_type=FaceType.PLANE) -> "FaceLoopSet":
        return cls(tuple(tuple(int(c) for c in loop) for loop in loops), FaceType(face_type))

    @property
    def coedges(self) -> tuple[int, ...]:
        return tuple(c for loop in self.loops for c in loop)


def mate(c: int) -> int:
    """The other co-edge of the same edge."""
    return c ^ 1


def coedge_edge(c: int) -> int:
    return c >> 1


def build_coedges(edges: Sequence[Edge]) -> list[CoEdge]:
    out = []
    for k, e in enumerate(edges):
        if e.v0 == e.v1 and e.kind == "line":
            raise TopologyError(f"degenerate edge {k}")
        out.append(CoEdge(2 * k, k, e.v0, e.v1))
        out.append(CoEdge(2 * k + 1, k, e.v1, e.v0))
    return out


@dataclass(frozen=True, eq=False)
class WireframeDrawing:
    vertices: np.ndarray  # (L, 2)
    edges: tuple[Edge, ...]
    faces: tuple[FaceLoopSet, ...] | None = None
    directions: np.ndarray | None = None  # (3, 3), rows are unit vectors
    coedges: tuple[CoEdge, ...] = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "vertices", np.asarray(self.vertices, dtype=float).reshape(-1, 2))
        if self.directions is not None:
            object.__setattr__(self, "directions", np.asarray(self.directions, dtype=float).reshape(3, 3))
        for k, e in enumerate(self.edges):
            if not (0 <= e.v0 < len(self.vertices) and 0 <= e.v1 < len(self.vertices)):
                raise TopologyError(f"edge {k} references unknown vertex")
        object.__setattr__(self, "coedges", tuple(build_coedges(self.edges)))
        if self.faces is not None:
            object.__setattr__(self, "faces", tuple(self.faces))

    @property
    def num_coedges(self) -> int:
        return 2 * len(self.edges)

    @property
    def samples_per_edge(self) -> int:
        return self.edges[0].samples.shape[0] if self.edges else K_SAMPLES

    def start(self, c: int) -> int:
        return self.coedges[c].start

    def end(self, c: int) -> int:
        return self.coedges[c].end

    def coedge_points(self, c: int) -> np.ndarray:
        """Edge samples ordered along the co-edge direction."""
        s = self.edges[c >> 1].samples
        return s if c % 2 == 0 else s[::-1]

    def coedge_key(self, c: int) -> tuple[float, float, float, float]:
        s, e = self.vertices[self.start(c)], self.vertices[self.end(c)]
        return (float(s[0]), float(s[1]), float(e[0]), float(e[1]))

    def outgoing(self) -> list[list[int]]:
        """Co-edges leaving each vertex, in id order."""
        out: list[list[int]] = [[] for _ in range(len(self.vertices))]
        for ce in self.coedges:
            out[ce.start].append(ce.id)
        return out

    def with_faces(self, faces) -> "WireframeDrawing":
        return WireframeDrawing(self.vertices, self.edges, tuple(faces), self.directions)

    # -- serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        d: dict = {
            "vertices": [{"x": float(x), "y": float(y)} for x, y in self.vertices],
            "edges": [
                {"kind": e.kind, "v": [int(e.v0), int(e.v1)],
                 "samples": [[float(x), float(y)] for x, y in e.samples]}
                for e in self.edges
            ],
        }
        if self.faces is not None:
            d["faces"] = [face_to_dict(f) for f in self.faces]
        if self.directions is not None:
            d["directions"] = [[float(v) for v in row] for row in self.directions]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "WireframeDrawing":
        verts = np.array([[v["x"], v["y"]] for v in d["vertices"]], dtype=float)
        edges = tuple(
            Edge(e["kind"], int(e["v"][0]), int(e["v"][1]), np.array(e["samples"], dtype=float))
            for e in d["edges"]
        )
        ks = {e.samples.shape[0] for e in edges}
        if len(ks) > 1:
            raise TopologyError("edges carry different sample counts")
        faces = None
        if "faces" in d:
            faces = tuple(face_from_dict(f) for f in d["faces"])
        dirs = np.array(d["directions"], dtype=float) if "directions" in d else None
        return cls(verts, edges, faces, dirs)

    def dumps(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def loads(cls, text: str) -> "WireframeDrawing":
        return cls.from_dict(json.loads(text))


def face_to_dict(face: FaceLoopSet) -> dict:
    return {"loops": [list(loop) for loop in face.loops], "type": face.face_type.value}


def face_from_dict(d: dict) -> FaceLoopSet:
    return FaceLoopSet.make(d["loops"], d.get("type", "OTHERS"))


def load_drawing(path) -> WireframeDrawing:
    with open(path) as fh:
        return WireframeDrawing.from_dict(json.load(fh))


def save_drawing(drawing: WireframeDrawing, path) -> None:
    with open(path, "w") as fh:
        fh.write(drawing.dumps())


# -- loop predicates -------------------------------------------------------

def chain_loops(drawing: WireframeDrawing, coedges: Sequence[int]) -> list[list[int]] | None:
    """Split a bag of co-edges into vertex-chained cycles.

    Chains greedily from the first remaining co-edge, preferring the co-edge
    that follows in the given order.  Returns None when some chain cannot be
    closed or the input repeats a co-edge.
    """
    seq = [int(c) for c in coedges]
    if not seq or len(set(seq)) != len(seq):
        return None
    if any(c < 0 or c >= drawing.num_coedges for c in seq):
        return None
    remaining = list(seq)
    loops = []
    while remaining:
        first = remaining.pop(0)
        loop = [first]
        cur = first
        while drawing.end(cur) != drawing.start(first):
            nxt = None
            for c in remaining:
                if drawing.start(c) == drawing.end(cur):
                    nxt = c
                    break
            if nxt is None:
                return None
            remaining.remove(nxt)
            loop.append(nxt)
            cur = nxt
        loops.append(loop)
    return loops


def is_closed_face(drawing: WireframeDrawing, coedges: Sequence[int]) -> bool:
    return chain_loops(drawing, coedges) is not None


def has_mate_pair(coedges: Iterable[int]) -> bool:
    s = set(coedges)
    return any(mate(c) in s for c in s)


def canonical_face_key(face: FaceLoopSet | Iterable[int]) -> tuple[int, ...]:
    """Sorted edge ids of a face; equal keys mean duplicate faces."""
    cs = face.coedges if isinstance(face, FaceLoopSet) else face
    return tuple(sorted({coedge_edge(c) for c in cs}))


def _rotate(loop: Sequence[int], i: int) -> list[int]:
    return list(loop[i:]) + list(loop[:i])


def canonical_sequence(drawing: WireframeDrawing, face: FaceLoopSet, start: int) -> list[int]:
    """Order a face's co-edges as a sequence beginning at ``start``.

    The loop holding ``start`` comes first, rotated to begin there.  Every
    other loop is rotated to begin at its smallest co-edge by
    (start.x, start.y, end.x, end.y); those loops follow in order of that key.
    """
    own = [loop for loop in face.loops if start in loop]
    if not own:
        raise TopologyError(f"co-edge {start} not in face")
    first = own[0]
    seq = _rotate(first, first.index(start))
    rest = []
    for loop in face.loops:
        if loop is first:
            continue
        keys = [drawing.coedge_key(c) for c in loop]
        i = min(range(len(loop)), key=lambda j: keys[j])
        rest.append((keys[i], _rotate(loop, i)))
    rest.sort(key=lambda kv: kv[0])
    for _, loop in rest:
        seq.extend(loop)
    return seq


# -- manifold validation ---------------------------------------------------

@dataclass
class ManifoldReport:
    counts: list[int]  # faces per edge
    passed: bool

    @property
    def bad_edges(self) -> list[int]:
        return [k for k, n in enumerate(self.counts) if n != 2]


def validate_manifold(drawing: WireframeDrawing) -> ManifoldReport:
    if drawing.faces is None:
        raise TopologyError("drawing has no ground-truth faces")
    counts = [0] * len(drawing.edges)
    for face in drawing.faces:
        for k in canonical_face_key(face):
            counts[k] += 1
    return ManifoldReport(counts, all(n == 2 for n in counts))


def coedge_owners(drawing: WireframeDrawing, faces: Sequence[FaceLoopSet] | None = None) -> list[int]:
    """Index of the face whose loops contain each co-edge."""
    faces = drawing.faces if faces is None else faces
    if faces is None:
        raise TopologyError("drawing has no ground-truth faces")
    owner = [-1] * drawing.num_coedges
    for i, face in enumerate(faces):
        for c in face.coedges:
            if owner[c] != -1:
                raise TopologyError(f"co-edge {c} lies in two faces")
            owner[c] = i
    missing = [c for c, o in enumerate(owner) if o == -1]
    if missing:
        raise TopologyError(f"co-edges without a face: {missing[:5]}")
    return owner


def loop_chain_ok(drawing: WireframeDrawing, loop: Sequence[int]) -> bool:
    n = len(loop)
    return n > 0 and all(drawing.end(loop[t]) == drawing.start(loop[(t + 1) % n]) for t in range(n))


def face_is_valid(drawing: WireframeDrawing, face: FaceLoopSet) -> bool:
    cs = face.coedges
    if len(set(cs)) != len(cs) or has_mate_pair(cs):
        return False
    return all(loop_chain_ok(drawing, loop) for loop in face.loops)


def edge_polyline_length(drawing: WireframeDrawing, k: int) -> float:
    s = drawing.edges[k].samples
    return float(np.linalg.norm(np.diff(s, axis=0), axis=1).sum())


def type_votes(types: Iterable[FaceType]) -> Counter:
    return Counter(FaceType(t) for t in types)
