"""Lift a line drawing with known faces to 3D.

Each face is a plane ``a x + b y + z + c = 0`` in drawing coordinates, where
``z`` is depth along the viewing axis.  Two kinds of linear constraints tie
the planes together:

* vertex coincidence: a vertex shared by two faces has the same depth on both;
* direction alignment: a face containing dominant direction ``l`` satisfies
  ``a l_x + b l_y + l_z = 0``.

The plane parameters minimise the L1 norm of all constraint residuals subject
to every face vertex having depth at least ``epsilon``.  Curved faces are cut
into planar pieces first and the arcs are refitted as circles afterwards.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .brep import (
    Edge,
    FaceLoopSet,
    FaceType,
    TopologyError,
    WireframeDrawing,
)
from .simplex import Infeasible, linprog

TAU_DEG = 1.0
EPSILON = 0.1
MIN_PROJECTED = 1e-6
COLLINEAR_TOL = 1e-9
GAUGE_SHIFT = 10.0


class ReconstructionError(RuntimeError):
    pass


# -- dominant directions ------------------------------------------------------

@dataclass
class DirectionAssignment:
    sets: list[frozenset[int]]
    flagged: tuple[int, ...]  # directions nearly parallel to the view axis


def _unit2(v) -> np.ndarray | None:
    n = float(np.hypot(v[0], v[1]))
    return None if n < MIN_PROJECTED else np.array([v[0], v[1]]) / n


def edge_direction_matches(drawing: WireframeDrawing, directions, tau_deg: float = TAU_DEG):
    """Per edge, the dominant directions it is parallel to in 2D (arcs match none)."""
    directions = np.asarray(directions, dtype=float).reshape(3, 3)
    proj = [_unit2(l) for l in directions]
    cos_tau = math.cos(math.radians(tau_deg))
    out = []
    for e in drawing.edges:
        if e.kind != "line":
            out.append(frozenset())
            continue
        d = _unit2(drawing.vertices[e.v1] - drawing.vertices[e.v0])
        if d is None:
            out.append(frozenset())
            continue
        out.append(frozenset(j for j, p in enumerate(proj)
                             if p is not None and abs(float(d @ p)) >= cos_tau))
    flagged = tuple(j for j, p in enumerate(proj) if p is None)
    return out, flagged


def assign_face_directions(drawing: WireframeDrawing, faces: Sequence[FaceLoopSet], directions,
                           tau_deg: float = TAU_DEG) -> DirectionAssignment:
    matches, flagged = edge_direction_matches(drawing, directions, tau_deg)
    sets = []
    for f in faces:
        s: set[int] = set()
        for c in f.coedges:
            s |= matches[c >> 1]
        sets.append(frozenset(s))
    return DirectionAssignment(sets, flagged)


def filter_impossible_faces(faces: Sequence[FaceLoopSet], sets: Sequence[frozenset[int]]) -> list[FaceLoopSet]:
    """Drop faces aligned with three or more directions; no plane holds all three."""
    return [f for f, s in zip(faces, sets) if len(s) < 3]


def apply_cap_rule(drawing: WireframeDrawing, faces: Sequence[FaceLoopSet],
                   sets: Sequence[frozenset[int]]) -> list[frozenset[int]]:
    """Planar faces bounding a cylinder through an arc are perpendicular to its axis.

    A CYLINDER face aligned with exactly one direction names the axis; every
    non-cylindrical face sharing one of its arcs gets the two remaining
    directions.
    """
    sets = list(sets)
    edge_faces: dict[int, list[int]] = {}
    for i, f in enumerate(faces):
        for c in f.coedges:
            edge_faces.setdefault(c >> 1, []).append(i)
    for i, f in enumerate(faces):
        if f.face_type is not FaceType.CYLINDER or len(sets[i]) != 1:
            continue
        others = frozenset({0, 1, 2} - sets[i])
        for c in f.coedges:
            if drawing.edges[c >> 1].kind != "arc":
                continue
            for j in edge_faces[c >> 1]:
                if j == i or faces[j].face_type is FaceType.CYLINDER:
                    continue
                merged = sets[j] | others
                if len(merged) < 3:
                    sets[j] = merged
    return sets


# -- curved faces ------------------------------------------------------------------

def arc_split_index(samples: np.ndarray) -> int | None:
    """Interior sample farthest from the chord; ties go to the smallest (x, y)."""
    s = np.asarray(samples, dtype=float)
    if len(s) < 3:
        return None
    a, b = s[0], s[-1]
    ab = b - a
    L = float(np.hypot(*ab))
    inner = s[1:-1]
    if L < 1e-12:
        dist = np.linalg.norm(inner - a, axis=1)
    else:
        dist = np.abs(ab[0] * (inner[:, 1] - a[1]) - ab[1] * (inner[:, 0] - a[0])) / L
    best = float(dist.max())
    scale = max(L, best, 1e-12)
    if best <= COLLINEAR_TOL * scale:
        return None
    tied = [i for i in range(len(inner)) if dist[i] >= best - 1e-9 * scale]
    i = min(tied, key=lambda t: (float(inner[t, 0]), float(inner[t, 1])))
    return i + 1


@dataclass
class Polygonized:
    drawing: WireframeDrawing
    faces: list[FaceLoopSet]
    parent: list[int]  # index of the source face for every output face
    registry: dict[int, tuple[int, int, int]]  # original arc edge -> (start, mid, end)
    split_sample: dict[int, int]  # original arc edge -> sample index of its split point
    arc_edges: frozenset[int]  # output edges that came from arcs


def _line_samples(p, q, k):
    t = np.linspace(0.0, 1.0, k)[:, None]
    return (1 - t) * np.asarray(p) + t * np.asarray(q)


def polygonize_curved_faces(drawing: WireframeDrawing, faces: Sequence[FaceLoopSet],
                            strips: bool = True, tau_deg: float = TAU_DEG) -> Polygonized:
    """Replace every arc by two segments through its split point.

    With ``strips`` a CYLINDER face made of two arc runs joined by straight
    seams is further cut into planar strips by rulings between matching split
    points, provided each ruling is parallel to the seams in 2D.
    """
    K = drawing.samples_per_edge
    verts = [np.asarray(v, dtype=float) for v in drawing.vertices]
    edges = list(drawing.edges)
    registry, split_sample = {}, {}
    second: dict[int, int] = {}
    arc_edges = set()
    for k, e in enumerate(drawing.edges):
        if e.kind != "arc":
            continue
        i = arc_split_index(e.samples)
        if i is None:
            edges[k] = Edge("line", e.v0, e.v1, _line_samples(verts[e.v0], verts[e.v1], K))
            continue
        m = len(verts)
        verts.append(e.samples[i].copy())
        edges[k] = Edge("line", e.v0, m, _line_samples(verts[e.v0], verts[m], K))
        second[k] = len(edges)
        edges.append(Edge("line", m, e.v1, _line_samples(verts[m], verts[e.v1], K)))
        registry[k] = (e.v0, m, e.v1)
        split_sample[k] = i
        arc_edges.update((k, second[k]))
    for k, e in enumerate(drawing.edges):
        if e.kind == "arc" and k not in second:
            arc_edges.add(k)

    def expand(c: int) -> list[int]:
        k = c >> 1
        if k not in second:
            return [c]
        k2 = second[k]
        return [2 * k, 2 * k2] if c % 2 == 0 else [2 * k2 + 1, 2 * k + 1]

    new_faces, parent = [], []
    for i, f in enumerate(faces):
        loops = [[x for c in loop for x in expand(c)] for loop in f.loops]
        new_faces.append(FaceLoopSet.make(loops, f.face_type))
        parent.append(i)

    if not registry and not strips:
        return Polygonized(drawing, list(faces), list(range(len(faces))), {}, {}, frozenset())

    verts_arr = np.array(verts)
    out_faces, out_parent = [], []
    for f, p in zip(new_faces, parent):
        cut = None
        if strips and f.face_type is FaceType.CYLINDER and len(f.loops) == 1:
            cut = _strip_cut(f.loops[0], edges, verts_arr, arc_edges, tau_deg)
        if cut is None:
            out_faces.append(f)
            out_parent.append(p)
            continue
        rulings, loops = cut
        base = len(edges)
        for a, b in rulings:
            edges.append(Edge("line", a, b, _line_samples(verts_arr[a], verts_arr[b], K)))
        for loop in loops:
            resolved = [2 * (base + x[1]) + x[2] if isinstance(x, tuple) else x for x in loop]
            out_faces.append(FaceLoopSet.make([resolved], f.face_type))
            out_parent.append(p)

    poly = WireframeDrawing(verts_arr, tuple(edges), None, drawing.directions)
    return Polygonized(poly, out_faces, out_parent, registry, split_sample, frozenset(arc_edges))


def _strip_cut(loop, edges, verts, arc_edges, tau_deg):
    n = len(loop)
    is_arc = [(c >> 1) in arc_edges for c in loop]
    if all(is_arc) or not any(is_arc):
        return None
    # rotate so the loop starts at the beginning of an arc run
    r = next(i for i in range(n) if is_arc[i] and not is_arc[i - 1])
    loop = loop[r:] + loop[:r]
    is_arc = is_arc[r:] + is_arc[:r]
    runs, cur = [], None
    for i, a in enumerate(is_arc):
        if a and (cur is None or not is_arc[i - 1]):
            cur = [i]
            runs.append(cur)
        elif a:
            cur.append(i)
    if len(runs) != 2 or len(runs[0]) != len(runs[1]) or len(runs[0]) < 2:
        return None
    A, B = runs
    m = len(A)
    seam1 = loop[A[-1] + 1:B[0]]  # from end of run A to start of run B
    seam0 = loop[B[-1] + 1:] + loop[:A[0]]  # from end of run B back to A
    if not seam0 or not seam1:
        return None

    def start(c):
        e = edges[c >> 1]
        return e.v0 if c % 2 == 0 else e.v1

    def end(c):
        e = edges[c >> 1]
        return e.v1 if c % 2 == 0 else e.v0

    a_pts = [start(loop[i]) for i in A] + [end(loop[A[-1]])]
    b_pts = [start(loop[i]) for i in B] + [end(loop[B[-1]])]
    seam_dir = _unit2(verts[b_pts[0]] - verts[a_pts[-1]])
    if seam_dir is None:
        return None
    cos_tau = math.cos(math.radians(tau_deg))
    rulings = []
    for i in range(1, m):
        a, b = a_pts[i], b_pts[m - i]
        d = _unit2(verts[b] - verts[a])
        if d is None or abs(float(d @ seam_dir)) < cos_tau:
            return None
        rulings.append((a, b))
    loops = []
    for i in range(m):
        lp = [loop[A[i]]]
        lp += list(seam1) if i + 1 == m else [("r", i, 0)]  # ruling i+1 forward
        lp.append(loop[B[m - 1 - i]])
        lp += list(seam0) if i == 0 else [("r", i - 1, 1)]  # ruling i backward
        loops.append(lp)
    return rulings, loops


# -- constraint system -------------------------------------------------------------

@dataclass(frozen=True)
class PlaneParams:
    a: float
    b: float
    c: float

    def depth(self, x: float, y: float) -> float:
        return -(self.a * x + self.b * y + self.c)

    def to_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "c": self.c}


@dataclass(frozen=True)
class ConstraintRow:
    kind: str  # "P1" or "P2"
    entries: tuple[tuple[int, float], ...]  # (column in the 3M vector, coefficient)
    const: float = 0.0
    vertex: int | None = None
    faces: tuple[int, ...] = ()
    direction: int | None = None


@dataclass
class ConstraintSystem:
    num_faces: int
    rows: list[ConstraintRow]
    positivity: list[tuple[int, int, float, float]]  # (face, vertex, x, y)
    epsilon: float = EPSILON

    def matrix(self) -> tuple[np.ndarray, np.ndarray]:
        P = np.zeros((len(self.rows), 3 * self.num_faces))
        p0 = np.zeros(len(self.rows))
        for r, row in enumerate(self.rows):
            for col, v in row.entries:
                P[r, col] += v
            p0[r] = row.const
        return P, p0

    def count(self, kind: str) -> int:
        return sum(1 for r in self.rows if r.kind == kind)

    def residuals(self, f: np.ndarray) -> np.ndarray:
        P, p0 = self.matrix()
        return P @ f + p0


def face_vertices(drawing: WireframeDrawing, face: FaceLoopSet) -> list[int]:
    seen, out = set(), []
    for c in face.coedges:
        if c < 0 or c >= drawing.num_coedges:
            raise TopologyError(f"face references unknown co-edge {c}")
        v = drawing.start(c)
        if v not in seen:
            seen.add(v)
            out.append(v)
    return out


def build_constraints(drawing: WireframeDrawing, faces: Sequence[FaceLoopSet],
                      sets: Sequence[frozenset[int]], directions=None,
                      epsilon: float = EPSILON) -> ConstraintSystem:
    directions = drawing.directions if directions is None else np.asarray(directions, dtype=float)
    if directions is None:
        raise ReconstructionError("dominant directions are required")
    nv = len(drawing.vertices)
    fverts = [face_vertices(drawing, f) for f in faces]
    on: dict[int, list[int]] = {}
    for i, vs in enumerate(fverts):
        for v in vs:
            if v >= nv:
                raise TopologyError(f"face {i} references unknown vertex {v}")
            on.setdefault(v, []).append(i)
    rows = []
    for v in sorted(on):
        x, y = map(float, drawing.vertices[v])
        for i, j in itertools.combinations(on[v], 2):
            rows.append(ConstraintRow(
                "P1",
                ((3 * i, x), (3 * i + 1, y), (3 * i + 2, 1.0),
                 (3 * j, -x), (3 * j + 1, -y), (3 * j + 2, -1.0)),
                vertex=v, faces=(i, j)))
    for i, s in enumerate(sets):
        for d in sorted(s):
            lx, ly, lz = map(float, directions[d])
            rows.append(ConstraintRow("P2", ((3 * i, lx), (3 * i + 1, ly)), lz, faces=(i,), direction=d))
    pos = [(i, v, float(drawing.vertices[v][0]), float(drawing.vertices[v][1]))
           for i, vs in enumerate(fverts) for v in vs]
    return ConstraintSystem(len(faces), rows, pos, epsilon)


@dataclass
class L1Solution:
    planes: list[PlaneParams]
    objective: float
    residuals: np.ndarray
    nullity: int
    iterations: int

    @property
    def under_constrained(self) -> bool:
        return self.nullity > 1

    @property
    def vector(self) -> np.ndarray:
        return np.array([[p.a, p.b, p.c] for p in self.planes]).ravel()


def solve_l1(system: ConstraintSystem) -> L1Solution:
    """Minimise the L1 norm of all rows subject to depth >= epsilon at face vertices.

    Depth is only known up to a common offset, so every ``c`` is shifted by
    the same amount to make the smallest face-vertex depth exactly 1.
    """
    M = system.num_faces
    if M == 0:
        raise ReconstructionError("at least one face is required")
    P, p0 = system.matrix()
    R = len(p0)
    nf = 3 * M
    # Each row becomes P f - s+ + s- = -p0 with cost on s+ + s-.  Writing
    # c = c' - GAUGE_SHIFT is harmless (rows only see differences of c) and
    # makes f = 0 feasible for the depth rows, so no phase 1 is needed.
    nvar = 2 * nf + 2 * R
    A_eq = np.zeros((R, nvar))
    A_eq[:, :nf], A_eq[:, nf:2 * nf] = P, -P
    A_eq[:, 2 * nf:2 * nf + R] = -np.eye(R)
    A_eq[:, 2 * nf + R:] = np.eye(R)
    A_ub = np.zeros((len(system.positivity), nvar))
    b_ub = np.full(len(system.positivity), GAUGE_SHIFT - system.epsilon)
    for r, (i, _, x, y) in enumerate(system.positivity):
        A_ub[r, 3 * i:3 * i + 3] = (x, y, 1.0)
        A_ub[r, nf + 3 * i:nf + 3 * i + 3] = (-x, -y, -1.0)
    cost = np.zeros(nvar)
    cost[2 * nf:] = 1.0
    try:
        res = linprog(cost, A_ub, b_ub, A_eq if R else None, -p0 if R else None)
    except Infeasible as exc:
        raise ReconstructionError("no positive-depth embedding") from exc
    f = res.x[:nf] - res.x[nf:2 * nf]
    f[2::3] -= GAUGE_SHIFT
    f = canonicalize(f, system)
    resid = P @ f + p0
    rank = int(np.linalg.matrix_rank(P)) if R else 0
    planes = [PlaneParams(*map(float, f[3 * i:3 * i + 3])) for i in range(M)]
    return L1Solution(planes, float(np.abs(resid).sum()), resid, nf - rank, res.iterations)


def canonicalize(f: np.ndarray, system: ConstraintSystem) -> np.ndarray:
    f = np.array(f, dtype=float)
    if not system.positivity:
        return f
    z = [-(f[3 * i] * x + f[3 * i + 1] * y + f[3 * i + 2]) for i, _, x, y in system.positivity]
    f[2::3] += min(z) - 1.0
    return f


# -- lifting -------------------------------------------------------------------------

@dataclass(frozen=True)
class Circle:
    center: np.ndarray
    radius: float
    axis: np.ndarray

    def point(self, ref_u: np.ndarray, t: float) -> np.ndarray:
        w = np.cross(self.axis, ref_u)
        return self.center + self.radius * (math.cos(t) * ref_u + math.sin(t) * w)

    def to_dict(self) -> dict:
        return {"center": [float(v) for v in self.center], "radius": float(self.radius),
                "axis": [float(v) for v in self.axis]}


def fit_circle_3d(p1, p2, p3) -> Circle:
    """The circle through three points: circumcenter, radius and unit plane normal."""
    p1, p2, p3 = (np.asarray(p, dtype=float) for p in (p1, p2, p3))
    u, v = p2 - p1, p3 - p1
    n = np.cross(u, v)
    nn = float(n @ n)
    scale = max(float(u @ u), float(v @ v), 1e-300)
    if nn <= (COLLINEAR_TOL ** 2) * scale * scale:
        raise ValueError("points are collinear")
    center = p1 + (np.cross(n, u) * float(v @ v) + np.cross(v, n) * float(u @ u)) / (2.0 * nn)
    axis = n / math.sqrt(nn)
    # orientation-free axis so that every permutation agrees
    k = int(np.argmax(np.abs(axis)))
    if axis[k] < 0:
        axis = -axis
    radius = float(np.mean([np.linalg.norm(p - center) for p in (p1, p2, p3)]))
    return Circle(center, radius, axis)


@dataclass
class Solid3D:
    vertices: np.ndarray  # (L, 3) as (x, y, depth)
    reconstructed: np.ndarray  # bool per vertex
    faces: list[FaceLoopSet]  # faces of the source drawing
    planes: list[PlaneParams]  # one per polygonized face
    circles: dict[int, Circle]  # source arc edge -> circle
    poly: Polygonized | None = None

    @property
    def unreconstructed(self) -> list[int]:
        return [int(i) for i in np.flatnonzero(~self.reconstructed)]


def lift_vertices(drawing: WireframeDrawing, planes: Sequence[PlaneParams],
                  faces: Sequence[FaceLoopSet]) -> tuple[np.ndarray, np.ndarray]:
    """Depth per vertex as the mean over incident faces; returns (depth, ok mask).

    Vertices on no face take the mean depth of already-lifted neighbours,
    repeated until nothing changes; the rest stay flagged.
    """
    nv = len(drawing.vertices)
    acc = np.zeros(nv)
    cnt = np.zeros(nv, dtype=int)
    for f, p in zip(faces, planes):
        for v in face_vertices(drawing, f):
            x, y = drawing.vertices[v]
            acc[v] += p.depth(float(x), float(y))
            cnt[v] += 1
    ok = cnt > 0
    z = np.where(ok, acc / np.maximum(cnt, 1), 0.0)
    nbrs: list[set[int]] = [set() for _ in range(nv)]
    for e in drawing.edges:
        nbrs[e.v0].add(e.v1)
        nbrs[e.v1].add(e.v0)
    while True:
        fill = {}
        for v in range(nv):
            if ok[v]:
                continue
            known = [z[u] for u in sorted(nbrs[v]) if ok[u]]
            if known:
                fill[v] = float(np.mean(known))
        if not fill:
            break
        for v, d in fill.items():
            z[v] = d
            ok[v] = True
    return z, ok


def fit_circles(poly: Polygonized, points3d: np.ndarray, ok: np.ndarray) -> dict[int, Circle]:
    out = {}
    for k, (a, m, b) in sorted(poly.registry.items()):
        if not (ok[a] and ok[m] and ok[b]):
            continue
        try:
            out[k] = fit_circle_3d(points3d[a], points3d[m], points3d[b])
        except ValueError:
            continue
    return out


# -- pipeline ---------------------------------------------------------------------

@dataclass
class Reconstruction:
    solid: Solid3D
    solution: L1Solution
    system: ConstraintSystem
    poly: Polygonized
    kept: list[int]  # indices of input faces that survived filtering
    direction_sets: list[frozenset[int]]
    flagged_directions: tuple[int, ...] = ()
    notes: list[str] = field(default_factory=list)

    @property
    def depths(self) -> np.ndarray:
        return self.solid.vertices[:, 2]

    def sidecar(self) -> dict:
        face_resid = np.zeros(self.system.num_faces)
        for row, r in zip(self.system.rows, self.solution.residuals):
            for i in row.faces:
                face_resid[i] += abs(float(r))
        return {
            "objective": self.solution.objective,
            "under_constrained": self.solution.under_constrained,
            "nullity": self.solution.nullity,
            "epsilon": self.system.epsilon,
            "kept_faces": list(self.kept),
            "planes": [dict(p.to_dict(), source_face=int(self.poly.parent[i]),
                            directions=sorted(self.direction_sets[self.poly.parent[i]]),
                            residual=float(face_resid[i]))
                       for i, p in enumerate(self.solution.planes)],
            "rows": {"P1": self.system.count("P1"), "P2": self.system.count("P2"),
                     "positivity": len(self.system.positivity)},
            "unreconstructed_vertices": self.solid.unreconstructed,
            "circles": {str(k): c.to_dict() for k, c in self.solid.circles.items()},
            "flagged_directions": list(self.flagged_directions),
        }


def reconstruct(drawing: WireframeDrawing, faces: Sequence[FaceLoopSet], directions=None,
                epsilon: float = EPSILON, tau_deg: float = TAU_DEG, cap_rule: bool = True) -> Reconstruction:
    directions = drawing.directions if directions is None else np.asarray(directions, dtype=float)
    if directions is None:
        raise ReconstructionError("dominant directions are required")
    faces = list(faces)
    assign = assign_face_directions(drawing, faces, directions, tau_deg)
    kept = [i for i, s in enumerate(assign.sets) if len(s) < 3]
    kfaces = [faces[i] for i in kept]
    sets = [assign.sets[i] for i in kept]
    if cap_rule:
        sets = apply_cap_rule(drawing, kfaces, sets)
    if not kfaces:
        raise ReconstructionError("no faces left to reconstruct")
    poly = polygonize_curved_faces(drawing, kfaces, tau_deg=tau_deg)
    psets = [sets[p] for p in poly.parent]
    system = build_constraints(poly.drawing, poly.faces, psets, directions, epsilon)
    sol = solve_l1(system)
    z, ok = lift_vertices(poly.drawing, sol.planes, poly.faces)
    pts = np.column_stack([poly.drawing.vertices, z])
    circles = fit_circles(poly, pts, ok)
    solid = Solid3D(pts, ok, kfaces, sol.planes, circles, poly)
    return Reconstruction(solid, sol, system, poly, kept, sets, assign.flagged)


def truth_points(drawing: WireframeDrawing, poly: Polygonized, truth: dict) -> np.ndarray:
    """Ground-truth (x, y, depth) for every vertex of a polygonized drawing."""
    depths = list(map(float, truth["depths"]))
    z = np.zeros(len(poly.drawing.vertices))
    z[:len(depths)] = depths
    sd = truth["sample_depths"]
    for k, (_, m, _) in poly.registry.items():
        z[m] = float(sd[k][poly.split_sample[k]])
    return np.column_stack([poly.drawing.vertices, z])


def depth_error(recovered: np.ndarray, truth: np.ndarray) -> float:
    """Largest depth mismatch after removing the best common offset (median)."""
    d = np.asarray(recovered, dtype=float) - np.asarray(truth, dtype=float)
    return float(np.abs(d - np.median(d)).max()) if d.size else 0.0

