import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import curved_quad, line
from wirefaces.baseline import run_baseline
from wirefaces.brep import FaceLoopSet, WireframeDrawing
from wirefaces.reconstruct import (
    PlaneParams,
    ReconstructionError,
    apply_cap_rule,
    arc_split_index,
    assign_face_directions,
    build_constraints,
    depth_error,
    filter_impossible_faces,
    fit_circle_3d,
    lift_vertices,
    polygonize_curved_faces,
    reconstruct,
    solve_l1,
    truth_points,
)
from wirefaces.synth import generate_shape, iter_shapes, truth_record

CUBE = generate_shape("box", 0, 0)


def square(directions=np.eye(3)):
    v = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]
    edges = tuple(line(i, (i + 1) % 4, v) for i in range(4))
    face = FaceLoopSet.make([[0, 2, 4, 6]])
    return WireframeDrawing(np.array(v), edges, (face,), directions)


def truth_planes(sample):
    """Least-squares plane of every polygonized ground-truth face."""
    d = sample.projection.drawing
    poly = polygonize_curved_faces(d, d.faces)
    pts = truth_points(d, poly, truth_record(sample))
    f = []
    for face in poly.faces:
        vs = sorted({poly.drawing.start(c) for c in face.coedges})
        A = np.column_stack([pts[vs, 0], pts[vs, 1], np.ones(len(vs))])
        f.extend(np.linalg.lstsq(A, -pts[vs, 2], rcond=None)[0])
    return poly, np.array(f)


def test_box_faces_align_with_two_directions():
    d = CUBE.projection.drawing
    sets = assign_face_directions(d, d.faces, d.directions).sets
    assert [len(s) for s in sets] == [2] * 6


def test_arc_only_loop_has_no_direction():
    s = generate_shape("cylinder", 0, 3).projection.drawing
    arcs = [f for f in s.faces if all(s.edges[c >> 1].kind == "arc" for c in f.coedges)]
    assert arcs
    for s_ in assign_face_directions(s, arcs, s.directions).sets:
        assert s_ == frozenset()


def test_merged_faces_span_three_directions_and_are_dropped():
    d = CUBE.projection.drawing
    # two adjacent faces merged into one loop by dropping their shared edge
    f0, f1 = d.faces[0], d.faces[1]
    shared = {c >> 1 for c in f0.coedges} & {c >> 1 for c in f1.coedges}
    merged = FaceLoopSet.make([[c for c in f0.coedges + f1.coedges if c >> 1 not in shared]])
    sets = assign_face_directions(d, [merged, f0], d.directions).sets
    assert len(sets[0]) == 3
    assert filter_impossible_faces([merged, f0], sets) == [f0]
    assert filter_impossible_faces([], []) == []


def test_view_parallel_direction_is_flagged():
    assert assign_face_directions(square(), square().faces, np.eye(3)).flagged == (2,)


def test_single_face_aligned_with_the_image_axes_is_flat():
    d = square()
    r = reconstruct(d, d.faces)
    p = r.solution.planes[0]
    assert p.a == 0.0 and p.b == 0.0
    np.testing.assert_allclose(r.depths, 1.0)


def test_cube_row_counts():
    d = CUBE.projection.drawing
    sets = assign_face_directions(d, d.faces, d.directions).sets
    sys_ = build_constraints(d, d.faces, sets, d.directions)
    assert sys_.count("P1") == 24
    assert sys_.count("P2") == 12
    assert len(sys_.positivity) == 24
    for row in sys_.rows:
        assert len(row.entries) == (6 if row.kind == "P1" else 2)


def test_vertex_on_three_faces_gives_three_pair_rows():
    d = CUBE.projection.drawing
    sets = assign_face_directions(d, d.faces, d.directions).sets
    sys_ = build_constraints(d, d.faces, sets, d.directions)
    per_vertex = {}
    for r in sys_.rows:
        if r.kind == "P1":
            per_vertex[r.vertex] = per_vertex.get(r.vertex, 0) + 1
    assert set(per_vertex.values()) == {3}


@pytest.mark.parametrize("family", ["box", "hole", "lprism", "cylinder", "boxbox"])
def test_rows_vanish_on_true_planes(family):
    for s in iter_shapes([family], 4, 8):
        d = s.projection.drawing
        poly, f = truth_planes(s)
        sets = assign_face_directions(d, d.faces, d.directions).sets
        sets = apply_cap_rule(d, d.faces, sets)
        sys_ = build_constraints(poly.drawing, poly.faces, [sets[p] for p in poly.parent])
        assert np.abs(sys_.residuals(f)).max() < 1e-9
        g = f.copy()
        g[2::3] += 0.37  # a common depth offset is invisible to every row
        np.testing.assert_allclose(sys_.residuals(g), sys_.residuals(f), atol=1e-12)


def test_ground_truth_faces_recover_depths():
    d = CUBE.projection.drawing
    r = reconstruct(d, d.faces)
    assert r.solution.objective < 1e-8
    assert depth_error(r.depths, CUBE.projection.depths) < 1e-6
    assert r.depths[:len(d.vertices)].min() == pytest.approx(1.0)


@pytest.mark.parametrize("family", ["box", "lprism"])
def test_deleting_one_face_keeps_depths(family):
    for s in iter_shapes([family], 3, 21):
        d = s.projection.drawing
        full = reconstruct(d, d.faces).depths
        for k in range(len(d.faces)):
            faces = d.faces[:k] + d.faces[k + 1:]
            r = reconstruct(d, faces)
            assert depth_error(r.depths, full) < 1e-6


def test_stochastic_optimality_audit():
    # wrong faces from the loop baseline make the system inconsistent
    rng = np.random.default_rng(0)
    audited = 0
    for s in iter_shapes(["hole", "boxbox"], 6, 2):
        d = s.projection.drawing
        try:
            r = reconstruct(d, run_baseline(d))
        except ReconstructionError:
            continue
        sys_ = r.system
        f = r.solution.vector
        best = float(np.abs(sys_.residuals(f)).sum())
        assert best == pytest.approx(r.solution.objective)
        for _ in range(100):
            g = f + rng.normal(0.0, 0.05, f.shape)
            depths = [-(g[3 * i] * x + g[3 * i + 1] * y + g[3 * i + 2]) for i, _, x, y in sys_.positivity]
            g[2::3] += min(depths) - 1.0  # keep it feasible
            assert best <= float(np.abs(sys_.residuals(g)).sum()) + 1e-9
        audited += 1
    assert audited >= 3


def test_no_faces_is_an_error():
    with pytest.raises(ReconstructionError):
        solve_l1(build_constraints(square(), [], []))


def test_lift_agreeing_and_disagreeing_faces():
    v = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (5.0, 5.0), (6.0, 5.0)]
    edges = (line(0, 1, v), line(1, 2, v), line(2, 0, v), line(3, 4, v))
    d = WireframeDrawing(np.array(v), edges)
    tri = FaceLoopSet.make([[0, 2, 4]])
    z, ok = lift_vertices(d, [PlaneParams(0, 0, -2.0), PlaneParams(0, 0, -2.0)], [tri, tri])
    np.testing.assert_allclose(z[:3], 2.0)
    z, ok = lift_vertices(d, [PlaneParams(0, 0, -1.0), PlaneParams(0, 0, -3.0)], [tri, tri])
    np.testing.assert_allclose(z[:3], 2.0)
    assert ok.tolist() == [True, True, True, False, False]


def test_lift_fills_dangling_vertices_from_neighbours():
    v = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (2.0, 0.0)]
    edges = (line(0, 1, v), line(1, 2, v), line(2, 0, v), line(1, 3, v))
    d = WireframeDrawing(np.array(v), edges)
    z, ok = lift_vertices(d, [PlaneParams(1.0, 0, -3.0)], [FaceLoopSet.make([[0, 2, 4]])])
    assert ok.all()
    assert z[3] == pytest.approx(z[1])


def test_equilateral_circle():
    c = fit_circle_3d((1, 0, 0), (-0.5, math.sqrt(3) / 2, 0), (-0.5, -math.sqrt(3) / 2, 0))
    np.testing.assert_allclose(c.center, 0, atol=1e-12)
    assert c.radius == pytest.approx(1.0)
    np.testing.assert_allclose(c.axis, (0, 0, 1), atol=1e-12)


def test_collinear_points_are_rejected():
    with pytest.raises(ValueError):
        fit_circle_3d((0, 0, 0), (1, 1, 1), (2, 2, 2))


coord = st.floats(-10, 10, allow_nan=False)


@given(st.lists(st.tuples(coord, coord, coord), min_size=3, max_size=3, unique=True))
def test_circle_passes_through_its_points_in_any_order(pts):
    pts = np.array(pts)
    n = np.cross(pts[1] - pts[0], pts[2] - pts[0])
    span = max(np.linalg.norm(pts[1] - pts[0]), np.linalg.norm(pts[2] - pts[0]))
    if np.linalg.norm(n) < 1e-3 * span * span or span < 1e-2:
        return
    base = fit_circle_3d(*pts)
    for p in pts:
        assert abs(np.linalg.norm(p - base.center) - base.radius) < 1e-9 * max(1.0, base.radius)
    for perm in itertools.permutations(range(3)):
        c = fit_circle_3d(*pts[list(perm)])
        np.testing.assert_allclose(c.center, base.center, atol=1e-9 * max(1.0, base.radius))
        np.testing.assert_allclose(c.axis, base.axis, atol=1e-9)


def test_curved_quad_gets_two_new_vertices():
    d = curved_quad()
    poly = polygonize_curved_faces(d, d.faces, strips=False)
    assert len(poly.drawing.vertices) == len(d.vertices) + 2
    assert all(e.kind == "line" for e in poly.drawing.edges)
    assert set(poly.registry) == {0, 2}
    assert len(poly.faces[0].coedges) == 6


def test_curved_quad_strips_follow_the_seams():
    d = curved_quad()
    poly = polygonize_curved_faces(d, d.faces)
    assert len(poly.faces) == 2
    assert poly.parent == [0, 0]
    mids = [poly.registry[k][1] for k in (0, 2)]
    np.testing.assert_allclose(poly.drawing.vertices[mids[0], 0], poly.drawing.vertices[mids[1], 0])


def test_arc_split_ties_go_to_smallest_x():
    t = np.linspace(math.pi, 2 * math.pi, 10)
    i = arc_split_index(np.column_stack([np.cos(t), np.sin(t)]))
    assert i == 4


def test_collinear_arc_is_not_split():
    s = np.column_stack([np.linspace(0, 1, 10), np.zeros(10)])
    assert arc_split_index(s) is None


def test_drawing_without_arcs_is_unchanged():
    d = CUBE.projection.drawing
    poly = polygonize_curved_faces(d, d.faces)
    np.testing.assert_array_equal(poly.drawing.vertices, d.vertices)
    assert poly.faces == list(d.faces)


def test_cylinders_become_polyhedral():
    for s in iter_shapes(["cylinder"], 3, 1):
        d = s.projection.drawing
        poly = polygonize_curved_faces(d, d.faces)
        assert all(e.kind == "line" for e in poly.drawing.edges)


def test_cylinder_radius_is_recovered():
    for s in iter_shapes(["cylinder"], 4, 6):
        d = s.projection.drawing
        r = reconstruct(d, d.faces)
        radius = s.solid.params["r"] * s.solid.params["scale"]
        assert r.solid.circles
        for c in r.solid.circles.values():
            assert abs(c.radius - radius) < 1e-3
