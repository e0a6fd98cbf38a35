import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from wirefaces.experiment import truth_mesh
from wirefaces.mesh import (
    SEGMENTS_PER_TURN,
    assemble_mesh,
    read_obj,
    self_intersects,
    signed_area,
    triangulate_loops,
    write_obj,
)
from wirefaces.reconstruct import reconstruct
from wirefaces.synth import generate_shape, iter_shapes, truth_record


def tri_area(pts, tris):
    return sum(abs(signed_area(pts[list(t)])) for t in tris)


def test_quad_gives_two_triangles():
    pts, tris = triangulate_loops([np.array([(0, 0), (2, 0), (2, 1), (0, 1)], float)])
    assert len(tris) == 2
    assert tri_area(pts, tris) == pytest.approx(2.0)


def test_annulus_gives_eight_triangles():
    outer = np.array([(0, 0), (4, 0), (4, 4), (0, 4)], float)
    hole = np.array([(1, 1), (1, 3), (3, 3), (3, 1)], float)
    pts, tris = triangulate_loops([outer, hole])
    assert len(tris) == 8
    assert tri_area(pts, tris) == pytest.approx(16.0 - 4.0)


def test_clockwise_outer_and_counter_clockwise_hole_are_accepted():
    outer = np.array([(0, 0), (0, 4), (4, 4), (4, 0)], float)
    hole = np.array([(1, 1), (3, 1), (3, 3), (1, 3)], float)
    pts, tris = triangulate_loops([outer, hole])
    assert tri_area(pts, tris) == pytest.approx(12.0)


def test_concave_polygon():
    L = np.array([(0, 0), (3, 0), (3, 1), (1, 1), (1, 3), (0, 3)], float)
    pts, tris = triangulate_loops([L])
    assert len(tris) == 4
    assert tri_area(pts, tris) == pytest.approx(5.0)


@given(st.integers(3, 40), st.floats(0.2, 0.9), st.integers(0, 10**6))
def test_star_polygons_keep_their_area(n, inner, seed):
    rng = np.random.default_rng(seed)
    ang = np.sort(rng.uniform(0, 2 * np.pi, n))
    gaps = np.diff(np.append(ang, ang[0] + 2 * np.pi))
    # gaps below pi keep the origin inside, so the polygon is a simple star
    assume(gaps.min() > 1e-3 and gaps.max() < np.pi - 1e-3)
    r = np.where(np.arange(n) % 2, inner, 1.0)
    poly = np.column_stack([r * np.cos(ang), r * np.sin(ang)])
    assert not self_intersects([poly])
    pts, tris = triangulate_loops([poly])
    assert len(tris) == n - 2
    assert tri_area(pts, tris) == pytest.approx(abs(signed_area(poly)), rel=1e-9)


def test_bow_tie_is_self_intersecting():
    bow = np.array([(0, 0), (1, 1), (1, 0), (0, 1)], float)
    assert self_intersects([bow])
    assert not self_intersects([np.array([(0, 0), (1, 0), (1, 1), (0, 1)], float)])


def test_cube_mesh_is_closed():
    s = generate_shape("box", 0, 0)
    d = s.projection.drawing
    mesh = assemble_mesh(reconstruct(d, d.faces).solid, d)
    assert len(mesh.triangles) == 12
    assert mesh.is_closed()
    assert not mesh.skipped


@pytest.mark.parametrize("family", ["hole", "lprism", "cylinder", "boxbox"])
def test_generated_meshes_are_closed(family):
    for s in iter_shapes([family], 3, 12):
        d = s.projection.drawing
        mesh = truth_mesh(d, truth_record(s))
        assert mesh.is_closed()
        assert not mesh.skipped


def test_cylinder_area_matches_the_analytic_surface():
    s = next(iter_shapes(["cylinder"], 1, 0))
    d = s.projection.drawing
    mesh = assemble_mesh(reconstruct(d, d.faces).solid, d)
    p = s.solid.params
    r, h = p["r"] * p["scale"], p["h"] * p["scale"]
    # a 16-gon prism is what a re-tessellated cylinder should come to
    k = SEGMENTS_PER_TURN
    polygon = 0.5 * k * r * r * np.sin(2 * np.pi / k)
    side = k * 2 * r * np.sin(np.pi / k) * h
    assert mesh.area == pytest.approx(2 * polygon + side, rel=1e-6)


def test_obj_round_trip(tmp_path):
    s = generate_shape("hole", 0, 1)
    d = s.projection.drawing
    mesh = truth_mesh(d, truth_record(s))
    write_obj(mesh, tmp_path / "m.obj")
    back = read_obj(tmp_path / "m.obj")
    np.testing.assert_allclose(back.vertices[:, :2], mesh.vertices[:, :2], atol=1e-9)
    np.testing.assert_allclose(back.vertices[:, 2], -mesh.vertices[:, 2], atol=1e-9)
    np.testing.assert_array_equal(back.triangles, mesh.triangles)
