import hashlib
import json
import math
import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

from wirefaces.brep import K_SAMPLES, Edge, FaceLoopSet, FaceType, WireframeDrawing

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

CACHE_DIR = Path(os.environ.get("WIREFACES_TEST_CACHE", Path(__file__).parent / ".cache"))


def line(v0, v1, verts, k=K_SAMPLES):
    t = np.linspace(0.0, 1.0, k)[:, None]
    p, q = np.asarray(verts[v0], float), np.asarray(verts[v1], float)
    return Edge("line", v0, v1, (1 - t) * p + t * q)


def arc(v0, v1, center, radius, t0, t1, k=K_SAMPLES):
    t = np.linspace(t0, t1, k)
    s = np.column_stack([center[0] + radius * np.cos(t), center[1] + radius * np.sin(t)])
    return Edge("arc", v0, v1, s)


# Visible faces of a pentagonal prism whose top face has a round hole made of
# two arcs.  Labels are 1-based as in the usual presentation of this example;
# LABEL_EDGE maps e-labels to edge ids and LABEL_COEDGE maps c-labels to
# co-edge ids.
PRISM_VERTS = [
    (0.0, 2.0),   # 0 left top
    (2.0, 1.5),   # 1 front top
    (4.0, 2.0),   # 2 right top
    (3.2, 3.2),   # 3 back right
    (0.8, 3.2),   # 4 back left
    (0.0, 0.0),   # 5 left bottom
    (2.0, -0.5),  # 6 front bottom
    (4.0, 0.0),   # 7 right bottom
    (1.6, 2.5),   # 8 hole left
    (2.4, 2.5),   # 9 hole right
]
LABEL_EDGE = {i: i - 1 for i in range(1, 13)}
LABEL_COEDGE = {1: 0, 2: 6, 3: 15, 4: 5, 5: 4, 6: 16, 7: 20, 8: 8, 9: 2, 10: 10, 11: 12,
                12: 14, 13: 18, 14: 23, 15: 17}


def prism_with_hole() -> WireframeDrawing:
    v = PRISM_VERTS
    edges = (
        line(0, 5, v),    # e1
        line(4, 0, v),    # e2
        line(0, 1, v),    # e3
        line(5, 6, v),    # e4
        line(3, 4, v),    # e5
        arc(8, 9, (2.0, 2.5), 0.4, math.pi, 0.0),    # e6, upper
        arc(9, 8, (2.0, 2.5), 0.4, 0.0, -math.pi),   # e7, lower
        line(1, 6, v),    # e8
        line(1, 2, v),    # e9
        line(6, 7, v),    # e10
        line(2, 3, v),    # e11
        line(2, 7, v),    # e12
    )
    c = LABEL_COEDGE
    faces = (
        FaceLoopSet.make([[c[1], c[2], c[3], c[4]]], FaceType.PLANE),
        FaceLoopSet.make([[c[5], c[6], c[7], c[8], c[9]], [c[10], c[11]]], FaceType.PLANE),
        FaceLoopSet.make([[c[12], c[13], c[14], c[15]]], FaceType.PLANE),
    )
    return WireframeDrawing(np.array(v), edges, faces)


def curved_quad() -> WireframeDrawing:
    """A half-cylinder side seen from the front: two arcs joined by two seams."""
    verts = [(-1.0, 0.0), (1.0, 0.0), (1.0, 2.0), (-1.0, 2.0)]
    edges = (
        arc(0, 1, (0.0, 0.0), 1.0, math.pi, 2 * math.pi),  # bottom, sagging
        line(1, 2, verts),
        arc(2, 3, (0.0, 2.0), 1.0, 2 * math.pi, math.pi),  # top, sagging
        line(3, 0, verts),
    )
    face = FaceLoopSet.make([[0, 2, 4, 6]], FaceType.CYLINDER)
    return WireframeDrawing(np.array(verts), edges, (face,))


@pytest.fixture
def prism():
    return prism_with_hole()


def cache_key(**parts) -> str:
    return hashlib.sha256(json.dumps(parts, sort_keys=True).encode()).hexdigest()[:16]


@pytest.fixture(scope="session")
def cache_dir():
    CACHE_DIR.mkdir(parents=True, exist_ok=True)
    return CACHE_DIR


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
