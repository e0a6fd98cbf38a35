"""SVG rendering of line drawings, hidden lines dashed when depths are known."""

from __future__ import annotations

import numpy as np

from .brep import WireframeDrawing
from .mesh import TriangleMesh

DEPTH_TOL = 1e-6


def hidden_mask(points: np.ndarray, depths: np.ndarray, mesh: TriangleMesh, margin: float = 1e-7) -> np.ndarray:
    """True where a 2D point with the given depth lies behind some triangle."""
    if len(mesh.triangles) == 0 or len(points) == 0:
        return np.zeros(len(points), dtype=bool)
    V = mesh.vertices
    a, b, c = (V[mesh.triangles[:, i]] for i in range(3))
    p = points[:, None, :]
    v0, v1 = b[None, :, :2] - a[None, :, :2], c[None, :, :2] - a[None, :, :2]
    v2 = p - a[None, :, :2]
    den = v0[..., 0] * v1[..., 1] - v1[..., 0] * v0[..., 1]
    ok = np.abs(den) > 1e-14
    den = np.where(ok, den, 1.0)
    u = (v2[..., 0] * v1[..., 1] - v1[..., 0] * v2[..., 1]) / den
    v = (v0[..., 0] * v2[..., 1] - v2[..., 0] * v0[..., 1]) / den
    inside = ok & (u > margin) & (v > margin) & (u + v < 1 - margin)
    z = a[None, :, 2] + u * (b[None, :, 2] - a[None, :, 2]) + v * (c[None, :, 2] - a[None, :, 2])
    return np.any(inside & (z < depths[:, None] - DEPTH_TOL), axis=1)


def render_svg(drawing: WireframeDrawing, sample_depths=None, mesh: TriangleMesh | None = None,
               size: int = 512, stroke: float = 1.5) -> str:
    """SVG of the drawing; segments behind the mesh are dashed.

    ``sample_depths`` holds the depth of every edge sample, (E, K), in the
    same frame as ``mesh``.  Without both, every line is drawn solid.
    """
    pts = np.concatenate([e.samples for e in drawing.edges]) if drawing.edges else np.zeros((1, 2))
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = float(max(hi - lo)) or 1.0
    pad = 0.05 * span
    s = size / (span + 2 * pad)

    def xy(p):
        return (p[0] - lo[0] + pad) * s, (hi[1] - p[1] + pad) * s

    W = (hi[0] - lo[0] + 2 * pad) * s
    H = (hi[1] - lo[1] + 2 * pad) * s
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W:.1f}" height="{H:.1f}" '
           f'viewBox="0 0 {W:.1f} {H:.1f}">', f'<rect width="{W:.1f}" height="{H:.1f}" fill="white"/>']
    for k, e in enumerate(drawing.edges):
        smp = e.samples
        hidden = np.zeros(len(smp) - 1, dtype=bool)
        if sample_depths is not None and mesh is not None:
            d = np.asarray(sample_depths[k], dtype=float)
            mid = 0.5 * (smp[1:] + smp[:-1])
            hidden = hidden_mask(mid, 0.5 * (d[1:] + d[:-1]), mesh)
        # merge consecutive segments with equal visibility into one polyline
        start = 0
        for i in range(1, len(hidden) + 1):
            if i == len(hidden) or hidden[i] != hidden[start]:
                seg = " ".join("%.2f,%.2f" % xy(p) for p in smp[start:i + 1])
                dash = ' stroke-dasharray="4 3" stroke="#888"' if hidden[start] else ' stroke="black"'
                out.append(f'<polyline points="{seg}" fill="none" stroke-width="{stroke}"{dash} '
                           f'data-edge="{k}"/>')
                start = i
    out.append("</svg>")
    return "\n".join(out) + "\n"
