"""Topological baseline: least-cost closed loops by shortest-path search.

For a starting co-edge the true face is assumed to be the cheapest closed
loop through it, with cost the 2D length of the traversed edges.  The plain
search per co-edge is :func:`least_cost_loop`; :func:`run_baseline` runs it
from every co-edge, either independently or with exclusive co-edge ownership
(the default), and deduplicates the loops by edge set.
"""

from __future__ import annotations

import heapq
from typing import Iterable

from .brep import (
    FaceLoopSet,
    FaceType,
    WireframeDrawing,
    canonical_face_key,
    edge_polyline_length,
    mate,
)


def coedge_costs(drawing: WireframeDrawing) -> list[float]:
    lengths = [edge_polyline_length(drawing, k) for k in range(len(drawing.edges))]
    return [lengths[c >> 1] for c in range(drawing.num_coedges)]


def _search(drawing, start, costs, outgoing, blocked, forbidden):
    """Dijkstra over co-edge states; returns (cost, loop) or None."""
    target = drawing.start(start)
    if drawing.end(start) == target:
        return costs[start], [start]
    start_edge = start >> 1
    best = {start: costs[start]}
    prev = {start: None}
    heap = [(costs[start], start)]
    done = set()
    while heap:
        d, c = heapq.heappop(heap)
        if c in done:
            continue
        done.add(c)
        if c != start and drawing.end(c) == target:
            loop = []
            while c is not None:
                loop.append(c)
                c = prev[c]
            return d, loop[::-1]
        for nxt in outgoing[drawing.end(c)]:
            if nxt >> 1 == start_edge or nxt == mate(c) or nxt in blocked:
                continue
            if (c, nxt) in forbidden:
                continue
            nd = d + costs[nxt]
            if nd < best.get(nxt, float("inf")):
                best[nxt] = nd
                prev[nxt] = c
                heapq.heappush(heap, (nd, nxt))
    return None


def least_cost_loop(drawing: WireframeDrawing, start: int, *, blocked: Iterable[int] = (),
                    forbidden_turns: Iterable[tuple[int, int]] = (),
                    _costs=None, _outgoing=None) -> FaceLoopSet | None:
    """Cheapest closed loop that begins with ``start``.

    The loop never uses an edge twice; ``blocked`` co-edges and ``forbidden_turns``
    (ordered co-edge pairs) are excluded from the search.  Ties resolve toward
    the smallest co-edge id.  Returns None when no loop closes.
    """
    costs = _costs if _costs is not None else coedge_costs(drawing)
    outgoing = _outgoing if _outgoing is not None else drawing.outgoing()
    found = _search(drawing, start, costs, outgoing, set(blocked), set(forbidden_turns))
    if found is None:
        return None
    loop = found[1]
    if len({c >> 1 for c in loop}) != len(loop):
        return None
    return FaceLoopSet.make([loop], FaceType.OTHERS)


def loop_cost(drawing: WireframeDrawing, loop, costs=None) -> float:
    costs = costs if costs is not None else coedge_costs(drawing)
    return float(sum(costs[c] for c in loop))


def _independent(drawing, costs, outgoing):
    faces, seen = [], set()
    for c in range(drawing.num_coedges):
        f = least_cost_loop(drawing, c, _costs=costs, _outgoing=outgoing)
        if f is None:
            continue
        key = canonical_face_key(f)
        if key not in seen:
            seen.add(key)
            faces.append(f)
    return faces


def _exclusive(drawing, costs, outgoing):
    # The cheapest loop is accepted first.  Its co-edges become owned, and
    # walking any of its corners backwards is forbidden, so the mate of every
    # accepted co-edge has to close through a different face.  Later loops
    # start from mates of owned co-edges while any remain.
    assigned: set[int] = set()
    forbidden: set[tuple[int, int]] = set()
    keys: set[tuple[int, ...]] = set()
    faces = []
    cand = {}

    def refresh(c):
        f = least_cost_loop(drawing, c, blocked=assigned, forbidden_turns=forbidden,
                            _costs=costs, _outgoing=outgoing)
        cand[c] = None if f is None else (loop_cost(drawing, f.loops[0], costs), f)

    for c in range(drawing.num_coedges):
        refresh(c)
    while True:
        live = [(v[0], c) for c, v in cand.items() if v is not None and c not in assigned]
        if not live:
            break
        # grow across edges that already carry one face, so orientation propagates
        frontier = [item for item in live if mate(item[1]) in assigned]
        if frontier:
            live = frontier
        _, c = min(live)
        face = cand[c][1]
        loop = face.loops[0]
        key = canonical_face_key(face)
        if key in keys:
            cand[c] = None
            continue
        keys.add(key)
        faces.append(face)
        assigned.update(loop)
        turns = list(zip(loop, loop[1:] + loop[:1]))
        forbidden.update((mate(y), mate(x)) for x, y in turns)
        for d, v in list(cand.items()):
            if d in assigned:
                cand.pop(d)
                continue
            if v is None:
                continue
            other = v[1].loops[0]
            used = set(other)
            pairs = set(zip(other, other[1:] + other[:1]))
            if used & assigned or pairs & forbidden:
                refresh(d)
    return faces


def run_baseline(drawing: WireframeDrawing, exclusive: bool = True) -> list[FaceLoopSet]:
    """Faces found by least-cost loop search, deduplicated by edge set.

    ``exclusive=False`` runs every co-edge search independently.  With
    ``exclusive=True`` each co-edge belongs to at most one accepted loop.
    """
    costs = coedge_costs(drawing)
    outgoing = drawing.outgoing()
    if exclusive:
        return _exclusive(drawing, costs, outgoing)
    return _independent(drawing, costs, outgoing)
