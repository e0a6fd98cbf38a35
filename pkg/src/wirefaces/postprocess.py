"""Turn per-co-edge predictions into a deduplicated face set.

Every starting co-edge yields one raw prediction, so each true face is
normally predicted once per co-edge it owns.  Invalid predictions are
dropped, the rest are grouped by edge set, and each group becomes one face
whose type is decided by vote.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

from .brep import (
    FACE_TYPES,
    FaceLoopSet,
    FaceType,
    WireframeDrawing,
    canonical_face_key,
    chain_loops,
    has_mate_pair,
)


@dataclass(frozen=True)
class RawPrediction:
    start: int
    sequence: tuple[int, ...]  # emitted co-edges, start excluded
    face_type: FaceType | None
    terminated: bool

    def __init__(self, start, sequence, face_type, terminated):
        object.__setattr__(self, "start", int(start))
        object.__setattr__(self, "sequence", tuple(int(c) for c in sequence))
        object.__setattr__(self, "face_type", None if face_type is None else FaceType(face_type))
        object.__setattr__(self, "terminated", bool(terminated))

    @property
    def coedges(self) -> tuple[int, ...]:
        return (self.start, *self.sequence)

    def to_dict(self) -> dict:
        return {"start": self.start, "sequence": list(self.sequence),
                "type": None if self.face_type is None else self.face_type.value,
                "terminated": self.terminated}

    @classmethod
    def from_dict(cls, d: dict) -> "RawPrediction":
        return cls(d["start"], d["sequence"], d.get("type"), d["terminated"])


@dataclass(frozen=True)
class VotedFace:
    face: FaceLoopSet
    votes: dict[FaceType, int]

    def to_dict(self) -> dict:
        return {"loops": [list(loop) for loop in self.face.loops],
                "type": self.face.face_type.value,
                "votes": {t.value: self.votes.get(t, 0) for t in FACE_TYPES}}


def filter_invalid(drawing: WireframeDrawing, preds: Iterable[RawPrediction]) -> list[RawPrediction]:
    """Keep terminated, closed predictions that never use both co-edges of an edge."""
    out = []
    for p in preds:
        if not p.terminated or p.face_type is None:
            continue
        cs = p.coedges
        if has_mate_pair(cs) or chain_loops(drawing, cs) is None:
            continue
        out.append(p)
    return out


def modal_type(types: Iterable[FaceType]) -> tuple[FaceType, dict[FaceType, int]]:
    counts = Counter(FaceType(t) for t in types)
    best = max(FACE_TYPES, key=lambda t: (counts[t], -t.index))
    return best, {t: counts[t] for t in FACE_TYPES}


def dedup_and_vote(drawing: WireframeDrawing, preds: Sequence[RawPrediction]) -> list[VotedFace]:
    """One face per distinct edge set, in order of first appearance.

    Loops come from the first prediction of each group; its emitted order is
    followed where it chains and vertex chaining takes over elsewhere.
    """
    groups: dict[tuple[int, ...], list[RawPrediction]] = {}
    for p in preds:
        groups.setdefault(canonical_face_key(p.coedges), []).append(p)
    out = []
    for members in groups.values():
        loops = chain_loops(drawing, members[0].coedges)
        if loops is None:
            continue
        ftype, votes = modal_type(p.face_type for p in members)
        out.append(VotedFace(FaceLoopSet.make(loops, ftype), votes))
    return out


def postprocess(drawing: WireframeDrawing, preds: Sequence[RawPrediction]) -> list[VotedFace]:
    return dedup_and_vote(drawing, filter_invalid(drawing, preds))


def faces_as_predictions(faces: Iterable[FaceLoopSet]) -> list[RawPrediction]:
    """Re-express faces as raw predictions (one per face, from its first co-edge)."""
    out = []
    for f in faces:
        cs = f.coedges
        out.append(RawPrediction(cs[0], cs[1:], f.face_type, True))
    return out


# -- prediction files --------------------------------------------------------

def prediction_dict(faces: Iterable[VotedFace | FaceLoopSet]) -> dict:
    items = []
    for f in faces:
        if isinstance(f, FaceLoopSet):
            f = VotedFace(f, {f.face_type: 1})
        items.append(f.to_dict())
    return {"faces": items}


def dump_predictions(faces, path) -> None:
    with open(path, "w") as fh:
        json.dump(prediction_dict(faces), fh, sort_keys=True, indent=1)


def load_predictions(path) -> list[FaceLoopSet]:
    with open(path) as fh:
        data = json.load(fh)
    return [FaceLoopSet.make(f["loops"], f.get("type", "OTHERS")) for f in data["faces"]]


def raw_dict(preds: Iterable[RawPrediction]) -> dict:
    return {"predictions": [p.to_dict() for p in preds]}


def load_raw(path) -> list[RawPrediction]:
    with open(path) as fh:
        return [RawPrediction.from_dict(d) for d in json.load(fh)["predictions"]]
