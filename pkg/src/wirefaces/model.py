"""Pointer-style Transformer that grows a face from a starting co-edge.

The encoder reads every co-edge of a drawing (its sampled points, ordered
along the co-edge) plus three face-type tokens.  The decoder consumes the
contextual embeddings of the co-edges emitted so far and produces a pointer
vector; dot products against all encoder outputs give a distribution over
the next co-edge or the face type that ends the sequence.
"""

from __future__ import annotations

import io
import json
import logging
import math
import zipfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import autograd as ag
from .brep import FACE_TYPES, FaceType, WireframeDrawing
from .postprocess import RawPrediction
from .synth import Instance, make_instances

log = logging.getLogger(__name__)

NUM_TYPES = len(FACE_TYPES)
NEG_INF = -1e9


@dataclass(frozen=True)
class ModelConfig:
    d_model: int = 64
    layers_enc: int = 2
    layers_dec: int = 2
    heads: int = 4
    d_ff: int = 128
    K: int = 10
    max_decode_steps: int = 64
    max_coedges: int = 256

    def __post_init__(self):
        if self.d_model % self.heads:
            raise ValueError("d_model must be divisible by heads")
        if self.max_decode_steps < 38:
            raise ValueError("max_decode_steps must cover 37 co-edges plus a type token")

    @classmethod
    def preset(cls, name: str, **overrides) -> "ModelConfig":
        base = {
            "desk": dict(d_model=64, layers_enc=2, layers_dec=2, heads=4, d_ff=128),
            "full": dict(d_model=512, layers_enc=6, layers_dec=6, heads=8, d_ff=1024),
        }[name]
        base.update(overrides)
        return cls(**base)


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 2000
    lr: float = 1e-4
    seed: int = 0
    # a batch holds every instance of this many drawings ...
    drawings_per_step: int = 4
    # ... unless this is set, in which case it holds this many random instances
    instances_per_step: int | None = None
    warmup: int = 0
    clip_norm: float | None = None
    betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8

    @classmethod
    def preset(cls, name: str, **overrides) -> "TrainConfig":
        base = {
            "desk": dict(lr=1e-3, drawings_per_step=4, warmup=200, clip_norm=1.0),
            "full": dict(lr=1e-4, instances_per_step=4, steps=400_000),
        }[name]
        base.update(overrides)
        return cls(**base)


class TrainingDiverged(RuntimeError):
    pass


# -- parameters ---------------------------------------------------------

def _attn_shapes(prefix: str, d: int) -> dict:
    out = {}
    for n in "qkvo":
        out[f"{prefix}.W{n}"] = (d, d)
        out[f"{prefix}.b{n}"] = (d,)
    return out


def param_shapes(cfg: ModelConfig) -> dict[str, tuple]:
    d = cfg.d_model
    s = {
        "val.W1": (2 * cfg.K, d), "val.b1": (d,),
        "val.W2": (d, d), "val.b2": (d,),
        "type.emb": (NUM_TYPES, d),
        "enc.pos": (cfg.max_coedges + NUM_TYPES, d),
        "dec.pos": (cfg.max_decode_steps, d),
    }
    for i in range(cfg.layers_enc):
        p = f"enc.{i}"
        s.update({f"{p}.ln1.g": (d,), f"{p}.ln1.b": (d,), f"{p}.ln2.g": (d,), f"{p}.ln2.b": (d,)})
        s.update(_attn_shapes(f"{p}.attn", d))
        s.update({f"{p}.ff.W1": (d, cfg.d_ff), f"{p}.ff.b1": (cfg.d_ff,),
                  f"{p}.ff.W2": (cfg.d_ff, d), f"{p}.ff.b2": (d,)})
    s.update({"enc.ln.g": (d,), "enc.ln.b": (d,)})
    for i in range(cfg.layers_dec):
        p = f"dec.{i}"
        for j in (1, 2, 3):
            s.update({f"{p}.ln{j}.g": (d,), f"{p}.ln{j}.b": (d,)})
        s.update(_attn_shapes(f"{p}.self", d))
        s.update(_attn_shapes(f"{p}.cross", d))
        s.update({f"{p}.ff.W1": (d, cfg.d_ff), f"{p}.ff.b1": (cfg.d_ff,),
                  f"{p}.ff.W2": (cfg.d_ff, d), f"{p}.ff.b2": (d,)})
    s.update({"dec.ln.g": (d,), "dec.ln.b": (d,), "dec.out.W": (d, d)})
    return s


def init_params(cfg: ModelConfig, seed: int = 0) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(seed)
    depth = cfg.layers_enc + cfg.layers_dec
    params = {}
    for name, shape in param_shapes(cfg).items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf == "g":
            arr = np.ones(shape)
        elif len(shape) == 1:
            arr = np.zeros(shape)
        elif name in ("enc.pos", "dec.pos", "type.emb"):
            arr = rng.normal(0.0, 0.1, shape)
        elif name == "dec.out.W":
            arr = rng.normal(0.0, 1.0 / cfg.d_model, shape)
        else:
            std = 1.0 / math.sqrt(shape[0])
            if leaf in ("Wo", "W2") and not name.startswith("val"):
                std /= math.sqrt(2 * depth)
            arr = rng.normal(0.0, std, shape)
        params[name] = arr
    return params


# -- inputs -------------------------------------------------------------

def coedge_features(drawing: WireframeDrawing, K: int) -> np.ndarray:
    """Flattened co-edge points, (N, 2K), ordered along each co-edge."""
    if drawing.samples_per_edge != K:
        raise ValueError(f"drawing has {drawing.samples_per_edge} points per edge, model expects {K}")
    s = np.stack([e.samples for e in drawing.edges])  # (E, K, 2)
    both = np.stack([s, s[:, ::-1]], axis=1)  # forward then reverse
    return both.reshape(drawing.num_coedges, 2 * K)


def input_positions(drawing: WireframeDrawing) -> np.ndarray:
    """Rank of each co-edge by (start.x, start.y, end.x, end.y)."""
    n = drawing.num_coedges
    order = sorted(range(n), key=lambda c: (drawing.coedge_key(c), c))
    rank = np.empty(n, dtype=np.int64)
    rank[order] = np.arange(n)
    return rank


@dataclass
class Inputs:
    features: np.ndarray
    positions: np.ndarray

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @classmethod
    def of(cls, drawing: WireframeDrawing, cfg: ModelConfig) -> "Inputs":
        if drawing.num_coedges > cfg.max_coedges:
            raise ValueError("drawing has more co-edges than the model supports")
        return cls(coedge_features(drawing, cfg.K), input_positions(drawing))


def _tensors(params) -> dict[str, ag.Tensor]:
    return {k: v if isinstance(v, ag.Tensor) else ag.Tensor(v) for k, v in params.items()}


def embed_inputs(inputs: Inputs, P: dict, cfg: ModelConfig) -> ag.Tensor:
    """N co-edge embeddings followed by the 3 face-type tokens, (N + 3, d)."""
    h = ag.relu(ag.linear(ag.Tensor(inputs.features), P["val.W1"], P["val.b1"]))
    value = ag.linear(h, P["val.W2"], P["val.b2"])
    pos = ag.take(P["enc.pos"], inputs.positions)
    type_pos = ag.take(P["enc.pos"], np.arange(cfg.max_coedges, cfg.max_coedges + NUM_TYPES))
    return ag.concat([value + pos, P["type.emb"] + type_pos], axis=0)


# -- transformer blocks ---------------------------------------------------

def _split_heads(x: ag.Tensor, h: int) -> ag.Tensor:
    *lead, t, d = x.shape
    x = ag.reshape(x, (*lead, t, h, d // h))
    nd = len(lead) + 3
    axes = list(range(nd))
    axes[-3], axes[-2] = axes[-2], axes[-3]
    return ag.transpose(x, axes)


def _merge_heads(x: ag.Tensor) -> ag.Tensor:
    *lead, h, t, dh = x.shape
    nd = len(lead) + 3
    axes = list(range(nd))
    axes[-3], axes[-2] = axes[-2], axes[-3]
    x = ag.transpose(x, axes)
    return ag.reshape(x, (*lead, t, h * dh))


def attention(xq: ag.Tensor, xkv: ag.Tensor, P: dict, prefix: str, heads: int,
              mask: np.ndarray | None = None) -> ag.Tensor:
    d = xq.shape[-1]
    q = _split_heads(ag.linear(xq, P[f"{prefix}.Wq"], P[f"{prefix}.bq"]), heads)
    k = _split_heads(ag.linear(xkv, P[f"{prefix}.Wk"], P[f"{prefix}.bk"]), heads)
    v = _split_heads(ag.linear(xkv, P[f"{prefix}.Wv"], P[f"{prefix}.bv"]), heads)
    kt = ag.transpose(k, list(range(k.data.ndim - 2)) + [k.data.ndim - 1, k.data.ndim - 2])
    scores = ag.mul(ag.matmul(q, kt), 1.0 / math.sqrt(d // heads))
    if mask is not None:
        scores = scores + mask
    out = _merge_heads(ag.matmul(ag.softmax(scores), v))
    return ag.linear(out, P[f"{prefix}.Wo"], P[f"{prefix}.bo"])


def _ff(x, P, prefix):
    h = ag.relu(ag.linear(x, P[f"{prefix}.W1"], P[f"{prefix}.b1"]))
    return ag.linear(h, P[f"{prefix}.W2"], P[f"{prefix}.b2"])


def _ln(x, P, prefix):
    return ag.layer_norm(x, P[f"{prefix}.g"], P[f"{prefix}.b"])


def encode(emb: ag.Tensor, P: dict, cfg: ModelConfig) -> ag.Tensor:
    """Full self-attention over all tokens; returns contextual embeddings."""
    x = emb
    for i in range(cfg.layers_enc):
        p = f"enc.{i}"
        y = _ln(x, P, f"{p}.ln1")
        x = x + attention(y, y, P, f"{p}.attn", cfg.heads)
        x = x + _ff(_ln(x, P, f"{p}.ln2"), P, f"{p}.ff")
    return _ln(x, P, "enc.ln")


def causal_mask(t: int) -> np.ndarray:
    return np.triu(np.full((t, t), NEG_INF), k=1)


def decode(tokens: np.ndarray, w: ag.Tensor, P: dict, cfg: ModelConfig) -> ag.Tensor:
    """Pointer vectors for every prefix position, (B, T, d)."""
    tokens = np.asarray(tokens, dtype=np.int64)
    b, t = tokens.shape
    if t > cfg.max_decode_steps:
        raise ValueError("sequence longer than max_decode_steps")
    x = ag.take(w, tokens) + ag.take(P["dec.pos"], np.arange(t))
    mask = causal_mask(t)
    for i in range(cfg.layers_dec):
        p = f"dec.{i}"
        y = _ln(x, P, f"{p}.ln1")
        x = x + attention(y, y, P, f"{p}.self", cfg.heads, mask)
        x = x + attention(_ln(x, P, f"{p}.ln2"), w, P, f"{p}.cross", cfg.heads)
        x = x + _ff(_ln(x, P, f"{p}.ln3"), P, f"{p}.ff")
    return ag.linear(_ln(x, P, "dec.ln"), P["dec.out.W"])


def pointer_logits(u: ag.Tensor, w: ag.Tensor) -> ag.Tensor:
    return ag.matmul(u, ag.transpose(w, (1, 0)))


def softmax_np(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def pointer_distribution(u_t: np.ndarray, contextual: np.ndarray) -> np.ndarray:
    """softmax over k of u_t . w_k; entries are co-edges then the 3 types."""
    return softmax_np(np.asarray(contextual) @ np.asarray(u_t))


def contextual_embeddings(drawing: WireframeDrawing, params, cfg: ModelConfig,
                          inputs: Inputs | None = None) -> np.ndarray:
    P = _tensors(params)
    inputs = inputs or Inputs.of(drawing, cfg)
    return encode(embed_inputs(inputs, P, cfg), P, cfg).data


def decode_step(prefix: Sequence[int], contextual: np.ndarray, params, cfg: ModelConfig) -> np.ndarray:
    """Pointer vector after the given prefix (first element is the start co-edge)."""
    n = contextual.shape[0] - NUM_TYPES
    prefix = [int(c) for c in prefix]
    if not prefix:
        raise ValueError("prefix must hold the starting co-edge")
    if any(c >= n for c in prefix):
        raise ValueError("prefix contains a face-type token; the sequence has ended")
    P = _tensors(params)
    u = decode(np.array([prefix]), ag.Tensor(contextual), P, cfg)
    return u.data[0, -1]


# -- likelihood -------------------------------------------------------------

def _teacher_batch(n: int, instances: Sequence[Instance]):
    tmax = max(len(inst.target) for inst in instances)
    b = len(instances)
    tokens = np.zeros((b, tmax), dtype=np.int64)
    targets = np.zeros((b, tmax), dtype=np.int64)
    mask = np.zeros((b, tmax), dtype=bool)
    for i, inst in enumerate(instances):
        tgt = list(inst.target)
        if any(t < 0 or t >= n + NUM_TYPES for t in tgt):
            raise ValueError("target id out of range")
        inp = [inst.start] + tgt[:-1]
        if any(t >= n for t in inp):
            raise ValueError("face-type token before the end of a target")
        tokens[i, :len(inp)] = inp
        targets[i, :len(tgt)] = tgt
        mask[i, :len(tgt)] = True
    return tokens, targets, mask


def instances_loss(inputs: Inputs, instances: Sequence[Instance], P: dict, cfg: ModelConfig):
    """Teacher-forced loss of several instances of one drawing.

    Returns (loss tensor, correct-token count, token count).
    """
    w = encode(embed_inputs(inputs, P, cfg), P, cfg)
    tokens, targets, mask = _teacher_batch(inputs.n, instances)
    logits = pointer_logits(decode(tokens, w, P, cfg), w)
    loss, _ = ag.sequence_cross_entropy(logits, targets, mask)
    pred = logits.data.argmax(axis=-1)
    correct = int(((pred == targets) & mask).sum())
    return loss, correct, int(mask.sum())


def sequence_nll(drawing: WireframeDrawing, instance: Instance | Sequence[Instance], params,
                 cfg: ModelConfig) -> float:
    """Mean over target positions of -log p(target) under teacher forcing."""
    insts = [instance] if isinstance(instance, Instance) else list(instance)
    loss, _, _ = instances_loss(Inputs.of(drawing, cfg), insts, _tensors(params), cfg)
    return float(loss.data)


def loss_and_grads(batch, params: dict[str, np.ndarray], cfg: ModelConfig):
    """Loss averaged over all instances in ``batch`` and its gradient.

    ``batch`` is a list of (Inputs, instances) groups.
    """
    P = {k: ag.param(v) for k, v in params.items()}
    total = sum(len(insts) for _, insts in batch)
    loss_val, correct, count = 0.0, 0, 0
    for inputs, insts in batch:
        loss, c, n = instances_loss(inputs, insts, P, cfg)
        scaled = ag.mul(loss, len(insts) / total)
        ag.backward(scaled)
        loss_val += float(scaled.data)
        correct += c
        count += n
    grads = {k: (t.grad if t.grad is not None else np.zeros_like(t.data)) for k, t in P.items()}
    return loss_val, grads, correct / max(count, 1)


# -- optimisation -----------------------------------------------------------

@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0


def adam_step(params, grads, state: AdamState, lr, betas=(0.9, 0.999), eps=1e-8):
    b1, b2 = betas
    state.t += 1
    c1 = 1 - b1 ** state.t
    c2 = 1 - b2 ** state.t
    for k, g in grads.items():
        m = state.m[k] = b1 * state.m[k] + (1 - b1) * g
        v = state.v[k] = b2 * state.v[k] + (1 - b2) * g * g
        params[k] = params[k] - lr * (m / c1) / (np.sqrt(v / c2) + eps)


@dataclass
class TrainResult:
    params: dict[str, np.ndarray]
    config: ModelConfig
    train_config: TrainConfig
    history: list[dict] = field(default_factory=list)

    @property
    def final_loss(self) -> float:
        return self.history[-1]["loss"] if self.history else float("nan")


@dataclass
class Example:
    inputs: Inputs
    instances: list[Instance]


def prepare(drawings: Sequence[WireframeDrawing], cfg: ModelConfig) -> list[Example]:
    return [Example(Inputs.of(d, cfg), make_instances(d)) for d in drawings]


def _sample_batch(examples: list[Example], tc: TrainConfig, rng: np.random.Generator):
    if tc.instances_per_step:
        groups: dict[int, list[Instance]] = {}
        for _ in range(tc.instances_per_step):
            i = int(rng.integers(len(examples)))
            ex = examples[i]
            groups.setdefault(i, []).append(ex.instances[int(rng.integers(len(ex.instances)))])
        return [(examples[i].inputs, insts) for i, insts in sorted(groups.items())]
    k = min(tc.drawings_per_step, len(examples))
    idx = rng.choice(len(examples), size=k, replace=False)
    return [(examples[int(i)].inputs, examples[int(i)].instances) for i in sorted(idx)]


def train(drawings: Sequence[WireframeDrawing], cfg: ModelConfig, tc: TrainConfig,
          params: dict | None = None, log_every: int = 100,
          callback: Callable[[int, dict, dict], bool] | None = None) -> TrainResult:
    """Maximum-likelihood training with Adam under teacher forcing.

    ``callback(step, record, params)`` may return True to stop early.
    """
    if not drawings:
        raise ValueError("empty training corpus")
    examples = prepare(drawings, cfg)
    params = {k: v.copy() for k, v in (params or init_params(cfg, tc.seed)).items()}
    state = AdamState({k: np.zeros_like(v) for k, v in params.items()},
                      {k: np.zeros_like(v) for k, v in params.items()})
    rng = np.random.default_rng([tc.seed, 1])
    result = TrainResult(params, cfg, tc)
    for step in range(1, tc.steps + 1):
        batch = _sample_batch(examples, tc, rng)
        loss, grads, acc = loss_and_grads(batch, params, cfg)
        if not math.isfinite(loss):
            raise TrainingDiverged(f"loss became {loss} at step {step}")
        if tc.clip_norm:
            norm = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
            if norm > tc.clip_norm:
                grads = {k: g * (tc.clip_norm / norm) for k, g in grads.items()}
        lr = tc.lr * min(1.0, step / tc.warmup) if tc.warmup else tc.lr
        adam_step(params, grads, state, lr, tc.betas, tc.adam_eps)
        record = {"step": step, "loss": loss, "acc": acc}
        result.history.append(record)
        if log_every and step % log_every == 0:
            log.info("step %d loss %.4f acc %.4f", step, loss, acc)
        if callback is not None and callback(step, record, params):
            break
    result.params = params
    return result


def teacher_forced_accuracy(drawings: Sequence[WireframeDrawing], params, cfg: ModelConfig) -> float:
    P = _tensors(params)
    correct = count = 0
    for ex in prepare(drawings, cfg):
        _, c, n = instances_loss(ex.inputs, ex.instances, P, cfg)
        correct += c
        count += n
    return correct / max(count, 1)


# -- inference ----------------------------------------------------------------

def predict_faces(drawing: WireframeDrawing, params, cfg: ModelConfig,
                  starts: Sequence[int] | None = None) -> list[RawPrediction]:
    """Greedy decoding from every co-edge (or the given ``starts``)."""
    P = _tensors(params)
    inputs = Inputs.of(drawing, cfg)
    n = inputs.n
    w = encode(embed_inputs(inputs, P, cfg), P, cfg)
    starts = list(range(n)) if starts is None else [int(s) for s in starts]
    seqs = [[s] for s in starts]
    types: list[FaceType | None] = [None] * len(starts)
    active = list(range(len(starts)))
    while active:
        t = len(seqs[active[0]])
        if t >= cfg.max_decode_steps:
            break
        tokens = np.array([seqs[i] for i in active])
        u = decode(tokens, w, P, cfg).data[:, -1]
        nxt = (u @ w.data.T).argmax(axis=-1)
        still = []
        for i, k in zip(active, nxt):
            k = int(k)
            if k >= n:
                types[i] = FACE_TYPES[k - n]
            else:
                seqs[i].append(k)
                still.append(i)
        active = still
    return [RawPrediction(s, seq[1:], ft, ft is not None)
            for s, seq, ft in zip(starts, seqs, types)]


# -- checkpoints ----------------------------------------------------------

def save_checkpoint(path, params: dict, cfg: ModelConfig, seed: int, iterations: int,
                    extra: dict | None = None) -> None:
    meta = {"config": asdict(cfg), "seed": int(seed), "iterations": int(iterations),
            "format": "wirefaces.checkpoint/1", **(extra or {})}
    arrays = {"__meta__": np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)}
    arrays.update((f"param/{k}", np.ascontiguousarray(v, dtype=np.float64)) for k, v in sorted(params.items()))
    # an npz archive with fixed timestamps, so equal checkpoints are equal bytes
    with zipfile.ZipFile(path, "w", zipfile.ZIP_STORED) as zf:
        for name, arr in arrays.items():
            buf = io.BytesIO()
            np.lib.format.write_array(buf, arr, allow_pickle=False)
            zf.writestr(zipfile.ZipInfo(name + ".npy", date_time=(1980, 1, 1, 0, 0, 0)), buf.getvalue())


def load_checkpoint(path):
    """Returns (params, config, meta)."""
    with np.load(Path(path)) as z:
        meta = json.loads(bytes(z["__meta__"]).decode())
        params = {k[len("param/"):]: z[k].copy() for k in z.files if k.startswith("param/")}
    cfg = ModelConfig(**meta["config"])
    return params, cfg, meta
