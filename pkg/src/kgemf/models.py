"""Interaction models behind one scoring API with sparse analytic gradients.

Supported kinds: transe, distmult, complex, rotate, simple, transh. All models
return scores where higher means more plausible (distance models return the
negated distance). Complex-valued tables store each number as a real pair:
the first ``dim`` columns are real parts, the last ``dim`` are imaginary
parts. RotatE relations are stored as phases in [-pi, pi).
"""
from __future__ import annotations

import io
import json
from dataclasses import dataclass

import numpy as np

from .errors import IdOutOfRange, InverseNotAvailable, NonFiniteUpstream

MODEL_KINDS = ("transe", "distmult", "complex", "rotate", "simple", "transh")

# table name -> (is_entity_table, width multiplier relative to dim)
_TABLE_LAYOUT = {
    "transe": {"entity": (True, 1), "relation": (False, 1)},
    "distmult": {"entity": (True, 1), "relation": (False, 1)},
    "complex": {"entity": (True, 2), "relation": (False, 2)},
    "rotate": {"entity": (True, 2), "relation": (False, 1)},
    "simple": {
        "entity_head": (True, 1),
        "entity_tail": (True, 1),
        "relation": (False, 1),
        "relation_inverse": (False, 1),
    },
    "transh": {"entity": (True, 1), "relation": (False, 1), "normal": (False, 1)},
}


class Gradients:
    """Sparse per-row gradient accumulator: (table name, row index) -> vector."""

    def __init__(self):
        self.data: dict[tuple[str, int], np.ndarray] = {}

    def add(self, table: str, row: int, vec: np.ndarray) -> None:
        key = (table, int(row))
        if key in self.data:
            self.data[key] = self.data[key] + vec
        else:
            self.data[key] = np.array(vec, dtype=np.float64)

    def merge(self, other: "Gradients") -> None:
        for (table, row), vec in other.data.items():
            self.add(table, row, vec)

    def scale(self, factor: float) -> "Gradients":
        out = Gradients()
        for key, vec in self.data.items():
            out.data[key] = vec * factor
        return out

    def items(self):
        return self.data.items()

    def __len__(self) -> int:
        return len(self.data)

    def __contains__(self, key) -> bool:
        return key in self.data


@dataclass
class ModelParams:
    kind: str
    dim: int
    num_entities: int
    num_relations: int  # post-inverse count when inverse_relations is set
    tables: dict[str, np.ndarray]
    inverse_relations: bool = False
    num_relations_base: int = 0
    p_norm: int = 2

    def __post_init__(self):
        if self.num_relations_base == 0:
            self.num_relations_base = (
                self.num_relations // 2 if self.inverse_relations else self.num_relations
            )

    def copy(self) -> "ModelParams":
        return ModelParams(
            kind=self.kind,
            dim=self.dim,
            num_entities=self.num_entities,
            num_relations=self.num_relations,
            tables={k: v.copy() for k, v in self.tables.items()},
            inverse_relations=self.inverse_relations,
            num_relations_base=self.num_relations_base,
            p_norm=self.p_norm,
        )


def init_model(
    kind: str,
    num_entities: int,
    num_relations: int,
    dim: int,
    seed: int,
    scheme: str = "uniform_xavier",
    inverse_relations: bool = False,
    p_norm: int = 2,
) -> ModelParams:
    """Seeded parameter initialization.

    RotatE relation phases are drawn uniform in [-pi, pi); TransH hyperplane
    normals are unit-normalized.
    """
    if kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {kind!r}")
    if dim < 1 or num_entities < 1 or num_relations < 1:
        raise ValueError("dim and entity/relation counts must be >= 1")
    if scheme not in ("uniform_xavier", "normal_xavier"):
        raise ValueError(f"unknown init scheme {scheme!r}")
    if p_norm not in (1, 2):
        raise ValueError("p_norm must be 1 or 2")

    rng = np.random.Generator(np.random.PCG64(seed))
    tables: dict[str, np.ndarray] = {}
    for name, (is_entity, mult) in _TABLE_LAYOUT[kind].items():
        rows = num_entities if is_entity else num_relations
        width = dim * mult
        if kind == "rotate" and name == "relation":
            tables[name] = rng.uniform(-np.pi, np.pi, size=(rows, width))
        elif scheme == "uniform_xavier":
            bound = np.sqrt(6.0 / (2 * width))
            tables[name] = rng.uniform(-bound, bound, size=(rows, width))
        else:
            std = np.sqrt(2.0 / (2 * width))
            tables[name] = rng.normal(0.0, std, size=(rows, width))

    if kind == "transh":
        norms = np.linalg.norm(tables["normal"], axis=1, keepdims=True)
        tables["normal"] = tables["normal"] / norms

    return ModelParams(
        kind=kind,
        dim=dim,
        num_entities=num_entities,
        num_relations=num_relations,
        tables=tables,
        inverse_relations=inverse_relations,
        p_norm=p_norm,
    )


def _check_ids(params: ModelParams, hs, rs, ts) -> None:
    for arr, bound, what in (
        (hs, params.num_entities, "head"),
        (rs, params.num_relations, "relation"),
        (ts, params.num_entities, "tail"),
    ):
        a = np.asarray(arr)
        if a.size and (a.min() < 0 or a.max() >= bound):
            raise IdOutOfRange(f"{what} id out of range [0, {bound})")


def _batch_arrays(batch):
    arr = np.asarray([(h, r, t) for h, r, t in batch], dtype=np.int64).reshape(-1, 3)
    return arr[:, 0], arr[:, 1], arr[:, 2]


def _split_complex(x: np.ndarray, dim: int):
    return x[:, :dim], x[:, dim:]


def score_hrt(params: ModelParams, batch) -> np.ndarray:
    """Score a batch of (h, r, t) triples; returns one f64 score per triple."""
    if len(batch) == 0:
        return np.empty(0, dtype=np.float64)
    hs, rs, ts = _batch_arrays(batch)
    _check_ids(params, hs, rs, ts)
    return _score(params, hs, rs, ts)


def _score(params: ModelParams, hs, rs, ts) -> np.ndarray:
    kind, d = params.kind, params.dim
    tb = params.tables

    if kind == "transe":
        diff = tb["entity"][hs] + tb["relation"][rs] - tb["entity"][ts]
        if params.p_norm == 1:
            return -np.abs(diff).sum(axis=1)
        return -np.sqrt((diff * diff).sum(axis=1))

    if kind == "distmult":
        return (tb["entity"][hs] * tb["relation"][rs] * tb["entity"][ts]).sum(axis=1)

    if kind == "complex":
        hr, hi = _split_complex(tb["entity"][hs], d)
        rr, ri = _split_complex(tb["relation"][rs], d)
        tr, ti = _split_complex(tb["entity"][ts], d)
        # Re(<h, r, conj(t)>)
        return (tr * (hr * rr - hi * ri) + ti * (hr * ri + hi * rr)).sum(axis=1)

    if kind == "rotate":
        hr, hi = _split_complex(tb["entity"][hs], d)
        tr, ti = _split_complex(tb["entity"][ts], d)
        theta = tb["relation"][rs]
        cos, sin = np.cos(theta), np.sin(theta)
        dre = hr * cos - hi * sin - tr
        dim_ = hr * sin + hi * cos - ti
        return -np.sqrt((dre * dre + dim_ * dim_).sum(axis=1))

    if kind == "simple":
        fwd = (tb["entity_head"][hs] * tb["relation"][rs] * tb["entity_tail"][ts]).sum(axis=1)
        bwd = (tb["entity_head"][ts] * tb["relation_inverse"][rs] * tb["entity_tail"][hs]).sum(axis=1)
        return 0.5 * (fwd + bwd)

    if kind == "transh":
        h, t = tb["entity"][hs], tb["entity"][ts]
        dr, w = tb["relation"][rs], tb["normal"][rs]
        h_proj = h - (h * w).sum(axis=1, keepdims=True) * w
        t_proj = t - (t * w).sum(axis=1, keepdims=True) * w
        u = h_proj + dr - t_proj
        return -(u * u).sum(axis=1)

    raise ValueError(f"unknown model kind {kind!r}")


def score_all_tails(params: ModelParams, pairs) -> np.ndarray:
    """Score every entity as tail for each (h, r) pair; shape (len(pairs), |E|)."""
    n_pairs = len(pairs)
    ne = params.num_entities
    if n_pairs == 0:
        return np.empty((0, ne), dtype=np.float64)
    pair_arr = np.asarray([(h, r) for h, r in pairs], dtype=np.int64)
    hs = np.repeat(pair_arr[:, 0], ne)
    rs = np.repeat(pair_arr[:, 1], ne)
    ts = np.tile(np.arange(ne, dtype=np.int64), n_pairs)
    _check_ids(params, hs, rs, ts)
    return _score(params, hs, rs, ts).reshape(n_pairs, ne)


def score_all_heads(params: ModelParams, pairs) -> np.ndarray:
    """Score every entity as head for each (r, t) pair.

    With inverse relations enabled this delegates to score_all_tails on the
    inverted pair (t, r + |R|_base), which is the trained direction.
    """
    ne = params.num_entities
    if len(pairs) == 0:
        return np.empty((0, ne), dtype=np.float64)
    pair_arr = np.asarray([(r, t) for r, t in pairs], dtype=np.int64)
    if params.inverse_relations:
        if pair_arr[:, 0].max() >= params.num_relations_base:
            raise InverseNotAvailable("relation id already lies in the inverse block")
        inv_pairs = np.stack([pair_arr[:, 1], pair_arr[:, 0] + params.num_relations_base], axis=1)
        return score_all_tails(params, inv_pairs)
    rs = np.repeat(pair_arr[:, 0], ne)
    ts = np.repeat(pair_arr[:, 1], ne)
    hs = np.tile(np.arange(ne, dtype=np.int64), len(pairs))
    _check_ids(params, hs, rs, ts)
    return _score(params, hs, rs, ts).reshape(len(pairs), ne)


def score_grad(params: ModelParams, batch, upstream) -> Gradients:
    """Chain-rule gradients: sum_j upstream_j * d f(h_j, r_j, t_j) / d theta.

    Only rows touched by the batch appear in the result; repeated rows
    accumulate additively.
    """
    up = np.asarray(upstream, dtype=np.float64)
    if up.shape != (len(batch),):
        raise ValueError("upstream must have one value per triple")
    if not np.all(np.isfinite(up)):
        raise NonFiniteUpstream("non-finite upstream gradient")
    grads = Gradients()
    if len(batch) == 0:
        return grads
    hs, rs, ts = _batch_arrays(batch)
    _check_ids(params, hs, rs, ts)

    kind, d = params.kind, params.dim
    tb = params.tables
    u = up[:, None]

    if kind == "transe":
        diff = tb["entity"][hs] + tb["relation"][rs] - tb["entity"][ts]
        if params.p_norm == 1:
            g = -np.sign(diff)
        else:
            norm = np.sqrt((diff * diff).sum(axis=1, keepdims=True))
            with np.errstate(invalid="ignore", divide="ignore"):
                g = np.where(norm > 0, -diff / norm, 0.0)
        _scatter(grads, "entity", hs, u * g)
        _scatter(grads, "relation", rs, u * g)
        _scatter(grads, "entity", ts, -u * g)
        return grads

    if kind == "distmult":
        h, r, t = tb["entity"][hs], tb["relation"][rs], tb["entity"][ts]
        _scatter(grads, "entity", hs, u * r * t)
        _scatter(grads, "relation", rs, u * h * t)
        _scatter(grads, "entity", ts, u * h * r)
        return grads

    if kind == "complex":
        hr, hi = _split_complex(tb["entity"][hs], d)
        rr, ri = _split_complex(tb["relation"][rs], d)
        tr, ti = _split_complex(tb["entity"][ts], d)
        # f = sum tr*(hr*rr - hi*ri) + ti*(hr*ri + hi*rr)
        g_hr = tr * rr + ti * ri
        g_hi = -tr * ri + ti * rr
        g_rr = tr * hr + ti * hi
        g_ri = -tr * hi + ti * hr
        g_tr = hr * rr - hi * ri
        g_ti = hr * ri + hi * rr
        _scatter(grads, "entity", hs, u * np.concatenate([g_hr, g_hi], axis=1))
        _scatter(grads, "relation", rs, u * np.concatenate([g_rr, g_ri], axis=1))
        _scatter(grads, "entity", ts, u * np.concatenate([g_tr, g_ti], axis=1))
        return grads

    if kind == "rotate":
        hr, hi = _split_complex(tb["entity"][hs], d)
        tr, ti = _split_complex(tb["entity"][ts], d)
        theta = tb["relation"][rs]
        cos, sin = np.cos(theta), np.sin(theta)
        rot_re = hr * cos - hi * sin
        rot_im = hr * sin + hi * cos
        dre = rot_re - tr
        dim_ = rot_im - ti
        norm = np.sqrt((dre * dre + dim_ * dim_).sum(axis=1, keepdims=True))
        with np.errstate(invalid="ignore", divide="ignore"):
            g_dre = np.where(norm > 0, -dre / norm, 0.0)
            g_dim = np.where(norm > 0, -dim_ / norm, 0.0)
        g_hr = g_dre * cos + g_dim * sin
        g_hi = -g_dre * sin + g_dim * cos
        g_theta = g_dre * (-rot_im) + g_dim * rot_re
        _scatter(grads, "entity", hs, u * np.concatenate([g_hr, g_hi], axis=1))
        _scatter(grads, "relation", rs, u * g_theta)
        _scatter(grads, "entity", ts, u * np.concatenate([-g_dre, -g_dim], axis=1))
        return grads

    if kind == "simple":
        hh, ht = tb["entity_head"][hs], tb["entity_tail"][hs]
        th, tt = tb["entity_head"][ts], tb["entity_tail"][ts]
        r, rinv = tb["relation"][rs], tb["relation_inverse"][rs]
        _scatter(grads, "entity_head", hs, 0.5 * u * r * tt)
        _scatter(grads, "entity_tail", ts, 0.5 * u * hh * r)
        _scatter(grads, "relation", rs, 0.5 * u * hh * tt)
        _scatter(grads, "entity_head", ts, 0.5 * u * rinv * ht)
        _scatter(grads, "entity_tail", hs, 0.5 * u * th * rinv)
        _scatter(grads, "relation_inverse", rs, 0.5 * u * th * ht)
        return grads

    if kind == "transh":
        h, t = tb["entity"][hs], tb["entity"][ts]
        dr, w = tb["relation"][rs], tb["normal"][rs]
        wu_h = (h * w).sum(axis=1, keepdims=True)
        wu_t = (t * w).sum(axis=1, keepdims=True)
        uvec = (h - wu_h * w) + dr - (t - wu_t * w)
        # f = -u.u; du/dh = I - w w^T (same for t, negated)
        wu_u = (uvec * w).sum(axis=1, keepdims=True)
        g_h = -2.0 * (uvec - wu_u * w)
        g_dr = -2.0 * uvec
        c = h - t  # u = c - (w.c) w + dr
        wc = (c * w).sum(axis=1, keepdims=True)
        g_w = 2.0 * (wu_u * c + wc * uvec)
        _scatter(grads, "entity", hs, u * g_h)
        _scatter(grads, "entity", ts, -u * g_h)
        _scatter(grads, "relation", rs, u * g_dr)
        _scatter(grads, "normal", rs, u * g_w)
        return grads

    raise ValueError(f"unknown model kind {kind!r}")


def _scatter(grads: Gradients, table: str, rows, contributions: np.ndarray) -> None:
    for row, vec in zip(rows, contributions):
        grads.add(table, int(row), vec)


def regularize(params: ModelParams, touched_rows, kind: str, weight: float, p: float = 2.0):
    """Penalty and gradient over the touched rows only.

    kind: one of noop, l1, l2, power_sum. Returns (penalty, Gradients).
    """
    if weight < 0:
        raise ValueError("regularizer weight must be >= 0")
    grads = Gradients()
    if kind == "noop" or weight == 0.0:
        return 0.0, grads
    penalty = 0.0
    for table, row in set(touched_rows):
        x = params.tables[table][row]
        if kind == "l1":
            penalty += weight * np.abs(x).sum()
            grads.add(table, row, weight * np.sign(x))
        elif kind == "l2":
            penalty += weight * (x * x).sum()
            grads.add(table, row, 2.0 * weight * x)
        elif kind == "power_sum":
            penalty += weight * (np.abs(x) ** p).sum()
            grads.add(table, row, weight * p * np.sign(x) * np.abs(x) ** (p - 1))
        else:
            raise ValueError(f"unknown regularizer kind {kind!r}")
    return float(penalty), grads


CHECKPOINT_VERSION = 1


def save_checkpoint(path, params: ModelParams, vocabulary=None) -> None:
    """Write a .npz checkpoint that round-trips parameters bit-exactly."""
    meta = {
        "version": CHECKPOINT_VERSION,
        "kind": params.kind,
        "dim": params.dim,
        "num_entities": params.num_entities,
        "num_relations": params.num_relations,
        "num_relations_base": params.num_relations_base,
        "inverse_relations": params.inverse_relations,
        "p_norm": params.p_norm,
        "tables": sorted(params.tables),
    }
    if vocabulary is not None:
        meta["entity_to_id"] = vocabulary.entity_to_id
        meta["relation_to_id"] = vocabulary.relation_to_id
    arrays = {f"table_{name}": arr for name, arr in params.tables.items()}
    buf = io.BytesIO()
    np.savez(buf, meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **arrays)
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def load_checkpoint(path):
    """Returns (ModelParams, Vocabulary-or-None)."""
    from .graph import Vocabulary

    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
        tables = {name: data[f"table_{name}"].astype(np.float64) for name in meta["tables"]}
    params = ModelParams(
        kind=meta["kind"],
        dim=meta["dim"],
        num_entities=meta["num_entities"],
        num_relations=meta["num_relations"],
        tables=tables,
        inverse_relations=meta["inverse_relations"],
        num_relations_base=meta["num_relations_base"],
        p_norm=meta["p_norm"],
    )
    vocab = None
    if "entity_to_id" in meta:
        vocab = Vocabulary(meta["entity_to_id"], meta["relation_to_id"])
    return params, vocab
