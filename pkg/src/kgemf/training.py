"""Training loops (sLCWA and LCWA), optimizers, sub-batch accumulation, early stopping.

The loops use the manual chain rule: losses produce d(loss)/d(score), which is
fed to ``score_grad`` as upstream values. Everything is deterministic given
(seed, config, data).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import losses
from .errors import IncompatibleLoss, LossDiverged, NonFiniteGradient
from .graph import TripleSet
from .models import Gradients, ModelParams, regularize, score_grad, score_hrt, score_all_tails
from .sampling import uniform_sample

SLCWA_LOSSES = ("margin_ranking", "nssa", "bce", "softplus", "mse")
LCWA_LOSSES = ("bce", "cross_entropy", "softplus", "mse")


@dataclass
class TrainConfig:
    approach: str = "slcwa"  # slcwa | lcwa
    loss: str = "margin_ranking"
    margin: float = 1.0
    temperature: float = 1.0
    reduction: str = "mean"
    batch_size: int = 128
    sub_batch_size: int | None = None
    num_negatives: int = 1
    corruption_mode: str = "both"
    epochs: int = 100
    seed: int = 0
    learning_rate: float = 0.01
    optimizer: str = "adam"  # adam | sgd
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    regularizer: str = "noop"  # noop | l1 | l2 | power_sum
    regularizer_weight: float = 0.0
    regularizer_power: float = 3.0
    inverse_relations: bool = False

    def __post_init__(self):
        if self.sub_batch_size is not None and self.sub_batch_size > self.batch_size:
            raise ValueError("sub_batch_size must be <= batch_size")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


class OptimizerState:
    """SGD or Adam with lazily created, per-row sparse moment tables."""

    def __init__(self, kind: str, learning_rate: float,
                 beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8):
        if kind not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {kind!r}")
        self.kind = kind
        self.lr = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.m: dict[tuple[str, int], np.ndarray] = {}
        self.v: dict[tuple[str, int], np.ndarray] = {}
        self.t: dict[tuple[str, int], int] = {}


def optimizer_step(state: OptimizerState, params: ModelParams, grads: Gradients) -> ModelParams:
    """Apply one update in place; rows absent from ``grads`` are untouched.

    TransH hyperplane normals are re-normalized to unit length after the step.
    """
    touched_normals = []
    for (table, row), g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(f"non-finite gradient for {table}[{row}]")
        target = params.tables[table]
        if state.kind == "sgd":
            target[row] -= state.lr * g
        else:
            key = (table, row)
            if key not in state.m:
                state.m[key] = np.zeros_like(g)
                state.v[key] = np.zeros_like(g)
                state.t[key] = 0
            state.t[key] += 1
            t = state.t[key]
            m = state.m[key]
            v = state.v[key]
            m *= state.beta1
            m += (1.0 - state.beta1) * g
            v *= state.beta2
            v += (1.0 - state.beta2) * g * g
            m_hat = m / (1.0 - state.beta1 ** t)
            v_hat = v / (1.0 - state.beta2 ** t)
            target[row] -= state.lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
        if params.kind == "transh" and table == "normal":
            touched_normals.append(row)
    for row in touched_normals:
        norm = np.linalg.norm(params.tables["normal"][row])
        if norm > 0:
            params.tables["normal"][row] /= norm
    return params


def accumulate_sub_batches(batch, sub_batch_size: int, grad_fn) -> Gradients:
    """Split ``batch`` into slices of ``sub_batch_size`` and merge grad_fn outputs.

    With sum reduction inside grad_fn the result equals the single-pass
    full-batch gradients.
    """
    if not 1 <= sub_batch_size <= max(len(batch), 1):
        raise ValueError("sub_batch_size must be in [1, len(batch)]")
    total = Gradients()
    for start in range(0, len(batch), sub_batch_size):
        total.merge(grad_fn(batch[start : start + sub_batch_size]))
    return total


@dataclass
class EarlyStopper:
    """Stops when the watched metric fails to improve by a relative margin.

    An improvement is a relative gain >= ``relative_delta`` versus the best
    value seen, in the configured direction. The counter resets on
    improvement; ``should_stop`` returns True once it exceeds ``patience``.
    """

    patience: int = 2
    frequency: int = 10
    relative_delta: float = 0.0
    metric: str = "both.average.mean_reciprocal_rank"
    direction: str = "maximize"
    best: float | None = None
    counter: int = 0

    def should_stop(self, value: float) -> bool:
        if self.best is None:
            self.best = value
            return False
        gain = value - self.best if self.direction == "maximize" else self.best - value
        denom = abs(self.best) if self.best != 0 else 1.0
        # >= delta counts as improvement, but a zero gain never does
        if gain > 0 and gain / denom >= self.relative_delta:
            self.best = value
            self.counter = 0
            return False
        self.counter += 1
        return self.counter > self.patience


def should_stop(stopper: EarlyStopper, value: float) -> bool:
    return stopper.should_stop(value)


def _check_finite_loss(value: float) -> None:
    if not np.isfinite(value):
        raise LossDiverged(f"loss diverged to {value}")


def _make_optimizer(cfg: TrainConfig) -> OptimizerState:
    return OptimizerState(
        cfg.optimizer, cfg.learning_rate,
        beta1=cfg.adam_beta1, beta2=cfg.adam_beta2, epsilon=cfg.adam_epsilon,
    )


def _regularizer_grads(params: ModelParams, grads: Gradients, cfg: TrainConfig):
    if cfg.regularizer == "noop" or cfg.regularizer_weight == 0.0:
        return 0.0, None
    penalty, reg = regularize(
        params, list(grads.data), cfg.regularizer, cfg.regularizer_weight,
        p=cfg.regularizer_power,
    )
    return penalty, reg


def _slcwa_batch_grads(params: ModelParams, positives, cfg: TrainConfig, rng):
    """Loss value (sum reduction) and gradients for one sLCWA batch slice."""
    k = cfg.num_negatives
    neg_batch = uniform_sample(positives, k, params.num_entities, rng, cfg.corruption_mode)
    pos_arr = np.asarray(positives, dtype=np.int64).reshape(-1, 3)
    neg_arr = neg_batch.triples
    pos_scores = score_hrt(params, pos_arr)
    neg_scores = score_hrt(params, neg_arr)
    b = pos_arr.shape[0]

    if cfg.loss == "margin_ranking":
        pos_rep = np.repeat(pos_scores, k)
        value, d_pos, d_neg = losses.pairwise_loss(pos_rep, neg_scores, cfg.margin, "sum")
        upstream = np.concatenate([d_pos.reshape(b, k).sum(axis=1), d_neg])
        batch = np.concatenate([pos_arr, neg_arr])
        denom = b * k
    elif cfg.loss == "nssa":
        value, d_pos, d_neg = losses.nssa_loss(
            pos_scores, neg_scores.reshape(b, k), cfg.margin, cfg.temperature, "sum"
        )
        upstream = np.concatenate([d_pos, d_neg.reshape(-1)])
        batch = np.concatenate([pos_arr, neg_arr])
        denom = b
    else:  # pointwise: bce / mse / softplus
        scores = np.concatenate([pos_scores, neg_scores])
        if cfg.loss == "softplus":
            labels = np.concatenate([np.ones(b), -np.ones(b * k)])
        else:
            labels = np.concatenate([np.ones(b), np.zeros(b * k)])
        value, upstream = losses.pointwise_loss(cfg.loss, scores, labels, "sum")
        batch = np.concatenate([pos_arr, neg_arr])
        denom = b + b * k
    grads = score_grad(params, batch, upstream)
    return value, grads, denom


def train_slcwa(params: ModelParams, train: TripleSet, cfg: TrainConfig,
                stopper: EarlyStopper | None = None, eval_fn=None):
    """sLCWA training: positives plus k uniformly corrupted negatives per batch.

    Returns (params, loss_history, stopped_epoch or None). ``eval_fn`` maps
    params to the stopper's metric value.
    """
    if cfg.approach != "slcwa":
        raise ValueError("cfg.approach must be 'slcwa'")
    if cfg.loss not in SLCWA_LOSSES:
        raise IncompatibleLoss(f"loss {cfg.loss!r} is not usable under sLCWA")

    triples = train.as_array()
    n = triples.shape[0]
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    opt = _make_optimizer(cfg)
    history: list[float] = []
    stopped_epoch = None

    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        num_units = 0
        for start in range(0, n, cfg.batch_size):
            batch = triples[order[start : start + cfg.batch_size]]

            if cfg.sub_batch_size is not None and cfg.sub_batch_size < len(batch):
                total = Gradients()
                value_sum = 0.0
                denom_sum = 0
                for s in range(0, len(batch), cfg.sub_batch_size):
                    v, g, dn = _slcwa_batch_grads(params, batch[s : s + cfg.sub_batch_size], cfg, rng)
                    total.merge(g)
                    value_sum += v
                    denom_sum += dn
                value, grads, denom = value_sum, total, denom_sum
            else:
                value, grads, denom = _slcwa_batch_grads(params, batch, cfg, rng)

            if cfg.reduction == "mean" and denom > 0:
                grads = grads.scale(1.0 / denom)
                value = value / denom
            penalty, reg = _regularizer_grads(params, grads, cfg)
            if reg is not None:
                grads.merge(reg)
            _check_finite_loss(value + penalty)
            optimizer_step(opt, params, grads)
            epoch_loss += value + penalty
            num_units += 1
        history.append(epoch_loss / max(num_units, 1))

        if stopper is not None and eval_fn is not None and (epoch + 1) % stopper.frequency == 0:
            if stopper.should_stop(eval_fn(params)):
                stopped_epoch = epoch + 1
                break

    return params, history, stopped_epoch


def _lcwa_units(train: TripleSet):
    """Group triples into (h, r) -> sorted tuple of true tails."""
    groups: dict[tuple[int, int], list[int]] = {}
    for h, r, t in train.triples:
        groups.setdefault((h, r), []).append(t)
    return sorted((hr, tuple(sorted(set(ts)))) for hr, ts in groups.items())


def _lcwa_batch_grads(params: ModelParams, units, cfg: TrainConfig):
    """Loss value (sum reduction) and gradients for one batch of (h, r) units."""
    ne = params.num_entities
    pairs = [hr for hr, _ in units]
    rows = score_all_tails(params, pairs)

    if cfg.loss == "cross_entropy":
        value = 0.0
        row_grads = np.zeros_like(rows)
        denom = 0
        for i, (_, tails) in enumerate(units):
            for t in tails:
                v, g = losses.setwise_ce(rows[i], t)
                value += v
                row_grads[i] += g
                denom += 1
    else:
        targets = np.zeros_like(rows)
        for i, (_, tails) in enumerate(units):
            targets[i, list(tails)] = 1.0
        if cfg.loss == "softplus":
            targets = 2.0 * targets - 1.0
        value, row_grads = losses.pointwise_loss(
            cfg.loss, rows.reshape(-1), targets.reshape(-1), "sum"
        )
        row_grads = row_grads.reshape(rows.shape)
        denom = rows.size

    batch = np.empty((len(units) * ne, 3), dtype=np.int64)
    for i, ((h, r), _) in enumerate(units):
        batch[i * ne : (i + 1) * ne, 0] = h
        batch[i * ne : (i + 1) * ne, 1] = r
        batch[i * ne : (i + 1) * ne, 2] = np.arange(ne)
    grads = score_grad(params, batch, row_grads.reshape(-1))
    return value, grads, denom


def train_lcwa(params: ModelParams, train: TripleSet, cfg: TrainConfig,
               stopper: EarlyStopper | None = None, eval_fn=None,
               unit_log: list | None = None):
    """LCWA training: (h, r) units with multi-hot targets over all tails.

    With inverse relations the train set is expected to be pre-augmented, so
    head prediction is covered by (t, r_inv) tail units; every trained unit is
    a tail-prediction unit. Returns (params, loss_history, stopped_epoch).
    """
    if cfg.approach != "lcwa":
        raise ValueError("cfg.approach must be 'lcwa'")
    if cfg.loss not in LCWA_LOSSES:
        raise IncompatibleLoss(f"loss {cfg.loss!r} is not usable under LCWA")

    units = _lcwa_units(train)
    if unit_log is not None:
        unit_log.extend(("tail", h, r) for (h, r), _ in units)
    n = len(units)
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    opt = _make_optimizer(cfg)
    history: list[float] = []
    stopped_epoch = None

    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        num_batches = 0
        for start in range(0, n, cfg.batch_size):
            batch_units = [units[i] for i in order[start : start + cfg.batch_size]]

            if cfg.sub_batch_size is not None and cfg.sub_batch_size < len(batch_units):
                total = Gradients()
                value_sum, denom_sum = 0.0, 0
                for s in range(0, len(batch_units), cfg.sub_batch_size):
                    v, g, dn = _lcwa_batch_grads(params, batch_units[s : s + cfg.sub_batch_size], cfg)
                    total.merge(g)
                    value_sum += v
                    denom_sum += dn
                value, grads, denom = value_sum, total, denom_sum
            else:
                value, grads, denom = _lcwa_batch_grads(params, batch_units, cfg)

            if cfg.reduction == "mean" and denom > 0:
                grads = grads.scale(1.0 / denom)
                value = value / denom
            penalty, reg = _regularizer_grads(params, grads, cfg)
            if reg is not None:
                grads.merge(reg)
            _check_finite_loss(value + penalty)
            optimizer_step(opt, params, grads)
            epoch_loss += value + penalty
            num_batches += 1
        history.append(epoch_loss / max(num_batches, 1))

        if stopper is not None and eval_fn is not None and (epoch + 1) % stopper.frequency == 0:
            if stopper.should_stop(eval_fn(params)):
                stopped_epoch = epoch + 1
                break

    return params, history, stopped_epoch
