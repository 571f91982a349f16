"""Rank-based link-prediction evaluation.

For each test triple every entity is scored as tail (and as head, which with
inverse relations delegates to tail scoring of the inverted query). Ranks are
reported under all three common definitions:

    optimistic   = 1 + #{candidates scored strictly above the true entity}
    pessimistic  = optimistic + #{ties, excluding the true entity itself}
    average      = (optimistic + pessimistic) / 2

Aggregates: mean rank, mean reciprocal rank, hits@k, and the adjusted mean
rank AMR = (sum of ranks) / (sum of (1 + |candidates|) / 2), which is 1.0 for
a uniform-random scorer. AUC-ROC (Mann-Whitney, tie-corrected) and AUC-PR
(precision-recall step integration) are computed over the pooled
(score, label) pairs with label 1 for the true entity of each query.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import DegenerateLabels, EmptyInput
from .graph import TripleSet
from .models import ModelParams, score_all_heads, score_all_tails

RANK_TYPES = ("optimistic", "pessimistic", "average")
SIDES = ("head", "tail", "both")


@dataclass(frozen=True)
class RankRecord:
    optimistic: int
    pessimistic: int
    average: float
    num_candidates: int
    side: str


def compute_rank(true_score: float, candidate_scores, side: str = "tail") -> RankRecord:
    """Rank of the true entity within ``candidate_scores`` (which include it once)."""
    scores = np.asarray(candidate_scores, dtype=np.float64)
    better = int((scores > true_score).sum())
    ties = int((scores == true_score).sum()) - 1  # exclude the true entity itself
    optimistic = 1 + better
    pessimistic = optimistic + ties
    return RankRecord(
        optimistic=optimistic,
        pessimistic=pessimistic,
        average=(optimistic + pessimistic) / 2.0,
        num_candidates=scores.size,
        side=side,
    )


def adjusted_mean_rank(ranks, candidate_counts) -> float:
    """(sum of ranks) / (sum of expected ranks under uniform-random scoring)."""
    ranks = np.asarray(ranks, dtype=np.float64)
    counts = np.asarray(candidate_counts, dtype=np.float64)
    if ranks.size == 0:
        raise EmptyInput("no ranks given")
    if ranks.shape != counts.shape:
        raise ValueError("ranks and candidate_counts must align")
    return float(ranks.sum() / ((1.0 + counts) / 2.0).sum())


def auc_metrics(scores, labels) -> tuple[float, float]:
    """(AUC-ROC, AUC-PR) for binary labels.

    AUC-ROC uses the tie-corrected Mann-Whitney statistic; AUC-PR integrates
    the precision-recall curve with right-continuous steps.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0 or n_pos + n_neg != y.size:
        raise DegenerateLabels("need at least one positive and one negative 0/1 label")

    ranks = rankdata(s)  # average ranks handle ties
    auc_roc = (ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)

    order = np.argsort(-s, kind="stable")
    sorted_y = y[order]
    tp = np.cumsum(sorted_y == 1)
    fp = np.cumsum(sorted_y == 0)
    # collapse tied-score prefixes to the last index of each tie group
    sorted_s = s[order]
    last_of_group = np.r_[sorted_s[1:] != sorted_s[:-1], True]
    tp, fp = tp[last_of_group], fp[last_of_group]
    precision = tp / (tp + fp)
    recall = tp / n_pos
    prev_recall = np.r_[0.0, recall[:-1]]
    auc_pr = float(((recall - prev_recall) * precision).sum())
    return float(auc_roc), auc_pr


@dataclass(frozen=True)
class MetricReport:
    """Flat metric mapping plus the raw per-query rank records."""

    metrics: dict[str, float]
    num_queries: int

    def __getitem__(self, key: str) -> float:
        return self.metrics[key]


def _known_filters(known: TripleSet):
    tails: dict[tuple[int, int], set[int]] = {}
    heads: dict[tuple[int, int], set[int]] = {}
    for h, r, t in known.triples:
        tails.setdefault((h, r), set()).add(t)
        heads.setdefault((r, t), set()).add(h)
    return tails, heads


def evaluate(
    params: ModelParams,
    eval_triples: TripleSet,
    known_triples: TripleSet | None = None,
    ks=(1, 3, 5, 10),
    filtered: bool = True,
    with_auc: bool = True,
) -> MetricReport:
    """Full link-prediction evaluation of ``eval_triples``.

    In filtered mode, candidates forming other known true triples are removed
    from the ranking (never the evaluated entity itself); ``known_triples``
    must then cover the evaluation triples.
    """
    if filtered and known_triples is None:
        raise ValueError("filtered evaluation requires known_triples")

    triples = eval_triples.as_array()
    n = triples.shape[0]
    if n == 0:
        raise EmptyInput("no evaluation triples")

    tail_scores = score_all_tails(params, triples[:, :2])
    head_scores = score_all_heads(params, triples[:, 1:])

    if filtered:
        known_tails, known_heads = _known_filters(known_triples)

    records: dict[str, list[RankRecord]] = {"head": [], "tail": []}
    pooled_scores: list[np.ndarray] = []
    pooled_labels: list[np.ndarray] = []

    for i, (h, r, t) in enumerate(triples):
        for side, row, true_ent in (("tail", tail_scores[i], t), ("head", head_scores[i], h)):
            mask = np.ones(row.size, dtype=bool)
            if filtered:
                other = (known_tails.get((h, r), set()) if side == "tail"
                         else known_heads.get((r, t), set()))
                for e in other:
                    mask[e] = False
                mask[true_ent] = True
            candidates = row[mask]
            records[side].append(compute_rank(row[true_ent], candidates, side))
            if with_auc:
                labels = np.zeros(candidates.size, dtype=np.int64)
                labels[np.flatnonzero(np.flatnonzero(mask) == true_ent)] = 1
                pooled_scores.append(candidates)
                pooled_labels.append(labels)

    metrics: dict[str, float] = {}
    for side in SIDES:
        recs = records["head"] + records["tail"] if side == "both" else records[side]
        counts = np.array([rec.num_candidates for rec in recs], dtype=np.float64)
        for rank_type in RANK_TYPES:
            ranks = np.array([getattr(rec, rank_type) for rec in recs], dtype=np.float64)
            prefix = f"{side}.{rank_type}"
            metrics[f"{prefix}.mean_rank"] = float(ranks.mean())
            metrics[f"{prefix}.mean_reciprocal_rank"] = float((1.0 / ranks).mean())
            for k in ks:
                metrics[f"{prefix}.hits_at_{k}"] = float((ranks <= k).mean())
            metrics[f"{prefix}.adjusted_mean_rank"] = adjusted_mean_rank(ranks, counts)

    if with_auc:
        auc_roc, auc_pr = auc_metrics(np.concatenate(pooled_scores), np.concatenate(pooled_labels))
        metrics["auc_roc"] = auc_roc
        metrics["auc_pr"] = auc_pr

    return MetricReport(metrics=metrics, num_queries=2 * n)
