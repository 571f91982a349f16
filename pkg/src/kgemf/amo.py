"""Automatic memory optimization: maximum batch / sub-batch search under a budget.

The default probe is an analytic byte estimator; any monotone
``probe(batch) -> ProbeResult`` (e.g. one that measures actual peak
allocation of a trial step) can be plugged in behind the same interface.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import NoFeasibleBatch

BYTES_PER_PARAM = 8  # f64
ACTIVATION_FACTOR = 2  # forward intermediates + score buffers
GRADIENT_FACTOR = 1

OPTIMIZER_MULTIPLIER = {"sgd": 1, "adam": 3}  # params (+ two moment tables)


@dataclass(frozen=True)
class MemoryBudget:
    limit_bytes: int

    def __post_init__(self):
        if self.limit_bytes <= 0:
            raise ValueError("budget must be > 0 bytes")


@dataclass(frozen=True)
class MemoryModel:
    """Analytic estimator of peak bytes for one step at a given batch size."""

    num_parameters: int
    dim: int
    num_entities: int
    num_negatives: int = 1
    optimizer: str = "sgd"
    mode: str = "train_slcwa"  # train_slcwa | train_lcwa | eval

    def rows_per_unit(self) -> int:
        if self.mode == "train_slcwa":
            # each positive and its k negatives touch 3 embedding rows
            return (1 + self.num_negatives) * 3
        if self.mode in ("train_lcwa", "eval"):
            # the (h, r) rows plus the |E|-wide candidate score row
            return 2 + self.num_entities
        raise ValueError(f"unknown mode {self.mode!r}")


@dataclass(frozen=True)
class ProbeResult:
    batch: int
    fits: bool
    peak_bytes: int


def estimate_bytes(mm: MemoryModel, batch: int) -> int:
    """Deterministic byte estimate, strictly increasing in batch size."""
    if batch < 1:
        raise ValueError("batch must be >= 1")
    static = mm.num_parameters * OPTIMIZER_MULTIPLIER[mm.optimizer] * BYTES_PER_PARAM
    per_unit = mm.rows_per_unit() * mm.dim * BYTES_PER_PARAM * (ACTIVATION_FACTOR + GRADIENT_FACTOR)
    return static + batch * per_unit


def analytic_probe(mm: MemoryModel, budget: MemoryBudget):
    def probe(batch: int) -> ProbeResult:
        peak = estimate_bytes(mm, batch)
        return ProbeResult(batch=batch, fits=peak <= budget.limit_bytes, peak_bytes=peak)

    return probe


def find_max_batch(requested: int, probe) -> int:
    """Largest batch <= ``requested`` that fits, assuming a monotone probe.

    Halves from ``requested`` until something fits, then binary-searches the
    gap upward. Issues at most 2*ceil(log2 requested) + 2 probes.
    """
    if requested < 1:
        raise ValueError("requested batch must be >= 1")
    if probe(requested).fits:
        return requested

    # halve until a fitting batch is found
    hi_fail = requested
    b = requested // 2
    while b >= 1:
        if probe(b).fits:
            break
        hi_fail = b
        b //= 2
    else:
        raise NoFeasibleBatch("even batch size 1 exceeds the budget")

    # binary refine in (b, hi_fail): find the largest fitting batch
    lo_fit = b
    lo, hi = b + 1, hi_fail - 1
    while lo <= hi:
        mid = (lo + hi) // 2
        if probe(mid).fits:
            lo_fit = mid
            lo = mid + 1
        else:
            hi = mid - 1
    return lo_fit


def find_max_sub_batch(train_batch: int, probe) -> int:
    """Largest sub-batch <= ``train_batch`` whose single pass fits the budget."""
    return find_max_batch(train_batch, probe)


def probe_budget(requested: int) -> int:
    """Probe-count bound honored by find_max_batch."""
    return 2 * math.ceil(math.log2(max(requested, 2))) + 2
