"""Hyper-parameter search: grid and random samplers, trial loop, n-times retrain.

Samplers are pluggable: anything yielding configuration dicts can drive
``run_hpo``. Grid and random are shipped; smarter samplers (e.g. TPE) can be
added behind the same interface.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import AllTrialsFailed, InfiniteDimension


@dataclass(frozen=True)
class Categorical:
    values: tuple

    def __post_init__(self):
        if not self.values:
            raise ValueError("categorical dimension needs at least one value")

    def grid(self):
        return list(self.values)

    def sample(self, rng):
        return self.values[rng.integers(0, len(self.values))]


@dataclass(frozen=True)
class IntRange:
    low: int
    high: int  # inclusive
    step: int = 1

    def __post_init__(self):
        if self.low > self.high or self.step < 1:
            raise ValueError("need low <= high and step >= 1")

    def grid(self):
        return list(range(self.low, self.high + 1, self.step))

    def sample(self, rng):
        choices = self.grid()
        return choices[rng.integers(0, len(choices))]


@dataclass(frozen=True)
class RealRange:
    low: float
    high: float
    scale: str = "linear"  # linear | log
    step: float | None = None  # required for grid enumeration

    def __post_init__(self):
        if not self.low < self.high:
            raise ValueError("need low < high")
        if self.scale not in ("linear", "log"):
            raise ValueError(f"unknown scale {self.scale!r}")
        if self.scale == "log" and self.low <= 0:
            raise ValueError("log scale requires low > 0")

    def grid(self):
        if self.step is None:
            raise InfiniteDimension("real range without a step cannot be enumerated")
        n = int(math.floor((self.high - self.low) / self.step + 1e-9)) + 1
        return [self.low + i * self.step for i in range(n)]

    def sample(self, rng):
        if self.scale == "log":
            return float(np.exp(rng.uniform(np.log(self.low), np.log(self.high))))
        return float(rng.uniform(self.low, self.high))


@dataclass(frozen=True)
class SearchSpace:
    """Named dimensions; iteration order is the insertion order of the dict."""

    dimensions: dict[str, object]

    def names(self):
        return list(self.dimensions)


@dataclass
class TrialRecord:
    index: int
    config: dict
    objective: float | None
    seed: int
    epochs_run: int = 0
    stopped_early: bool = False
    failed: bool = False
    error: str | None = None


@dataclass
class HpoConfig:
    sampler: str = "random"  # grid | random
    budget: int = 10
    objective: str = "both.average.mean_reciprocal_rank"
    direction: str = "maximize"
    n_retrain: int = 1
    seed: int = 0
    retrain_on_validation: bool = False

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        if self.n_retrain < 1:
            raise ValueError("n_retrain must be >= 1")
        if self.sampler not in ("grid", "random"):
            raise ValueError(f"unknown sampler {self.sampler!r}")
        if self.direction not in ("maximize", "minimize"):
            raise ValueError(f"unknown direction {self.direction!r}")


def grid_iter(space: SearchSpace) -> list[dict]:
    """All configurations, cartesian product in lexicographic dimension order."""
    names = space.names()
    axes = [space.dimensions[n].grid() for n in names]
    return [dict(zip(names, combo)) for combo in itertools.product(*axes)]


def random_sample(space: SearchSpace, seed: int, count: int) -> list[dict]:
    """``count`` independent draws; log-scale reals are uniform in log domain."""
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    names = space.names()
    return [{n: space.dimensions[n].sample(rng) for n in names} for _ in range(count)]


def run_hpo(space: SearchSpace, hpo_cfg: HpoConfig, splits, pipeline_fn):
    """Evaluate sampled configurations; returns (best TrialRecord, all records).

    ``pipeline_fn(config, splits, seed)`` trains on the train split and
    returns a validation objective; a raising pipeline marks the trial failed.
    Never issues more than ``budget`` pipeline calls. Ties are broken by the
    earliest trial index.
    """
    if hpo_cfg.sampler == "grid":
        configs = grid_iter(space)[: hpo_cfg.budget]
    else:
        configs = random_sample(space, hpo_cfg.seed, hpo_cfg.budget)

    records: list[TrialRecord] = []
    for i, config in enumerate(configs):
        seed = hpo_cfg.seed + i
        rec = TrialRecord(index=i, config=config, objective=None, seed=seed)
        try:
            result = pipeline_fn(config, splits, seed)
            if isinstance(result, tuple):
                rec.objective, rec.epochs_run, rec.stopped_early = result
            else:
                rec.objective = float(result)
            if not np.isfinite(rec.objective):
                raise ValueError(f"non-finite objective {rec.objective}")
        except Exception as exc:  # failed trials are recorded and skipped
            rec.failed = True
            rec.objective = None
            rec.error = str(exc)
        records.append(rec)

    completed = [r for r in records if not r.failed]
    if not completed:
        raise AllTrialsFailed("every trial failed")
    sign = 1.0 if hpo_cfg.direction == "maximize" else -1.0
    best = max(completed, key=lambda r: (sign * r.objective, -r.index))
    return best, records


def final_retrain(best_config: dict, n: int, base_seed: int, splits, pipeline_fn):
    """Retrain/evaluate the chosen configuration n times with seeds base+i.

    ``pipeline_fn(config, splits, seed)`` returns a flat metric dict (test-set
    evaluation). Returns (reports, mean-per-metric, sample-std-per-metric);
    the std is 0 by convention for n = 1.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    reports = [pipeline_fn(best_config, splits, base_seed + i) for i in range(n)]
    keys = sorted(reports[0])
    mean = {k: float(np.mean([r[k] for r in reports])) for k in keys}
    if n == 1:
        std = {k: 0.0 for k in keys}
    else:
        std = {k: float(np.std([r[k] for r in reports], ddof=1)) for k in keys}
    return reports, mean, std
