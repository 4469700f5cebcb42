"""Held-out log-likelihood evaluation and variable importance."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .calibration import CalibrationSpec
from .dataset import Dataset, DatasetSchema
from .density import loglik_bits_batch
from .regression import train

DEFAULT_DEGREES = tuple(range(1, 10))


def thread_count() -> int:
    """Worker threads, capped by the ``HCR_THREADS`` environment variable."""
    env = os.environ.get("HCR_THREADS")
    if env:
        return max(1, int(env))
    return min(4, os.cpu_count() or 1)


def parallel_map(func, items):
    """Ordered map; results do not depend on the number of workers."""
    items = list(items)
    workers = min(thread_count(), len(items))
    if workers <= 1:
        return [func(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))


@dataclass(frozen=True)
class EvalParams:
    """Shared knobs of a held-out evaluation."""

    repeats: int = 10
    split: float = 0.75
    seed: int = 0
    basis: str = "legendre"
    calibration: CalibrationSpec = field(default_factory=CalibrationSpec)
    encoding: str = "onehot"
    ridge: float = 0.0

    def __post_init__(self):
        if self.repeats < 1:
            raise ValueError("repeats must be at least 1")
        if not 0.0 < self.split < 1.0:
            raise ValueError("split fraction must lie in (0, 1)")


@dataclass(frozen=True)
class EvalReport:
    degrees: tuple[int, ...]
    per_repeat: np.ndarray  # (repeats, len(degrees)) mean held-out log2 density
    split: float
    repeats: int
    seed: int

    @property
    def mean(self) -> np.ndarray:
        return self.per_repeat.mean(axis=0)

    @property
    def sd(self) -> np.ndarray:
        if self.repeats < 2:
            return np.zeros(len(self.degrees))
        return self.per_repeat.std(axis=0, ddof=1)

    def at(self, degree: int) -> float:
        return float(self.mean[self.degrees.index(degree)])


def split_indices(n: int, split: float, repeats: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Seeded shuffles; each repeat trains on the first ``floor(split*n)`` rows."""
    n_train = int(np.floor(split * n))
    if n_train < 1 or n_train >= n:
        raise ValueError(f"split {split} of {n} rows leaves an empty side")
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(repeats):
        perm = rng.permutation(n)
        out.append((np.sort(perm[:n_train]), np.sort(perm[n_train:])))
    return out


def heldout_loglik(dataset: Dataset, train_idx, test_idx, degrees: Sequence[int],
                   params: EvalParams, features=None, schema: DatasetSchema | None = None
                   ) -> np.ndarray:
    """Per-record held-out log2 densities, shape (len(degrees), n_test).

    One model of the largest degree is fitted on the training rows; lower
    degrees reuse its leading moment columns, which is exact because every
    moment is its own least-squares problem.
    """
    schema = schema or dataset.schema
    model = train(dataset.take(train_idx), schema, max(degrees), params.basis,
                  params.calibration, params.encoding, params.ridge, features)
    test = dataset.take(test_idx)
    moments = model.coefficients(test)
    out = []
    for m in degrees:
        sub = model.truncate(m)
        out.append(loglik_bits_batch(sub, test, moments[:, :m]))
    return np.array(out)


def evaluate(dataset: Dataset, schema: DatasetSchema | None = None,
             degrees: Sequence[int] = DEFAULT_DEGREES, params: EvalParams | None = None,
             features=None) -> EvalReport:
    """Mean held-out log2 calibrated density per degree over repeated random splits."""
    params = params or EvalParams()
    degrees = tuple(int(d) for d in degrees)
    if not degrees or min(degrees) < 1:
        raise ValueError("degrees must be positive")
    splits = split_indices(dataset.n, params.split, params.repeats, params.seed)

    def one(split):
        ll = heldout_loglik(dataset, split[0], split[1], degrees, params, features, schema)
        return ll.mean(axis=1)

    per_repeat = np.array(parallel_map(one, splits))
    return EvalReport(degrees, per_repeat, params.split, params.repeats, params.seed)


def _ll(dataset, schema, degree, params, features) -> float:
    return evaluate(dataset, schema, (degree,), params, features).at(degree)


def relevance(dataset: Dataset, variable: str, degree: int = 4,
              params: EvalParams | None = None, schema: DatasetSchema | None = None) -> float:
    """Held-out log-likelihood using ``variable`` as the only predictor."""
    return _ll(dataset, schema, degree, params, [variable])


def novelty(dataset: Dataset, variable: str, degree: int = 4,
            params: EvalParams | None = None, schema: DatasetSchema | None = None) -> float:
    """Log-likelihood lost when ``variable`` is dropped from the full set."""
    schema = schema or dataset.schema
    names = [v.name for v in schema.features]
    rest = [v for v in names if v != variable]
    return _ll(dataset, schema, degree, params, names) - _ll(dataset, schema, degree, params, rest)


@dataclass(frozen=True)
class GreedyStep:
    variable: str
    loglik: float
    best_loglik: float


def greedy_order(dataset: Dataset, degree: int = 4, params: EvalParams | None = None,
                 schema: DatasetSchema | None = None) -> list[GreedyStep]:
    """Add, one at a time, the variable that most improves held-out log-likelihood.

    All candidates are scored on the same seeded splits.  ``loglik`` is the
    value of the grown set at each step; ``best_loglik`` is its running
    maximum, which never decreases.  Ties go to the earlier schema variable.
    """
    schema = schema or dataset.schema
    remaining = [v.name for v in schema.features]
    chosen: list[str] = []
    steps = []
    best = -np.inf
    while remaining:
        scores = parallel_map(
            lambda c: _ll(dataset, schema, degree, params, chosen + [c]), remaining)
        k = int(np.argmax(scores))
        chosen.append(remaining.pop(k))
        best = max(best, scores[k])
        steps.append(GreedyStep(chosen[-1], float(scores[k]), float(best)))
    return steps


@dataclass(frozen=True)
class ImportanceReport:
    variables: tuple[str, ...]
    relevance: np.ndarray
    novelty: np.ndarray
    full_loglik: float
    greedy: tuple[GreedyStep, ...]


def importance(dataset: Dataset, degree: int = 4, params: EvalParams | None = None,
               schema: DatasetSchema | None = None, greedy: bool = True) -> ImportanceReport:
    schema = schema or dataset.schema
    names = [v.name for v in schema.features]
    full = _ll(dataset, schema, degree, params, names)
    rel = parallel_map(lambda v: _ll(dataset, schema, degree, params, [v]), names)
    drop = parallel_map(
        lambda v: _ll(dataset, schema, degree, params, [u for u in names if u != v]), names)
    steps = tuple(greedy_order(dataset, degree, params, schema)) if greedy else ()
    return ImportanceReport(tuple(names), np.array(rel), full - np.array(drop), full, steps)
