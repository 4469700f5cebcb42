"""Tie-aware empirical-distribution normalization onto [0, 1].

A value whose sorted ranks span ``kmin..kmax`` (1-based) maps to
``(kmin + kmax - 1) / (2n)``, the centre of its rank range.  Distinct values
therefore land on the grid ``(2k - 1) / (2n)`` and tied values share the
midpoint of their block.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class NormalizedColumn:
    """Normalization state of one column.

    Attributes
    ----------
    x : ndarray
        Normalized training values, in the original row order.
    sorted_y : ndarray
        Ascending training values.
    levels_y, levels_x : ndarray
        Distinct training values and the normalized value each maps to
        (the tie map).
    """

    x: np.ndarray
    sorted_y: np.ndarray
    levels_y: np.ndarray
    levels_x: np.ndarray

    @property
    def n(self) -> int:
        return len(self.sorted_y)

    @property
    def tie_map(self) -> dict[float, float]:
        return dict(zip(self.levels_y.tolist(), self.levels_x.tolist()))

    def transform(self, y) -> np.ndarray:
        return transform_new(self, y)

    def inverse(self, q) -> np.ndarray:
        return inverse_quantile(self, q)


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def normalize(values) -> NormalizedColumn:
    """Rank-transform ``values`` with tie-centred ranks."""
    y = np.asarray(values, dtype=float).ravel()
    n = len(y)
    if n < 1:
        raise ValueError("cannot normalize an empty column")
    if not np.all(np.isfinite(y)):
        raise ValueError("cannot normalize non-finite values")
    sorted_y = np.sort(y, kind="stable")
    levels_y, first, counts = np.unique(sorted_y, return_index=True, return_counts=True)
    # kmin = first + 1, kmax = first + counts  =>  kmin + kmax - 1 = 2*first + counts
    levels_x = (2.0 * first + counts) / (2.0 * n)
    x = levels_x[np.searchsorted(levels_y, y)]
    return NormalizedColumn(_frozen(x), _frozen(sorted_y), _frozen(levels_y), _frozen(levels_x))


def from_sorted(sorted_y) -> NormalizedColumn:
    """Rebuild normalization state from stored sorted training values."""
    return normalize(sorted_y)


def transform_new(col: NormalizedColumn, y) -> np.ndarray:
    """Normalize values not necessarily seen in training.

    Exact training values return their tie-map value; values in between are
    interpolated linearly between neighbouring distinct values; values outside
    the training range clamp to ``1/(2n)`` and ``1 - 1/(2n)``.
    """
    y = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(y)):
        raise ValueError("cannot transform non-finite values")
    n = col.n
    out = np.interp(y, col.levels_y, col.levels_x)
    idx = np.clip(np.searchsorted(col.levels_y, y), 0, len(col.levels_y) - 1)
    exact = col.levels_y[idx] == y
    out = np.where(exact, col.levels_x[idx], out)
    out = np.where(y < col.levels_y[0], 1.0 / (2 * n), out)
    out = np.where(y > col.levels_y[-1], 1.0 - 1.0 / (2 * n), out)
    return out if out.ndim else float(out)


def inverse_quantile(col: NormalizedColumn, q) -> np.ndarray:
    """Map a quantile back to a training value.

    Returns ``sorted_y[k]`` (1-based) with ``k = clamp(floor(q*n + 1/2), 1, n)``;
    halves round upward.
    """
    q = np.asarray(q, dtype=float)
    if np.any((q < 0) | (q > 1)) or not np.all(np.isfinite(q)):
        raise ValueError("quantile must lie in [0, 1]")
    n = col.n
    # slack absorbs rounding in q*n so grid points (2k-1)/(2n) land on k
    k = np.clip(np.floor(q * n + 0.5 + 1e-9).astype(np.int64), 1, n)
    out = col.sorted_y[k - 1]
    return out if out.ndim else float(out)
