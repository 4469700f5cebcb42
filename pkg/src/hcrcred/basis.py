"""Orthonormal function bases on [0, 1] and a weighted discrete analogue."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

BASIS_KINDS = ("legendre", "cosine")


def _check_kind(kind: str) -> None:
    if kind not in BASIS_KINDS:
        raise ValueError(f"unknown basis kind {kind!r}; expected one of {BASIS_KINDS}")


def basis_matrix(kind: str, x, m: int) -> np.ndarray:
    """Evaluate f_0..f_m at every point of ``x``.

    Parameters
    ----------
    kind : {"legendre", "cosine"}
        Rescaled (shifted, unit-norm) Legendre polynomials, or
        ``{1, sqrt(2) cos(pi j x)}``.
    x : array_like
        Points in [0, 1].
    m : int
        Highest index.

    Returns
    -------
    ndarray of shape ``x.shape + (m + 1,)``
    """
    _check_kind(kind)
    if m < 0:
        raise ValueError("basis index must be non-negative")
    x = np.asarray(x, dtype=float)
    if np.any((x < 0) | (x > 1)) or not np.all(np.isfinite(x)):
        raise ValueError("basis argument must lie in [0, 1]")
    out = np.empty(x.shape + (m + 1,))
    out[..., 0] = 1.0
    if kind == "cosine":
        for j in range(1, m + 1):
            out[..., j] = math.sqrt(2.0) * np.cos(math.pi * j * x)
        return out
    # shifted Legendre P_j(2x-1): (j+1) P_{j+1} = (2j+1) t P_j - j P_{j-1}
    t = 2.0 * x - 1.0
    p_prev = np.ones_like(t)
    p = t
    for j in range(1, m + 1):
        out[..., j] = math.sqrt(2 * j + 1) * p
        p_prev, p = p, ((2 * j + 1) * t * p - j * p_prev) / (j + 1)
    return out


def basis_integral(kind: str, x, m: int) -> np.ndarray:
    """Antiderivatives ``F_j(x) = integral of f_j over [0, x]`` for j = 0..m.

    Legendre uses ``(P_{j+1} - P_{j-1}) / (2j + 1)`` on ``t = 2x - 1``;
    cosine uses ``sqrt(2) sin(pi j x) / (pi j)``.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape + (m + 1,))
    out[..., 0] = x
    if kind == "cosine":
        _check_kind(kind)
        for j in range(1, m + 1):
            out[..., j] = math.sqrt(2.0) * np.sin(math.pi * j * x) / (math.pi * j)
        return out
    f = basis_matrix(kind, x, m + 1)
    for j in range(1, m + 1):
        p_next = f[..., j + 1] / math.sqrt(2 * j + 3)
        p_prev = f[..., j - 1] / math.sqrt(2 * j - 1)
        # dx = dt / 2, and f_j = sqrt(2j+1) P_j
        out[..., j] = (p_next - p_prev) * math.sqrt(2 * j + 1) / (2 * (2 * j + 1))
    return out


def eval_basis(kind: str, j: int, x):
    """Value of the ``j``-th orthonormal basis function at ``x``."""
    if j < 0:
        raise ValueError("basis index must be non-negative")
    out = basis_matrix(kind, x, j)[..., j]
    return float(out) if np.ndim(out) == 0 else out


@lru_cache(maxsize=8)
def _gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    t, w = np.polynomial.legendre.leggauss(n)
    nodes, weights = 0.5 * (t + 1.0), 0.5 * w
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def gauss_legendre(n: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of the ``n``-point Gauss-Legendre rule on [0, 1].

    Exact for polynomials of degree ``2n - 1``.
    """
    return _gauss_legendre(n)


def integrate01(values_at_nodes, n: int = 64) -> np.ndarray:
    """Quadrature over the last axis of values sampled at ``gauss_legendre(n)`` nodes."""
    _, w = gauss_legendre(n)
    return np.asarray(values_at_nodes) @ w


# ---------------------------------------------------------------------------
# Discrete alphabets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DiscreteBasis:
    """Orthonormal vectors over a finite alphabet under ``[f, g] = sum_x w_x f_x g_x``.

    ``vectors[j, k]`` is f_j at ``levels[k]``; row 0 is all ones.
    """

    levels: tuple[str, ...]
    weights: np.ndarray
    vectors: np.ndarray

    @property
    def degree(self) -> int:
        return self.vectors.shape[0] - 1

    def inner(self, f, g) -> float:
        return float(np.sum(self.weights * np.asarray(f) * np.asarray(g)))

    def gram(self) -> np.ndarray:
        return (self.vectors * self.weights) @ self.vectors.T

    def evaluate(self, values) -> np.ndarray:
        """Rows f_1..f_m for each symbol; unseen symbols give zeros."""
        index = {lv: k for k, lv in enumerate(self.levels)}
        values = np.asarray(values, dtype=str)
        out = np.zeros((len(values), self.degree))
        for i, v in enumerate(values):
            k = index.get(v)
            if k is not None:
                out[i] = self.vectors[1:, k]
        return out


def _level_sort_key(levels):
    try:
        return sorted(levels, key=float)
    except ValueError:
        return sorted(levels)


def build_discrete_basis(values, m: int, levels=None, weights=None) -> DiscreteBasis:
    """Weighted Gram-Schmidt basis for a categorical column.

    Levels are ordered numerically when every symbol parses as a number,
    otherwise lexicographically.  Each level is placed at its tie-centred
    quantile, the Legendre polynomials evaluated there seed the vectors, and
    modified Gram-Schmidt under the frequency-weighted product orthonormalizes
    them.  Every f_j is signed so that its value at the last level is positive.

    ``levels`` and ``weights`` may be given to rebuild a stored basis.
    """
    if levels is None:
        values = np.asarray(values, dtype=str)
        if len(values) == 0:
            raise ValueError("cannot build a basis from an empty column")
        uniq, counts = np.unique(values, return_counts=True)
        freq = dict(zip(uniq.tolist(), counts.tolist()))
        levels = tuple(_level_sort_key(freq))
        weights = np.array([freq[lv] for lv in levels], dtype=float) / len(values)
    else:
        levels = tuple(levels)
        weights = np.asarray(weights, dtype=float)
    s = len(levels)
    if m < 0:
        raise ValueError("degree must be non-negative")
    if m >= s:
        raise ValueError(f"degree {m} needs more than the {s} distinct levels available")

    cum = np.concatenate([[0.0], np.cumsum(weights)[:-1]])
    positions = np.clip(cum + weights / 2.0, 0.0, 1.0)
    seeds = basis_matrix("legendre", positions, m).T  # (m+1, s)

    vecs = np.empty_like(seeds)
    vecs[0] = 1.0
    for j in range(1, m + 1):
        v = seeds[j].copy()
        for i in range(j):
            v -= np.sum(weights * vecs[i] * v) * vecs[i]
        norm = math.sqrt(np.sum(weights * v * v))
        if norm < 1e-12:
            raise ValueError(f"degenerate level frequencies: f_{j} vanishes")
        v /= norm
        nonzero = np.flatnonzero(np.abs(v) > 1e-12)
        if v[nonzero[-1]] < 0:
            v = -v
        vecs[j] = v
    return DiscreteBasis(levels, weights, vecs)
