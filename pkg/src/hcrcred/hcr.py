"""Joint-density coefficients estimated as sample averages of product bases."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import basis_matrix


def estimate_coefficient(xs, j, kind: str = "legendre") -> float:
    """Coefficient of ``prod_k f_{j_k}(x_k)``: its mean over the sample.

    Parameters
    ----------
    xs : sequence of array_like
        One normalized column per variable, all of length n.
    j : sequence of int
        Basis index per variable.
    """
    xs = [np.asarray(x, dtype=float) for x in xs]
    j = tuple(int(v) for v in j)
    if len(xs) != len(j):
        raise ValueError(f"{len(xs)} columns but {len(j)} indices")
    if any(v < 0 for v in j):
        raise ValueError("indices must be non-negative")
    n = len(xs[0])
    if n < 1 or any(len(x) != n for x in xs):
        raise ValueError("columns must be non-empty and of equal length")
    prod = np.ones(n)
    for x, jk in zip(xs, j):
        if jk:
            prod = prod * basis_matrix(kind, x, jk)[:, jk]
    return float(np.mean(prod))


@dataclass(frozen=True)
class PairwiseDensity:
    """Density ``sum_{i,j} a_ij f_i(x_a) f_j(x_b)`` on the unit square."""

    var_a: str
    var_b: str
    coeffs: np.ndarray
    kind: str = "legendre"

    @property
    def degree(self) -> int:
        return self.coeffs.shape[0] - 1

    def __call__(self, xa, xb) -> np.ndarray:
        fa = basis_matrix(self.kind, xa, self.degree)
        fb = basis_matrix(self.kind, xb, self.degree)
        return np.einsum("...i,ij,...j->...", fa, self.coeffs, fb)


def fit_pairwise(a_col, b_col, degree: int = 9, var_a: str = "a", var_b: str = "b",
                 kind: str = "legendre") -> PairwiseDensity:
    a_col = np.asarray(a_col, dtype=float)
    b_col = np.asarray(b_col, dtype=float)
    if len(a_col) != len(b_col):
        raise ValueError("columns must have equal length")
    if len(a_col) < 1:
        raise ValueError("need at least one sample")
    if not 0 <= degree <= 12:
        raise ValueError("degree must be in [0, 12]")
    fa = basis_matrix(kind, a_col, degree)
    fb = basis_matrix(kind, b_col, degree)
    coeffs = fa.T @ fb / len(a_col)
    coeffs[0, 0] = 1.0
    coeffs.setflags(write=False)
    return PairwiseDensity(var_a, var_b, coeffs, kind)


def midpoint_grid(resolution: int) -> np.ndarray:
    return (np.arange(resolution) + 0.5) / resolution


def density_grid(pd: PairwiseDensity, resolution: int = 201) -> np.ndarray:
    """Raw polynomial on the midpoint grid; ``out[i, k]`` is at ``(g_i, g_k)``.

    Rows index the first variable, columns the second.  Values may be negative.
    """
    if resolution < 1:
        raise ValueError("resolution must be positive")
    g = midpoint_grid(resolution)
    f = basis_matrix(pd.kind, g, pd.degree)
    return f @ pd.coeffs @ f.T


def conditional_by_substitution(pd: PairwiseDensity, b_value: float) -> np.ndarray:
    """Coefficients over x_a of the density with x_b fixed, rescaled to c_0 = 1."""
    if not 0.0 <= b_value <= 1.0:
        raise ValueError("b_value must lie in [0, 1]")
    fb = basis_matrix(pd.kind, b_value, pd.degree)
    c = pd.coeffs @ fb
    if abs(c[0]) < 1e-9:
        raise ValueError("degenerate conditional: marginal density at b_value vanishes")
    return c / c[0]
