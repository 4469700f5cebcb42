"""Predicted conditional densities of the target and what is derived from them.

For a record with feature vector v the model predicts, on the normalized
target scale, ``rho(x) = 1 + sum_j a_j f_j(x)`` with ``a_j = v . beta^j``.
``rho`` integrates to 1 but may dip below zero; the raw value at the actual
target is the credibility score.  A calibration map phi followed by
renormalization gives a proper density, used for log-likelihoods, moments and
the back-translation to the original scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping

import numpy as np

from .basis import basis_integral, basis_matrix, gauss_legendre
from .calibration import CalibrationSpec
from .dataset import Dataset
from .edf import NormalizedColumn, inverse_quantile, transform_new
from .features import featurize_row
from .regression import TrainedModel

QUAD_NODES = 64


@dataclass(frozen=True)
class DensityPolynomial:
    """Raw density ``a[0] + sum_j a[j] f_j(x)`` with ``a[0] == 1``."""

    a: np.ndarray
    kind: str = "legendre"

    @classmethod
    def from_moments(cls, moments, kind: str = "legendre") -> "DensityPolynomial":
        return cls(np.concatenate([[1.0], np.asarray(moments, dtype=float)]), kind)

    @property
    def m(self) -> int:
        return len(self.a) - 1

    def __call__(self, x) -> np.ndarray:
        return basis_matrix(self.kind, x, self.m) @ self.a


@dataclass(frozen=True)
class CalibratedDensity:
    poly: DensityPolynomial
    spec: CalibrationSpec
    norm: float

    def __call__(self, x) -> np.ndarray:
        return self.spec.phi(self.poly(x)) / self.norm


@dataclass(frozen=True)
class DensityPrediction:
    record: int
    moments: np.ndarray
    raw_score: float
    calibrated_density: float
    flagged: bool
    expected_value: float
    variance: float


def predict_density(model: TrainedModel, record: Mapping[str, object]) -> DensityPolynomial:
    """Predicted polynomial for one record given as ``{variable: raw value}``."""
    v = featurize_row(model.layout, record, model.normalizers)
    return DensityPolynomial.from_moments(v @ model.beta, model.basis)


def raw_score(poly: DensityPolynomial, x0: float) -> float:
    return float(poly(x0))


def calibrate(poly: DensityPolynomial, spec: CalibrationSpec) -> CalibratedDensity:
    """phi(rho(x)) divided by the integral of phi(rho) over [0, 1]."""
    norm = float(calibration_norms(poly.a[None, 1:], spec, poly.kind)[0])
    return CalibratedDensity(poly, spec, norm)


def calibration_norms(moments, spec: CalibrationSpec, kind: str = "legendre") -> np.ndarray:
    """Normalizing integral of phi(rho) for every row of an (n, m) moment array.

    Clip is integrated exactly by splitting [0, 1] where rho crosses the
    floor.  Softplus starts from one 64-node Gauss-Legendre panel and
    refines rows that have not settled; a steep rho turns the soft corner
    into a layer far narrower than the node spacing.
    """
    moments = np.atleast_2d(np.asarray(moments, dtype=float))
    if spec.variant == "clip":
        return _clip_norms(moments, spec.eps, kind)
    return _adaptive_norms(moments, spec, kind)


NORM_RTOL = 1e-12
MAX_PANELS = 4096
_CHUNK_VALUES = 1 << 22


def _composite_norms(moments, spec, kind, panels):
    nodes, weights = gauss_legendre(QUAD_NODES)
    x = ((np.arange(panels)[:, None] + nodes[None, :]) / panels).ravel()
    w = np.tile(weights, panels) / panels
    f = basis_matrix(kind, x, moments.shape[1])[:, 1:]
    step = max(1, _CHUNK_VALUES // len(x))
    out = np.empty(len(moments))
    for start in range(0, len(moments), step):
        rho = 1.0 + moments[start:start + step] @ f.T
        out[start:start + step] = spec.phi(rho) @ w
    return out


def _adaptive_norms(moments, spec, kind):
    out = _composite_norms(moments, spec, kind, 1)
    todo = np.arange(len(moments))
    panels = 1
    while todo.size and panels < MAX_PANELS:
        panels *= 4
        fine = _composite_norms(moments[todo], spec, kind, panels)
        settled = np.abs(fine - out[todo]) <= NORM_RTOL * np.abs(fine)
        out[todo] = fine
        todo = todo[~settled]
    return out


def _series_roots(coeffs, kind):
    """Real parts of all roots of each row's series in u (Legendre or Chebyshev).

    Rows share one companion layout, so the matrices are built by shifting
    the companion of the leading unit series along its last column.
    """
    P = np.polynomial
    companion = P.legendre.legcompanion if kind == "legendre" else P.chebyshev.chebcompanion
    deg = coeffs.shape[1] - 1
    unit = np.zeros(deg + 1)
    unit[-1] = 1.0
    base = companion(unit)
    shift = np.empty((deg, deg))
    for k in range(deg):
        e = unit.copy()
        e[k] = 1.0
        shift[:, k] = base[:, -1] - companion(e)[:, -1]
    mats = np.broadcast_to(base, (len(coeffs), deg, deg)).copy()
    mats[:, :, -1] -= (coeffs[:, :-1] / coeffs[:, -1:]) @ shift.T
    return np.linalg.eigvals(mats).real


def _clip_norms(moments, eps, kind):
    """Exact integral of max(rho, eps): 1 plus the area lifted by the floor."""
    n, m = moments.shape
    out = np.ones(n)
    if m == 0:
        return np.full(n, max(1.0, eps))
    scale = np.sqrt(2 * np.arange(1, m + 1) + 1.0) if kind == "legendre" else math.sqrt(2.0)
    coeffs = np.hstack([np.full((n, 1), 1.0 - eps), moments * scale])
    mag = np.abs(coeffs)
    # effective degree: highest coefficient that is not negligible
    live = mag > 1e-13 * mag.max(axis=1, keepdims=True)
    degree = np.where(live.any(axis=1), m - np.argmax(live[:, ::-1], axis=1), 0)
    for d in np.unique(degree):
        rows = np.flatnonzero(degree == d)
        if d == 0:
            out[rows] = max(1.0, eps)  # rho is identically 1
            continue
        u = np.clip(_series_roots(coeffs[rows, :d + 1], kind), -1.0, 1.0)
        x = (u + 1.0) / 2.0 if kind == "legendre" else np.arccos(u) / math.pi
        cuts = np.sort(np.hstack([np.zeros((len(rows), 1)), x, np.ones((len(rows), 1))]), axis=1)
        a = np.hstack([np.ones((len(rows), 1)), moments[rows]])
        lo, hi = cuts[:, :-1], cuts[:, 1:]
        below = basis_matrix(kind, (lo + hi) / 2, m) @ a[:, :, None]
        below = below[..., 0] < eps
        F = basis_integral(kind, cuts, m) @ a[:, :, None]
        mass = np.diff(F[..., 0], axis=1)
        out[rows] = 1.0 + np.sum(np.where(below, eps * (hi - lo) - mass, 0.0), axis=1)
    return out


def loglik_bits_batch(model: TrainedModel, dataset: Dataset, moments=None) -> np.ndarray:
    """log2 of the calibrated density at each record's actual target value."""
    if moments is None:
        moments = model.coefficients(dataset)
    x0 = model.normalized_target(dataset)
    f = basis_matrix(model.basis, x0, model.m)[:, 1:]
    rho = 1.0 + np.sum(moments * f, axis=1)
    dens = model.calibration.phi(rho) / calibration_norms(moments, model.calibration, model.basis)
    return np.log2(dens)


def loglik_bits(model: TrainedModel, record: Mapping[str, object]) -> float:
    poly = predict_density(model, record)
    x0 = transform_new(model.target_column, float(record[model.target]))
    return math.log2(float(calibrate(poly, model.calibration)(x0)))


# ---------------------------------------------------------------------------
# Flagging
# ---------------------------------------------------------------------------


def flag_records(scores, fraction: float) -> tuple[np.ndarray, float]:
    """Flag exactly ``floor(fraction * n)`` lowest-scoring records.

    Ties are broken by record order (earlier records flagged first).  Returns
    the boolean mask and the threshold, the highest flagged score (``-inf``
    when nothing is flagged).
    """
    scores = np.asarray(scores, dtype=float)
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must lie in [0, 1]")
    n = len(scores)
    # floor on the decimal value of fraction, so 0.29 * 100 flags 29 rather than 28
    k = min(n, math.floor(Fraction(repr(float(fraction))) * n))
    order = np.argsort(scores, kind="stable")
    mask = np.zeros(n, dtype=bool)
    mask[order[:k]] = True
    threshold = float(scores[order[k - 1]]) if k else -math.inf
    return mask, threshold


def flag_threshold(scores, fraction: float) -> float:
    return flag_records(scores, fraction)[1]


# ---------------------------------------------------------------------------
# Original scale
# ---------------------------------------------------------------------------


def marginal_density(col: NormalizedColumn, y) -> np.ndarray:
    """Slope of the EDF at ``y``: centred difference over sorted training values.

    The half-width starts at sqrt(n) ranks, which keeps the spacing noise of
    continuous data down, and is doubled until the window ends differ, so
    tied values still give a finite density.
    """
    sy = col.sorted_y
    n = len(sy)
    if sy[0] == sy[-1]:
        raise ValueError("degenerate column: all training values are equal")
    y = np.atleast_1d(np.asarray(y, dtype=float))
    base = max(1, math.isqrt(n))
    out = np.empty(len(y))
    for i, v in enumerate(y):
        k = int(np.clip(np.searchsorted(sy, v), 0, n - 1))
        h = base
        while True:
            lo, hi = max(k - h, 0), min(k + h, n - 1)
            if sy[hi] > sy[lo]:
                break
            h *= 2
        out[i] = (hi - lo) / n / (sy[hi] - sy[lo])
    return out


def original_scale_density(model: TrainedModel, poly: DensityPolynomial,
                           col: NormalizedColumn | None = None,
                           resolution: int = 200) -> tuple[np.ndarray, np.ndarray]:
    """(y, density) pairs of the calibrated prediction mapped back to the original scale."""
    col = col or model.target_column
    x = (np.arange(resolution) + 0.5) / resolution
    y = inverse_quantile(col, x)
    dens = calibrate(poly, model.calibration)(x) * marginal_density(col, y)
    return y, dens


# ---------------------------------------------------------------------------
# Moments
# ---------------------------------------------------------------------------


def moments_batch(moments, col: NormalizedColumn, spec: CalibrationSpec,
                  kind: str = "legendre", chunk: int = 256) -> tuple[np.ndarray, np.ndarray]:
    """Expected value and variance on the original scale for every row of ``moments``.

    Each prediction becomes a distribution over the sorted training values
    with weights phi(rho((i - 1/2)/n)).
    """
    moments = np.atleast_2d(np.asarray(moments, dtype=float))
    sy = col.sorted_y
    n = len(sy)
    lattice = (np.arange(n) + 0.5) / n
    f = basis_matrix(kind, lattice, moments.shape[1])[:, 1:]
    # centring keeps the second-moment difference well conditioned
    shift = sy.mean()
    yc = sy - shift
    powers = np.stack([np.ones(n), yc, yc * yc], axis=1)
    mean = np.empty(len(moments))
    var = np.empty(len(moments))
    for start in range(0, len(moments), chunk):
        w = spec.phi(1.0 + moments[start:start + chunk] @ f.T)
        s0, s1, s2 = (w @ powers).T
        mu = s1 / s0
        mean[start:start + chunk] = shift + mu
        var[start:start + chunk] = np.maximum(s2 / s0 - mu * mu, 0.0)
    return mean, var


def predict_moments(model: TrainedModel, record, col: NormalizedColumn | None = None
                    ) -> tuple[float, float]:
    """Expected value and variance for one record (a mapping or a polynomial)."""
    poly = record if isinstance(record, DensityPolynomial) else predict_density(model, record)
    mean, var = moments_batch(poly.a[1:], col or model.target_column, model.calibration,
                              model.basis)
    return float(mean[0]), float(var[0])


# ---------------------------------------------------------------------------
# Whole-dataset scoring
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScoreTable:
    moments: np.ndarray
    raw_score: np.ndarray
    calibrated_density: np.ndarray
    log2_density: np.ndarray
    flagged: np.ndarray
    threshold: float
    expected_value: np.ndarray
    variance: np.ndarray

    def __len__(self) -> int:
        return len(self.raw_score)

    @property
    def negative_fraction(self) -> float:
        """Share of records whose raw score is below zero (a diagnostic only)."""
        return float(np.mean(self.raw_score < 0)) if len(self) else 0.0

    def record(self, i: int) -> DensityPrediction:
        return DensityPrediction(i, self.moments[i], float(self.raw_score[i]),
                                 float(self.calibrated_density[i]), bool(self.flagged[i]),
                                 float(self.expected_value[i]), float(self.variance[i]))


def score_dataset(model: TrainedModel, dataset: Dataset, flag_fraction: float = 0.01,
                  with_moments: bool = True) -> ScoreTable:
    a = model.coefficients(dataset)
    x0 = model.normalized_target(dataset)
    f = basis_matrix(model.basis, x0, model.m)[:, 1:]
    raw = 1.0 + np.sum(a * f, axis=1)
    dens = model.calibration.phi(raw) / calibration_norms(a, model.calibration, model.basis)
    flagged, threshold = flag_records(raw, flag_fraction)
    if with_moments:
        mean, var = moments_batch(a, model.target_column, model.calibration, model.basis)
    else:
        mean = var = np.full(len(raw), np.nan)
    return ScoreTable(a, raw, dens, np.log2(dens), flagged, threshold, mean, var)
