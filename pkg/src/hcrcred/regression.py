"""Per-moment least-squares regression and the trained model."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .basis import DiscreteBasis, basis_matrix
from .calibration import CalibrationSpec
from .dataset import Dataset, DatasetSchema
from .edf import NormalizedColumn, from_sorted, transform_new
from .features import (FeatureLayout, assemble_layout, build_design_matrix, build_layout,
                       fit_normalizers)

MODEL_FORMAT = "hcrcred-model"
MODEL_VERSION = 1
PRNG = "numpy.random.PCG64"
SCORE_QUANTILES = (0.001, 0.005, 0.01, 0.02, 0.05, 0.1, 0.25, 0.5)


def build_targets(x0, m: int, kind: str = "legendre") -> np.ndarray:
    """Targets b^j = f_j(x0) as the columns of an (n, m) array."""
    if m < 1:
        raise ValueError("degree m must be at least 1")
    return basis_matrix(kind, np.asarray(x0, dtype=float), m)[..., 1:]


class MinNormSolver:
    """Minimum-norm least squares through a thin SVD of the design.

    Singular values below ``s_max * max(n, p) * eps`` are treated as zero, so
    rank-deficient designs (one-hot blocks summing to the constant column)
    get the pseudoinverse solution.  With ``ridge > 0`` the retained
    directions are shrunk by ``s / (s^2 + ridge)``.
    """

    def __init__(self, M, ridge: float = 0.0):
        M = np.asarray(M, dtype=float)
        if M.ndim != 2:
            raise ValueError("design must be a 2-d matrix")
        if not np.all(np.isfinite(M)):
            raise ValueError("design matrix has non-finite entries")
        if ridge < 0:
            raise ValueError("ridge must be non-negative")
        n, p = M.shape
        U, s, Vt = np.linalg.svd(M, full_matrices=False)
        tol = (s[0] if len(s) else 0.0) * max(n, p) * np.finfo(float).eps
        r = int(np.sum(s > tol))
        self.rank = r
        self.shape = (n, p)
        self._Ut = U[:, :r].T.copy()
        self._V = Vt[:r].T.copy()
        s = s[:r]
        self._scale = s / (s * s + ridge) if ridge > 0 else 1.0 / s

    def solve(self, b) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        if b.shape != (self.shape[0],):
            raise ValueError(f"target length {b.shape} does not match design rows {self.shape[0]}")
        if not np.all(np.isfinite(b)):
            raise ValueError("target has non-finite entries")
        return self._V @ (self._scale * (self._Ut @ b))


def solve_min_norm(M, b, ridge: float = 0.0) -> np.ndarray:
    return MinNormSolver(M, ridge).solve(b)


@dataclass(frozen=True)
class TrainedModel:
    schema: DatasetSchema
    layout: FeatureLayout
    normalizers: Mapping[str, NormalizedColumn]
    beta: np.ndarray  # (p, m)
    calibration: CalibrationSpec = field(default_factory=CalibrationSpec)
    ridge: float = 0.0
    score_quantiles: Mapping[float, float] = field(default_factory=dict)
    negative_fraction: float = float("nan")

    def __post_init__(self):
        if self.beta.ndim != 2 or self.beta.shape[1] < 1:
            raise ValueError("beta must be a (p, m) matrix with m >= 1")
        if self.beta.shape[0] != self.layout.p:
            raise ValueError("beta rows do not match the layout size")
        if not np.all(np.isfinite(self.beta)):
            raise ValueError("beta has non-finite entries")

    @property
    def m(self) -> int:
        return self.beta.shape[1]

    @property
    def basis(self) -> str:
        return self.layout.basis

    @property
    def target(self) -> str:
        return self.schema.target.name

    @property
    def target_column(self) -> NormalizedColumn:
        return self.normalizers[self.target]

    @property
    def n_train(self) -> int:
        return self.target_column.n

    def truncate(self, m: int) -> "TrainedModel":
        """The degree-``m`` model; each moment is fitted independently, so this is exact."""
        if not 1 <= m <= self.m:
            raise ValueError(f"cannot truncate a degree-{self.m} model to {m}")
        beta = self.beta[:, :m].copy()
        beta.setflags(write=False)
        return TrainedModel(self.schema, self.layout, self.normalizers, beta,
                            self.calibration, self.ridge)

    def with_calibration(self, spec: CalibrationSpec) -> "TrainedModel":
        return TrainedModel(self.schema, self.layout, self.normalizers, self.beta, spec,
                            self.ridge, self.score_quantiles, self.negative_fraction)

    def design(self, dataset: Dataset) -> np.ndarray:
        return build_design_matrix(self.layout, dataset, self.normalizers)

    def coefficients(self, dataset: Dataset) -> np.ndarray:
        """a_1..a_m for every record, shape (n, m)."""
        return self.design(dataset) @ self.beta

    def normalized_target(self, dataset: Dataset) -> np.ndarray:
        return np.atleast_1d(transform_new(self.target_column, dataset[self.target]))

    def raw_scores(self, dataset: Dataset) -> np.ndarray:
        a = self.coefficients(dataset)
        f = basis_matrix(self.basis, self.normalized_target(dataset), self.m)[:, 1:]
        return 1.0 + np.sum(a * f, axis=1)


def train(dataset: Dataset, schema: DatasetSchema | None = None, m: int = 4,
          basis: str = "legendre", calibration: CalibrationSpec | None = None,
          encoding: str = "onehot", ridge: float = 0.0, features=None) -> TrainedModel:
    """Fit one least-squares problem per moment f_1..f_m of the target.

    ``features`` optionally restricts the conditioning variables; ``[]`` fits
    the constant-only model, whose coefficients are the marginal sample means
    of f_j(x_0).
    """
    schema = schema or dataset.schema
    if m < 1:
        raise ValueError("degree m must be at least 1")
    if dataset.n < 1:
        raise ValueError("cannot train on an empty dataset")
    dataset = dataset.with_schema(schema)
    normalizers = fit_normalizers(schema, dataset, features)
    layout = build_layout(schema, dataset, basis, encoding, features)
    if dataset.n < layout.p:
        warnings.warn(f"only {dataset.n} rows for {layout.p} features", stacklevel=2)
    M = build_design_matrix(layout, dataset, normalizers)
    B = build_targets(normalizers[schema.target.name].x, m, basis)
    solver = MinNormSolver(M, ridge)
    beta = np.column_stack([solver.solve(B[:, j]) for j in range(m)])
    beta.setflags(write=False)
    model = TrainedModel(schema, layout, normalizers, beta, calibration or CalibrationSpec(),
                         ridge)
    raw = model.raw_scores(dataset)
    quantiles = {q: float(np.quantile(raw, q)) for q in SCORE_QUANTILES}
    return TrainedModel(schema, layout, normalizers, beta, model.calibration, ridge,
                        quantiles, float(np.mean(raw < 0)))


# ---------------------------------------------------------------------------
# Model file
# ---------------------------------------------------------------------------


def _model_sections(model: TrainedModel) -> list[tuple[str, object]]:
    lay = model.layout
    layout = {
        "basis": lay.basis,
        "encoding": lay.encoding,
        "variables": [list(v) for v in lay.variables],
        "degrees": dict(lay.degrees),
        "levels": {k: list(v) for k, v in lay.levels.items()},
        "discrete": {
            k: {"levels": list(db.levels), "weights": db.weights.tolist(),
                "vectors": db.vectors.tolist()}
            for k, db in lay.discrete.items()
        },
        "labels": lay.labels(),
    }
    return [
        ("format", MODEL_FORMAT),
        ("version", MODEL_VERSION),
        ("m", model.m),
        ("basis", model.basis),
        ("calibration", model.calibration.to_dict()),
        ("ridge", model.ridge),
        ("prng", PRNG),
        ("p", lay.p),
        ("n_train", model.n_train),
        ("schema", model.schema.to_dict()),
        ("layout", layout),
        ("score_quantiles", [[q, v] for q, v in model.score_quantiles.items()]),
        ("negative_fraction", model.negative_fraction),
        ("sorted_y", {k: c.sorted_y.tolist() for k, c in model.normalizers.items()}),
        ("beta", model.beta.tolist()),
    ]


def dumps_model(model: TrainedModel) -> str:
    """Plain-text (JSON) model; floats are written with round-trip precision."""
    lines = [f"{json.dumps(k)}: {json.dumps(v, allow_nan=True)}"
             for k, v in _model_sections(model)]
    return "{\n" + ",\n".join(lines) + "\n}\n"


def save_model(model: TrainedModel, path) -> None:
    Path(path).write_text(dumps_model(model), encoding="utf-8")


def loads_model(text: str) -> TrainedModel:
    d = json.loads(text)
    if d.get("format") != MODEL_FORMAT:
        raise ValueError("not a model file")
    if d.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model version {d.get('version')}")
    schema = DatasetSchema.from_dict(d["schema"])
    lay = d["layout"]
    discrete = {
        k: DiscreteBasis(tuple(v["levels"]), np.array(v["weights"], dtype=float),
                         np.array(v["vectors"], dtype=float))
        for k, v in lay["discrete"].items()
    }
    layout = assemble_layout(
        [tuple(v) for v in lay["variables"]],
        {k: int(v) for k, v in lay["degrees"].items()},
        {k: tuple(v) for k, v in lay["levels"].items()},
        discrete, lay["basis"], lay["encoding"],
    )
    normalizers = {k: from_sorted(v) for k, v in d["sorted_y"].items()}
    beta = np.array(d["beta"], dtype=float).reshape(layout.p, int(d["m"]))
    beta.setflags(write=False)
    return TrainedModel(
        schema, layout, normalizers, beta, CalibrationSpec.from_dict(d["calibration"]),
        float(d["ridge"]), {float(q): float(v) for q, v in d["score_quantiles"]},
        float(d["negative_fraction"]),
    )


def load_model(path) -> TrainedModel:
    return loads_model(Path(path).read_text(encoding="utf-8"))
