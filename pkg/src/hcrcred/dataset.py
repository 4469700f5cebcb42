"""Tabular data ingestion: schemas, CSV parsing and synthetic generators."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Mapping, Sequence

import numpy as np
import yaml

KINDS = ("continuous", "categorical", "binary")
MAX_FEATURE_DEGREE = 12


class SchemaError(ValueError):
    """Raised for an invalid schema or generator configuration."""


class ParseError(ValueError):
    """Raised when a CSV file does not conform to its schema."""


@dataclass(frozen=True)
class VariableSpec:
    name: str
    kind: str
    feature_degree: int = 9
    is_target: bool = False

    def __post_init__(self):
        if not self.name:
            raise SchemaError("variable name must be non-empty")
        if self.kind not in KINDS:
            raise SchemaError(f"variable {self.name}: unknown kind {self.kind!r}")
        if not 1 <= self.feature_degree <= MAX_FEATURE_DEGREE:
            raise SchemaError(
                f"variable {self.name}: feature_degree must be in [1, {MAX_FEATURE_DEGREE}]"
            )
        if self.is_target and self.kind != "continuous":
            raise SchemaError(f"target variable {self.name} must be continuous")


@dataclass(frozen=True)
class DatasetSchema:
    variables: tuple[VariableSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        names = [v.name for v in self.variables]
        if len(names) < 2:
            raise SchemaError("schema needs at least 2 variables")
        if len(set(names)) != len(names):
            raise SchemaError("variable names must be unique")
        n_targets = sum(v.is_target for v in self.variables)
        if n_targets != 1:
            raise SchemaError(f"schema needs exactly one target, found {n_targets}")

    @property
    def names(self) -> list[str]:
        return [v.name for v in self.variables]

    @property
    def target(self) -> VariableSpec:
        return next(v for v in self.variables if v.is_target)

    @property
    def features(self) -> list[VariableSpec]:
        """Non-target variables in declaration order."""
        return [v for v in self.variables if not v.is_target]

    def __getitem__(self, name: str) -> VariableSpec:
        for v in self.variables:
            if v.name == name:
                return v
        raise KeyError(name)

    def restrict(self, names: Sequence[str]) -> "DatasetSchema":
        """Schema holding the target plus the given feature variables.

        The target is always kept; declaration order is preserved.  At least one
        feature must remain, since a schema needs two variables.
        """
        keep = set(names) | {self.target.name}
        unknown = keep - set(self.names)
        if unknown:
            raise KeyError(f"unknown variables: {sorted(unknown)}")
        return DatasetSchema(tuple(v for v in self.variables if v.name in keep))

    def to_dict(self) -> dict:
        out = []
        for v in self.variables:
            d = {"name": v.name, "kind": v.kind}
            if v.kind == "continuous":
                d["degree"] = v.feature_degree
            if v.is_target:
                d["target"] = True
            out.append(d)
        return {"variables": out}

    @classmethod
    def from_dict(cls, data: Mapping) -> "DatasetSchema":
        try:
            entries = data["variables"]
        except (KeyError, TypeError):
            raise SchemaError("schema must contain a 'variables' list") from None
        specs = []
        for e in entries:
            specs.append(
                VariableSpec(
                    name=str(e["name"]),
                    kind=str(e["kind"]),
                    feature_degree=int(e.get("degree", 9)),
                    is_target=bool(e.get("target", False)),
                )
            )
        return cls(tuple(specs))


def load_schema(path) -> DatasetSchema:
    """Read a schema from a YAML or JSON file."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    return DatasetSchema.from_dict(data)


def save_schema(schema: DatasetSchema, path) -> None:
    path = Path(path)
    if path.suffix == ".json":
        path.write_text(json.dumps(schema.to_dict(), indent=2) + "\n", encoding="utf-8")
    else:
        path.write_text(yaml.safe_dump(schema.to_dict(), sort_keys=False), encoding="utf-8")


@dataclass(frozen=True)
class Dataset:
    """Column-major table conforming to a schema.

    Continuous and binary columns are float arrays, categorical columns are
    arrays of ``str``.  Columns are made read-only on construction.
    """

    schema: DatasetSchema
    columns: Mapping[str, np.ndarray]
    n: int = field(init=False)

    def __post_init__(self):
        cols = {}
        lengths = set()
        for spec in self.schema.variables:
            if spec.name not in self.columns:
                raise SchemaError(f"missing column {spec.name}")
            col = np.asarray(self.columns[spec.name])
            if spec.kind == "categorical":
                col = col.astype(str)
            else:
                col = col.astype(float)
                if not np.all(np.isfinite(col)):
                    raise SchemaError(f"column {spec.name} has non-finite values")
                if spec.kind == "binary" and not np.all((col == 0) | (col == 1)):
                    raise SchemaError(f"binary column {spec.name} has values outside {{0,1}}")
            col = col.copy()
            col.setflags(write=False)
            cols[spec.name] = col
            lengths.add(len(col))
        if len(lengths) > 1:
            raise SchemaError(f"columns have differing lengths {sorted(lengths)}")
        object.__setattr__(self, "columns", MappingProxyType(cols))
        object.__setattr__(self, "n", lengths.pop() if lengths else 0)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.columns[name]

    def take(self, rows) -> "Dataset":
        """Subset of rows (index array or boolean mask), in the given order."""
        rows = np.asarray(rows)
        return Dataset(self.schema, {k: v[rows] for k, v in self.columns.items()})

    def with_schema(self, schema: DatasetSchema) -> "Dataset":
        return Dataset(schema, {v.name: self.columns[v.name] for v in schema.variables})

    def equals(self, other: "Dataset") -> bool:
        if self.schema != other.schema or self.n != other.n:
            return False
        return all(np.array_equal(self[k], other[k]) for k in self.schema.names)


def _parse_number(text: str, row: int, name: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"row {row}, column {name}: non-numeric value {text!r}") from None
    if not math.isfinite(value):
        raise ParseError(f"row {row}, column {name}: non-finite value {text!r}")
    return value


def parse_csv(path, schema: DatasetSchema) -> Dataset:
    """Parse a comma-separated file with a header row against ``schema``.

    Rows are numbered from 1 for the first data row in error messages.  Extra
    columns not named in the schema are ignored.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        for name in schema.names:
            if name not in header:
                raise ParseError(f"missing column {name}")
        index = {name: header.index(name) for name in schema.names}
        raw = {name: [] for name in schema.names}
        for row_no, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"row {row_no}: expected {len(header)} fields, got {len(row)}")
            for spec in schema.variables:
                cell = row[index[spec.name]].strip()
                if cell == "":
                    raise ParseError(f"row {row_no}, column {spec.name}: empty cell")
                if spec.kind == "categorical":
                    raw[spec.name].append(cell)
                    continue
                value = _parse_number(cell, row_no, spec.name)
                if spec.kind == "binary" and value not in (0.0, 1.0):
                    raise ParseError(
                        f"row {row_no}, column {spec.name}: binary value {cell!r} not in {{0,1}}"
                    )
                raw[spec.name].append(value)
    cols = {}
    for spec in schema.variables:
        if spec.kind == "categorical":
            cols[spec.name] = np.array(raw[spec.name], dtype=str)
        else:
            cols[spec.name] = np.array(raw[spec.name], dtype=float)
    return Dataset(schema, cols)


def _format_cell(value, kind: str) -> str:
    if kind == "categorical":
        return str(value)
    if kind == "binary":
        return str(int(value))
    return repr(float(value))


def dataset_to_csv(dataset: Dataset) -> str:
    """CSV text that :func:`parse_csv` turns back into ``dataset`` exactly."""
    buf = io.StringIO()
    specs = dataset.schema.variables
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([s.name for s in specs])
    for i in range(dataset.n):
        w.writerow([_format_cell(dataset[s.name][i], s.kind) for s in specs])
    return buf.getvalue()


def write_csv(dataset: Dataset, path) -> None:
    Path(path).write_text(dataset_to_csv(dataset), encoding="utf-8")


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CategorySpec:
    """One level of the driving categorical variable.

    ``coefficients`` are a_1..a_k of the target density
    ``1 + sum_j a_j f_j(x)`` in the orthonormal Legendre basis on [0, 1].
    """

    level: str
    probability: float
    coefficients: tuple[float, ...] = ()


@dataclass(frozen=True)
class NoiseColumn:
    """A feature column drawn independently of everything else.

    kind ``continuous`` draws uniform values on [0, 1) (``levels`` > 0 rounds
    them onto that many distinct values), ``categorical`` draws ``levels``
    equiprobable symbols ``L0, L1, ...`` and ``binary`` draws 0/1 with P(1)=p.
    """

    name: str
    kind: str
    levels: int = 0
    p: float = 0.5
    degree: int = 9


@dataclass(frozen=True)
class GeneratorConfig:
    n: int
    categories: tuple[CategorySpec, ...]
    target: str = "y"
    driver: str = "group"
    noise: tuple[NoiseColumn, ...] = ()

    @classmethod
    def from_dict(cls, data: Mapping) -> "GeneratorConfig":
        cats = tuple(
            CategorySpec(
                level=str(c["level"]),
                probability=float(c["probability"]),
                coefficients=tuple(float(a) for a in c.get("coefficients", ())),
            )
            for c in data["categories"]
        )
        noise = tuple(
            NoiseColumn(
                name=str(c["name"]),
                kind=str(c["kind"]),
                levels=int(c.get("levels", 0)),
                p=float(c.get("p", 0.5)),
                degree=int(c.get("degree", 9)),
            )
            for c in data.get("noise", ())
        )
        return cls(
            n=int(data["n"]),
            categories=cats,
            target=str(data.get("target", "y")),
            driver=str(data.get("driver", "group")),
            noise=noise,
        )

    @property
    def has_driver(self) -> bool:
        # a lone category is still written out when nothing else would be
        return len(self.categories) > 1 or not self.noise

    def schema(self) -> DatasetSchema:
        specs = [VariableSpec(self.target, "continuous", is_target=True)]
        if self.has_driver:
            specs.append(VariableSpec(self.driver, "categorical"))
        for c in self.noise:
            specs.append(VariableSpec(c.name, c.kind, feature_degree=c.degree))
        return DatasetSchema(tuple(specs))


def _legendre_density(coefficients: Sequence[float]) -> np.polynomial.Polynomial:
    """Density 1 + sum a_j f_j(x) as a power-series polynomial in x."""
    series = np.zeros(len(coefficients) + 1)
    series[0] = 1.0
    for j, a in enumerate(coefficients, start=1):
        series[j] = a * math.sqrt(2 * j + 1)
    # Legendre series in t = 2x - 1, re-expressed in x
    leg = np.polynomial.Legendre(series, domain=[0, 1], window=[-1, 1])
    return leg.convert(kind=np.polynomial.Polynomial, domain=[0, 1], window=[0, 1])


def _check_density(poly: np.polynomial.Polynomial, level: str) -> None:
    candidates = [0.0, 1.0]
    if poly.degree() >= 2:
        for r in poly.deriv().roots():
            if abs(r.imag) < 1e-12 and 0.0 <= r.real <= 1.0:
                candidates.append(float(r.real))
    lowest = min(poly(c) for c in candidates)
    if lowest < 0:
        raise SchemaError(
            f"generator density for category {level!r} is negative on [0,1] (min {lowest:.4g})"
        )


def sample_polynomial_density(coefficients, size: int, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF sampling of ``1 + sum a_j f_j(x)`` on [0, 1] by bisection."""
    poly = _legendre_density(coefficients)
    _check_density(poly, "?")
    cdf = poly.integ(lbnd=0.0)
    u = rng.random(size)
    lo = np.zeros(size)
    hi = np.ones(size)
    # 60 halvings take the bracket below double resolution on [0, 1]
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        below = cdf(mid) < u
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def generate_synthetic(config: GeneratorConfig, seed: int) -> Dataset:
    """Draw a dataset whose target density depends only on the driver category.

    Randomness comes from ``numpy.random.default_rng(seed)`` (PCG64).
    """
    if config.n < 1:
        raise SchemaError("generator n must be positive")
    if not config.categories:
        raise SchemaError("generator needs at least one category")
    probs = np.array([c.probability for c in config.categories], dtype=float)
    if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
        raise SchemaError("category probabilities must be non-negative and sum to 1")
    for c in config.categories:
        _check_density(_legendre_density(c.coefficients), c.level)

    rng = np.random.default_rng(seed)
    which = rng.choice(len(probs), size=config.n, p=probs)
    target = np.empty(config.n)
    for k, c in enumerate(config.categories):
        rows = np.flatnonzero(which == k)
        target[rows] = sample_polynomial_density(c.coefficients, len(rows), rng)

    cols: dict[str, np.ndarray] = {config.target: target}
    if config.has_driver:
        levels = np.array([c.level for c in config.categories], dtype=str)
        cols[config.driver] = levels[which]
    for c in config.noise:
        if c.kind == "continuous":
            vals = rng.random(config.n)
            if c.levels > 0:
                vals = np.floor(vals * c.levels)
            cols[c.name] = vals
        elif c.kind == "categorical":
            if c.levels < 1:
                raise SchemaError(f"noise column {c.name}: categorical needs levels >= 1")
            cols[c.name] = np.array([f"L{k}" for k in rng.integers(0, c.levels, config.n)])
        elif c.kind == "binary":
            cols[c.name] = (rng.random(config.n) < c.p).astype(float)
        else:
            raise SchemaError(f"noise column {c.name}: unknown kind {c.kind!r}")
    return Dataset(config.schema(), cols)


def load_generator_config(path) -> GeneratorConfig:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    return GeneratorConfig.from_dict(data)
