"""Regression features of the conditioning variables.

A row's feature vector starts with a constant 1, then for each non-target
variable in schema order:

* continuous -> f_1(x)..f_D(x) of its normalized value,
* categorical -> one indicator per training level (or, with the ``discrete``
  encoding, f_1..f_{s-1} of the weighted discrete basis),
* binary -> the raw 0/1 value.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .basis import DiscreteBasis, basis_matrix, build_discrete_basis
from .dataset import Dataset, DatasetSchema
from .edf import NormalizedColumn, normalize, transform_new

ENCODINGS = ("onehot", "discrete")


@dataclass(frozen=True)
class FeatureEntry:
    source: str
    kind: str  # constant | moment | onehot | binary | discrete
    detail: object = None

    def label(self) -> str:
        if self.kind == "constant":
            return "const"
        if self.kind == "binary":
            return self.source
        if self.kind == "onehot":
            return f"{self.source}={self.detail}"
        return f"{self.source}:f{self.detail}"


@dataclass(frozen=True)
class FeatureLayout:
    entries: tuple[FeatureEntry, ...]
    variables: tuple[tuple[str, str], ...]  # (name, kind) of non-target inputs
    degrees: Mapping[str, int] = field(default_factory=dict)
    levels: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    discrete: Mapping[str, DiscreteBasis] = field(default_factory=dict)
    basis: str = "legendre"
    encoding: str = "onehot"

    @property
    def p(self) -> int:
        return len(self.entries)

    def labels(self) -> list[str]:
        return [e.label() for e in self.entries]


def _first_appearance(values) -> tuple[str, ...]:
    seen: dict[str, None] = {}
    for v in values:
        seen.setdefault(str(v), None)
    return tuple(seen)


def assemble_layout(variables, degrees, levels, discrete, basis: str = "legendre",
                    encoding: str = "onehot") -> FeatureLayout:
    """Layout from per-variable state (used when loading a stored model)."""
    entries = [FeatureEntry("", "constant")]
    for name, kind in variables:
        if kind == "continuous":
            entries += [FeatureEntry(name, "moment", j) for j in range(1, degrees[name] + 1)]
        elif kind == "binary":
            entries.append(FeatureEntry(name, "binary"))
        elif encoding == "onehot":
            entries += [FeatureEntry(name, "onehot", level) for level in levels[name]]
        elif name in discrete:
            entries += [FeatureEntry(name, "discrete", j)
                        for j in range(1, discrete[name].degree + 1)]
    return FeatureLayout(tuple(entries), tuple(variables), dict(degrees), dict(levels),
                         dict(discrete), basis, encoding)


def build_layout(schema: DatasetSchema, dataset: Dataset, basis: str = "legendre",
                 encoding: str = "onehot", features=None) -> FeatureLayout:
    """Deterministic layout from the training data.

    Categorical levels are taken in order of first appearance.  ``features``
    restricts the conditioning variables to a subset (schema order is kept);
    an empty subset gives the constant-only layout.
    """
    if encoding not in ENCODINGS:
        raise ValueError(f"unknown categorical encoding {encoding!r}")
    specs = schema.features
    if features is not None:
        unknown = set(features) - {v.name for v in specs}
        if unknown:
            raise KeyError(f"unknown feature variables: {sorted(unknown)}")
        specs = [v for v in specs if v.name in set(features)]
    variables, degrees, levels, discrete = [], {}, {}, {}
    for spec in specs:
        variables.append((spec.name, spec.kind))
        if spec.kind == "continuous":
            degrees[spec.name] = spec.feature_degree
        elif spec.kind == "categorical":
            lv = _first_appearance(dataset[spec.name])
            if len(lv) == 1:
                warnings.warn(f"categorical variable {spec.name} has a single level",
                              stacklevel=2)
            levels[spec.name] = lv
            if encoding == "discrete" and len(lv) > 1:
                discrete[spec.name] = build_discrete_basis(dataset[spec.name], len(lv) - 1)
    return assemble_layout(variables, degrees, levels, discrete, basis, encoding)


def fit_normalizers(schema: DatasetSchema, dataset: Dataset,
                    features=None) -> dict[str, NormalizedColumn]:
    """EDF state for the target and every (selected) continuous feature."""
    return {v.name: normalize(dataset[v.name]) for v in schema.variables
            if v.kind == "continuous"
            and (v.is_target or features is None or v.name in set(features))}


def _block(layout: FeatureLayout, name: str, kind: str, values, normalizers) -> np.ndarray:
    if kind == "continuous":
        x = transform_new(normalizers[name], np.asarray(values, dtype=float))
        return basis_matrix(layout.basis, np.atleast_1d(x), layout.degrees[name])[:, 1:]
    if kind == "binary":
        return np.asarray(values, dtype=float).reshape(-1, 1)
    values = np.asarray(values, dtype=str)
    if layout.encoding == "discrete":
        if name in layout.discrete:
            return layout.discrete[name].evaluate(values)
        return np.zeros((len(values), 0))  # single-level column carries no features
    lv = np.asarray(layout.levels[name], dtype=str)
    # unseen levels match nothing and leave the block all zeros
    return (values[:, None] == lv[None, :]).astype(float)


def build_design_matrix(layout: FeatureLayout, dataset: Dataset,
                        normalizers: Mapping[str, NormalizedColumn]) -> np.ndarray:
    """n x p matrix whose rows are the feature vectors of the records."""
    blocks = [np.ones((dataset.n, 1))]
    for name, kind in layout.variables:
        blocks.append(_block(layout, name, kind, dataset[name], normalizers))
    M = np.hstack(blocks)
    if M.shape[1] != layout.p:
        raise AssertionError(f"design has {M.shape[1]} columns, layout expects {layout.p}")
    return M


def featurize_row(layout: FeatureLayout, row: Mapping[str, object],
                  normalizers: Mapping[str, NormalizedColumn]) -> np.ndarray:
    """Feature vector of one record given as ``{variable: raw value}``."""
    parts = [np.ones(1)]
    for name, kind in layout.variables:
        parts.append(_block(layout, name, kind, [row[name]], normalizers)[0])
    return np.concatenate(parts)
