"""Model specifications: covariate inclusion and power transformations.

An assignment for a covariate is one of

* ``None`` -- excluded,
* ``"lin"`` -- included linearly (all of its design columns),
* a sorted tuple of 1 or 2 powers -- a fractional-polynomial transform
  of a positive continuous covariate.

Power 0 denotes the logarithm and a repeated power ``p`` contributes the
pair ``(x**p, x**p * log(x))`` (Box-Tidwell convention).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import DataError

FP_POWERS = (-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 3.0)

Assignment = "None | str | tuple[float, ...]"


def normalize_assignment(a):
    """Canonical form: powers (1,) collapse to "lin", tuples are sorted."""
    if a is None or a == "lin":
        return a
    powers = tuple(sorted(float(p) for p in a))
    if powers == (1.0,):
        return "lin"
    if len(powers) not in (1, 2):
        raise DataError("fractional polynomials support 1 or 2 powers")
    return powers


@dataclass(frozen=True)
class ModelSpec:
    """Per-covariate assignment defining one candidate model."""

    assignments: tuple

    def __post_init__(self):
        object.__setattr__(
            self, "assignments", tuple(normalize_assignment(a) for a in self.assignments)
        )

    @classmethod
    def null(cls, p: int) -> "ModelSpec":
        return cls(assignments=(None,) * p)

    @classmethod
    def from_mask(cls, mask) -> "ModelSpec":
        return cls(assignments=tuple("lin" if m else None for m in mask))

    @property
    def p(self) -> int:
        return len(self.assignments)

    @property
    def included(self) -> tuple[int, ...]:
        return tuple(k for k, a in enumerate(self.assignments) if a is not None)

    @property
    def excluded(self) -> tuple[int, ...]:
        return tuple(k for k, a in enumerate(self.assignments) if a is None)

    @property
    def is_null(self) -> bool:
        return all(a is None for a in self.assignments)

    def includes(self, k: int) -> bool:
        return self.assignments[k] is not None

    def with_assignment(self, k: int, a) -> "ModelSpec":
        items = list(self.assignments)
        items[k] = normalize_assignment(a)
        return ModelSpec(assignments=tuple(items))

    def dimension(self, ds: Dataset) -> int:
        """Number of design columns the model contributes."""
        d = 0
        for k, a in enumerate(self.assignments):
            if a is None:
                continue
            d += len(ds.covariates[k].columns) if a == "lin" else len(a)
        return d

    def label(self, ds: Dataset | None = None) -> str:
        """Compact string form, e.g. ``"x2:fp(-1,-2);x8:lin"``."""
        parts = []
        for k, a in enumerate(self.assignments):
            if a is None:
                continue
            name = ds.covariates[k].name if ds is not None else f"x{k + 1}"
            if a == "lin":
                parts.append(f"{name}:lin")
            else:
                parts.append(f"{name}:fp({','.join(_fmt(p) for p in a)})")
        return ";".join(parts) if parts else "<null>"


def _fmt(p: float) -> str:
    return str(int(p)) if float(p).is_integer() else str(p)


def fp_shift(x: np.ndarray) -> float:
    """Shift making a covariate positive before power transformation.

    Zero when already positive; otherwise ``-min(x)`` plus the smallest
    positive gap between sorted distinct values.
    """
    lo = float(np.min(x))
    if lo > 0:
        return 0.0
    dist = np.unique(x)
    if dist.size < 2:
        raise DataError("cannot shift a constant nonpositive covariate")
    gap = float(np.min(np.diff(dist)))
    return -lo + gap


def fp_transform(x: np.ndarray, powers) -> np.ndarray:
    """Columns of the power transform of a positive vector.

    Sorted powers are applied left to right; a power equal to its
    predecessor multiplies the previous column by ``log(x)``.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise DataError("fractional polynomial transform requires positive values")
    powers = tuple(sorted(float(p) for p in powers))
    if len(powers) not in (1, 2):
        raise DataError("fractional polynomials support 1 or 2 powers")
    logx = np.log(x)
    cols = []
    for i, p in enumerate(powers):
        if i > 0 and p == powers[i - 1]:
            cols.append(cols[-1] * logx)
        elif p == 0.0:
            cols.append(logx.copy())
        else:
            cols.append(x**p)
    return np.column_stack(cols)


def build_columns(ds: Dataset, spec: ModelSpec):
    """Raw (uncentered) design columns for a model.

    Returns ``(X, names, shifts)`` where ``shifts`` maps covariate index
    to the positivity shift applied before a power transform.
    """
    if spec.p != ds.p:
        raise DataError(f"spec covers {spec.p} covariates but dataset has {ds.p}")
    cols, names, shifts = [], [], {}
    for k, a in enumerate(spec.assignments):
        if a is None:
            continue
        cov = ds.covariates[k]
        if a == "lin":
            for j in cov.columns:
                cols.append(ds.X[:, j])
                names.append(cov.name if len(cov.columns) == 1 else f"{cov.name}[{j}]")
        else:
            if len(cov.columns) != 1:
                raise DataError(f"covariate {cov.name} is not a single column; no fp")
            x = ds.X[:, cov.columns[0]]
            shift = fp_shift(x)
            shifts[k] = shift
            block = fp_transform(x + shift, a)
            for i, p in enumerate(a):
                suffix = "*log" if i > 0 and p == a[i - 1] else ""
                names.append(f"{cov.name}^{_fmt(p)}{suffix}")
            cols.append(block)
    if not cols:
        return np.empty((ds.n, 0)), [], shifts
    X = np.column_stack([c if c.ndim > 1 else c.reshape(-1, 1) for c in cols])
    return X, names, shifts
