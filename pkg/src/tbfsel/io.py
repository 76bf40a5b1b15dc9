"""CSV ingestion into a validated :class:`~tbfsel.data.Dataset`.

Categorical covariates expand to dummy columns (first level dropped)
that enter or leave models jointly.  Rows with missing values in any
used column are dropped and counted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .data import Covariate, Dataset, make_dataset
from .errors import SchemaError

COLUMN_KINDS = ("continuous", "binary", "categorical")


@dataclass(frozen=True)
class ColumnSpec:
    """How one CSV column enters the analysis."""

    name: str
    kind: str = "continuous"
    fp: bool = False

    def __post_init__(self):
        if self.kind not in COLUMN_KINDS:
            raise SchemaError(f"unknown column kind {self.kind!r} for {self.name}")
        if self.fp and self.kind != "continuous":
            raise SchemaError(f"{self.name}: only continuous columns can be fp-eligible")


@dataclass(frozen=True)
class IngestReport:
    rows_read: int
    rows_dropped: int
    n: int
    n_obs: int


def _numeric(frame: pd.DataFrame, col: str) -> pd.Series:
    raw = frame[col]
    converted = pd.to_numeric(raw, errors="coerce")
    bad = converted.isna() & raw.notna()
    if bad.any():
        row = int(np.where(bad)[0][0])
        raise SchemaError(
            f"unparseable value {raw.iloc[row]!r} in column {col!r}, row {row + 2}"
        )
    return converted


def ingest_csv(
    path,
    family: str,
    response: str,
    covariates,
    status: str | None = None,
    weight: str | None = None,
) -> tuple[Dataset, IngestReport]:
    """Read a CSV file into a dataset.

    Parameters
    ----------
    path : str or file-like
        CSV file with a header row (RFC 4180 quoting).
    family : str
        Model family; the Cox family additionally requires ``status``.
    response : str
        Response column (survival time for Cox).
    covariates : sequence of ColumnSpec
        Candidate covariates in report order.
    status : str, optional
        Event indicator column (0 censored / 1 event), Cox only.
    weight : str, optional
        Positive observation weight column.
    """
    covariates = [
        c if isinstance(c, ColumnSpec) else ColumnSpec(**c) for c in covariates
    ]
    try:
        frame = pd.read_csv(path, skipinitialspace=True)
    except (OSError, pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise SchemaError(f"cannot read {path}: {exc}") from exc
    rows_read = len(frame)

    needed = [response] + [c.name for c in covariates]
    if family == "cox":
        if status is None:
            raise SchemaError("cox ingestion requires a status column")
        needed.append(status)
    if weight is not None:
        needed.append(weight)
    missing_cols = [c for c in needed if c not in frame.columns]
    if missing_cols:
        raise SchemaError(f"missing columns: {missing_cols}")

    numeric_cols = {response}
    numeric_cols.update(c.name for c in covariates if c.kind != "categorical")
    if status is not None:
        numeric_cols.add(status)
    if weight is not None:
        numeric_cols.add(weight)
    work = frame[needed].copy()
    for col in numeric_cols:
        work[col] = _numeric(frame, col)

    complete = work.notna().all(axis=1)
    work = work.loc[complete]
    rows_dropped = rows_read - len(work)
    if len(work) == 0:
        raise SchemaError("no complete rows after dropping missing values")

    columns: list[np.ndarray] = []
    cov_meta: list[Covariate] = []
    for c in covariates:
        if c.kind == "categorical":
            levels = sorted(work[c.name].astype(str).unique())
            if len(levels) < 2:
                raise SchemaError(f"categorical column {c.name!r} has a single level")
            idx = []
            for level in levels[1:]:
                idx.append(len(columns))
                columns.append((work[c.name].astype(str) == level).to_numpy(float))
            cov_meta.append(
                Covariate(name=c.name, columns=tuple(idx), kind="categorical")
            )
        else:
            cov_meta.append(
                Covariate(
                    name=c.name,
                    columns=(len(columns),),
                    kind=c.kind,
                    fp_eligible=c.fp,
                )
            )
            columns.append(work[c.name].to_numpy(float))

    X = np.column_stack(columns) if columns else np.empty((len(work), 0))
    y = work[response].to_numpy(float)
    w = work[weight].to_numpy(float) if weight is not None else None
    st = None
    if family == "cox":
        st = work[status].to_numpy(float)
        if not np.all(np.isin(st, (0.0, 1.0))):
            raise SchemaError(f"status column {status!r} must contain only 0 and 1")

    ds = make_dataset(
        y=y, X=X, family=family, w=w, status=st, covariates=tuple(cov_meta)
    )
    return ds, IngestReport(
        rows_read=rows_read, rows_dropped=rows_dropped, n=ds.n, n_obs=ds.n_obs
    )
