"""Observational dataset container and its CSV schema.

The on-disk format is a UTF-8, comma-separated file with header columns
``x1..xd, t, y`` and optionally ``y0, y1`` (de-confounded potential
outcomes, test sets only).  Floats are written with shortest round-trip
``repr`` so regeneration under a fixed seed is byte-identical.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class DatasetFormatError(ValueError):
    """Malformed dataset file; message carries row/column context."""


@dataclass(frozen=True)
class Dataset:
    """Covariates, binary treatments, factual outcomes; optionally both-arm
    potential outcomes for de-confounded test evaluation."""

    covariates: np.ndarray        # (n, d) float64
    treatments: np.ndarray        # (n,) int64 in {0, 1}
    outcomes: np.ndarray          # (n,) float64
    potential_outcomes: np.ndarray | None = None   # (n, 2) float64

    def __post_init__(self):
        cov = np.ascontiguousarray(self.covariates, dtype=np.float64)
        t = np.ascontiguousarray(self.treatments, dtype=np.int64)
        y = np.ascontiguousarray(self.outcomes, dtype=np.float64)
        if cov.ndim != 2:
            raise ValueError("covariates must be a 2-d matrix")
        n = cov.shape[0]
        if t.shape != (n,) or y.shape != (n,):
            raise ValueError("inconsistent row counts across columns")
        if not np.isin(t, (0, 1)).all():
            raise ValueError("treatments must be binary 0/1")
        if not np.isfinite(cov).all() or not np.isfinite(y).all():
            raise ValueError("covariates and outcomes must be finite")
        po = self.potential_outcomes
        if po is not None:
            po = np.ascontiguousarray(po, dtype=np.float64)
            if po.shape != (n, 2):
                raise ValueError("potential_outcomes must have shape (n, 2)")
            if not np.isfinite(po).all():
                raise ValueError("potential_outcomes must be finite")
        object.__setattr__(self, "covariates", cov)
        object.__setattr__(self, "treatments", t)
        object.__setattr__(self, "outcomes", y)
        object.__setattr__(self, "potential_outcomes", po)

    @property
    def n(self) -> int:
        return self.covariates.shape[0]

    @property
    def d(self) -> int:
        return self.covariates.shape[1]


def _expected_header(d: int, with_potential: bool) -> list[str]:
    cols = [f"x{i}" for i in range(1, d + 1)] + ["t", "y"]
    if with_potential:
        cols += ["y0", "y1"]
    return cols


def save_dataset_csv(ds: Dataset, path: str | Path) -> None:
    path = Path(path)
    with_potential = ds.potential_outcomes is not None
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(_expected_header(ds.d, with_potential))
        for i in range(ds.n):
            row = [repr(float(v)) for v in ds.covariates[i]]
            row.append(str(int(ds.treatments[i])))
            row.append(repr(float(ds.outcomes[i])))
            if with_potential:
                row.append(repr(float(ds.potential_outcomes[i, 0])))
                row.append(repr(float(ds.potential_outcomes[i, 1])))
            writer.writerow(row)


def load_dataset_csv(path: str | Path) -> Dataset:
    path = Path(path)
    with path.open("r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetFormatError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        d = 0
        while d < len(header) and header[d] == f"x{d + 1}":
            d += 1
        if d == 0:
            raise DatasetFormatError(f"{path}: header must start with x1..xd, got {header[:3]}")
        rest = header[d:]
        if rest == ["t", "y"]:
            with_potential = False
        elif rest == ["t", "y", "y0", "y1"]:
            with_potential = True
        else:
            raise DatasetFormatError(
                f"{path}: expected columns t,y[,y0,y1] after x{d}, got {rest}")
        width = len(header)

        cov_rows: list[list[float]] = []
        t_rows: list[int] = []
        y_rows: list[float] = []
        po_rows: list[tuple[float, float]] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise DatasetFormatError(
                    f"{path}: row {lineno}: expected {width} fields, got {len(row)}")
            try:
                cov_rows.append([float(v) for v in row[:d]])
                t_val = row[d].strip()
                if t_val not in ("0", "1"):
                    raise ValueError(f"treatment must be 0 or 1, got {t_val!r}")
                t_rows.append(int(t_val))
                y_rows.append(float(row[d + 1]))
                if with_potential:
                    po_rows.append((float(row[d + 2]), float(row[d + 3])))
            except ValueError as exc:
                raise DatasetFormatError(f"{path}: row {lineno}: {exc}") from None
    if not cov_rows:
        raise DatasetFormatError(f"{path}: no data rows")
    return Dataset(
        covariates=np.asarray(cov_rows, dtype=np.float64),
        treatments=np.asarray(t_rows, dtype=np.int64),
        outcomes=np.asarray(y_rows, dtype=np.float64),
        potential_outcomes=np.asarray(po_rows, dtype=np.float64) if with_potential else None,
    )
