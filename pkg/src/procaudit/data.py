"""Procurement records, CSV ingestion and label derivation.

The CSV interchange format is UTF-8, comma separated, with the header::

    PSN,PGN,PON,MGN,NP,PA,PTP,FT,SSN

FT is the fraud type (0 = clean). It is a label only and never enters the
feature matrix, whose columns follow ``FEATURE_ORDER``.
"""
from __future__ import annotations

import csv
import enum
import io
import os
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

CSV_COLUMNS = ("PSN", "PGN", "PON", "MGN", "NP", "PA", "PTP", "FT", "SSN")
FEATURE_ORDER = ("psn", "pgn", "pon", "mgn", "np", "pa", "ptp", "ssn")
ID_FIELDS = ("psn", "pgn", "pon", "mgn", "ssn")
REAL_FIELDS = ("np", "pa", "ptp")


class DataError(ValueError):
    """Base class for ingestion and labelling problems."""


class SchemaError(DataError):
    pass


class CsvParseError(DataError):
    pass


class ValidationError(DataError):
    pass


class EmptyLabelError(DataError):
    pass


class BalanceError(DataError):
    pass


class LabelMode(enum.Enum):
    BINARY = "binary"
    MULTICLASS = "multiclass"


@dataclass(frozen=True)
class ProcurementRecord:
    psn: int
    pgn: int
    pon: int
    mgn: int
    np: float
    pa: float
    ptp: float
    ft: int
    ssn: int

    def __post_init__(self):
        for name in REAL_FIELDS:
            if getattr(self, name) < 0:
                raise ValidationError(f"{name.upper()} must be non-negative")
        if self.ft < 0:
            raise ValidationError("FT must be a non-negative integer")

    @property
    def is_fraud(self) -> bool:
        return self.ft != 0


class Dataset:
    """Immutable, column-oriented collection of procurement records.

    ``has_labels`` is False when the source had no FT column; ``ft`` is then
    all zeros and must not be used as ground truth.
    """

    def __init__(self, columns: dict[str, np.ndarray], has_labels: bool = True):
        n = None
        cols = {}
        for name in ID_FIELDS + ("ft",):
            cols[name] = np.asarray(columns[name], dtype=np.int64).copy()
        for name in REAL_FIELDS:
            cols[name] = np.asarray(columns[name], dtype=np.float64).copy()
        for name, arr in cols.items():
            if arr.ndim != 1:
                raise ValueError(f"column {name} must be 1-D")
            if n is None:
                n = arr.shape[0]
            elif arr.shape[0] != n:
                raise ValueError("columns have different lengths")
            arr.setflags(write=False)
        self._cols = cols
        self.has_labels = has_labels
        self.feature_order = FEATURE_ORDER

    @classmethod
    def empty(cls) -> "Dataset":
        return cls({name: [] for name in FEATURE_ORDER + ("ft",)})

    @classmethod
    def from_records(cls, records: Iterable[ProcurementRecord]) -> "Dataset":
        records = list(records)
        cols = {name: [getattr(r, name) for r in records] for name in FEATURE_ORDER + ("ft",)}
        return cls(cols)

    def __len__(self) -> int:
        return int(self._cols["ft"].shape[0])

    def __getitem__(self, i: int) -> ProcurementRecord:
        c = self._cols
        return ProcurementRecord(
            psn=int(c["psn"][i]), pgn=int(c["pgn"][i]), pon=int(c["pon"][i]),
            mgn=int(c["mgn"][i]), np=float(c["np"][i]), pa=float(c["pa"][i]),
            ptp=float(c["ptp"][i]), ft=int(c["ft"][i]), ssn=int(c["ssn"][i]),
        )

    def __iter__(self) -> Iterator[ProcurementRecord]:
        for i in range(len(self)):
            yield self[i]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.has_labels == other.has_labels and all(
            np.array_equal(self._cols[k], other._cols[k]) for k in self._cols
        )

    def __repr__(self) -> str:
        return f"Dataset(n={len(self)}, fraud={self.fraud_count()})"

    def column(self, name: str) -> np.ndarray:
        return self._cols[name]

    @property
    def ft(self) -> np.ndarray:
        return self._cols["ft"]

    def features(self) -> np.ndarray:
        """(n, 8) float64 matrix in ``FEATURE_ORDER``; FT excluded."""
        if len(self) == 0:
            return np.zeros((0, len(FEATURE_ORDER)))
        return np.column_stack([self._cols[name].astype(np.float64) for name in FEATURE_ORDER])

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset({k: v[idx] for k, v in self._cols.items()}, self.has_labels)

    def fraud_count(self) -> int:
        return int(np.count_nonzero(self._cols["ft"]))

    def class_counts(self) -> dict[int, int]:
        values, counts = np.unique(self._cols["ft"], return_counts=True)
        return {int(v): int(c) for v, c in zip(values, counts)}


# --- CSV -------------------------------------------------------------------

def _open_text(source):
    if isinstance(source, (str, os.PathLike)):
        return open(source, newline="", encoding="utf-8"), True
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(bytes(source).decode("utf-8"), newline=""), True
    if isinstance(source, io.TextIOBase):
        return source, False
    return io.TextIOWrapper(source, encoding="utf-8", newline=""), False


def _parse_id(cell: str) -> int:
    try:
        return int(cell)
    except ValueError:
        value = float(cell)
        if not value.is_integer():
            raise
        return int(value)


def parse_csv(source, require_labels: bool = True) -> Dataset:
    """Read procurement rows from a path, bytes or file object.

    With ``require_labels=False`` a missing FT column is tolerated and the
    returned dataset has ``has_labels=False``.
    """
    fh, owned = _open_text(source)
    try:
        reader = csv.reader(fh)
        try:
            header = [h.strip().lstrip("﻿") for h in next(reader)]
        except StopIteration:
            raise SchemaError("empty CSV: header row missing") from None
        upper = [h.upper() for h in header]
        for name in CSV_COLUMNS:
            if name not in upper:
                if name == "FT" and not require_labels:
                    continue
                raise SchemaError(f"missing column {name}")
        has_labels = "FT" in upper
        pos = {name: upper.index(name) for name in CSV_COLUMNS if name in upper}

        cols: dict[str, list] = {name.lower(): [] for name in CSV_COLUMNS}
        for row_no, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < len(header):
                raise CsvParseError(f"row {row_no}: expected {len(header)} cells, got {len(row)}")
            for name, j in pos.items():
                cell = row[j].strip()
                key = name.lower()
                try:
                    value = float(cell) if key in REAL_FIELDS else _parse_id(cell)
                except ValueError:
                    raise CsvParseError(
                        f"row {row_no}, column {name}: not a number: {cell!r}"
                    ) from None
                if key in REAL_FIELDS:
                    if not np.isfinite(value):
                        raise CsvParseError(f"row {row_no}, column {name}: non-finite value")
                    if value < 0:
                        raise ValidationError(f"row {row_no}, column {name}: negative value {cell}")
                if key == "ft" and value < 0:
                    raise ValidationError(f"row {row_no}, column FT: negative fraud type")
                cols[key].append(value)
            if not has_labels:
                cols["ft"].append(0)
    finally:
        if owned:
            fh.close()
    return Dataset(cols, has_labels=has_labels)


def format_real(x: float) -> str:
    """Shortest round-tripping decimal, never in exponent notation."""
    return np.format_float_positional(float(x), unique=True, trim="-")


def write_csv(ds: Dataset, dest) -> None:
    """Write ``ds`` in the canonical column order to a path or text stream."""
    if isinstance(dest, (str, os.PathLike)):
        with open(dest, "w", newline="", encoding="utf-8") as fh:
            _write_rows(ds, fh)
    else:
        _write_rows(ds, dest)


def _write_rows(ds: Dataset, fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    cols = {name.lower(): ds.column(name.lower()) for name in CSV_COLUMNS}
    for i in range(len(ds)):
        writer.writerow([
            format_real(cols[n][i]) if n in REAL_FIELDS else str(int(cols[n][i]))
            for n in (c.lower() for c in CSV_COLUMNS)
        ])


def csv_text(ds: Dataset) -> str:
    buf = io.StringIO()
    _write_rows(ds, buf)
    return buf.getvalue()


# --- labels ----------------------------------------------------------------

def derive_labels(ds: Dataset, mode: LabelMode, include_clean: bool = False
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(labels, row_indices)`` for the requested task.

    BINARY labels every row (1 when FT != 0). MULTICLASS keeps only fraud rows
    and labels them FT - 1; ``include_clean=True`` keeps every row and uses FT
    itself as the class id.
    """
    mode = LabelMode(mode)
    ft = ds.ft
    if mode is LabelMode.BINARY:
        return (ft != 0).astype(np.int64), np.arange(len(ds), dtype=np.int64)
    if include_clean:
        if len(ds) == 0:
            raise EmptyLabelError("no records to label")
        return ft.astype(np.int64), np.arange(len(ds), dtype=np.int64)
    idx = np.flatnonzero(ft != 0)
    if idx.size == 0:
        raise EmptyLabelError("multiclass labels need at least one fraud record (FT != 0)")
    return ft[idx] - 1, idx


def balance(ds: Dataset, seed: int) -> Dataset:
    """Downsample the majority binary class so fraud and clean counts match.

    Retained rows keep their original relative order.
    """
    fraud = np.flatnonzero(ds.ft != 0)
    clean = np.flatnonzero(ds.ft == 0)
    if fraud.size == 0 or clean.size == 0:
        raise BalanceError("balancing needs both fraud and clean records")
    rng = np.random.default_rng(seed)
    if fraud.size > clean.size:
        fraud = rng.choice(fraud, size=clean.size, replace=False)
    elif clean.size > fraud.size:
        clean = rng.choice(clean, size=fraud.size, replace=False)
    return ds.subset(np.sort(np.concatenate([fraud, clean])))
