"""Per-column min-max scaling with persisted statistics.

Stats file layout (UTF-8 text)::

    procaudit-normstats 1
    PSN <min> <max>
    PGN <min> <max>
    ... one line per feature column, in feature order

Values are written with ``repr`` so a load/save cycle is exact.
"""
from __future__ import annotations

import io
import os
from dataclasses import dataclass

import numpy as np

from .data import FEATURE_ORDER, Dataset

STATS_MAGIC = "procaudit-normstats"
STATS_VERSION = 1


class FitError(ValueError):
    pass


class StatsFormatError(ValueError):
    pass


def _matrix(data) -> np.ndarray:
    if isinstance(data, Dataset):
        return data.features()
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D feature matrix, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class NormalizationStats:
    mins: tuple[float, ...]
    maxs: tuple[float, ...]
    columns: tuple[str, ...] = FEATURE_ORDER

    def __post_init__(self):
        if not (len(self.mins) == len(self.maxs) == len(self.columns)):
            raise ValueError("mins, maxs and columns must have equal length")
        for name, lo, hi in zip(self.columns, self.mins, self.maxs):
            if not lo <= hi:
                raise ValueError(f"column {name}: min {lo} exceeds max {hi}")

    @property
    def min_array(self) -> np.ndarray:
        return np.array(self.mins, dtype=np.float64)

    @property
    def max_array(self) -> np.ndarray:
        return np.array(self.maxs, dtype=np.float64)

    def dumps(self) -> str:
        lines = [f"{STATS_MAGIC} {STATS_VERSION}"]
        for name, lo, hi in zip(self.columns, self.mins, self.maxs):
            lines.append(f"{name.upper()} {float(lo)!r} {float(hi)!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "NormalizationStats":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise StatsFormatError("empty stats stream")
        head = lines[0].split()
        if len(head) != 2 or head[0] != STATS_MAGIC:
            raise StatsFormatError("missing stats header")
        if head[1] != str(STATS_VERSION):
            raise StatsFormatError(f"unsupported stats version {head[1]}")
        body = lines[1:]
        if len(body) != len(FEATURE_ORDER):
            raise StatsFormatError(f"expected {len(FEATURE_ORDER)} column lines, found {len(body)}")
        mins, maxs = [], []
        for expected, line in zip(FEATURE_ORDER, body):
            parts = line.split()
            if len(parts) != 3 or parts[0].lower() != expected:
                raise StatsFormatError(f"bad stats line for {expected.upper()}: {line!r}")
            try:
                lo, hi = float(parts[1]), float(parts[2])
            except ValueError:
                raise StatsFormatError(f"non-numeric bound in {line!r}") from None
            if not (np.isfinite(lo) and np.isfinite(hi)) or lo > hi:
                raise StatsFormatError(f"invalid bounds in {line!r}")
            mins.append(lo)
            maxs.append(hi)
        return cls(tuple(mins), tuple(maxs))


def fit(data) -> NormalizationStats:
    """Exact column-wise min and max over every row of ``data``."""
    x = _matrix(data)
    if x.shape[0] == 0:
        raise FitError("cannot fit normalisation on an empty dataset")
    if x.shape[1] != len(FEATURE_ORDER):
        raise FitError(f"expected {len(FEATURE_ORDER)} feature columns, got {x.shape[1]}")
    return NormalizationStats(tuple(map(float, x.min(axis=0))), tuple(map(float, x.max(axis=0))))


def transform(data, stats: NormalizationStats) -> np.ndarray:
    """Map each cell to ``(x - min) / (max - min)``, clamped to [0, 1].

    Columns with ``max == min`` map to 0.0.
    """
    x = _matrix(data)
    lo, hi = stats.min_array, stats.max_array
    span = hi - lo
    degenerate = span == 0
    safe = np.where(degenerate, 1.0, span)
    out = (x - lo) / safe
    out[:, degenerate] = 0.0
    return np.clip(out, 0.0, 1.0)


def inverse_transform(normalized, stats: NormalizationStats) -> np.ndarray:
    n = np.asarray(normalized, dtype=np.float64)
    lo, hi = stats.min_array, stats.max_array
    return n * (hi - lo) + lo


def save(stats: NormalizationStats, dest) -> None:
    text = stats.dumps()
    if isinstance(dest, (str, os.PathLike)):
        with open(dest, "w", encoding="utf-8") as fh:
            fh.write(text)
    elif isinstance(dest, io.TextIOBase):
        dest.write(text)
    else:
        dest.write(text.encode("utf-8"))


def load(source) -> NormalizationStats:
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            raw = fh.read()
    elif isinstance(source, (bytes, bytearray)):
        raw = bytes(source)
    else:
        raw = source.read()
    if isinstance(raw, bytes):
        try:
            raw = raw.decode("utf-8")
        except UnicodeDecodeError:
            raise StatsFormatError("stats stream is not UTF-8 text") from None
    return NormalizationStats.loads(raw)
