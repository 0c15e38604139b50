"""Daily close datasets: CSV ingestion and train/test splitting."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .paths import DAYS_PER_YEAR

DEFAULT_SPLIT = "2018-09-19"


@dataclass(frozen=True)
class Dataset:
    """Strictly increasing dates with positive closes.

    ``split`` is the first test date; everything before it is training data.
    """

    dates: np.ndarray
    closes: np.ndarray
    split: np.datetime64 | None = None

    def __post_init__(self):
        dates = np.asarray(self.dates, dtype="datetime64[D]")
        closes = np.asarray(self.closes, dtype=float)
        if dates.shape != closes.shape or dates.ndim != 1:
            raise DataError("dates and closes must be 1-d and of equal length")
        if len(dates) < 2:
            raise DataError("need at least 2 rows")
        bad = np.flatnonzero(np.diff(dates) <= np.timedelta64(0, "D"))
        if len(bad):
            raise DataError(f"dates not strictly increasing at row {bad[0] + 1}")
        if np.any(~np.isfinite(closes)) or np.any(closes <= 0):
            raise DataError(f"non-positive close at row {int(np.flatnonzero(~(closes > 0))[0])}")
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "closes", closes)
        if self.split is not None:
            object.__setattr__(self, "split", np.datetime64(self.split, "D"))

    def __len__(self):
        return len(self.dates)

    @property
    def log_prices(self) -> np.ndarray:
        return np.log(self.closes)

    @property
    def times(self) -> np.ndarray:
        """Calendar years since the first date (days / 365)."""
        return (self.dates - self.dates[0]).astype(np.int64) / DAYS_PER_YEAR

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self.dates).astype(np.int64) / DAYS_PER_YEAR

    def between(self, start=None, end=None) -> "Dataset":
        """Rows with ``start <= date <= end`` (inclusive, either bound optional)."""
        mask = np.ones(len(self), dtype=bool)
        if start is not None:
            mask &= self.dates >= np.datetime64(start, "D")
        if end is not None:
            mask &= self.dates <= np.datetime64(end, "D")
        return Dataset(self.dates[mask], self.closes[mask], self.split)

    def train(self) -> "Dataset":
        if self.split is None:
            return self
        return Dataset(self.dates[self.dates < self.split], self.closes[self.dates < self.split], self.split)

    def test(self) -> "Dataset":
        if self.split is None:
            raise DataError("dataset has no split date")
        return Dataset(self.dates[self.dates >= self.split], self.closes[self.dates >= self.split], self.split)


def ingest_csv(path, date_column: str = "date", close_column: str = "close", split=DEFAULT_SPLIT) -> Dataset:
    """Read a CSV with ISO dates; column names match case-insensitively."""
    path = Path(path)
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        names = [h.strip().lower() for h in header]
        try:
            di, ci = names.index(date_column.lower()), names.index(close_column.lower())
        except ValueError:
            raise DataError(f"{path}: header needs '{date_column}' and '{close_column}' columns") from None
        dates, closes = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                d = np.datetime64(row[di].strip(), "D")
                c = float(row[ci])
            except (ValueError, IndexError) as exc:
                raise DataError(f"{path}:{lineno}: cannot parse row ({exc})") from None
            if not c > 0:
                raise DataError(f"{path}:{lineno}: non-positive close {c}")
            if dates and d <= dates[-1]:
                kind = "duplicate" if d == dates[-1] else "unsorted"
                raise DataError(f"{path}:{lineno}: {kind} date {d}")
            dates.append(d)
            closes.append(c)
    return Dataset(np.array(dates, dtype="datetime64[D]"), np.array(closes), split)


def write_csv(ds: Dataset, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "close"])
        for d, c in zip(ds.dates, ds.closes):
            w.writerow([str(d), repr(float(c))])
