"""Log-price paths, lead-lag/time augmentation and segment sampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, InvalidParameterError

DAYS_PER_YEAR = 365.0


@dataclass(frozen=True)
class LogPath:
    """Time-stamped log prices; ``times`` are in calendar years."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if times.ndim != 1 or values.ndim != 1 or times.shape != values.shape:
            raise InvalidInputError("times and values must be 1-d arrays of equal length")
        if len(times) < 2:
            raise InvalidInputError("a path needs at least 2 points")
        if np.any(np.diff(times) < 0):
            raise InvalidInputError("times must be non-decreasing")
        if not (np.all(np.isfinite(values)) and np.all(np.isfinite(times))):
            raise InvalidInputError("path contains non-finite entries")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return len(self.values)

    def normalized(self) -> "LogPath":
        return LogPath(self.times - self.times[0], self.values - self.values[0])


@dataclass(frozen=True)
class AugmentedPath:
    """Lead-lag + time augmented path, one row per point: (t, lead, lag)."""

    t: np.ndarray
    lead: np.ndarray
    lag: np.ndarray
    lag_steps: int

    def as_array(self) -> np.ndarray:
        return np.stack([self.t, self.lead, self.lag], axis=-1)

    def __len__(self):
        return len(self.t)


@dataclass(frozen=True)
class Segment:
    start_index: int
    history_len: int
    total_len: int

    def __post_init__(self):
        if self.history_len >= self.total_len:
            raise InvalidInputError("history_len must be < total_len")


def log_returns(path: LogPath) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(returns, dt)`` with ``returns[i] = values[i+1] - values[i]``."""
    if len(path) < 2:
        raise InvalidInputError("path shorter than 2 points")
    return np.diff(path.values), np.diff(path.times)


def years_between(dates) -> np.ndarray:
    """Calendar-year offsets of ``dates`` from the first date (days / 365)."""
    d = np.asarray(dates, dtype="datetime64[D]")
    return (d - d[0]).astype(np.int64) / DAYS_PER_YEAR


def lead_lag_time_augment(path: LogPath, l: int = 1) -> AugmentedPath:
    """Start-normalise ``path`` and apply the lead-lag/time augmentation."""
    if l < 1:
        raise InvalidParameterError("lag l must be >= 1")
    p = path.normalized()
    idx_lead, idx_lag, lag_mask = _augment_indices(len(p), l)
    return AugmentedPath(
        t=p.times[idx_lead],
        lead=p.values[idx_lead],
        lag=p.values[idx_lag] * lag_mask,
        lag_steps=l,
    )


def _augment_indices(n_points: int, l: int):
    n = n_points - 1
    i = np.arange(n + 1 + l)
    idx_lead = np.minimum(i, n)
    idx_lag = np.maximum(i - l, 0)
    lag_mask = (i >= l).astype(float)
    return idx_lead, idx_lag, lag_mask


def augment_batch(values, times, l: int | None = 1, ad=None):
    """Augment a batch of paths given as ``(B, L)`` arrays.

    Returns a ``(B, L + l, 3)`` array of (t, lead, lag) channels, or
    ``(B, L, 2)`` (t, value) when ``l`` is None (time augmentation only).
    Both channels are start-normalised. ``values`` may be an autodiff
    variable; ``ad`` is the autodiff module in that case.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim == 1:
        times = np.broadcast_to(times, (values.shape[0], times.shape[0]))
    t0 = times - times[:, :1]
    if ad is None:
        v0 = values - values[:, :1]
        if l is None:
            return np.stack([t0, v0], axis=-1)
        if l < 1:
            raise InvalidParameterError("lag l must be >= 1")
        idx_lead, idx_lag, mask = _augment_indices(values.shape[1], l)
        return np.stack([t0[:, idx_lead], v0[:, idx_lead], v0[:, idx_lag] * mask], axis=-1)
    v0 = values - values[:, 0:1]
    if l is None:
        return ad.stack([t0, v0], axis=-1)
    if l < 1:
        raise InvalidParameterError("lag l must be >= 1")
    idx_lead, idx_lag, mask = _augment_indices(values.shape[1], l)
    return ad.stack([t0[:, idx_lead], v0[:, idx_lead], v0[:, idx_lag] * mask], axis=-1)


def sample_segments(series_len: int, seg_len: int, stride: int, history_len: int = 0) -> list[Segment]:
    """Overlapping windows starting at 0, stride, 2*stride, ...

    Returns an empty list when ``seg_len > series_len``.
    """
    if stride < 1:
        raise InvalidParameterError("stride must be >= 1")
    if seg_len > series_len:
        return []
    return [
        Segment(start, history_len, seg_len)
        for start in range(0, series_len - seg_len + 1, stride)
    ]
