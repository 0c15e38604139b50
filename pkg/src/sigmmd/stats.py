"""Stylized-facts statistics for real and generated return series."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, InvalidInputError

BUSINESS_DAYS = 252


class MomentUndefinedError(DegenerateInputError):
    """Skew/kurtosis need positive variance; ``partial`` holds mean and vol."""

    def __init__(self, message, partial):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class MomentReport:
    ann_return: float
    volatility: float
    skew: float | None
    excess_kurtosis: float | None

    def as_dict(self) -> dict:
        return {
            "ann_return": self.ann_return,
            "volatility": self.volatility,
            "skew": self.skew,
            "excess_kurtosis": self.excess_kurtosis,
        }


@dataclass(frozen=True)
class Curve:
    """Per-lag (or per-threshold) mean and mean absolute deviation."""

    x: np.ndarray
    mean: np.ndarray
    mad: np.ndarray


def moments(returns) -> MomentReport:
    """Annualised mean/volatility (252 days), skew and excess kurtosis."""
    r = np.asarray(returns, dtype=float)
    if r.ndim != 1 or len(r) < 4:
        raise InvalidInputError("need a 1-d series with at least 4 returns")
    d = r - r.mean()
    # plain products keep odd moments sign-symmetric
    d2 = d * d
    m2 = np.mean(d2)
    ann = BUSINESS_DAYS * float(r.mean())
    vol = float(np.sqrt(BUSINESS_DAYS * m2))
    if m2 == 0 or np.ptp(r) == 0:
        raise MomentUndefinedError("skew and kurtosis undefined for zero variance",
                                   MomentReport(ann, vol, None, None))
    skew = float(np.mean(d2 * d) / m2**1.5)
    kurt = float(np.mean(d2 * d2) / m2**2 - 3.0)
    return MomentReport(ann, vol, skew, kurt)


def acf(series, max_lag: int, squared: bool = False) -> np.ndarray:
    """Sample autocorrelation at lags 1..max_lag with the 1/n covariance normaliser."""
    x = np.asarray(series, dtype=float)
    if squared:
        x = x * x
    n = len(x)
    if max_lag < 1 or n <= max_lag + 1:
        raise InvalidInputError("series too short for the requested lags")
    d = x - x.mean()
    c0 = np.dot(d, d) / n
    if c0 == 0:
        raise DegenerateInputError("autocorrelation undefined for a constant series")
    assert np.isclose(c0, np.var(x), rtol=1e-10, atol=0.0)
    return np.array([np.dot(d[:-k], d[k:]) / n / c0 for k in range(1, max_lag + 1)])


def leverage_corr(returns, max_lag: int) -> np.ndarray:
    """Pearson corr(r_t, r_{t+tau}^2) for tau = 1..max_lag."""
    r = np.asarray(returns, dtype=float)
    if max_lag < 1 or len(r) <= max_lag + 1:
        raise InvalidInputError("series too short for the requested lags")
    out = np.empty(max_lag)
    for k in range(1, max_lag + 1):
        a, b = r[:-k], r[k:] ** 2
        sa, sb = a.std(), b.std()
        if sa == 0 or sb == 0:
            raise DegenerateInputError("correlation undefined for a constant series")
        out[k - 1] = np.mean((a - a.mean()) * (b - b.mean())) / (sa * sb)
    return out


def aggregate(curves) -> Curve:
    """Mean and mean absolute deviation across a batch of equal-length curves."""
    arr = np.asarray(curves, dtype=float)
    if arr.ndim != 2 or len(arr) == 0:
        raise InvalidInputError("expected a non-empty batch of curves")
    mean = arr.mean(axis=0)
    return Curve(np.arange(1, arr.shape[1] + 1), mean, np.abs(arr - mean).mean(axis=0))


def acf_batch(batch, max_lag: int, squared: bool = False) -> Curve:
    return aggregate([acf(s, max_lag, squared) for s in batch])


def leverage_batch(batch, max_lag: int) -> Curve:
    return aggregate([leverage_corr(s, max_lag) for s in batch])


@dataclass(frozen=True)
class GainLoss:
    thresholds: np.ndarray
    ratio: np.ndarray
    counts: np.ndarray
    low_confidence: np.ndarray
    omitted: np.ndarray


def threshold_grid(returns, n_points: int = 20, quantile: float = 0.95) -> np.ndarray:
    """Grid from 0 up to the ``quantile`` of |r|."""
    top = float(np.quantile(np.abs(np.asarray(returns, dtype=float)), quantile))
    return np.linspace(0.0, top, n_points)


def gain_loss_ratio(returns, thresholds=None, min_count: int = 30) -> GainLoss:
    """P(r > 0 | |r| > threshold) per threshold.

    Thresholds with no exceedances are dropped into ``omitted``; points with
    fewer than ``min_count`` exceedances are flagged ``low_confidence``.
    """
    r = np.asarray(returns, dtype=float).reshape(-1)
    th = threshold_grid(r) if thresholds is None else np.asarray(thresholds, dtype=float)
    keep, ratio, counts = [], [], []
    omitted = []
    for t in th:
        sel = np.abs(r) > t
        cnt = int(sel.sum())
        if cnt == 0:
            omitted.append(t)
            continue
        keep.append(t)
        counts.append(cnt)
        ratio.append(float(np.mean(r[sel] > 0)))
    counts = np.array(counts, dtype=int)
    return GainLoss(np.array(keep), np.array(ratio), counts, counts < min_count, np.array(omitted))


def endpoint_summary(paths) -> np.ndarray:
    """exp(x_end - x_start) per log path; accepts LogPath objects or 2-d arrays."""
    vals = [np.asarray(getattr(p, "values", p), dtype=float) for p in paths]
    if not vals:
        raise InvalidInputError("empty batch")
    return np.array([np.exp(v[-1] - v[0]) for v in vals])
