"""Lambert W Gaussianisation, MA(p) variance model and structured noise."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special

from .errors import (
    ConvergenceError,
    DegenerateInputError,
    InvalidInputError,
    InvalidParameterError,
)


@dataclass(frozen=True)
class LambertParams:
    delta: float = 0.0
    mu: float = 0.0
    sigma: float = 1.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise InvalidParameterError("sigma must be > 0")
        if not np.isfinite(self.delta):
            raise InvalidParameterError("delta must be finite")


@dataclass(frozen=True)
class MAParams:
    omega: float
    betas: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "betas", tuple(float(b) for b in np.atleast_1d(self.betas)))
        if not self.omega > 0:
            raise InvalidParameterError("omega must be > 0")
        if any(b < 0 for b in self.betas):
            raise InvalidParameterError("betas must be >= 0")

    @property
    def p(self) -> int:
        return len(self.betas)


@dataclass
class NoiseModel:
    """Fitted transform and variance model.

    ``history[j]`` is the Gaussianised return ending at date ``j + 1``, so the
    p values up to and including date ``a`` are ``history[a - p : a]``.
    """

    lambert: LambertParams
    ma: MAParams
    history: np.ndarray
    scale_mean: float = 0.0
    scale_std: float = 1.0
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        self.history = np.asarray(self.history, dtype=float)
        if len(self.history) < self.ma.p:
            raise InvalidInputError("history shorter than the MA order")


# ---------------------------------------------------------------------------
# Lambert W
# ---------------------------------------------------------------------------


def lambert_forward(u, params: LambertParams):
    u = np.asarray(u, dtype=float)
    U = (u - params.mu) / params.sigma
    return U * np.exp(0.5 * params.delta * U * U) * params.sigma + params.mu


def _w_inverse_std(Uv, delta):
    """Solve ``U exp(delta U^2 / 2) = Uv`` on the principal branch."""
    if delta == 0:
        return np.array(Uv, dtype=float)
    # with w = delta U^2, w e^w = delta Uv^2 and U = Uv exp(-w / 2); no division by delta
    w = special.lambertw(delta * Uv * Uv).real
    return Uv * np.exp(-0.5 * w)


def lambert_inverse(v, params: LambertParams):
    if params.delta < 0:
        raise InvalidParameterError("inverse requires delta >= 0")
    v = np.asarray(v, dtype=float)
    Uv = (v - params.mu) / params.sigma
    return _w_inverse_std(Uv, params.delta) * params.sigma + params.mu


def kurtosis(x) -> float:
    """Population (non-excess) kurtosis m4 / m2^2."""
    x = np.asarray(x, dtype=float)
    d = x - x.mean()
    m2 = np.mean(d * d)
    if m2 == 0:
        raise DegenerateInputError("kurtosis undefined for constant data")
    return float(np.mean(d**4) / m2**2)


def _delta_for_kurtosis(U, delta_max=5.0) -> float:
    def excess(delta):
        return kurtosis(_w_inverse_std(U, delta)) - 3.0

    if excess(0.0) <= 0:
        return 0.0
    if excess(delta_max) > 0:
        return delta_max
    return float(optimize.brentq(excess, 0.0, delta_max, xtol=1e-12))


def gaussianize(r, tol: float = 1e-8, kurt_tol: float = 1e-3, max_iter: int = 200):
    """Estimate (delta, mu, sigma) by iterated moment matching on kurtosis.

    Alternates: delta from the kurtosis-3 root of the inverse-transformed
    standardised data, then mu/sigma as the mean/std of the transformed
    data. Returns ``(r_W, params)``.
    """
    r = np.asarray(r, dtype=float)
    if r.size < 4 or not np.all(np.isfinite(r)):
        raise InvalidInputError("need at least 4 finite observations")
    if np.std(r) == 0:
        raise DegenerateInputError("zero-variance input")
    mu, sigma = float(np.median(r)), float(np.std(r))
    delta = 0.0
    history = []
    for it in range(max_iter):
        U = (r - mu) / sigma
        delta = _delta_for_kurtosis(U)
        x = _w_inverse_std(U, delta) * sigma + mu
        mu_new, sigma_new = float(x.mean()), float(x.std())
        change = abs(mu_new - mu) + abs(sigma_new - sigma)
        mu, sigma = mu_new, sigma_new
        params = LambertParams(delta, mu, sigma)
        k = kurtosis(lambert_inverse(r, params))
        history.append((delta, mu, sigma, k))
        if change < tol and (abs(k - 3.0) < kurt_tol or delta == 0.0):
            return lambert_inverse(r, params), params
    raise ConvergenceError(
        f"moment iteration did not converge in {max_iter} steps",
        diagnostics={"last": history[-1], "iterations": len(history)},
    )


# ---------------------------------------------------------------------------
# MA(p) variance model
# ---------------------------------------------------------------------------


def _softplus(a):
    return np.logaddexp(0.0, a)


def _softplus_inv(y):
    return y + np.log(-np.expm1(-y))


def _lags(z, p):
    T = len(z)
    sq = z * z
    return np.stack([sq[p - i : T - i] for i in range(1, p + 1)], axis=1), z[p:]


def ma_negloglik(z, omega: float, betas) -> float:
    betas = np.asarray(betas, dtype=float)
    lag, tgt = _lags(np.asarray(z, dtype=float), len(betas))
    s2 = omega + lag @ betas
    return float(0.5 * np.sum(np.log(s2) + tgt * tgt / s2))


def fit_ma(r_W, p: int = 20, max_iter: int = 2000) -> MAParams:
    """Gaussian conditional MLE of sigma_t^2 = omega + sum beta_i z_{t-i}^2."""
    if int(p) != p or p <= 0:
        raise InvalidParameterError("p must be a positive integer")
    z = np.asarray(r_W, dtype=float)
    if len(z) <= 10 * p:
        raise InvalidInputError(f"need more than {10 * p} observations for MA({p})")
    lag, tgt = _lags(z, p)
    tgt2 = tgt * tgt
    n = len(tgt)

    def objective(theta):
        w = _softplus(theta)
        s2 = w[0] + lag @ w[1:]
        f = 0.5 * np.sum(np.log(s2) + tgt2 / s2) / n
        ds2 = 0.5 * (1.0 / s2 - tgt2 / (s2 * s2)) / n
        g = np.concatenate([[ds2.sum()], lag.T @ ds2]) * special.expit(theta)
        return f, g

    var = float(np.mean(z * z))
    theta0 = _softplus_inv(np.concatenate([[0.5 * var], np.full(p, 0.5 / p)]))
    res = optimize.minimize(
        objective, theta0, jac=True, method="L-BFGS-B",
        options={"maxiter": max_iter, "gtol": 1e-9, "ftol": 1e-14},
    )
    gnorm = float(np.linalg.norm(res.jac))
    if not res.success and gnorm > 1e-5:
        raise ConvergenceError(f"MA fit failed: {res.message}", diagnostics={"grad_norm": gnorm})
    w = _softplus(res.x)
    return MAParams(float(w[0]), tuple(w[1:]))


def simulate_ma(params: MAParams, n: int, seed: int, burn: int = 500) -> np.ndarray:
    rng = np.random.default_rng(seed)
    p = params.p
    betas = np.array(params.betas)
    z = np.zeros(n + burn + p)
    eps = rng.standard_normal(len(z))
    for t in range(p, len(z)):
        s2 = params.omega + betas @ (z[t - p : t][::-1] ** 2)
        z[t] = np.sqrt(s2) * eps[t]
    return z[burn + p :]


def ma_noise(params: MAParams, H_z, n: int, d_z: int, rng: np.random.Generator) -> np.ndarray:
    """``(n, d_z)`` noise; every dimension starts from history ``H_z`` (oldest first)."""
    p = params.p
    H_z = np.asarray(H_z, dtype=float)
    if len(H_z) < p:
        raise InvalidInputError(f"need {p} history values, got {len(H_z)}")
    betas = np.array(params.betas)
    z = np.empty((p + n, d_z))
    z[:p] = H_z[len(H_z) - p :, None]
    eps = rng.standard_normal((n, d_z))
    for i in range(n):
        t = p + i
        # betas[0] multiplies the most recent value
        s2 = params.omega + betas @ (z[t - p : t][::-1] ** 2)
        z[t] = np.sqrt(s2) * eps[i]
    return z[p:]


def sample_noise(model: NoiseModel, anchor_date_index: int, n: int, d_z: int, seed) -> np.ndarray:
    """Noise for anchor date ``a`` using the p Gaussianised returns up to ``a``."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    p = model.ma.p
    a = int(anchor_date_index)
    if a - p < 0 or a > len(model.history):
        raise InvalidInputError(f"anchor {a} needs {p} prior Gaussianised returns")
    return ma_noise(model.ma, model.history[a - p : a], n, d_z, rng)


# ---------------------------------------------------------------------------
# preprocessing and robust fits
# ---------------------------------------------------------------------------


def annualize(returns, dt) -> np.ndarray:
    dt = np.asarray(dt, dtype=float)
    if np.any(dt <= 0):
        raise InvalidInputError("time steps must be positive")
    return np.asarray(returns, dtype=float) / dt


def fit_noise_model(returns, dt, p: int = 20) -> NoiseModel:
    """Annualise, standardise, Gaussianise and fit MA(p) on a return series."""
    ann = annualize(returns, dt)
    mean, std = float(ann.mean()), float(ann.std())
    if std == 0:
        raise DegenerateInputError("zero-variance returns")
    r_W, lam = gaussianize((ann - mean) / std)
    return NoiseModel(lam, fit_ma(r_W, p), r_W, mean, std)


def transform_returns(model: NoiseModel, returns, dt) -> np.ndarray:
    """Apply a fitted model's preprocessing and inverse transform to new returns."""
    z = (annualize(returns, dt) - model.scale_mean) / model.scale_std
    return lambert_inverse(z, model.lambert)


def drawdown(prices) -> np.ndarray:
    prices = np.asarray(prices, dtype=float)
    peak = np.maximum.accumulate(prices)
    return 1.0 - prices / peak


def downturn_windows(prices, threshold: float = 0.30) -> list[tuple[int, int]]:
    """Half-open index ranges where the drop from the running peak is >= threshold."""
    mask = drawdown(prices) >= threshold
    edges = np.flatnonzero(np.diff(np.concatenate([[0], mask.astype(int), [0]])))
    return [(int(a), int(b)) for a, b in zip(edges[::2], edges[1::2])]


def average_params(fits: list[MAParams]) -> MAParams:
    if not fits:
        raise InvalidInputError("nothing to average")
    if len({f.p for f in fits}) != 1:
        raise InvalidInputError("cannot average MA fits of different order")
    return MAParams(
        float(np.mean([f.omega for f in fits])),
        tuple(np.mean([f.betas for f in fits], axis=0)),
    )


def fit_robust(segments, p: int = 20, average: bool = True):
    """MA fits per downturn segment; the element-wise mean when ``average``."""
    segments = [np.asarray(s, dtype=float) for s in segments]
    if not segments:
        raise InvalidInputError("no downturn segments selected")
    fits = [fit_ma(s, p) for s in segments]
    return average_params(fits) if average else fits
