"""Euler simulation of the Heston model and the noise built from it."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidParameterError

TRADING_DT = 1.0 / 252.0


@dataclass(frozen=True)
class HestonParams:
    mu: float
    kappa: float
    theta: float
    sigma: float
    rho: float
    v0: float

    def __post_init__(self):
        if not self.v0 > 0:
            raise InvalidParameterError("v0 must be > 0")
        if abs(self.rho) > 1:
            raise InvalidParameterError("|rho| must be <= 1")
        if min(self.kappa, self.theta, self.sigma) < 0:
            raise InvalidParameterError("kappa, theta and sigma must be >= 0")

    @classmethod
    def reference(cls) -> "HestonParams":
        """The reference parameter set used by the noise experiment."""
        return cls(mu=0.2, kappa=1.0, theta=0.25, sigma=0.7, rho=-0.7, v0=0.09)

    def iid_surrogate(self) -> "HestonParams":
        """Near-constant variance: kappa = sigma = 1e-9 and theta = v0."""
        return replace(self, kappa=1e-9, sigma=1e-9, theta=self.v0)


def _normals(seed: int, n_paths: int, n_steps: int, stream: int) -> np.ndarray:
    """``(n_paths, n_steps, 2)`` draws; path i always uses the same stream."""
    out = np.empty((n_paths, n_steps, 2))
    for i in range(n_paths):
        out[i] = np.random.default_rng([seed, i, stream]).standard_normal((n_steps, 2))
    return out


def _euler(params: HestonParams, z: np.ndarray, dt: float):
    n_paths, n_steps, _ = z.shape
    logS = np.zeros((n_paths, n_steps + 1))
    v = np.empty((n_paths, n_steps + 1))
    v[:, 0] = params.v0
    rho_c = np.sqrt(1.0 - params.rho**2)
    sdt = np.sqrt(dt)
    for t in range(n_steps):
        vp = np.maximum(v[:, t], 0.0)
        dw1 = z[:, t, 0] * sdt
        dw2 = (params.rho * z[:, t, 0] + rho_c * z[:, t, 1]) * sdt
        logS[:, t + 1] = logS[:, t] + (params.mu - 0.5 * vp) * dt + np.sqrt(vp) * dw1
        v[:, t + 1] = v[:, t] + params.kappa * (params.theta - vp) * dt + params.sigma * np.sqrt(vp) * dw2
    return logS, v


def simulate(params: HestonParams, n_steps: int, dt: float, n_paths: int, seed: int, stream: int = 0):
    """Full-truncation Euler paths.

    Returns ``(S, v)``, each ``(n_paths, n_steps + 1)`` with ``S_0 = 1``;
    ``v`` is reported after truncation at zero.
    """
    if not dt > 0:
        raise InvalidParameterError("dt must be > 0")
    if n_steps < 1 or n_paths < 1:
        raise InvalidParameterError("n_steps and n_paths must be >= 1")
    logS, v = _euler(params, _normals(seed, n_paths, n_steps, stream), dt)
    return np.exp(logS), np.maximum(v, 0.0)


def simulate_log(params: HestonParams, n_steps: int, dt: float, n_paths: int, seed: int, stream: int = 0):
    """Like :func:`simulate` but returns log prices (starting at 0)."""
    if not dt > 0:
        raise InvalidParameterError("dt must be > 0")
    logS, _ = _euler(params, _normals(seed, n_paths, n_steps, stream), dt)
    return logS


def heston_noise(params: HestonParams, n_steps: int, dt: float, n_paths: int, d_z: int = 2, seed: int = 0):
    """``(n_paths, n_steps, d_z)`` noise from independent zero-drift Heston paths.

    Dimension j is the standardised log-return series of its own simulated
    path, ``(log S_i - log S_{i-1}) / sqrt(dt v0)``.
    """
    if params.mu != 0:
        raise InvalidParameterError("noise paths are simulated with mu = 0")
    out = np.empty((n_paths, n_steps, d_z))
    scale = np.sqrt(dt * params.v0)
    for j in range(d_z):
        logS = simulate_log(params, n_steps, dt, n_paths, seed, stream=j + 1)
        out[:, :, j] = np.diff(logS, axis=1) / scale
    return out
