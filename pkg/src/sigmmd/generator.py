"""LSTM + linear generator of log returns with historical conditioning."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import InvalidInputError, InvalidParameterError
from .paths import LogPath

PARAM_NAMES = ("w_ih", "w_hh", "b_ih", "b_hh", "w_out", "b_out")


@dataclass
class GeneratorParams:
    """LSTM weights stacked by gate in the order (i, f, g, o), plus the output layer.

    ``w_ih`` is ``(4h, d)`` with input layout ``(r_prev, dt, z_1..z_dz)``.
    """

    w_ih: np.ndarray
    w_hh: np.ndarray
    b_ih: np.ndarray
    b_hh: np.ndarray
    w_out: np.ndarray
    b_out: np.ndarray

    def __post_init__(self):
        h = self.w_hh.shape[0] // 4
        d = self.w_ih.shape[1] if self.w_ih.ndim == 2 else -1
        ok = (
            h >= 1
            and d >= 3
            and self.w_ih.shape == (4 * h, d)
            and self.w_hh.shape == (4 * h, h)
            and self.b_ih.shape == (4 * h,)
            and self.b_hh.shape == (4 * h,)
            and self.w_out.shape == (1, h)
            and self.b_out.shape == (1,)
        )
        if not ok:
            raise InvalidParameterError("generator parameter shapes are inconsistent")

    @property
    def hidden_size(self) -> int:
        return self.w_hh.shape[1]

    @property
    def input_dim(self) -> int:
        return self.w_ih.shape[1]

    @property
    def noise_dim(self) -> int:
        return self.input_dim - 2

    @classmethod
    def init(cls, hidden_size: int, noise_dim: int, seed: int, zero_output: bool = True) -> "GeneratorParams":
        """Uniform(-1/sqrt(h), 1/sqrt(h)) for every weight and bias.

        With ``zero_output`` the output layer starts at zero, so the first
        generated paths are flat. Uniform output weights give per-step drifts
        of order 0.1, far outside the range where a short-length-scale kernel
        still separates paths.
        """
        if hidden_size < 1 or noise_dim < 1:
            raise InvalidParameterError("hidden_size and noise_dim must be >= 1")
        rng = np.random.default_rng(seed)
        h, d = hidden_size, noise_dim + 2
        bound = 1.0 / np.sqrt(h)
        shapes = [(4 * h, d), (4 * h, h), (4 * h,), (4 * h,), (1, h), (1,)]
        arrays = [rng.uniform(-bound, bound, size=s) for s in shapes]
        if zero_output:
            arrays[4][:] = 0.0
            arrays[5][:] = 0.0
        return cls(*arrays)

    @classmethod
    def zeros(cls, hidden_size: int, noise_dim: int) -> "GeneratorParams":
        h, d = hidden_size, noise_dim + 2
        return cls(
            np.zeros((4 * h, d)), np.zeros((4 * h, h)), np.zeros(4 * h),
            np.zeros(4 * h), np.zeros((1, h)), np.zeros(1),
        )

    def tensors(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    @classmethod
    def from_tensors(cls, tensors: dict) -> "GeneratorParams":
        return cls(*(np.array(tensors[name], dtype=float) for name in PARAM_NAMES))


@dataclass
class LstmState:
    c: np.ndarray
    h: np.ndarray

    @classmethod
    def zeros(cls, hidden_size: int, batch: int | None = None) -> "LstmState":
        shape = (hidden_size,) if batch is None else (batch, hidden_size)
        return cls(np.zeros(shape), np.zeros(shape))


@dataclass
class GenerationPlan:
    """Inputs for one generated path.

    ``history_returns`` are the k-1 historical returns r_1..r_{k-1} fed during
    conditioning, ``dts`` the n time steps and ``noise`` the ``(n, d_z)``
    noise sequence.
    """

    history_returns: np.ndarray
    dts: np.ndarray
    k: int
    n: int
    noise: np.ndarray
    history_noise: np.ndarray | None = None

    def __post_init__(self):
        self.history_returns = np.asarray(self.history_returns, dtype=float).reshape(-1)
        self.dts = np.asarray(self.dts, dtype=float).reshape(-1)
        self.noise = np.asarray(self.noise, dtype=float)
        if self.k < 1 or self.n <= self.k:
            raise InvalidParameterError("need 1 <= k < n")
        if len(self.history_returns) != self.k - 1:
            raise InvalidInputError("history_returns must have k-1 entries")
        if len(self.dts) != self.n or np.any(self.dts <= 0):
            raise InvalidInputError("dts must hold n positive entries")
        if self.noise.ndim != 2 or self.noise.shape[0] != self.n:
            raise InvalidInputError("noise length must equal n")


def _gates(pre, params, h):
    hs = params["w_hh"].shape[1]
    gates = pre + h @ params["w_hh_t"]
    i = ad.sigmoid(gates[..., 0:hs])
    f = ad.sigmoid(gates[..., hs : 2 * hs])
    g = ad.tanh(gates[..., 2 * hs : 3 * hs])
    o = ad.sigmoid(gates[..., 3 * hs : 4 * hs])
    return i, f, g, o


def _prepare(params) -> dict:
    p = params.tensors() if isinstance(params, GeneratorParams) else dict(params)
    p["w_hh_t"] = ad.transpose(p["w_hh"]) if isinstance(p["w_hh"], ad.Var) else p["w_hh"].T
    return p


def lstm_step(z, state: LstmState, params) -> LstmState:
    """One LSTM step for input ``z`` of shape ``(d,)`` or ``(B, d)``."""
    p = _prepare(params)
    zv = np.asarray(ad._val(z))
    if zv.shape[-1] != p["w_ih"].shape[1] or np.shape(ad._val(state.h))[-1] != p["w_hh"].shape[1]:
        raise InvalidInputError("input or state dimension does not match the parameters")
    w_ih_t = ad.transpose(p["w_ih"]) if isinstance(p["w_ih"], ad.Var) else p["w_ih"].T
    pre = z @ w_ih_t + p["b_ih"] + p["b_hh"]
    i, f, g, o = _gates(pre, p, state.h)
    c = f * state.c + i * g
    return LstmState(c, o * ad.tanh(c))


def linear_step(h, params):
    p = params.tensors() if isinstance(params, GeneratorParams) else params
    w_out = p["w_out"]
    if np.shape(ad._val(h))[-1] != np.shape(ad._val(w_out))[1]:
        raise InvalidInputError("hidden size does not match the output layer")
    w_t = ad.transpose(w_out) if isinstance(w_out, ad.Var) else w_out.T
    out = h @ w_t + p["b_out"]
    return out[..., 0]


def rollout(params, history_returns, dts, noise, k: int, input_mask=(1.0, 1.0)):
    """Run the generator over a batch and return the ``(B, n)`` raw outputs.

    ``history_returns`` is ``(B, k-1)``, ``dts`` ``(B, n)``, ``noise``
    ``(B, n, d_z)``. Step i consumes (r_{i-1}, dt_i, z_i) with r_0 = 0;
    r_1..r_{k-1} come from history, later ones from the generator's own
    outputs. ``input_mask`` scales the (r_prev, dt) inputs; zeros give the
    ablation variants. ``params`` may hold autodiff variables.
    """
    p = _prepare(params)
    history_returns = np.asarray(history_returns, dtype=float)
    dts = np.asarray(dts, dtype=float)
    noise = np.asarray(noise, dtype=float)
    B, n = dts.shape
    if history_returns.shape != (B, k - 1):
        raise InvalidInputError("history_returns must be (B, k-1)")
    if noise.shape[:2] != (B, n):
        raise InvalidInputError("noise length must equal n")
    w_ih = p["w_ih"]
    if noise.shape[2] != np.shape(ad._val(w_ih))[1] - 2:
        raise InvalidInputError("noise dimension does not match the parameters")
    m_r, m_dt = float(input_mask[0]), float(input_mask[1])
    hs = np.shape(ad._val(p["w_hh"]))[1]

    w_r = w_ih[:, 0]
    w_dt = w_ih[:, 1]
    w_z_t = ad.transpose(w_ih[:, 2:]) if isinstance(w_ih, ad.Var) else w_ih[:, 2:].T
    bias = p["b_ih"] + p["b_hh"]

    h = np.zeros((B, hs))
    c = np.zeros((B, hs))
    prev = np.zeros(B)
    outs = []
    for i in range(n):
        pre = noise[:, i, :] @ w_z_t + bias
        if m_dt:
            pre = pre + (m_dt * dts[:, i])[:, None] * w_dt
        if m_r:
            pre = pre + ad.reshape(m_r * prev, (B, 1)) * w_r
        ig, fg, gg, og = _gates(pre, p, h)
        c = fg * c + ig * gg
        h = og * ad.tanh(c)
        r = linear_step(h, p)
        outs.append(r)
        # r_i for the next step: history while i+1 < k, own output afterwards
        prev = history_returns[:, i] if i + 1 < k else r
    return ad.stack(outs, axis=1)


def truncated_log_paths(outputs, k: int):
    """``(B, n+1-k)`` start-normalised log prices x_k..x_n from raw outputs."""
    tail = outputs[:, k:]
    B = np.shape(ad._val(outputs))[0]
    if isinstance(tail, ad.Var):
        return ad.concatenate([np.zeros((B, 1)), ad.cumsum(tail, axis=1)], axis=1)
    return np.concatenate([np.zeros((B, 1)), np.cumsum(tail, axis=1)], axis=1)


def full_log_path(outputs: np.ndarray, history_returns: np.ndarray, k: int) -> np.ndarray:
    """Pre-truncation x_0..x_n: history for the first k values, outputs after."""
    r = np.concatenate([history_returns, outputs[k - 1 :]])
    return np.concatenate([[0.0], np.cumsum(r)])


def generate(plan: GenerationPlan, params: GeneratorParams, history_log_prices=None) -> LogPath:
    """Generate one path and return its truncated, start-normalised tail.

    If ``history_log_prices`` (k values) is given, its increments replace
    ``plan.history_returns``.
    """
    hist = plan.history_returns
    if history_log_prices is not None:
        hlp = np.asarray(history_log_prices, dtype=float).reshape(-1)
        if len(hlp) != plan.k:
            raise InvalidInputError("history_log_prices must have k entries")
        hist = np.diff(hlp)
    if plan.noise.shape[1] != params.noise_dim:
        raise InvalidInputError("noise dimension does not match the parameters")
    out = rollout(params, hist[None], plan.dts[None], plan.noise[None], plan.k)
    values = truncated_log_paths(out, plan.k)[0]
    times = np.concatenate([[0.0], np.cumsum(plan.dts)])[plan.k :]
    return LogPath(times - times[0], values)
