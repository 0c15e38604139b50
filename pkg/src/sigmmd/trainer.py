"""Training loop: anchored batches, signature-MMD loss, Adam, early stopping."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, InvalidInputError, NumericFault
from .generator import GeneratorParams, rollout, truncated_log_paths
from .mmd import mmd_unbiased, mmd_var
from .noise import NoiseModel, sample_noise
from .paths import augment_batch
from .sigkernel import SigKernelConfig, StaticKernelConfig, gram_array, gram_var

DROP_MASKS = {
    "none": (1.0, 1.0),
    "prev_return": (0.0, 1.0),
    "dt": (1.0, 0.0),
    "both": (0.0, 0.0),
}


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 64
    learning_rate: float = 1e-3
    sig: SigKernelConfig = field(
        default_factory=lambda: SigKernelConfig(StaticKernelConfig("rational_quadratic", 1.0, 0.1), 10)
    )
    k: int = 50
    n: int = 299
    noise_dim: int = 4
    hidden_size: int = 64
    ma_order: int = 20
    seed: int = 0
    # lead-lag lag; None means time augmentation only
    lead_lag: int | None = 1
    es_window: int = 50
    es_patience: int = 10
    decay_patience: int = 3
    lr_decay: float = 0.5
    input_mask: tuple[float, float] = (1.0, 1.0)
    max_steps: int | None = None

    def __post_init__(self):
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2")
        if not 1 <= self.k < self.n:
            raise ConfigError("need 1 <= k < n")
        if self.epochs < 1 or self.learning_rate <= 0:
            raise ConfigError("epochs and learning_rate must be positive")
        if self.es_window < 1 or self.es_patience < 1 or self.decay_patience < 1:
            raise ConfigError("early-stopping window and patience must be >= 1")
        if not 0 < self.lr_decay <= 1:
            raise ConfigError("lr_decay must be in (0, 1]")


def ablation_variant(config: TrainConfig, drop: str) -> TrainConfig:
    """Zero the ``prev_return`` and/or ``dt`` inputs at every step."""
    if drop not in DROP_MASKS:
        raise ConfigError(f"drop must be one of {sorted(DROP_MASKS)}")
    return replace(config, input_mask=DROP_MASKS[drop])


@dataclass
class Batch:
    history_returns: np.ndarray
    dts: np.ndarray
    noise: np.ndarray
    ref_paths: np.ndarray
    times: np.ndarray
    anchors: np.ndarray


class SeriesSource:
    """Anchored windows of one price series with MA noise from its history.

    Anchor ``a`` is the date labelled t_0; it needs p Gaussianised returns up
    to ``a`` and n further dates.
    """

    def __init__(self, log_prices, times, noise_model: NoiseModel, k: int, n: int, d_z: int):
        self.log_prices = np.asarray(log_prices, dtype=float)
        self.times = np.asarray(times, dtype=float)
        self.returns = np.diff(self.log_prices)
        self.dt = np.diff(self.times)
        self.model = noise_model
        self.k, self.n, self.d_z = k, n, d_z
        p = noise_model.ma.p
        self.anchors = np.arange(p, len(self.log_prices) - n)
        if len(self.anchors) == 0:
            raise ConfigError("series too short for the requested k, n and MA order")

    def __len__(self):
        return len(self.anchors)

    def batch(self, anchors, rng: np.random.Generator) -> Batch:
        k, n = self.k, self.n
        hist = np.stack([self.returns[a : a + k - 1] for a in anchors])
        dts = np.stack([self.dt[a : a + n] for a in anchors])
        noise = np.stack([sample_noise(self.model, a, n, self.d_z, rng) for a in anchors])
        ref = np.stack([self.log_prices[a + k : a + n + 1] - self.log_prices[a + k] for a in anchors])
        times = np.stack([self.times[a + k : a + n + 1] - self.times[a + k] for a in anchors])
        return Batch(hist, dts, noise, ref, times, np.asarray(anchors))


class PanelSource:
    """Independent log-price paths with a bank of precomputed noise sequences."""

    def __init__(self, log_paths, dt: float, noise_bank, k: int):
        self.paths = np.asarray(log_paths, dtype=float)
        self.noise_bank = np.asarray(noise_bank, dtype=float)
        self.n = self.paths.shape[1] - 1
        self.k = k
        self.dt = float(dt)
        if self.noise_bank.shape[1] != self.n:
            raise InvalidInputError("noise bank length must match the path steps")
        self.anchors = np.arange(len(self.paths))
        self.d_z = self.noise_bank.shape[2]

    def __len__(self):
        return len(self.paths)

    def batch(self, anchors, rng: np.random.Generator) -> Batch:
        k, n = self.k, self.n
        paths = self.paths[anchors]
        hist = np.diff(paths, axis=1)[:, : k - 1]
        dts = np.full((len(anchors), n), self.dt)
        noise = self.noise_bank[rng.integers(0, len(self.noise_bank), size=len(anchors))]
        ref = paths[:, k:] - paths[:, k : k + 1]
        times = np.broadcast_to(np.arange(n + 1 - k) * self.dt, ref.shape).copy()
        return Batch(hist, dts, noise, ref, times, np.asarray(anchors))


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict, grads: dict) -> dict:
        self.t += 1
        out = {}
        for name, p in params.items():
            g = grads[name]
            m = self.m.get(name, np.zeros_like(p))
            v = self.v.get(name, np.zeros_like(p))
            m = self.beta1 * m + (1 - self.beta1) * g
            v = self.beta2 * v + (1 - self.beta2) * g * g
            self.m[name], self.v[name] = m, v
            mhat = m / (1 - self.beta1**self.t)
            vhat = v / (1 - self.beta2**self.t)
            out[name] = p - self.lr * mhat / (np.sqrt(vhat) + self.eps)
        return out


@dataclass
class TrainReport:
    losses: list[float] = field(default_factory=list)
    epochs: list[dict] = field(default_factory=list)
    checkpoints: list[str] = field(default_factory=list)
    wall_clock: float = 0.0
    stopped_early: bool = False

    def moving_average(self, window: int) -> np.ndarray:
        x = np.asarray(self.losses)
        if len(x) == 0:
            return x
        c = np.cumsum(np.concatenate([[0.0], x]))
        idx = np.arange(1, len(x) + 1)
        lo = np.maximum(idx - window, 0)
        return (c[idx] - c[lo]) / (idx - lo)


def _augment(values, times, config: TrainConfig, differentiable: bool):
    return augment_batch(values, times, config.lead_lag, ad=ad if differentiable else None)


def batch_loss(tensors: dict, batch: Batch, config: TrainConfig, with_grad: bool = True):
    """MMD loss of one batch and, optionally, its gradient per parameter."""
    Y = _augment(batch.ref_paths, batch.times, config, False)
    Kyy = gram_array(Y, Y, config.sig, symmetric=True)
    if not with_grad:
        out = rollout(tensors, batch.history_returns, batch.dts, batch.noise, config.k, config.input_mask)
        X = _augment(truncated_log_paths(out, config.k), batch.times, config, False)
        Kxx = gram_array(X, X, config.sig, symmetric=True)
        Kxy = gram_array(X, Y, config.sig)
        return mmd_unbiased(Kxx, Kxy, Kyy).statistic, None
    tape = ad.Tape()
    with tape:
        leaves = {name: ad.Var(val) for name, val in tensors.items()}
        out = rollout(leaves, batch.history_returns, batch.dts, batch.noise, config.k, config.input_mask)
        X = _augment(truncated_log_paths(out, config.k), batch.times, config, True)
        loss = mmd_var(gram_var(X, X, config.sig), gram_var(X, Y, config.sig), Kyy)
    grads = tape.backward(loss, list(leaves.values()))
    return float(loss.value), dict(zip(leaves, grads))


def generate_paths(params: GeneratorParams, batch: Batch, config: TrainConfig) -> np.ndarray:
    """Truncated, start-normalised generated log paths for a batch (no tape)."""
    out = rollout(params, batch.history_returns, batch.dts, batch.noise, config.k, config.input_mask)
    return truncated_log_paths(out, config.k)


def train(config: TrainConfig, source, params: GeneratorParams, on_checkpoint=None):
    """Run the training loop; returns ``(params, report)``.

    Each epoch visits a fresh permutation of anchors in ``len // B`` batches.
    At epoch end the moving average of the last ``es_window`` losses drives
    learning-rate decay and early stopping.
    """
    B = config.batch_size
    if B > len(source):
        raise ConfigError(f"batch size {B} exceeds the {len(source)} available anchors")
    if config.n != source.n or config.k != source.k:
        raise ConfigError("config k/n disagree with the data source")
    rng = np.random.default_rng(config.seed)
    tensors = {k: v.copy() for k, v in params.tensors().items()}
    opt = Adam(config.learning_rate)
    report = TrainReport()
    best, bad = np.inf, 0
    start = time.perf_counter()
    steps = 0
    for epoch in range(config.epochs):
        order = source.anchors[rng.permutation(len(source))]
        for j in range(len(source) // B):
            batch = source.batch(order[j * B : (j + 1) * B], rng)
            loss, grads = batch_loss(tensors, batch, config)
            if not np.isfinite(loss):
                raise NumericFault(f"non-finite loss at step {steps}: {loss}")
            report.losses.append(loss)
            tensors = opt.step(tensors, grads)
            steps += 1
            if config.max_steps is not None and steps >= config.max_steps:
                break
        ma = float(np.mean(report.losses[-config.es_window :]))
        improved = ma < best
        if improved:
            best, bad = ma, 0
            if on_checkpoint is not None:
                report.checkpoints.append(on_checkpoint(epoch, GeneratorParams.from_tensors(tensors)))
        else:
            bad += 1
            if bad % config.decay_patience == 0:
                opt.lr *= config.lr_decay
        report.epochs.append({"epoch": epoch, "steps": steps, "moving_avg": ma, "lr": opt.lr})
        if bad >= config.es_patience:
            report.stopped_early = True
            break
        if config.max_steps is not None and steps >= config.max_steps:
            break
    report.wall_clock = time.perf_counter() - start
    return GeneratorParams.from_tensors(tensors), report
