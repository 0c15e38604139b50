"""End-to-end experiment drivers shared by the CLI and the acceptance suite."""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace

import numpy as np

from . import noise as nz
from . import stats
from .data import Dataset
from .errors import ConfigError, InvalidInputError
from .generator import GeneratorParams
from .heston import TRADING_DT, HestonParams, heston_noise, simulate_log
from .mmd import permutation_test
from .paths import augment_batch
from .sigkernel import SigKernelConfig, StaticKernelConfig
from .trainer import PanelSource, SeriesSource, TrainConfig, generate_paths, train


# ---------------------------------------------------------------------------
# Heston noise-distribution experiment
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HestonExperiment:
    train_paths: int = 1000
    test_paths: int = 200
    n_steps: int = 30
    hidden_size: int = 16
    order: int = 5
    length_scale: float = 0.1
    alpha: float = 1.0
    noise_dim: int = 2
    batch_size: int = 64
    epochs: int = 40
    learning_rate: float = 0.003
    permutations: int = 1000
    max_steps: int | None = None
    seed: int = 0

    @classmethod
    def full_scale(cls) -> "HestonExperiment":
        """Full sizes: 6,400 paths of 250 steps and 10,000 permutations."""
        return cls(train_paths=6400, test_paths=1000, n_steps=250, hidden_size=64,
                   batch_size=64, permutations=10000)

    def train_config(self) -> TrainConfig:
        sig = SigKernelConfig(StaticKernelConfig("rational_quadratic", self.alpha, self.length_scale), self.order)
        return TrainConfig(
            epochs=self.epochs, batch_size=self.batch_size, learning_rate=self.learning_rate, sig=sig,
            k=1, n=self.n_steps, noise_dim=self.noise_dim, hidden_size=self.hidden_size,
            seed=self.seed, lead_lag=None, max_steps=self.max_steps,
        )


def run_heston(exp: HestonExperiment, params: HestonParams | None = None) -> dict:
    """Train with stochastic-volatility and with iid noise; test both on held-out paths.

    Seeds are split into disjoint streams: training data, held-out data,
    training noise and evaluation noise. The two noise kinds share seeds so
    they differ only in their variance profile.
    """
    hp = params or HestonParams.reference()
    dt = TRADING_DT
    cfg = exp.train_config()
    s = exp.seed * 10
    train_data = simulate_log(hp, exp.n_steps, dt, exp.train_paths, seed=s + 1)
    test_data = simulate_log(hp, exp.n_steps, dt, exp.test_paths, seed=s + 2)
    noise_base = replace(hp, mu=0.0)
    kinds = {"stochastic_vol": noise_base, "iid": noise_base.iid_surrogate()}
    results = {}
    for name, np_params in kinds.items():
        bank = heston_noise(np_params, exp.n_steps, dt, exp.train_paths, exp.noise_dim, seed=s + 3)
        src = PanelSource(train_data, dt, bank, k=1)
        init = GeneratorParams.init(exp.hidden_size, exp.noise_dim, seed=s + 4)
        trained, report = train(cfg, src, init)

        eval_noise = heston_noise(np_params, exp.n_steps, dt, exp.test_paths, exp.noise_dim, seed=s + 5)
        eval_src = PanelSource(test_data, dt, eval_noise, k=1)
        # pair each held-out path index with its own evaluation noise row
        batch = eval_src.batch(np.arange(exp.test_paths), np.random.default_rng(0))
        batch.noise = eval_noise
        gen = generate_paths(trained, batch, cfg)
        X = augment_batch(gen, batch.times, None)
        Y = augment_batch(batch.ref_paths, batch.times, None)
        res = permutation_test(X, Y, cfg.sig, exp.permutations, seed=s + 6)
        results[name] = {
            "statistic": res.statistic,
            "p_value": res.p_value,
            "p_value_raw": res.p_value_raw,
            "n_exceed": res.n_exceed,
            "final_loss_ma": float(report.moving_average(cfg.es_window)[-1]),
            "steps": len(report.losses),
            "losses": report.losses,
            "params": trained,
        }
    return {"config": asdict(exp), "heston": asdict(hp), "results": results}


# ---------------------------------------------------------------------------
# price-series pipeline
# ---------------------------------------------------------------------------


def fit_series_noise(ds: Dataset, p: int = 20) -> nz.NoiseModel:
    return nz.fit_noise_model(np.diff(ds.log_prices), ds.dt, p)


def robust_noise(ds: Dataset, base: nz.NoiseModel, threshold: float = 0.30, average: bool = True,
                 window: int | None = None) -> tuple[nz.NoiseModel, list[dict]]:
    """MA refits on downturn windows of ``ds``; keeps ``base``'s transform and history.

    Windows shorter than the MA fit floor are skipped. Without ``average``
    the deepest window (or ``window``) supplies the parameters.
    """
    p = base.ma.p
    wins = nz.downturn_windows(ds.closes, threshold)
    # history[j] is the return ending at date j+1
    segs = [(a, b, base.history[max(a - 1, 0) : b - 1]) for a, b in wins]
    segs = [(a, b, s) for a, b, s in segs if len(s) > 10 * p]
    if not segs:
        raise InvalidInputError(f"no downturn window of >= {threshold:.0%} long enough for MA({p})")
    fits = [nz.fit_ma(s, p) for _, _, s in segs]
    info = [
        {"start": str(ds.dates[a]), "end": str(ds.dates[b - 1]), "omega": f.omega, "betas": list(f.betas)}
        for (a, b, _), f in zip(segs, fits)
    ]
    if average:
        ma = nz.average_params(fits)
    else:
        if window is None:
            dd = nz.drawdown(ds.closes)
            window = int(np.argmax([dd[a:b].max() for a, b, _ in segs]))
        if not 0 <= window < len(fits):
            raise ConfigError(f"window index {window} out of range")
        ma = fits[window]
    model = nz.NoiseModel(base.lambert, ma, base.history, base.scale_mean, base.scale_std,
                          {"robust_windows": info, "threshold": threshold, "average": average})
    return model, info


def series_source(ds: Dataset, model: nz.NoiseModel, config: TrainConfig) -> SeriesSource:
    return SeriesSource(ds.log_prices, ds.times, model, config.k, config.n, config.noise_dim)


def sample_generated(params: GeneratorParams, source: SeriesSource, config: TrainConfig, count: int,
                     seed: int, anchor: int | None = None):
    """``count`` generated paths and the matching real segments.

    Anchors are drawn with replacement unless ``anchor`` fixes the start date.
    """
    rng = np.random.default_rng(seed)
    if anchor is None:
        anchors = source.anchors[rng.integers(0, len(source), size=count)]
    else:
        if anchor not in set(source.anchors.tolist()):
            raise InvalidInputError("anchor date has too little history or future data")
        anchors = np.full(count, anchor)
    batch = source.batch(anchors, rng)
    return generate_paths(params, batch, config), batch


def stylized_facts(paths: np.ndarray, max_lag: int = 20) -> dict:
    """The evaluation battery on a ``(B, L)`` batch of log-price paths."""
    rets = np.diff(paths, axis=1)
    pooled = rets.reshape(-1)
    flat_ok = [r for r in rets if np.std(r) > 0 and np.std(r * r) > 0]
    out = {"moments": stats.moments(pooled).as_dict()}
    if flat_ok:
        for key, curve in (
            ("acf", stats.acf_batch(flat_ok, max_lag)),
            ("acf_squared", stats.acf_batch(flat_ok, max_lag, squared=True)),
            ("leverage", stats.leverage_batch(flat_ok, max_lag)),
        ):
            out[key] = {"lag": curve.x, "mean": curve.mean, "mad": curve.mad}
    gl = stats.gain_loss_ratio(pooled)
    out["gain_loss"] = {"threshold": gl.thresholds, "ratio": gl.ratio, "count": gl.counts,
                        "low_confidence": gl.low_confidence, "omitted": gl.omitted}
    out["endpoints"] = stats.endpoint_summary(paths)
    return out
