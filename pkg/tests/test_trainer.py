import numpy as np
import pytest

from sigmmd import autodiff as ad
from sigmmd.errors import ConfigError
from sigmmd.generator import GeneratorParams, rollout, truncated_log_paths
from sigmmd.heston import TRADING_DT, HestonParams, heston_noise, simulate_log
from sigmmd.mmd import mmd_var
from sigmmd.noise import LambertParams, MAParams, NoiseModel
from sigmmd.paths import augment_batch
from sigmmd.sigkernel import SigKernelConfig, StaticKernelConfig, gram_array, gram_var
from sigmmd.trainer import (
    Adam,
    PanelSource,
    SeriesSource,
    TrainConfig,
    TrainReport,
    ablation_variant,
    batch_loss,
    train,
)

SIG = SigKernelConfig(StaticKernelConfig("rational_quadratic", 1.0, 0.5), 3)


def _series(T=200, seed=0):
    rng = np.random.default_rng(seed)
    r = rng.normal(size=T - 1) * 0.01
    model = NoiseModel(LambertParams(), MAParams(1.0, (0.1, 0.1)), rng.normal(size=T - 1))
    times = np.cumsum(np.r_[0.0, np.full(T - 1, 1 / 365)])
    return np.r_[0.0, np.cumsum(r)], times, model


def test_series_batch_layout():
    lp, times, model = _series()
    src = SeriesSource(lp, times, model, k=3, n=10, d_z=2)
    assert src.anchors[0] == 2 and src.anchors[-1] == 200 - 10 - 1
    b = src.batch(np.array([5, 7]), np.random.default_rng(0))
    assert b.history_returns.shape == (2, 2) and b.dts.shape == (2, 10) and b.noise.shape == (2, 10, 2)
    assert np.allclose(b.history_returns[0], np.diff(lp)[5:7])
    assert b.ref_paths.shape == (2, 8) and np.all(b.ref_paths[:, 0] == 0)
    assert np.allclose(b.ref_paths[0, 1], lp[9] - lp[8])


def test_panel_batch_layout():
    paths = simulate_log(HestonParams.reference(), 12, TRADING_DT, 6, seed=0)
    bank = np.zeros((4, 12, 2))
    src = PanelSource(paths, TRADING_DT, bank, k=1)
    b = src.batch(np.array([0, 3]), np.random.default_rng(0))
    assert b.history_returns.shape == (2, 0)
    # k = 1 drops x_0, matching the truncated generator output
    assert np.array_equal(b.ref_paths, paths[[0, 3], 1:] - paths[[0, 3], 1:2])


def _toy(seed=0):
    lp, times, model = _series(seed=seed)
    cfg = TrainConfig(epochs=1, batch_size=2, sig=SIG, k=2, n=6, noise_dim=2, hidden_size=4, ma_order=2)
    src = SeriesSource(lp, times, model, cfg.k, cfg.n, cfg.noise_dim)
    return cfg, src, src.batch(np.array([10, 40]), np.random.default_rng(seed))


def test_loss_with_and_without_grad_agree():
    cfg, _, batch = _toy()
    params = GeneratorParams.init(4, 2, seed=1, zero_output=False).tensors()
    a, grads = batch_loss(params, batch, cfg)
    b, _ = batch_loss(params, batch, cfg, with_grad=False)
    assert a == pytest.approx(b, rel=1e-12)
    assert set(grads) == set(params)


def test_end_to_end_gradient():
    cfg, _, batch = _toy()
    base = GeneratorParams.init(4, 2, seed=1, zero_output=False).tensors()
    Y = augment_batch(batch.ref_paths, batch.times, 1)
    Kyy = gram_array(Y, Y, SIG, symmetric=True)

    def f(w):
        t = dict(base, w_ih=w)
        out = rollout(t, batch.history_returns, batch.dts, batch.noise, cfg.k)
        X = augment_batch(truncated_log_paths(out, cfg.k), batch.times, 1, ad=ad)
        return mmd_var(gram_var(X, X, SIG), gram_var(X, Y, SIG), Kyy)

    assert ad.grad_check(f, base["w_ih"], h=1e-6) < 1e-4


def test_adam_first_step():
    opt = Adam(0.1)
    out = opt.step({"x": np.array([1.0, -1.0])}, {"x": np.array([3.0, -0.5])})
    assert np.allclose(out["x"], [0.9, -0.9], atol=1e-7)


def test_training_reduces_loss_and_is_seeded():
    paths = simulate_log(HestonParams.reference(), 8, TRADING_DT, 64, seed=0)
    bank = heston_noise(HestonParams(0.0, 1.0, 0.25, 0.7, -0.7, 0.09), 8, TRADING_DT, 64, 2, seed=1)
    cfg = TrainConfig(epochs=6, batch_size=16, learning_rate=0.05, sig=SIG, k=1, n=8, noise_dim=2,
                      hidden_size=4, lead_lag=None, es_window=4)
    src = PanelSource(paths, TRADING_DT, bank, k=1)
    init = GeneratorParams.init(4, 2, seed=2)
    p1, r1 = train(cfg, src, init)
    p2, r2 = train(cfg, src, init)
    assert r1.losses == r2.losses
    assert np.mean(r1.losses[-4:]) < np.mean(r1.losses[:4])
    for name, arr in p1.tensors().items():
        assert np.array_equal(arr, p2.tensors()[name])


def test_max_steps_and_checkpoints():
    cfg, src, _ = _toy()
    cfg = TrainConfig(**{**cfg.__dict__, "epochs": 3, "max_steps": 2})
    seen = []
    _, rep = train(cfg, src, GeneratorParams.init(4, 2, 0), on_checkpoint=lambda e, p: seen.append(e) or f"c{e}")
    assert len(rep.losses) == 2 and seen == [0]


def test_moving_average():
    rep = TrainReport(losses=[1.0, 2.0, 3.0, 4.0])
    assert np.allclose(rep.moving_average(2), [1.0, 1.5, 2.5, 3.5])


def test_config_errors():
    with pytest.raises(ConfigError):
        TrainConfig(batch_size=1)
    with pytest.raises(ConfigError):
        TrainConfig(k=10, n=10)
    with pytest.raises(ConfigError):
        ablation_variant(TrainConfig(), "noise")
    assert ablation_variant(TrainConfig(), "both").input_mask == (0.0, 0.0)
    cfg, src, _ = _toy()
    with pytest.raises(ConfigError):
        train(TrainConfig(**{**cfg.__dict__, "batch_size": 10**6}), src, GeneratorParams.init(4, 2, 0))
