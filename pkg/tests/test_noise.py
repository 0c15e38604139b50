import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp
from scipy import stats as sps

from sigmmd import noise as nz
from sigmmd.errors import DegenerateInputError, InvalidInputError, InvalidParameterError


@given(hnp.arrays(float, 20, elements=st.floats(-4, 4)), st.floats(0, 0.5), st.floats(-1, 1), st.floats(0.5, 3))
def test_lambert_round_trip(u, delta, mu, sigma):
    p = nz.LambertParams(delta, mu, sigma)
    back = nz.lambert_inverse(nz.lambert_forward(u, p), p)
    assert np.allclose(back, u, rtol=1e-8, atol=1e-8)


def test_lambert_delta_zero_identity():
    u = np.linspace(-3, 3, 7)
    assert np.array_equal(nz.lambert_forward(u, nz.LambertParams()), u)
    assert np.array_equal(nz.lambert_inverse(u, nz.LambertParams()), u)


def test_inverse_rejects_negative_delta():
    with pytest.raises(InvalidParameterError):
        nz.lambert_inverse(np.zeros(2), nz.LambertParams(-0.1))


def test_gaussianize_student_t():
    x = sps.t.rvs(5, size=20000, random_state=np.random.default_rng(0))
    r_w, params = nz.gaussianize(x)
    assert params.delta > 0
    assert abs(nz.kurtosis(r_w) - 3.0) < 0.1


def test_gaussianize_light_tails_leave_delta_zero():
    x = np.random.default_rng(1).uniform(-1, 1, 5000)
    _, params = nz.gaussianize(x)
    assert params.delta == 0.0


def test_gaussianize_errors():
    with pytest.raises(DegenerateInputError):
        nz.gaussianize(np.ones(50))
    with pytest.raises(InvalidInputError):
        nz.gaussianize(np.array([1.0, np.nan, 2.0, 3.0]))


def test_ma_fit_recovers_parameters():
    true = nz.MAParams(0.4, (0.3, 0.2))
    z = nz.simulate_ma(true, 40000, seed=2)
    fit = nz.fit_ma(z, 2)
    assert fit.omega == pytest.approx(0.4, abs=0.05)
    assert np.allclose(fit.betas, [0.3, 0.2], atol=0.04)
    assert nz.ma_negloglik(z, fit.omega, fit.betas) <= nz.ma_negloglik(z, 0.4, (0.3, 0.2)) + 1e-6


def test_ma_fit_needs_data():
    with pytest.raises(InvalidInputError):
        nz.fit_ma(np.ones(200), 20)
    with pytest.raises(InvalidParameterError):
        nz.fit_ma(np.ones(200), 0)


def test_ma_noise_first_step_variance():
    params = nz.MAParams(0.5, (0.25, 0.0))
    H = np.array([0.0, 2.0])  # most recent value is 2
    rng = np.random.default_rng(3)
    draws = np.array([nz.ma_noise(params, H, 1, 1, rng)[0, 0] for _ in range(20000)])
    assert np.var(draws) == pytest.approx(0.5 + 0.25 * 4, rel=0.05)


def test_ma_noise_is_seeded():
    model = nz.NoiseModel(nz.LambertParams(), nz.MAParams(1.0, (0.1,) * 3), np.ones(10))
    a = nz.sample_noise(model, 5, 7, 2, seed=9)
    assert a.shape == (7, 2)
    assert np.array_equal(a, nz.sample_noise(model, 5, 7, 2, seed=9))
    with pytest.raises(InvalidInputError):
        nz.sample_noise(model, 2, 7, 2, seed=9)


def test_omega_only_noise_is_iid_normal():
    rng = np.random.default_rng(4)
    z = nz.ma_noise(nz.MAParams(2.0, (0.0,) * 5), np.full(5, 10.0), 20000, 1, rng)[:, 0]
    assert np.var(z) == pytest.approx(2.0, rel=0.05)


def test_drawdown_and_windows():
    prices = np.array([100, 120, 80, 70, 90, 130, 85, 90])
    dd = nz.drawdown(prices)
    assert dd[3] == pytest.approx(1 - 70 / 120)
    assert nz.downturn_windows(prices, 0.30) == [(2, 4), (6, 8)]
    assert nz.downturn_windows(prices, 0.9) == []


def test_average_params():
    avg = nz.average_params([nz.MAParams(1.0, (0.2, 0.0)), nz.MAParams(3.0, (0.0, 0.4))])
    assert avg.omega == 2.0 and avg.betas == (0.1, 0.2)
    with pytest.raises(InvalidInputError):
        nz.average_params([nz.MAParams(1.0, (0.2,)), nz.MAParams(1.0, (0.2, 0.1))])


def test_fit_noise_model_and_transform():
    rng = np.random.default_rng(5)
    r = sps.t.rvs(4, size=3000, random_state=rng) * 0.01
    dt = np.full(3000, 1 / 365)
    model = nz.fit_noise_model(r, dt, p=3)
    assert np.allclose(nz.transform_returns(model, r, dt), model.history)
