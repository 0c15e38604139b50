import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import finite_difference_grad, iterated_integral, signature_inner, single_increment_closed_form, truncated_signature
from sigmmd import _sigdp
from sigmmd.errors import InvalidInputError, InvalidParameterError
from sigmmd.paths import LogPath, lead_lag_time_augment
from sigmmd.sigkernel import (
    SigKernelConfig,
    StaticKernelConfig,
    gram,
    gram_array,
    gram_vjp,
    sig_kernel,
    static_eval,
)

LINEAR = StaticKernelConfig("linear")
RQ = StaticKernelConfig("rational_quadratic", 1.0, 0.1)


def test_oracle_self_consistency():
    # Chen-built levels agree with the direct iterated-integral recursion
    rng = np.random.default_rng(3)
    x = rng.normal(size=(5, 2))
    sig = truncated_signature(x, 3)
    for word in [(0,), (1, 0), (0, 1, 1), (1, 1, 0)]:
        assert sig[len(word)][word] == pytest.approx(iterated_integral(x, word), rel=1e-12)


def test_static_kernels():
    assert static_eval([0.0], [0.0], RQ) == 1.0
    d2 = 0.02
    rq = StaticKernelConfig("rational_quadratic", 2.0, 0.1)
    assert static_eval([0.1, 0.1], [0.0, 0.0], rq) == pytest.approx((1 + d2 / (2 * 2.0 * 0.01)) ** -2.0)
    g = StaticKernelConfig("gaussian", length_scale=0.5)
    assert static_eval([1.0], [0.0], g) == pytest.approx(math.exp(-1 / (2 * 0.25)))


def test_config_validation():
    with pytest.raises(InvalidParameterError):
        StaticKernelConfig("cosine")
    with pytest.raises(InvalidParameterError):
        StaticKernelConfig(length_scale=0.0)
    with pytest.raises(InvalidParameterError):
        SigKernelConfig(order=-1)


def test_order_zero_is_one():
    x = np.random.default_rng(0).normal(size=(4, 2))
    assert sig_kernel(x, x, SigKernelConfig(RQ, 0)) == 1.0


@pytest.mark.parametrize("static", [RQ, StaticKernelConfig("gaussian", length_scale=0.3)])
def test_single_increment_closed_form(static):
    rng = np.random.default_rng(1)
    x, y = rng.normal(size=(2, 2)) * 0.1, rng.normal(size=(2, 2)) * 0.1
    D = (static_eval(x[1], y[1], static) - static_eval(x[1], y[0], static)
         - static_eval(x[0], y[1], static) + static_eval(x[0], y[0], static))
    for m in range(6):
        assert sig_kernel(x, y, SigKernelConfig(static, m)) == pytest.approx(
            single_increment_closed_form(D, m), rel=1e-12)


@given(st.integers(2, 4), st.integers(2, 4), st.integers(1, 3), st.integers(0, 4), st.integers(0, 10**6))
def test_linear_kernel_matches_tensor_oracle(lx, ly, d, m, seed):
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=(lx, d)), rng.normal(size=(ly, d))
    got = sig_kernel(x, y, SigKernelConfig(LINEAR, m))
    want = signature_inner(x, y, m)
    assert got == pytest.approx(want, rel=1e-10, abs=1e-12)


def test_symmetry_and_augmented_input():
    rng = np.random.default_rng(2)
    p = lead_lag_time_augment(LogPath(np.arange(6.0) / 252, np.cumsum(rng.normal(size=6)) * 0.01))
    q = lead_lag_time_augment(LogPath(np.arange(6.0) / 252, np.cumsum(rng.normal(size=6)) * 0.01))
    cfg = SigKernelConfig(RQ, 4)
    assert sig_kernel(p, q, cfg) == pytest.approx(sig_kernel(q, p, cfg), rel=1e-13)


def test_translation_invariance_with_stationary_kernel():
    rng = np.random.default_rng(4)
    x, y = rng.normal(size=(5, 2)) * 0.1, rng.normal(size=(4, 2)) * 0.1
    cfg = SigKernelConfig(RQ, 5)
    assert sig_kernel(x + 3.0, y + 3.0, cfg) == pytest.approx(sig_kernel(x, y, cfg), rel=1e-12)


def test_constant_path_kernel_is_one():
    x = np.ones((5, 2))
    y = np.random.default_rng(0).normal(size=(4, 2))
    assert sig_kernel(x, y, SigKernelConfig(RQ, 6)) == 1.0


def test_errors():
    cfg = SigKernelConfig(RQ, 2)
    with pytest.raises(InvalidInputError):
        sig_kernel(np.zeros((1, 2)), np.zeros((3, 2)), cfg)
    with pytest.raises(InvalidInputError):
        sig_kernel(np.zeros((3, 2)), np.zeros((3, 3)), cfg)
    with pytest.raises(InvalidInputError):
        gram([], [np.zeros((3, 2))], cfg)


def test_gram_entries_and_symmetry():
    rng = np.random.default_rng(5)
    X = list(rng.normal(size=(4, 5, 2)) * 0.1)
    Y = list(rng.normal(size=(3, 6, 2)) * 0.1)
    cfg = SigKernelConfig(RQ, 3)
    G = gram(X, Y, cfg).entries
    for i in range(4):
        for j in range(3):
            assert G[i, j] == pytest.approx(sig_kernel(X[i], Y[j], cfg), rel=1e-14)
    S = gram(X, X, cfg).entries
    assert np.array_equal(S, S.T)


@given(st.integers(2, 6), st.integers(0, 10**6))
def test_gram_psd(b, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(b, 5, 2)) * 0.1
    S = gram_array(X, X, SigKernelConfig(RQ, 4), symmetric=True)
    assert np.linalg.eigvalsh(S).min() >= -1e-8


def test_single_increment_via_gram():
    rng = np.random.default_rng(6)
    X, Y = rng.normal(size=(2, 2, 1)) * 0.1, rng.normal(size=(3, 2, 1)) * 0.1
    cfg = SigKernelConfig(RQ, 4)
    G = gram_array(X, Y, cfg)
    for i in range(2):
        for j in range(3):
            x, y = X[i], Y[j]
            D = (static_eval(x[1], y[1], RQ) - static_eval(x[1], y[0], RQ)
                 - static_eval(x[0], y[1], RQ) + static_eval(x[0], y[0], RQ))
            assert G[i, j] == pytest.approx(single_increment_closed_form(D, 4), rel=1e-12)


@pytest.mark.parametrize("kind", ["linear", "rational_quadratic", "gaussian"])
def test_adjoint_matches_finite_differences(kind):
    rng = np.random.default_rng(7)
    static = StaticKernelConfig(kind, 1.5, 0.4)
    cfg = SigKernelConfig(static, 4)
    X, Y = rng.normal(size=(2, 4, 2)) * 0.3, rng.normal(size=(3, 5, 2)) * 0.3
    W = rng.normal(size=(2, 3))
    dX, dY = gram_vjp(X, Y, W, cfg)
    fdX = finite_difference_grad(lambda a: float((W * gram_array(a, Y, cfg)).sum()), X.copy())
    fdY = finite_difference_grad(lambda b: float((W * gram_array(X, b, cfg)).sum()), Y.copy())
    assert np.allclose(dX, fdX, rtol=1e-6, atol=1e-8)
    assert np.allclose(dY, fdY, rtol=1e-6, atol=1e-8)


def test_symmetric_adjoint():
    rng = np.random.default_rng(8)
    cfg = SigKernelConfig(RQ, 3)
    X = rng.normal(size=(3, 4, 2)) * 0.1
    W = rng.normal(size=(3, 3))
    dX, _ = gram_vjp(X, X, W, cfg, symmetric=True)
    fd = finite_difference_grad(lambda a: float((W * gram_array(a, a, cfg)).sum()), X.copy())
    assert np.allclose(dX, fd, rtol=1e-6, atol=1e-8)


@pytest.mark.parametrize("m", [1, 2, 3, 5])
def test_numba_and_numpy_kernels_agree(m):
    rng = np.random.default_rng(m)
    N = rng.normal(size=(3, 6, 4)) * 0.5
    fwd = _sigdp.sig_forward_np(N, m)
    val, dN = _sigdp.sig_vjp_np(N, m)
    assert np.allclose(fwd, val, rtol=1e-14)
    for p in range(3):
        assert _sigdp.sig_forward_nb(N[p], m) == pytest.approx(fwd[p], rel=1e-12)
        v, d = _sigdp.sig_vjp_nb(N[p], m)
        assert v == pytest.approx(fwd[p], rel=1e-12)
        assert np.allclose(d, dN[p], rtol=1e-11, atol=1e-13)


def test_pair_drivers_agree():
    rng = np.random.default_rng(9)
    X, Y = rng.normal(size=(3, 5, 2)) * 0.2, rng.normal(size=(2, 4, 2)) * 0.2
    pairs = np.array([[0, 0], [1, 1], [2, 0]], dtype=np.int64)
    w = np.array([0.5, -1.0, 2.0])
    a = _sigdp.gram_nb(X, Y, pairs, 4, _sigdp.GAUSSIAN, 1.0, 0.5)
    b = _sigdp.gram_np(X, Y, pairs, 4, _sigdp.GAUSSIAN, 1.0, 0.5)
    assert np.allclose(a, b, rtol=1e-13)
    va, dxa, dya = _sigdp.gram_vjp_nb(X, Y, pairs, w, 4, _sigdp.GAUSSIAN, 1.0, 0.5)
    vb, dxb, dyb = _sigdp.gram_vjp_np(X, Y, pairs, w, 4, _sigdp.GAUSSIAN, 1.0, 0.5)
    assert np.allclose(va, vb, rtol=1e-13)
    assert np.allclose(dxa, dxb, rtol=1e-11, atol=1e-14)
    assert np.allclose(dya, dyb, rtol=1e-11, atol=1e-14)


def test_repeatable_bitwise():
    rng = np.random.default_rng(10)
    X = rng.normal(size=(4, 6, 3)) * 0.1
    cfg = SigKernelConfig(RQ, 5)
    assert np.array_equal(gram_array(X, X, cfg, True), gram_array(X, X, cfg, True))


def test_gram_var_matches_gram_vjp():
    from sigmmd import autodiff as ad
    from sigmmd.sigkernel import gram_var

    rng = np.random.default_rng(11)
    cfg = SigKernelConfig(RQ, 3)
    X, Y = rng.normal(size=(3, 4, 2)) * 0.2, rng.normal(size=(2, 5, 2)) * 0.2
    W, S = rng.normal(size=(3, 2)), rng.normal(size=(3, 3))
    _, (gx, gy) = ad.value_and_grad(lambda x, y: (gram_var(x, y, cfg) * W).sum(), X, Y)
    dX, dY = gram_vjp(X, Y, W, cfg)
    assert np.allclose(gx, dX, rtol=1e-12, atol=1e-15) and np.allclose(gy, dY, rtol=1e-12, atol=1e-15)
    val, (gs,) = ad.value_and_grad(lambda x: (gram_var(x, x, cfg) * S).sum(), X)
    assert val == pytest.approx(float((gram_array(X, X, cfg, True) * S).sum()), rel=1e-12)
    assert np.allclose(gs, gram_vjp(X, X, S, cfg, symmetric=True)[0], rtol=1e-12, atol=1e-15)
