"""Unbiased MMD^2 from Gram blocks and the permutation two-sample test."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _backend
from ._backend import njit, prange
from .errors import InvalidInputError, InvalidParameterError
from .sigkernel import GramMatrix, SigKernelConfig, _stack_batch, gram_array


@dataclass(frozen=True)
class MMDResult:
    statistic: float
    m: int


@dataclass(frozen=True)
class PermutationTestResult:
    statistic: float
    p_value: float
    n_permutations: int
    seed: int
    n_exceed: int

    @property
    def p_value_raw(self) -> float:
        """Plain proportion of permuted statistics >= observed (may be 0)."""
        return self.n_exceed / self.n_permutations


def _entries(K) -> np.ndarray:
    return np.asarray(K.entries if isinstance(K, GramMatrix) else K, dtype=float)


def mmd_weights(m: int):
    """Weight matrices ``(Wxx, Wxy)`` with ``mmd = <Wxx,Kxx> - <Wxy,Kxy> + <Wxx,Kyy>``."""
    if m < 2:
        raise InvalidInputError("the unbiased estimator needs at least 2 samples per side")
    wxx = np.full((m, m), 1.0 / (m * (m - 1)))
    np.fill_diagonal(wxx, 0.0)
    wxy = np.full((m, m), 2.0 / (m * m))
    return wxx, wxy


def mmd_unbiased(Kxx, Kxy, Kyy) -> MMDResult:
    kxx, kxy, kyy = _entries(Kxx), _entries(Kxy), _entries(Kyy)
    m = kxx.shape[0]
    if kxx.shape != (m, m) or kyy.shape != (m, m) or kxy.shape != (m, m):
        raise InvalidInputError("Gram blocks must all be m x m")
    if m < 2:
        raise InvalidInputError("the unbiased estimator needs at least 2 samples per side")
    off = m * (m - 1)
    a = (kxx.sum() - np.trace(kxx)) / off
    c = (kyy.sum() - np.trace(kyy)) / off
    b = 2.0 * kxy.sum() / (m * m)
    return MMDResult(float(a - b + c), m)


def mmd_var(Kxx, Kxy, Kyy):
    """Same estimator on autodiff values (Kyy may be a plain array)."""
    m = np.shape(Kxx)[0]
    wxx, wxy = mmd_weights(m)
    return (Kxx * wxx).sum() - (Kxy * wxy).sum() + (Kyy * wxx).sum()


@njit(parallel=True)
def _perm_stats_nb(K, perms, m):
    n_perm = perms.shape[0]
    out = np.empty(n_perm)
    off = m * (m - 1.0)
    for p in prange(n_perm):
        a = 0.0
        b = 0.0
        c = 0.0
        for u in range(2 * m):
            iu = perms[p, u]
            for v in range(2 * m):
                k = K[iu, perms[p, v]]
                if u < m and v < m:
                    if u != v:
                        a += k
                elif u >= m and v >= m:
                    if u != v:
                        c += k
                elif u < m:
                    b += k
        out[p] = a / off + c / off - 2.0 * b / (m * m)
    return out


def _perm_stats_np(K, perms, m, chunk=256):
    out = np.empty(perms.shape[0])
    off = m * (m - 1.0)
    diag = np.diag(K)
    for lo in range(0, len(perms), chunk):
        P = perms[lo : lo + chunk]
        ix, iy = P[:, :m], P[:, m:]
        kxx = K[ix[:, :, None], ix[:, None, :]]
        kyy = K[iy[:, :, None], iy[:, None, :]]
        kxy = K[ix[:, :, None], iy[:, None, :]]
        a = kxx.sum(axis=(1, 2)) - diag[ix].sum(axis=1)
        c = kyy.sum(axis=(1, 2)) - diag[iy].sum(axis=1)
        out[lo : lo + chunk] = a / off + c / off - 2.0 * kxy.sum(axis=(1, 2)) / (m * m)
    return out


def permutation_stats(K: np.ndarray, m: int, n_perm: int, seed: int) -> np.ndarray:
    """Statistics for ``n_perm`` random re-partitions of a pooled ``(2m, 2m)`` Gram."""
    rng = np.random.default_rng(seed)
    perms = np.argsort(rng.random((n_perm, 2 * m)), axis=1).astype(np.int64)
    K = np.ascontiguousarray(K, dtype=float)
    if _backend.HAVE_NUMBA:
        return _perm_stats_nb(K, perms, m)
    return _perm_stats_np(K, perms, m)


def pooled_test(K: np.ndarray, m: int, n_perm: int, seed: int) -> PermutationTestResult:
    """Permutation test given the pooled Gram of ``X`` (first m) then ``Y``."""
    if n_perm < 1:
        raise InvalidParameterError("n_perm must be >= 1")
    observed = mmd_unbiased(K[:m, :m], K[:m, m:], K[m:, m:]).statistic
    stats = permutation_stats(K, m, n_perm, seed)
    # ties count as exceedances
    n_exceed = int(np.sum(stats >= observed))
    return PermutationTestResult(observed, (1 + n_exceed) / (1 + n_perm), n_perm, seed, n_exceed)


def permutation_test(X, Y, cfg: SigKernelConfig, n_perm: int, seed: int) -> PermutationTestResult:
    """Two-sample test with the pooled Gram computed once and re-indexed."""
    Xa, Ya = _stack_batch(X), _stack_batch(Y)
    if Xa.shape[0] != Ya.shape[0]:
        raise InvalidInputError("permutation_test needs equal batch sizes")
    if Xa.shape[1:] != Ya.shape[1:]:
        raise InvalidInputError("batches must have the same path length and channels")
    m = Xa.shape[0]
    if m < 2:
        raise InvalidInputError("need at least 2 samples per side")
    pooled = np.concatenate([Xa, Ya], axis=0)
    K = gram_array(pooled, pooled, cfg, symmetric=True)
    return pooled_test(K, m, n_perm, seed)
