"""Static kernels, the truncated signature kernel and Gram matrices."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _backend, _sigdp, autodiff as ad
from .errors import InvalidInputError, InvalidParameterError
from .paths import AugmentedPath

_KINDS = {
    "linear": _sigdp.LINEAR,
    "rational_quadratic": _sigdp.RATIONAL_QUADRATIC,
    "gaussian": _sigdp.GAUSSIAN,
}


@dataclass(frozen=True)
class StaticKernelConfig:
    """Point kernel used to lift paths. ``linear`` exists for exact checks."""

    kind: str = "rational_quadratic"
    alpha: float = 1.0
    length_scale: float = 0.1

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise InvalidParameterError(f"unknown static kernel {self.kind!r}")
        if not self.alpha > 0:
            raise InvalidParameterError("alpha must be > 0")
        if not self.length_scale > 0:
            raise InvalidParameterError("length_scale must be > 0")

    @property
    def code(self) -> int:
        return _KINDS[self.kind]


@dataclass(frozen=True)
class SigKernelConfig:
    static: StaticKernelConfig = field(default_factory=StaticKernelConfig)
    order: int = 10

    def __post_init__(self):
        if int(self.order) != self.order or self.order < 0:
            raise InvalidParameterError("order must be a non-negative integer")

    def _args(self):
        return int(self.order), self.static.code, float(self.static.alpha), float(self.static.length_scale)


@dataclass
class GramMatrix:
    entries: np.ndarray
    config: SigKernelConfig


def _as_points(x) -> np.ndarray:
    if isinstance(x, AugmentedPath):
        x = x.as_array()
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    return x


def static_eval(x, y, cfg: StaticKernelConfig) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.shape != y.shape:
        raise InvalidInputError("dimension mismatch")
    if cfg.kind == "linear":
        return float(x @ y)
    d2 = float(((x - y) ** 2).sum())
    if cfg.kind == "rational_quadratic":
        return (1.0 + d2 / (2.0 * cfg.alpha * cfg.length_scale**2)) ** (-cfg.alpha)
    return float(np.exp(-d2 / (2.0 * cfg.length_scale**2)))


def sig_kernel(x, y, cfg: SigKernelConfig) -> float:
    """Order-``cfg.order`` signature kernel of two paths given as point arrays.

    ``x`` and ``y`` are ``(L, c)`` arrays (or :class:`AugmentedPath`); points
    are joined by straight lines in the feature space of the static kernel.
    """
    x, y = _as_points(x), _as_points(y)
    if len(x) < 2 or len(y) < 2:
        raise InvalidInputError("paths need at least 2 points")
    if x.shape[1] != y.shape[1]:
        raise InvalidInputError("paths have different channel counts")
    vals = _gram_pairs(x[None], y[None], np.zeros((1, 2), dtype=np.int64), cfg)
    return float(vals[0])


def _gram_pairs(X, Y, pairs, cfg):
    m, kind, alpha, ls = cfg._args()
    if _backend.HAVE_NUMBA:
        return _sigdp.gram_nb(X, Y, pairs, m, kind, alpha, ls)
    return _sigdp.gram_np(X, Y, pairs, m, kind, alpha, ls)


def _gram_vjp_pairs(X, Y, pairs, weights, cfg):
    m, kind, alpha, ls = cfg._args()
    if _backend.HAVE_NUMBA:
        return _sigdp.gram_vjp_nb(X, Y, pairs, weights, m, kind, alpha, ls)
    return _sigdp.gram_vjp_np(X, Y, pairs, weights, m, kind, alpha, ls)


def _stack_batch(batch) -> np.ndarray:
    if isinstance(batch, np.ndarray):
        arr = np.asarray(batch, dtype=float)
        if arr.ndim == 2:
            arr = arr[:, :, None]
    else:
        batch = list(batch)
        if not batch:
            raise InvalidInputError("empty batch")
        arr = np.stack([_as_points(p) for p in batch])
    if arr.shape[0] == 0:
        raise InvalidInputError("empty batch")
    if arr.shape[1] < 2:
        raise InvalidInputError("paths need at least 2 points")
    return np.ascontiguousarray(arr)


def pair_index(bx: int, by: int, symmetric: bool) -> np.ndarray:
    if symmetric:
        a, b = np.triu_indices(bx)
    else:
        a, b = np.divmod(np.arange(bx * by), by)
    return np.ascontiguousarray(np.stack([a, b], axis=1).astype(np.int64))


def gram_array(X, Y, cfg: SigKernelConfig, symmetric: bool = False) -> np.ndarray:
    """Raw ``(bx, by)`` Gram array for stacked batches ``X`` and ``Y``.

    With ``symmetric=True`` (``Y`` is ``X``) only the upper triangle is
    evaluated and mirrored.
    """
    bx, by = X.shape[0], Y.shape[0]
    pairs = pair_index(bx, by, symmetric)
    vals = _gram_pairs(X, Y, pairs, cfg)
    out = np.empty((bx, by))
    out[pairs[:, 0], pairs[:, 1]] = vals
    if symmetric:
        out[pairs[:, 1], pairs[:, 0]] = vals
    return out


def gram_vjp(X, Y, G, cfg: SigKernelConfig, symmetric: bool = False):
    """Gradients of ``sum(G * gram(X, Y))`` with respect to ``X`` and ``Y``.

    For ``symmetric=True`` the whole gradient is returned in the first slot.
    """
    bx, by = X.shape[0], Y.shape[0]
    pairs = pair_index(bx, by, symmetric)
    if symmetric:
        w = G + G.T
        w[np.diag_indices(bx)] = np.diag(G)
        weights = w[pairs[:, 0], pairs[:, 1]]
    else:
        weights = G[pairs[:, 0], pairs[:, 1]]
    keep = weights != 0.0
    pairs, weights = np.ascontiguousarray(pairs[keep]), np.ascontiguousarray(weights[keep])
    dX = np.zeros_like(X)
    dY = np.zeros_like(Y)
    if len(pairs) == 0:
        return dX, dY
    _, dxs, dys = _gram_vjp_pairs(X, Y, pairs, weights, cfg)
    # sequential reduction keeps results independent of thread scheduling
    np.add.at(dX, pairs[:, 0], dxs)
    np.add.at(dX if symmetric else dY, pairs[:, 1], dys)
    return dX, dY


def gram(X, Y, cfg: SigKernelConfig) -> GramMatrix:
    """Gram matrix ``entries[i, j] = sig_kernel(X[i], Y[j])``."""
    same = X is Y
    Xa = _stack_batch(X)
    Ya = Xa if same else _stack_batch(Y)
    if Xa.shape[2] != Ya.shape[2]:
        raise InvalidInputError("batches have different channel counts")
    return GramMatrix(gram_array(Xa, Ya, cfg, symmetric=same), cfg)


def gram_var(X, Y, cfg: SigKernelConfig):
    """Differentiable Gram array for stacked ``(B, L, c)`` batches.

    ``X``/``Y`` may be :class:`~sigmmd.autodiff.Var`; passing the same object
    twice evaluates only the upper triangle. Each entry is a scalar, so the
    adjoint program runs once per pair during the forward pass and the
    backward pass only weights the stored per-pair gradients.
    """
    same = X is Y
    Xa = np.ascontiguousarray(ad._val(X))
    Ya = Xa if same else np.ascontiguousarray(ad._val(Y))
    if Xa.ndim != 3 or Ya.ndim != 3 or Xa.shape[2] != Ya.shape[2]:
        raise InvalidInputError("expected (B, L, c) batches with equal c")
    bx, by = Xa.shape[0], Ya.shape[0]
    pairs = pair_index(bx, by, same)
    vals, dxs, dys = _gram_vjp_pairs(Xa, Ya, pairs, np.ones(len(pairs)), cfg)
    K = np.empty((bx, by))
    K[pairs[:, 0], pairs[:, 1]] = vals
    a, b = pairs[:, 0], pairs[:, 1]
    if same:
        K[b, a] = vals

        def back(g):
            w = g[a, b] + np.where(a == b, 0.0, g[b, a])
            dX = np.zeros_like(Xa)
            # sequential reduction keeps results independent of thread scheduling
            np.add.at(dX, a, w[:, None, None] * dxs)
            np.add.at(dX, b, w[:, None, None] * dys)
            return dX

        return ad.custom(K, "sig_gram", [(X, back)])

    def back_x(g):
        dX = np.zeros_like(Xa)
        np.add.at(dX, a, g[a, b][:, None, None] * dxs)
        return dX

    def back_y(g):
        dY = np.zeros_like(Ya)
        np.add.at(dY, b, g[a, b][:, None, None] * dys)
        return dY

    return ad.custom(K, "sig_gram", [(X, back_x), (Y, back_y)])
