"""Truncated signature-kernel dynamic program and its adjoint.

The lifted paths are piecewise linear in the feature space, so the kernel is
a sum over monotone lattice walks on the increment matrix

    N[i, j] = k(x_{i+1}, y_{j+1}) - k(x_i, y_{j+1}) - k(x_{i+1}, y_j) + k(x_i, y_j)

weighted by ``prod N / (prod_i p_i! prod_j q_j!)`` where ``p_i``/``q_j`` count
how often the walk revisits row ``i``/column ``j``. States carry the current
row run ``r`` and column run ``s``; each step multiplies by ``N / (r s)``.
Level ``n`` holds ``n * n`` states, so a pair costs ``O(m^3 I J / 3)``.

The numba kernels (``*_nb``) sweep cells in row-major order and advance all
levels at each cell, so the forward pass only keeps per-column prefix sums.
The numpy twins (``*_np``) vectorise level by level over whole ``(I, J)``
grids, batched over a leading pair axis, with states indexed
``[p, r-1, s-1, i, j]``.
"""

import numpy as np

from ._backend import njit, prange

LINEAR, RATIONAL_QUADRATIC, GAUSSIAN = 0, 1, 2


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------


@njit()
def _static_gram_nb(x, y, kind, alpha, ls):
    lx, c = x.shape
    ly = y.shape[0]
    out = np.empty((lx, ly))
    inv = 1.0 / (2.0 * alpha * ls * ls)
    inv_g = 1.0 / (2.0 * ls * ls)
    for a in range(lx):
        for b in range(ly):
            if kind == LINEAR:
                acc = 0.0
                for q in range(c):
                    acc += x[a, q] * y[b, q]
                out[a, b] = acc
            else:
                d2 = 0.0
                for q in range(c):
                    diff = x[a, q] - y[b, q]
                    d2 += diff * diff
                if kind == RATIONAL_QUADRATIC:
                    if alpha == 1.0:
                        out[a, b] = 1.0 / (1.0 + d2 * inv)
                    else:
                        out[a, b] = (1.0 + d2 * inv) ** (-alpha)
                else:
                    out[a, b] = np.exp(-d2 * inv_g)
    return out


@njit()
def _increments_nb(k):
    ni = k.shape[0] - 1
    nj = k.shape[1] - 1
    out = np.empty((ni, nj))
    for i in range(ni):
        for j in range(nj):
            out[i, j] = k[i + 1, j + 1] - k[i, j + 1] - k[i + 1, j] + k[i, j]
    return out


@njit(inline="always")
def _cell_levels_nb(w, i, j, m, S, run2, rrun, ccol, inv, F):
    """Fill ``S[n]`` (level n+1 at one cell) for all n; returns their sum.

    ``run2``/``rrun``/``ccol`` hold, per level, the strict prefix sums over
    earlier rows and columns. When ``F`` is given (non-empty) the
    pre-multiplication factors are stored there, packed level by level.
    """
    store = F.shape[0] > 0
    S[0, 0, 0] = w
    if store:
        F[i, j, 0] = 1.0
    total = w
    off = 1
    for n in range(1, m):
        p = n - 1
        f = run2[p]
        S[n, 0, 0] = w * f
        if store:
            F[i, j, off] = f
        sub = w * f
        for r in range(n):
            fr = inv[r] * rrun[p, r]
            fc = inv[r] * ccol[p, j, r]
            S[n, r + 1, 0] = w * fr
            S[n, 0, r + 1] = w * fc
            sub += w * (fr + fc)
            if store:
                F[i, j, off + (r + 1) * (n + 1)] = fr
                F[i, j, off + r + 1] = fc
        for r in range(n):
            for s in range(n):
                f = inv[r] * inv[s] * S[p, r, s]
                S[n, r + 1, s + 1] = w * f
                sub += w * f
                if store:
                    F[i, j, off + (r + 1) * (n + 1) + s + 1] = f
        total += sub
        off += (n + 1) * (n + 1)
    return total


@njit(inline="always")
def _push_prefix_nb(j, m, S, run2, col2, rrun, ccol, rows, cols):
    """Fold one cell's states into the prefix sums of every level but the last."""
    for p in range(m - 1):
        n = p + 1
        tot = 0.0
        for r in range(n):
            rows[r] = 0.0
            cols[r] = 0.0
        for r in range(n):
            for s in range(n):
                v = S[p, r, s]
                rows[r] += v
                cols[s] += v
                tot += v
        run2[p] += col2[p, j]
        col2[p, j] += tot
        for r in range(n):
            rrun[p, r] += rows[r]
            ccol[p, j, r] += cols[r]


@njit()
def _forward_nb(N, m, F):
    ni, nj = N.shape
    S = np.zeros((m, m, m))
    run2 = np.zeros(m)
    col2 = np.zeros((m, nj))
    rrun = np.zeros((m, m))
    ccol = np.zeros((m, nj, m))
    rows = np.empty(m)
    cols = np.empty(m)
    inv = 1.0 / np.arange(2.0, m + 2.0)
    total = 1.0
    for i in range(ni):
        run2[:] = 0.0
        rrun[:, :] = 0.0
        for j in range(nj):
            total += _cell_levels_nb(N[i, j], i, j, m, S, run2, rrun, ccol, inv, F)
            _push_prefix_nb(j, m, S, run2, col2, rrun, ccol, rows, cols)
    return total


@njit()
def sig_forward_nb(N, m):
    if m == 0:
        return 1.0
    return _forward_nb(N, m, np.empty((0, 0, 0)))


@njit()
def sig_vjp_nb(N, m):
    """Return ``(kernel, dkernel/dN)``.

    The forward sweep stores each cell's packed factors; the backward sweep
    visits cells in reverse and carries the adjoint states ``G`` with suffix
    sums mirroring the forward prefix sums.
    """
    ni, nj = N.shape
    dN = np.zeros((ni, nj))
    if m == 0:
        return 1.0, dN
    width = 0
    for n in range(1, m + 1):
        width += n * n
    F = np.empty((ni, nj, width))
    total = _forward_nb(N, m, F)

    G = np.zeros((m, m, m))
    run2 = np.zeros(m)
    col2 = np.zeros((m, nj))
    rrun = np.zeros((m, m))
    ccol = np.zeros((m, nj, m))
    inv = 1.0 / np.arange(2.0, m + 2.0)
    for i in range(ni - 1, -1, -1):
        run2[:] = 0.0
        rrun[:, :] = 0.0
        for j in range(nj - 1, -1, -1):
            w = N[i, j]
            acc = 0.0
            off = width
            for q in range(m - 1, -1, -1):
                n = q + 1
                off -= n * n
                if q == m - 1:
                    for r in range(n):
                        for s in range(n):
                            G[q, r, s] = 1.0
                            acc += F[i, j, off + r * n + s]
                    continue
                # G[q + 1] at this cell is already final
                for r in range(n):
                    rr = 1.0 + run2[q] + rrun[q, r] * inv[r]
                    wr = w * inv[r]
                    for s in range(n):
                        v = rr + ccol[q, j, s] * inv[s] + wr * inv[s] * G[q + 1, r + 1, s + 1]
                        G[q, r, s] = v
                        acc += v * F[i, j, off + r * n + s]
            dN[i, j] = acc
            for q in range(m - 1):
                run2[q] += col2[q, j]
                col2[q, j] += w * G[q + 1, 0, 0]
                for r in range(q + 1):
                    rrun[q, r] += w * G[q + 1, r + 1, 0]
                    ccol[q, j, r] += w * G[q + 1, 0, r + 1]
    return total, dN


@njit()
def _static_grad_nb(x, y, dK, kind, alpha, ls, dx, dy):
    """Accumulate dK-weighted static-kernel derivatives into ``dx``, ``dy``."""
    lx, c = x.shape
    ly = y.shape[0]
    inv = 1.0 / (2.0 * alpha * ls * ls)
    inv_l2 = 1.0 / (ls * ls)
    for a in range(lx):
        for b in range(ly):
            w = dK[a, b]
            if w == 0.0:
                continue
            if kind == LINEAR:
                for q in range(c):
                    dx[a, q] += w * y[b, q]
                    dy[b, q] += w * x[a, q]
                continue
            d2 = 0.0
            for q in range(c):
                diff = x[a, q] - y[b, q]
                d2 += diff * diff
            if kind == RATIONAL_QUADRATIC:
                base = 1.0 + d2 * inv
                if alpha == 1.0:
                    coef = -inv_l2 / (base * base)
                else:
                    coef = -inv_l2 * base ** (-alpha - 1.0)
            else:
                coef = -inv_l2 * np.exp(-0.5 * d2 * inv_l2)
            for q in range(c):
                g = w * coef * (x[a, q] - y[b, q])
                dx[a, q] += g
                dy[b, q] -= g


@njit()
def _increments_adjoint_nb(dN):
    ni, nj = dN.shape
    dK = np.zeros((ni + 1, nj + 1))
    for i in range(ni):
        for j in range(nj):
            g = dN[i, j]
            dK[i + 1, j + 1] += g
            dK[i, j + 1] -= g
            dK[i + 1, j] -= g
            dK[i, j] += g
    return dK


@njit(parallel=True)
def gram_nb(X, Y, pairs, m, kind, alpha, ls):
    out = np.empty(pairs.shape[0])
    for p in prange(pairs.shape[0]):
        a = pairs[p, 0]
        b = pairs[p, 1]
        K = _static_gram_nb(X[a], Y[b], kind, alpha, ls)
        out[p] = sig_forward_nb(_increments_nb(K), m)
    return out


@njit(parallel=True)
def gram_vjp_nb(X, Y, pairs, weights, m, kind, alpha, ls):
    """Per-pair gradients of ``sum_p weights[p] * k(X[a_p], Y[b_p])``."""
    npair = pairs.shape[0]
    lx, c = X.shape[1], X.shape[2]
    ly = Y.shape[1]
    dxs = np.zeros((npair, lx, c))
    dys = np.zeros((npair, ly, c))
    vals = np.empty(npair)
    for p in prange(npair):
        a = pairs[p, 0]
        b = pairs[p, 1]
        K = _static_gram_nb(X[a], Y[b], kind, alpha, ls)
        val, dN = sig_vjp_nb(_increments_nb(K), m)
        vals[p] = val
        w = weights[p]
        for i in range(dN.shape[0]):
            for j in range(dN.shape[1]):
                dN[i, j] *= w
        dK = _increments_adjoint_nb(dN)
        _static_grad_nb(X[a], Y[b], dK, kind, alpha, ls, dxs[p], dys[p])
    return vals, dxs, dys


# ---------------------------------------------------------------------------
# numpy twins (batched over a leading pair axis)
# ---------------------------------------------------------------------------


def _strict_cumsum(a, axis):
    out = np.cumsum(a, axis=axis)
    out = np.roll(out, 1, axis=axis)
    idx = [slice(None)] * a.ndim
    idx[axis] = 0
    out[tuple(idx)] = 0.0
    return out


def _strict_revcumsum(a, axis):
    flipped = np.flip(a, axis=axis)
    return np.flip(_strict_cumsum(flipped, axis), axis=axis)


def static_gram_np(x, y, kind, alpha, ls):
    """Static Gram for batched pairs: ``x`` (P, Lx, c), ``y`` (P, Ly, c)."""
    if kind == LINEAR:
        return np.einsum("pac,pbc->pab", x, y)
    d2 = ((x[:, :, None, :] - y[:, None, :, :]) ** 2).sum(-1)
    if kind == RATIONAL_QUADRATIC:
        base = 1.0 + d2 / (2.0 * alpha * ls * ls)
        return 1.0 / base if alpha == 1.0 else base ** (-alpha)
    return np.exp(-d2 / (2.0 * ls * ls))


def increments_np(K):
    return K[..., 1:, 1:] - K[..., :-1, 1:] - K[..., 1:, :-1] + K[..., :-1, :-1]


def _next_level_np(N, A):
    """A: (P, n, n, I, J) level-n states -> F: (P, n+1, n+1, I, J)."""
    P, n, _, ni, nj = A.shape
    F = np.empty((P, n + 1, n + 1, ni, nj))
    tot = A.sum(axis=(1, 2))
    F[:, 0, 0] = _strict_cumsum(_strict_cumsum(tot, -2), -1)
    runs = np.arange(2, n + 2, dtype=float)
    F[:, 1:, 0] = _strict_cumsum(A.sum(axis=2), -1) / runs[None, :, None, None]
    F[:, 0, 1:] = _strict_cumsum(A.sum(axis=1), -2) / runs[None, :, None, None]
    F[:, 1:, 1:] = A / (runs[:, None] * runs[None, :])[None, :, :, None, None]
    return F


def sig_forward_np(N, m):
    """Kernel values for batched increment matrices ``N`` (P, I, J)."""
    total = np.ones(N.shape[0])
    if m == 0:
        return total
    A = N[:, None, None]
    total = total + A.sum(axis=(1, 2, 3, 4))
    for _ in range(1, m):
        A = N[:, None, None] * _next_level_np(N, A)
        total = total + A.sum(axis=(1, 2, 3, 4))
    return total


def sig_vjp_np(N, m):
    P, ni, nj = N.shape
    if m == 0:
        return np.ones(P), np.zeros_like(N)
    Fs = [np.ones((P, 1, 1, ni, nj))]
    A = N[:, None, None] * Fs[0]
    total = 1.0 + A.sum(axis=(1, 2, 3, 4))
    for _ in range(1, m):
        F = _next_level_np(N, A)
        Fs.append(F)
        A = N[:, None, None] * F
        total = total + A.sum(axis=(1, 2, 3, 4))
    dN = np.zeros_like(N)
    Gn = None
    Nb = N[:, None]
    for lvl in range(m, 0, -1):
        if Gn is None:
            G = np.ones((P, lvl, lvl, ni, nj))
        else:
            runs = np.arange(2, lvl + 2, dtype=float)
            s11 = _strict_revcumsum(_strict_revcumsum(N * Gn[:, 0, 0], -2), -1)
            rr = _strict_revcumsum(Nb * Gn[:, 1:, 0], -1) / runs[None, :, None, None]
            cs = _strict_revcumsum(Nb * Gn[:, 0, 1:], -2) / runs[None, :, None, None]
            diag = N[:, None, None] * Gn[:, 1:, 1:] / (runs[:, None] * runs[None, :])[None, :, :, None, None]
            G = 1.0 + s11[:, None, None] + rr[:, :, None] + cs[:, None, :] + diag
        dN += (G * Fs[lvl - 1]).sum(axis=(1, 2))
        Gn = G
    return total, dN


def static_grad_np(x, y, dK, kind, alpha, ls):
    if kind == LINEAR:
        return np.einsum("pab,pbc->pac", dK, y), np.einsum("pab,pac->pbc", dK, x)
    diff = x[:, :, None, :] - y[:, None, :, :]
    d2 = (diff**2).sum(-1)
    if kind == RATIONAL_QUADRATIC:
        base = 1.0 + d2 / (2.0 * alpha * ls * ls)
        coef = -(base ** (-alpha - 1.0)) / (ls * ls)
    else:
        coef = -np.exp(-d2 / (2.0 * ls * ls)) / (ls * ls)
    g = (dK * coef)[..., None] * diff
    return g.sum(axis=2), -g.sum(axis=1)


def increments_adjoint_np(dN):
    P, ni, nj = dN.shape
    dK = np.zeros((P, ni + 1, nj + 1))
    dK[:, 1:, 1:] += dN
    dK[:, :-1, 1:] -= dN
    dK[:, 1:, :-1] -= dN
    dK[:, :-1, :-1] += dN
    return dK


def _chunk_size(lx, ly, m, budget=2**24):
    per_pair = max(1, (m + 1) ** 3 * lx * ly // 3)
    return max(1, budget // per_pair)


def gram_np(X, Y, pairs, m, kind, alpha, ls):
    out = np.empty(len(pairs))
    step = _chunk_size(X.shape[1], Y.shape[1], m)
    for lo in range(0, len(pairs), step):
        p = pairs[lo : lo + step]
        K = static_gram_np(X[p[:, 0]], Y[p[:, 1]], kind, alpha, ls)
        out[lo : lo + step] = sig_forward_np(increments_np(K), m)
    return out


def gram_vjp_np(X, Y, pairs, weights, m, kind, alpha, ls):
    npair = len(pairs)
    dxs = np.zeros((npair,) + X.shape[1:])
    dys = np.zeros((npair,) + Y.shape[1:])
    vals = np.empty(npair)
    step = _chunk_size(X.shape[1], Y.shape[1], m)
    for lo in range(0, npair, step):
        p = pairs[lo : lo + step]
        xa, yb = X[p[:, 0]], Y[p[:, 1]]
        K = static_gram_np(xa, yb, kind, alpha, ls)
        val, dN = sig_vjp_np(increments_np(K), m)
        vals[lo : lo + step] = val
        dN *= weights[lo : lo + step, None, None]
        dK = increments_adjoint_np(dN)
        dx, dy = static_grad_np(xa, yb, dK, kind, alpha, ls)
        dxs[lo : lo + step] = dx
        dys[lo : lo + step] = dy
    return vals, dxs, dys
