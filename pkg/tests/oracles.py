"""Independent reference implementations used only by the tests."""

import math

import numpy as np


def truncated_signature(path: np.ndarray, m: int) -> list[np.ndarray]:
    """Levels 0..m of the signature of a piecewise-linear path in R^d.

    Built segment by segment: a straight segment with increment v has level-k
    term v^{(x)k} / k!, and consecutive segments combine by the tensor product
    of truncated group-like elements (Chen's identity).
    """
    path = np.asarray(path, dtype=float)
    d = path.shape[1]
    sig = [np.ones(())] + [np.zeros((d,) * k) for k in range(1, m + 1)]
    for v in np.diff(path, axis=0):
        seg = [np.ones(())]
        for k in range(1, m + 1):
            seg.append(np.multiply.outer(seg[-1], v) * (1.0 / k))
        sig = [
            sum(np.multiply.outer(sig[a], seg[k - a]) for a in range(k + 1))
            for k in range(m + 1)
        ]
    return sig


def signature_inner(x: np.ndarray, y: np.ndarray, m: int) -> float:
    sx, sy = truncated_signature(x, m), truncated_signature(y, m)
    return float(sum((a * b).sum() for a, b in zip(sx, sy)))


def iterated_integral(path: np.ndarray, word: tuple[int, ...]) -> float:
    """S^{i1..ik} by the nested recursion S^{..ik}_{0,t} = int S^{..i(k-1)}_{0,s} dx^{ik}_s.

    On a linear segment the inner integrand is a polynomial in the segment
    parameter, so the recursion is carried exactly as polynomial coefficients.
    """
    path = np.asarray(path, dtype=float)
    # value of each prefix integral at the start of the current segment
    prefix = [1.0] + [0.0] * len(word)
    for v in np.diff(path, axis=0):
        # polys[q] are coefficients (in u in [0,1]) of S^{i1..iq}_{0, t0+u}
        polys = [np.array([1.0])]
        for q, idx in enumerate(word, start=1):
            integrand = polys[-1] * v[idx]
            integ = np.concatenate([[prefix[q]], integrand / np.arange(1, len(integrand) + 1)])
            polys.append(integ)
        prefix = [float(p.sum()) for p in polys]
    return prefix[-1]


def single_increment_closed_form(D: float, m: int) -> float:
    return sum(D**k / math.factorial(k) ** 2 for k in range(m + 1))


def finite_difference_grad(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * h)
    return g
