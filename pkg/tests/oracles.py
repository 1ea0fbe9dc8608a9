"""Reference computations written independently of the package code paths."""

import itertools
import math

import numpy as np


def softmax_np(x, axis=-1):
    x = np.asarray(x, dtype=np.float64)
    m = x.max(axis=axis, keepdims=True)
    e = np.exp(x - m)
    return e / e.sum(axis=axis, keepdims=True)


def attention_np(q, k, v):
    w = softmax_np(q @ k.T / math.sqrt(q.shape[-1]))
    return w @ v


def banzhaf_mobius(n, phi, i, j):
    """Pair interaction as the size-weighted sum of Harsanyi dividends of supersets of {i, j}.

    The dividend d(T) = sum_{S subset T} (-1)^{|T|-|S|} phi(S); the pair's
    Banzhaf interaction is sum_{T >= {i,j}} d(T) / 2^{|T|-2}.
    """
    total = 0.0
    for mask in range(1 << n):
        if not (mask >> i & 1 and mask >> j & 1):
            continue
        members = [p for p in range(n) if mask >> p & 1]
        div = 0.0
        for r in range(len(members) + 1):
            for sub in itertools.combinations(members, r):
                s = sum(1 << p for p in sub)
                div += (-1) ** (len(members) - r) * phi(s)
        total += div / 2 ** (len(members) - 2)
    return total


def denoise_scalar(y_next, eps, alpha, alpha_bar):
    return (1.0 / math.sqrt(alpha)) * (y_next - (1.0 - alpha) / math.sqrt(1.0 - alpha_bar) * eps)


def min_ade_loop(pred, truth, h):
    """pred (S, N, T, 2), truth (N, T, 2): explicit loops."""
    best = math.inf
    for s in range(pred.shape[0]):
        acc = 0.0
        for a in range(pred.shape[1]):
            for f in range(h):
                acc += math.hypot(*(pred[s, a, f] - truth[a, f]))
        best = min(best, acc / (pred.shape[1] * h))
    return best


def min_fde_loop(pred, truth, h):
    best = math.inf
    for s in range(pred.shape[0]):
        acc = sum(math.hypot(*(pred[s, a, h - 1] - truth[a, h - 1])) for a in range(pred.shape[1]))
        best = min(best, acc / pred.shape[1])
    return best
