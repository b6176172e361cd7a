"""Independent reference implementations used as test oracles."""

from __future__ import annotations

import math

import numpy as np


def numeric_grad(f, x: np.ndarray, h: float = 1e-3) -> np.ndarray:
    """Central finite differences of scalar ``f()`` with respect to ``x`` (mutated in place)."""
    grad = np.zeros_like(x, dtype=np.float64)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = f()
        x[i] = old - h
        fm = f()
        x[i] = old
        grad[i] = (fp - fm) / (2 * h)
    return grad


def rel_error(analytic, numeric) -> float:
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    denom = max(np.linalg.norm(a), np.linalg.norm(n), 1e-12)
    return float(np.linalg.norm(a - n) / denom)


def conv1d_loops(x, w, b):
    c_out, c_in, k = w.shape
    n = x.shape[1]
    out = np.zeros((c_out, n - k + 1))
    for o in range(c_out):
        for t in range(n - k + 1):
            acc = b[o]
            for c in range(c_in):
                for j in range(k):
                    acc += x[c, t + j] * w[o, c, j]
            out[o, t] = acc
    return out


def matmul_loops(x, w, b):
    rows, inner = x.shape
    cols = w.shape[1]
    out = np.zeros((rows, cols))
    for i in range(rows):
        for j in range(cols):
            acc = b[j]
            for k in range(inner):
                acc += x[i, k] * w[k, j]
            out[i, j] = acc
    return out


def crossentropy_direct(logits, targets):
    total = 0.0
    for row, t in zip(logits, targets):
        denom = sum(math.exp(v) for v in row)
        total += -math.log(math.exp(row[t]) / denom)
    return total / len(targets)


def ranks_bruteforce(x):
    """rank_i = #{x_j < x_i} + (#{x_j == x_i} + 1) / 2."""
    return [sum(v < xi for v in x) + (sum(v == xi for v in x) + 1) / 2 for xi in x]


def pearson_direct(a, b):
    n = len(a)
    ma = sum(a) / n
    mb = sum(b) / n
    cov = sum((x - ma) * (y - mb) for x, y in zip(a, b))
    va = sum((x - ma) ** 2 for x in a)
    vb = sum((y - mb) ** 2 for y in b)
    return cov / math.sqrt(va * vb)


def spearman_bruteforce(a, b):
    return pearson_direct(ranks_bruteforce(list(a)), ranks_bruteforce(list(b)))


def sinc_decimate(x, factor, numtaps=63, cutoff=0.45):
    """Windowed-sinc low-pass then keep every factor-th sample, written out sample by sample."""
    fc = cutoff / factor
    mid = (numtaps - 1) / 2
    taps = []
    for i in range(numtaps):
        n = i - mid
        s = 2 * fc if n == 0 else math.sin(2 * math.pi * fc * n) / (math.pi * n)
        ham = 0.54 - 0.46 * math.cos(2 * math.pi * i / (numtaps - 1))
        taps.append(s * ham)
    total = sum(taps)
    taps = [t / total for t in taps]
    out = []
    for m in range(len(x) // factor):
        centre = m * factor
        acc = 0.0
        for i, t in enumerate(taps):
            src = centre + int(mid) - i
            if 0 <= src < len(x):
                acc += t * x[src]
        out.append(acc)
    return np.array(out)


def numeric_grad_smooth(f, x: np.ndarray, h: float = 1e-3):
    """Central differences for ``f() -> (value, pattern)`` that skip kinks.

    ``pattern`` is any bytes-like fingerprint of the piecewise-linear regime
    (relu signs, pool winners). A coordinate whose +h or -h evaluation lands
    in a different regime than the base point has no valid difference
    quotient; it is reported in the returned mask and left at zero.
    """
    _, base = f()
    grad = np.zeros_like(x, dtype=np.float64)
    valid = np.ones(x.shape, dtype=bool)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp, pp = f()
        x[i] = old - h
        fm, pm = f()
        x[i] = old
        if pp != base or pm != base:
            valid[i] = False
            continue
        grad[i] = (fp - fm) / (2 * h)
    return grad, valid
