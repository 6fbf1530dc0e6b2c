"""Pure-Python/numpy kernels.

Same contracts as the compiled ``_kernels`` module; selected automatically
when the extension is missing or ``GBSVAL_PURE_PYTHON=1`` is set.
"""
from __future__ import annotations

import itertools
import math

import numpy as np

from ._pairing import greedy_pairs, mixed_arrays, pair_arrays

BACKEND = "python"


def power_traces(M: np.ndarray, K: int) -> np.ndarray:
    """[tr(M), tr(M^2), ..., tr(M^K)] from the eigenvalues of ``M``."""
    ev = np.linalg.eigvals(np.asarray(M, dtype=complex))
    powers = np.vander(ev, K + 1, increasing=True)[:, 1:]
    return powers.sum(axis=0)


def _exp_coeff(a: np.ndarray, h: int) -> complex:
    """Coefficient of lambda^h in exp(sum_k a[k] lambda^k)."""
    e = np.zeros(h + 1, dtype=complex)
    e[0] = 1.0
    for k in range(1, h + 1):
        j = np.arange(1, k + 1)
        e[k] = np.dot(j * a[1 : k + 1], e[k - 1 :: -1][: k]) / k
    return e[h]


def lhafmix(C, mu, n) -> complex:
    n = [int(x) for x in n]
    h = sum(n)
    if h == 0:
        return 1.0 + 0j
    C = np.asarray(C, dtype=complex)
    mu = np.asarray(mu, dtype=complex)
    L = len(n)
    first = [k for k in range(L) for _ in range(n[k])]
    rows = first + [k + L for k in first]
    Cn = C[np.ix_(rows, rows)]
    mun = mu[rows]
    N = 2 * h
    swap = np.r_[np.arange(h, N), np.arange(h)]
    Cs = Cn[:, swap]
    ms = mun[swap]
    total = 0j
    for plus in itertools.product(*(range(nk + 1) for nk in n)):
        lam = np.concatenate([np.r_[np.ones(p), -np.ones(nk - p)] for p, nk in zip(plus, n)])
        xd = np.concatenate([lam, lam])
        CX = Cs * xd[None, :]
        traces = power_traces(CX, h)
        a = np.zeros(h + 1, dtype=complex)
        w = ms * xd
        for k in range(1, h + 1):
            a[k] = traces[k - 1] / (2 * k) + (w @ mun) / 2
            w = w @ CX
        sign = -1.0 if sum(nk - p for p, nk in zip(plus, n)) % 2 else 1.0
        binom = math.prod(math.comb(nk, p) for p, nk in zip(plus, n))
        total += sign * binom * _exp_coeff(a, h)
    return total / 2.0**h


def chain_weights_pure(B, beta, prefix, cutoff: int) -> np.ndarray:
    """|lhaf(filldiag(B_s, beta_s))|^2 / k! for s = prefix + [k], k = 0..cutoff."""
    B = np.asarray(B, dtype=complex)
    beta = np.asarray(beta, dtype=complex)
    out = np.empty(cutoff + 1)
    s = [int(x) for x in prefix] + [0]
    for k in range(cutoff + 1):
        s[-1] = k
        pairs, mult = greedy_pairs(s)
        C, mu, nn = pair_arrays(B, beta, pairs, mult)
        val = lhafmix(C, mu, nn)
        out[k] = (val.real**2 + val.imag**2) / math.factorial(k)
    return out


def chain_weights_mixed(A, gamma, prefix, cutoff: int) -> np.ndarray:
    """Re lhaf(filldiag(A_s, gamma_s)) / k! for s = prefix + [k], k = 0..cutoff."""
    A = np.asarray(A, dtype=complex)
    gamma = np.asarray(gamma, dtype=complex)
    out = np.empty(cutoff + 1)
    s = [int(x) for x in prefix] + [0]
    for k in range(cutoff + 1):
        s[-1] = k
        C, mu, nn = mixed_arrays(A, gamma, s)
        out[k] = lhafmix(C, mu, nn).real / math.factorial(k)
    return out


def permanent(M) -> complex:
    """Ryser inclusion-exclusion, vectorized over chunks of column subsets."""
    M = np.asarray(M, dtype=complex)
    n = M.shape[0]
    if n == 0:
        return 1.0 + 0j
    total = 0j
    chunk = 1 << min(n, 14)
    bitpos = np.arange(n)
    for start in range(1, 1 << n, chunk):
        masks = np.arange(start, min(start + chunk, 1 << n))
        bits = ((masks[:, None] >> bitpos[None, :]) & 1).astype(float)
        rowsums = bits @ M.T
        sizes = bits.sum(axis=1)
        signs = np.where((n - sizes) % 2, -1.0, 1.0)
        total += np.sum(signs * np.prod(rowsums, axis=1))
    return complex(total)


def permanent_repeated(M, rows, cols) -> complex:
    """Permanent of M with row i repeated rows[i] and column j cols[j] times."""
    M = np.asarray(M, dtype=complex)
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    N = int(rows.sum())
    if N != int(cols.sum()):
        raise ValueError("row and column multiplicities must have equal totals")
    if N == 0:
        return 1.0 + 0j
    ri = np.nonzero(rows)[0]
    ci = np.nonzero(cols)[0]
    sub = M[np.ix_(ri, ci)]
    rexp = rows[ri]
    total = 0j
    for v in itertools.product(*(range(int(c) + 1) for c in cols[ci])):
        va = np.asarray(v, dtype=float)
        weight = math.prod(math.comb(int(c), int(x)) for c, x in zip(cols[ci], v))
        sign = -1.0 if (N - int(va.sum())) % 2 else 1.0
        total += sign * weight * np.prod((sub @ va) ** rexp)
    return complex(total)
