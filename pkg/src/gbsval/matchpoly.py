"""Hafnians, loop hafnians and permanents.

``hafnian_reference`` and ``loop_hafnian_reference`` enumerate matchings
directly and exist to check the fast photon-pair route (``lhafmix``),
which evaluates a loop hafnian with repeated rows as a finite-difference
sieve over sign vectors ``z``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from . import _backend
from ._pairing import greedy_pairs, mixed_arrays, pair_arrays
from .errors import InvalidInputError, InvalidStateError
from .gaussian import PHYSICAL_TOL, GaussianState, kernel_matrix

kernels = _backend.kernels


def symmetric(M) -> np.ndarray:
    """Coerce to a complex symmetric matrix by averaging with the transpose."""
    M = np.asarray(M, dtype=complex)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InvalidInputError(f"expected a square matrix, got shape {M.shape}")
    return (M + M.T) / 2


def filldiag(M, d) -> np.ndarray:
    out = np.array(M, dtype=complex, copy=True)
    np.fill_diagonal(out, d)
    return out


def repeat_rows(M, reps: Sequence[int]) -> np.ndarray:
    """Submatrix with row/column ``i`` repeated ``reps[i]`` times."""
    idx = [i for i, r in enumerate(reps) for _ in range(int(r))]
    return np.asarray(M)[np.ix_(idx, idx)]


# --------------------------------------------------------------------------
# Reference enumerations
# --------------------------------------------------------------------------
def _matching_sum(M: np.ndarray, loops: bool) -> complex:
    n = M.shape[0]
    if n == 0:
        return 1.0 + 0j
    if not loops and n % 2:
        return 0j
    Mv = M.tolist()

    @lru_cache(maxsize=None)
    def rec(mask: int) -> complex:
        if mask == 0:
            return 1.0 + 0j
        i = (mask & -mask).bit_length() - 1
        rest = mask & ~(1 << i)
        total = Mv[i][i] * rec(rest) if loops else 0j
        r = rest
        while r:
            j = (r & -r).bit_length() - 1
            total += Mv[i][j] * rec(rest & ~(1 << j))
            r &= r - 1
        return total

    return complex(rec((1 << n) - 1))


def hafnian_reference(M) -> complex:
    """Sum over perfect matchings; 1 for the empty matrix, 0 for odd size."""
    return _matching_sum(symmetric(M), loops=False)


def loop_hafnian_reference(M) -> complex:
    """Sum over matchings that may use diagonal entries as self-loops."""
    return _matching_sum(symmetric(M), loops=True)


def permanent(M) -> complex:
    """Exact permanent by Ryser's inclusion-exclusion, O(2^n n)."""
    M = np.asarray(M, dtype=complex)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InvalidInputError(f"permanent needs a square matrix, got {M.shape}")
    return kernels.permanent(M)


def permanent_repeated(M, rows: Sequence[int], cols: Sequence[int] | None = None) -> complex:
    """Permanent of ``M`` with rows/columns repeated by the given multiplicities.

    Costs prod(cols_j + 1) terms instead of 2^N for the expanded matrix.
    """
    M = np.asarray(M, dtype=complex)
    cols = rows if cols is None else cols
    if sum(rows) != sum(cols):
        raise InvalidInputError("row and column multiplicities must have equal totals")
    return kernels.permanent_repeated(M, np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64))


# --------------------------------------------------------------------------
# Photon-pair loop hafnian
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class PairSpec:
    """Pair list with multiplicities and the pair-ordered matrix/vector.

    Pair ``k`` keeps its two modes as rows ``k`` and ``k + L`` of ``C`` (and
    entries of ``mu_bar``); the virtual mode index equals the mode count.
    """

    pairs: tuple[tuple[int, int], ...]
    n: np.ndarray
    C: np.ndarray
    mu_bar: np.ndarray

    @property
    def total_photons(self) -> int:
        return 2 * int(np.sum(self.n))


def greedy_pairing(s: Sequence[int], B, beta) -> PairSpec:
    B = np.asarray(B, dtype=complex)
    beta = np.asarray(beta, dtype=complex).reshape(-1)
    if B.shape != (len(s), len(s)) or beta.shape != (len(s),):
        raise InvalidInputError("B and beta must match the pattern length")
    if any(int(x) < 0 for x in s):
        raise InvalidInputError(f"negative photon count in {list(s)}")
    pairs, mult = greedy_pairs(s)
    C, mu, n = pair_arrays(B, beta, pairs, mult)
    return PairSpec(tuple(pairs), n, C, mu)


def mixed_pairing(s: Sequence[int], A, gamma) -> PairSpec:
    """Pairs (i, i + m) repeated s_i times, reproducing A_s exactly."""
    A = np.asarray(A, dtype=complex)
    m = A.shape[0] // 2
    if len(s) != m:
        raise InvalidInputError("pattern length must match the kernel matrix")
    C, mu, n = mixed_arrays(A, gamma, s)
    occ = [i for i in range(m) if s[i] > 0]
    return PairSpec(tuple((i, i + m) for i in occ), n, C, mu)


def build_Xz(n: Sequence[int], z: Sequence[int]) -> np.ndarray:
    """Anti-block-diagonal sign matrix for one term of the sieve."""
    if len(n) != len(z):
        raise InvalidInputError("n and z must have equal length")
    lam = []
    for ni, zi in zip(n, z):
        ni, zi = int(ni), int(zi)
        if abs(zi) > ni or (ni - zi) % 2:
            raise InvalidInputError(f"z entry {zi} incompatible with n entry {ni}")
        lam += [1.0] * ((ni + zi) // 2) + [-1.0] * ((ni - zi) // 2)
    h = len(lam)
    X = np.zeros((2 * h, 2 * h))
    X[:h, h:] = np.diag(lam)
    X[h:, :h] = np.diag(lam)
    return X


def admissible_z(n: Sequence[int]):
    """Every z with z_i in {-n_i, -n_i + 2, ..., n_i}."""
    return itertools.product(*(range(-int(k), int(k) + 1, 2) for k in n))


def power_traces(M, K: int) -> np.ndarray:
    """Traces of M^1..M^K from the eigenvalues of M."""
    if K < 1:
        raise InvalidInputError("K must be >= 1")
    return _backend.fallback.power_traces(M, K)


def lhafmix(pspec: PairSpec) -> complex:
    """Loop hafnian of the repeated pair matrix with diagonal ``mu_bar``."""
    if len(pspec.n) == 0:
        return 1.0 + 0j
    return kernels.lhafmix(pspec.C, pspec.mu_bar, pspec.n)


# --------------------------------------------------------------------------
# Pattern probabilities
# --------------------------------------------------------------------------
class ProbabilityEngine:
    """Per-state precomputation for repeated pattern probabilities.

    Holds Q^{-1}, the kernel matrix, the loop vector gamma and the
    pattern-independent prefactor exp(-alpha^dag Q^-1 alpha / 2) / sqrt(det Q).
    """

    def __init__(self, state: GaussianState):
        lo = state.min_eigenvalue()
        if lo < 0.5 - PHYSICAL_TOL:
            raise InvalidStateError(f"Q has eigenvalue {lo:.6g} below 1/2")
        self.state = state
        self.m = state.m
        km = kernel_matrix(state)
        self.A = km.A
        self.B = km.pure_block
        Qinv = np.linalg.inv(state.Q)
        alpha = state.alpha_bar
        self.gamma = (Qinv @ alpha).conj()
        _, logdet = np.linalg.slogdet(state.Q)
        quad = float(np.real(alpha.conj() @ Qinv @ alpha))
        self.log_prefactor = -0.5 * quad - 0.5 * float(np.real(logdet))

    @property
    def pure(self) -> bool:
        return self.B is not None

    def matching_value(self, s: Sequence[int]) -> float:
        """lhaf(filldiag(A_s, gamma_s)), via the pure block when available."""
        if self.pure:
            val = lhafmix(greedy_pairing(s, self.B, self.gamma[: self.m]))
            return float(val.real**2 + val.imag**2)
        return float(lhafmix(mixed_pairing(s, self.A, self.gamma)).real)

    def probability(self, s: Sequence[int]) -> float:
        s = [int(x) for x in s]
        if len(s) != self.m or min(s, default=0) < 0:
            raise InvalidInputError(f"pattern {s} does not fit {self.m} modes")
        log_fact = sum(math.lgamma(x + 1) for x in s)
        return math.exp(self.log_prefactor - log_fact) * self.matching_value(s)


def pattern_probability(state: GaussianState, s: Sequence[int]) -> float:
    """Probability of photon pattern ``s`` for a (possibly mixed, displaced) state."""
    return ProbabilityEngine(state).probability(s)
