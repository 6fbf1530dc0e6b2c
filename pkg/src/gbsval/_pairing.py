"""Photon-pair bookkeeping shared by both kernel backends."""
from __future__ import annotations

from typing import Sequence

import numpy as np


def greedy_pairs(s: Sequence[int]) -> tuple[list[tuple[int, int]], list[int]]:
    """Pair photons of pattern ``s`` (0-based modes).

    Same-mode pairs come first, one entry per occupied mode with multiplicity
    ``s_i // 2``; leftover single photons are paired in ascending mode order.
    An unpaired last photon is matched with the virtual mode ``len(s)``.
    """
    m = len(s)
    pairs: list[tuple[int, int]] = []
    mult: list[int] = []
    odd = []
    for i, si in enumerate(s):
        si = int(si)
        if si >= 2:
            pairs.append((i, i))
            mult.append(si // 2)
        if si % 2:
            odd.append(i)
    for a, b in zip(odd[0::2], odd[1::2]):
        pairs.append((a, b))
        mult.append(1)
    if len(odd) % 2:
        pairs.append((odd[-1], m))
        mult.append(1)
    return pairs, mult


def pair_arrays(B: np.ndarray, beta: np.ndarray, pairs, mult) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Build (C, mu, n) from a pure block and a pair list.

    The virtual mode index ``len(beta)`` has no couplings and loop weight 1,
    which leaves the loop hafnian unchanged.
    """
    m = B.shape[0]
    Bx = np.zeros((m + 1, m + 1), dtype=complex)
    Bx[:m, :m] = B
    bx = np.zeros(m + 1, dtype=complex)
    bx[:m] = beta
    bx[m] = 1.0
    idx = [p[0] for p in pairs] + [p[1] for p in pairs]
    return Bx[np.ix_(idx, idx)], bx[idx], np.asarray(mult, dtype=np.int64)


def mixed_arrays(A: np.ndarray, gamma: np.ndarray, s: Sequence[int]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Build (C, mu, n) whose repeated form is A_s with diagonal gamma_s.

    Pair ``k`` couples mode ``i`` with its conjugate row ``i + m`` and is
    repeated ``s_i`` times, so no virtual mode is ever needed.
    """
    m = A.shape[0] // 2
    occ = [i for i in range(m) if s[i] > 0]
    idx = occ + [i + m for i in occ]
    return A[np.ix_(idx, idx)], np.asarray(gamma)[idx], np.asarray([s[i] for i in occ], dtype=np.int64)
