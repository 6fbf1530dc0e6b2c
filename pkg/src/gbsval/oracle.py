"""Exhaustive probability tables and their structure statistics.

Tables are dense arrays indexed by the photon pattern, so the entry for
``s`` lives at ``probs[tuple(s)]``. Every axis has its own cutoff, which
lets binned tables (per-subset cutoff ``m_sub * n_cutoff``) share the type.
"""
from __future__ import annotations

import itertools
import math
import os
from dataclasses import dataclass, field, replace
from typing import Iterator, Sequence

import numpy as np
from scipy.signal import convolve

from . import _backend
from .errors import InvalidInputError, InvalidParameterError, ResourceLimitError
from .gaussian import (
    GaussianState,
    Interferometer,
    SqueezingSpec,
    apply_interferometer,
    distinguishable_covariances,
    xp_to_q,
)
from .matchpoly import ProbabilityEngine

DEFAULT_BUDGET = 10**6
NORM_TOL = 1e-9


def enumeration_budget() -> int:
    """Pattern budget for exhaustive enumeration; ``GBS_BUDGET`` overrides it."""
    raw = os.environ.get("GBS_BUDGET")
    if raw is None:
        return DEFAULT_BUDGET
    try:
        return int(float(raw))
    except ValueError:
        raise InvalidParameterError(f"GBS_BUDGET must be an integer, got {raw!r}") from None


@dataclass(frozen=True)
class ProbabilityTable:
    """Probabilities over a truncated pattern box.

    Attributes
    ----------
    probs : ndarray
        ``probs[s]`` is the probability of pattern ``s``; shape is
        ``cutoff_i + 1`` along axis ``i``.
    zero_excluded : bool
        The all-zero pattern has been removed (its entry is 0).
    normalized : bool
        Entries sum to one.
    truncation_deficit : float
        Probability mass lying outside the box before any renormalization.
    """

    probs: np.ndarray
    zero_excluded: bool = False
    normalized: bool = False
    truncation_deficit: float = 0.0
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        p = np.array(self.probs, dtype=float)
        if p.ndim < 1:
            raise InvalidInputError("a table needs at least one mode")
        if np.any(p < -1e-12) or not np.all(np.isfinite(p)):
            raise InvalidInputError("probabilities must be finite and nonnegative")
        p = np.clip(p, 0.0, None)
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def m(self) -> int:
        return self.probs.ndim

    @property
    def cutoffs(self) -> tuple[int, ...]:
        return tuple(d - 1 for d in self.probs.shape)

    @property
    def n_cutoff(self) -> int:
        return max(self.cutoffs)

    @property
    def total(self) -> float:
        return float(self.probs.sum())

    def __len__(self) -> int:
        return self.probs.size

    def prob(self, s: Sequence[int]) -> float:
        s = tuple(int(x) for x in s)
        if len(s) != self.m:
            raise InvalidInputError(f"pattern {s} does not have {self.m} modes")
        if any(x < 0 or x > c for x, c in zip(s, self.cutoffs)):
            return 0.0
        return float(self.probs[s])

    def items(self) -> Iterator[tuple[tuple[int, ...], float]]:
        """(pattern, probability) pairs in lexicographic pattern order."""
        for idx in np.ndindex(*self.probs.shape):
            yield idx, float(self.probs[idx])

    def exclude_zero_and_normalize(self) -> "ProbabilityTable":
        p = np.array(self.probs)
        p[(0,) * self.m] = 0.0
        tot = p.sum()
        if tot <= 0:
            raise InvalidInputError("table has no mass outside the zero pattern")
        return replace(self, probs=p / tot, zero_excluded=True, normalized=True)


def _patterns(shape) -> np.ndarray:
    return np.array(list(np.ndindex(*shape)), dtype=np.int64).reshape(-1, len(shape))


def enumerate_ideal(state: GaussianState, n_cutoff: int) -> ProbabilityTable:
    """Raw probabilities of every pattern with all s_i <= n_cutoff.

    Works for any physical state (pure, mixed, displaced); the last mode is
    swept inside the compiled kernel for each prefix.
    """
    m = state.m
    if n_cutoff < 0:
        raise InvalidParameterError("n_cutoff must be nonnegative")
    size = (n_cutoff + 1) ** m
    budget = enumeration_budget()
    if size > budget:
        raise ResourceLimitError(f"{size} patterns exceed the enumeration budget {budget}")
    eng = ProbabilityEngine(state)
    kern = _backend.kernels
    probs = np.zeros((n_cutoff + 1,) * m)
    lfact = [math.lgamma(k + 1) for k in range(n_cutoff + 1)]
    for prefix in itertools.product(range(n_cutoff + 1), repeat=m - 1):
        pre = np.asarray(prefix, dtype=np.int64)
        if eng.pure:
            w = kern.chain_weights_pure(eng.B, eng.gamma[:m], pre, n_cutoff)
        else:
            w = kern.chain_weights_mixed(eng.A, eng.gamma, pre, n_cutoff)
        scale = math.exp(eng.log_prefactor - sum(lfact[k] for k in prefix))
        probs[prefix] = np.clip(w * scale, 0.0, None)
    return ProbabilityTable(probs, truncation_deficit=max(0.0, 1.0 - float(probs.sum())))


def _check_unit(x: float, name: str) -> float:
    x = float(x)
    if not 0.0 <= x <= 1.0:
        raise InvalidParameterError(f"{name} must lie in [0, 1], got {x}")
    return x


def thinning_matrix(cutoff: int, eta: float) -> np.ndarray:
    """L[s, s'] = C(s', s) eta^s (1 - eta)^(s' - s) for s <= s' <= cutoff."""
    L = np.zeros((cutoff + 1, cutoff + 1))
    for sp in range(cutoff + 1):
        for s in range(sp + 1):
            L[s, sp] = math.comb(sp, s) * eta**s * (1.0 - eta) ** (sp - s)
    return L


def lossy_probabilities(ideal: ProbabilityTable, eta_t: float) -> ProbabilityTable:
    """Binomial thinning of every mode of a raw table with transmission ``eta_t``."""
    eta_t = _check_unit(eta_t, "eta_t")
    if ideal.zero_excluded:
        raise InvalidInputError("lossy probabilities need the raw table including the zero pattern")
    p = np.asarray(ideal.probs)
    for ax, c in enumerate(ideal.cutoffs):
        p = np.moveaxis(np.tensordot(thinning_matrix(c, eta_t), p, axes=([1], [ax])), 0, ax)
    return ProbabilityTable(np.clip(p, 0, None), truncation_deficit=ideal.truncation_deficit)


def distinguishable_probabilities(
    actual: ProbabilityTable, virtuals: Sequence[ProbabilityTable], n_cutoff: int | None = None
) -> ProbabilityTable:
    """Sum distribution of independent actual and virtual processes.

    Convolves raw tables one at a time, truncating to the box after each
    step (entries beyond the cutoff can only feed patterns beyond it), then
    excludes the zero pattern and normalizes.
    """
    shape = actual.probs.shape
    for v in virtuals:
        if v.probs.shape != shape:
            raise InvalidInputError("actual and virtual tables must share modes and cutoff")
    if n_cutoff is not None and shape != (n_cutoff + 1,) * actual.m:
        raise InvalidInputError(f"tables do not match n_cutoff={n_cutoff}")
    box = tuple(slice(0, d) for d in shape)
    p = np.asarray(actual.probs)
    for v in virtuals:
        p = convolve(p, v.probs, method="direct")[box]
    return ProbabilityTable(np.clip(p, 0, None)).exclude_zero_and_normalize()


def marginal_probabilities(table: ProbabilityTable, n_max: int) -> ProbabilityTable:
    """Restrict to patterns with every s_i <= n_max and renormalize (zero excluded)."""
    if not 0 <= n_max < table.n_cutoff:
        raise InvalidParameterError(f"n_max={n_max} must be below the cutoff {table.n_cutoff}")
    sub = np.array(table.probs[(slice(0, n_max + 1),) * table.m])
    return ProbabilityTable(sub).exclude_zero_and_normalize()


def marginal_distinguishable(
    actual: ProbabilityTable, virtuals: Sequence[ProbabilityTable], n_max: int
) -> ProbabilityTable:
    """Distinguishability marginal on the n_max box.

    Components of a pattern inside the box stay inside it, so convolving
    the restricted raw tables is exact there.
    """
    if not 0 <= n_max <= actual.n_cutoff:
        raise InvalidParameterError(f"n_max={n_max} exceeds the table cutoff {actual.n_cutoff}")
    box = (slice(0, n_max + 1),) * actual.m
    a = ProbabilityTable(np.array(actual.probs[box]))
    vs = [ProbabilityTable(np.array(v.probs[box])) for v in virtuals]
    return distinguishable_probabilities(a, vs)


def single_mode_distribution(a: float, b: float, n_max: int) -> np.ndarray:
    """Photon-number law of one mode with diagonal variances (a, b), n = 0..n_max.

    Series coefficients of the generating function
    ``2 / sqrt(((1-z)a + 1+z) ((1-z)b + 1+z))``; each factor is a binomial
    series in ``u = (1-a)/(1+a)`` (resp. b), and ``|u| < 1`` for physical input.
    """
    if a <= 0 or b <= 0 or a * b < 1.0 - 1e-10:
        raise InvalidParameterError(f"variances ({a}, {b}) are not physical")

    def series(v):
        u = (1.0 - v) / (1.0 + v)
        c = np.empty(n_max + 1)
        c[0] = 1.0
        for k in range(1, n_max + 1):
            c[k] = c[k - 1] * (-(2 * k - 1) / (2 * k)) * u
        return c

    p = np.convolve(series(a), series(b))[: n_max + 1] * 2.0 / math.sqrt((1.0 + a) * (1.0 + b))
    return np.clip(p, 0.0, None)


def virtual_table(a: float, b: float, column, n_cutoff: int) -> ProbabilityTable:
    """Raw table of one squeezed input mode (variances a, b) spread by a column of T.

    Each photon leaves through output j with probability |T_ji|^2, so
    P(s) = p(N) N! prod_j w_j^s_j / s_j! with p the single-mode photon law.
    """
    w = np.abs(np.asarray(column)) ** 2
    m = w.size
    c = int(n_cutoff)
    pn = single_mode_distribution(a, b, m * c)
    pats = _patterns((c + 1,) * m)
    N = pats.sum(axis=1)
    logw = np.log(np.where(w > 0, w, 1.0))
    lfact = np.array([math.lgamma(k + 1) for k in range(m * c + 1)])
    logp = lfact[N] + (pats * logw).sum(axis=1) - lfact[pats].sum(axis=1)
    zero_w = (pats[:, w == 0] > 0).any(axis=1)
    probs = np.where(zero_w, 0.0, pn[N] * np.exp(logp))
    return ProbabilityTable(probs.reshape((c + 1,) * m))


def distinguishable_tables(spec: SqueezingSpec, itf: Interferometer, eta_ind: float, n_cutoff: int):
    """Raw tables of the actual part and of the K virtual parts."""
    eta_ind = _check_unit(eta_ind, "eta_ind")
    V_act, V_virt = distinguishable_covariances(spec, eta_ind)
    actual = enumerate_ideal(apply_interferometer(xp_to_q(V_act), itf), n_cutoff)
    m = spec.m
    virtuals = [
        virtual_table(V[i, i], V[i + m, i + m], itf.T[:, i], n_cutoff) for i, V in enumerate(V_virt)
    ]
    return actual, virtuals


def _subsets(partition, m: int) -> list[list[int]]:
    """0-based subsets from a partition object (``.subsets``) or a list of 1-based sets."""
    subsets = getattr(partition, "subsets", partition)
    out = [sorted(int(i) - 1 for i in sub) for sub in subsets]
    flat = [i for sub in out for i in sub]
    if any(len(sub) == 0 for sub in out) or sorted(flat) != list(range(m)):
        raise InvalidInputError(f"partition {subsets} does not cover modes 1..{m} disjointly")
    return out


def bin_table(table: ProbabilityTable, partition) -> ProbabilityTable:
    """Distribution of subset photon sums, with subset cutoff m_sub * n_cutoff."""
    subsets = _subsets(partition, table.m)
    shape = tuple(sum(table.cutoffs[i] for i in sub) + 1 for sub in subsets)
    out = np.zeros(shape)
    pats = _patterns(table.probs.shape)
    binned = np.stack([pats[:, sub].sum(axis=1) for sub in subsets], axis=1)
    np.add.at(out, tuple(binned.T), table.probs.reshape(-1))
    return ProbabilityTable(
        out,
        zero_excluded=table.zero_excluded,
        normalized=table.normalized,
        truncation_deficit=table.truncation_deficit,
    )


@dataclass(frozen=True)
class StructureStats:
    top_k_mass: float
    mean_l2: float
    short_tail_mass: float
    long_tail_mass: float
    k: int
    short_thresh: float
    long_thresh: float
    top_pattern: tuple[int, ...]

    def as_dict(self) -> dict:
        d = dict(self.__dict__)
        d["top_pattern"] = list(self.top_pattern)
        return d


def sorted_patterns(table: ProbabilityTable) -> tuple[np.ndarray, np.ndarray]:
    """Patterns and probabilities sorted by probability, ties lexicographic."""
    pats = _patterns(table.probs.shape)
    p = table.probs.reshape(-1)
    # np.ndindex order is lexicographic, so a stable sort keeps ties ordered
    order = np.argsort(-p, kind="stable")
    return pats[order], p[order]


def structure_stats(
    table: ProbabilityTable, k: int = 10, short_thresh: float = 0.0, long_thresh: float = 3.0
) -> StructureStats:
    """Top-k mass and 2-norm distance statistics of the zero-excluded table."""
    if table.total <= 0:
        raise InvalidInputError("empty table")
    if not (table.zero_excluded and table.normalized):
        table = table.exclude_zero_and_normalize()
    pats, p = sorted_patterns(table)
    keep = p > 0
    pats, p = pats[keep], p[keep]
    d = np.sqrt(((pats - pats[0]) ** 2).sum(axis=1))
    return StructureStats(
        top_k_mass=float(p[:k].sum()),
        mean_l2=float((d * p).sum()),
        short_tail_mass=float(p[d <= short_thresh + 1e-12].sum()),
        long_tail_mass=float(p[d >= long_thresh - 1e-12].sum()),
        k=int(k),
        short_thresh=float(short_thresh),
        long_thresh=float(long_thresh),
        top_pattern=tuple(int(x) for x in pats[0]),
    )


def hilbert_dim(m: int, n_cutoff: int, partition=None) -> int:
    """Size of the truncated output space, including the zero pattern."""
    if partition is None:
        return (n_cutoff + 1) ** m
    return math.prod(len(sub) * n_cutoff + 1 for sub in _subsets(partition, m))


def n_out(m: int, n_cutoff: int, lossless: bool = False) -> int:
    """Nonzero pattern count; the lossless form counts even-total patterns only."""
    if lossless:
        return ((n_cutoff + 1) ** m - 1) // 2
    return (n_cutoff + 1) ** m - 1


def even_nonzero_count(m: int, n_cutoff: int) -> int:
    """Direct count of nonzero patterns with even total photon number."""
    g = np.ones(1)
    for _ in range(m):
        g = np.convolve(g, np.ones(n_cutoff + 1))
    return int(round(g[::2].sum())) - 1
