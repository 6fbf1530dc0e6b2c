"""Sample validation: K-means++ pattern recognition with a chi-square test,
the sample-box protocol, Gaussian peak extraction, output binning and
cumulant correlators.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import curve_fit
from scipy.spatial.distance import cdist

from .errors import (
    InvalidInputError,
    InvalidModelError,
    InvalidParameterError,
    UndefinedRatioError,
    ValidationInputError,
)
from .samplers import SampleSet, rng_stream

RADIUS_SLACK = 1e-9
EXPECTATIONS = ("total", "k")


def _points(samples) -> np.ndarray:
    pats = samples.patterns if isinstance(samples, SampleSet) else samples
    pts = np.asarray(pats, dtype=float)
    if pts.ndim != 2:
        raise InvalidInputError("samples must form an (n, m) array")
    return pts


# --------------------------------------------------------------------------
# Clustering
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class ClusterModel:
    """Centroids, acceptance radii and training counts of a K-means model."""

    centroids: np.ndarray
    radii: np.ndarray
    training_counts: np.ndarray
    iterations: int = 0
    converged: bool = True

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def m(self) -> int:
        return self.centroids.shape[1]

    def nearest(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Index of and distance to the nearest centroid (ties go to the lower index)."""
        pts = _points(points)
        if pts.shape[1] != self.m:
            raise ValidationInputError(f"samples have {pts.shape[1]} modes, model has {self.m}")
        d = cdist(pts, self.centroids)
        lab = np.argmin(d, axis=1)
        return lab, d[np.arange(len(pts)), lab]

    def assign(self, points, use_radius: bool = False) -> np.ndarray:
        """Cluster labels; with ``use_radius`` samples outside the radius get -1."""
        lab, dist = self.nearest(points)
        if use_radius:
            lab = np.where(dist <= self.radii[lab] + RADIUS_SLACK, lab, -1)
        return lab


def _kmeanspp(X: np.ndarray, k: int, gen: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    idx = [int(gen.integers(n))]
    d2 = ((X - X[idx[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        tot = d2.sum()
        if tot > 0:
            j = int(np.searchsorted(np.cumsum(d2), gen.random() * tot, side="right"))
            j = min(j, n - 1)
        else:
            # every point coincides with a chosen centroid
            j = int(gen.integers(n))
        idx.append(j)
        d2 = np.minimum(d2, ((X - X[j]) ** 2).sum(axis=1))
    return X[idx].copy()


def train_clusters(bona_fide, k: int, seed: int, max_iter: int = 300, tol: float = 1e-6) -> ClusterModel:
    """K-means++ seeding followed by Lloyd iterations.

    Empty clusters are reseeded at the training point farthest from its
    centroid. Radii are the largest training distance in each cluster.
    """
    X = _points(bona_fide)
    n = X.shape[0]
    if k < 2:
        raise InvalidParameterError("k must be at least 2")
    if k > n:
        raise InvalidParameterError(f"k={k} exceeds the {n} training samples")
    gen = rng_stream(seed, 0)
    C = _kmeanspp(X, k, gen)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        d = cdist(X, C)
        lab = np.argmin(d, axis=1)
        counts = np.bincount(lab, minlength=k)
        sums = np.zeros_like(C)
        np.add.at(sums, lab, X)
        newC = C.copy()
        filled = counts > 0
        newC[filled] = sums[filled] / counts[filled, None]
        if not filled.all():
            dist = d[np.arange(n), lab]
            for j in np.flatnonzero(~filled):
                far = int(np.argmax(dist))
                if dist[far] <= 0:
                    break
                newC[j] = X[far]
                dist[far] = 0.0
        shift = np.max(np.sqrt(((newC - C) ** 2).sum(axis=1)))
        C = newC
        if shift < tol:
            converged = True
            break
    d = cdist(X, C)
    lab = np.argmin(d, axis=1)
    dist = d[np.arange(n), lab]
    radii = np.zeros(k)
    np.maximum.at(radii, lab, dist)
    return ClusterModel(C, radii, np.bincount(lab, minlength=k), it, converged)


# --------------------------------------------------------------------------
# Chi-square statistics
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class ChiSquareResult:
    chi2: float
    abandoned_fraction: float
    degenerate: bool
    counts: np.ndarray


def chi_square_counts(n1: np.ndarray, n2: np.ndarray, expectation: str = "total") -> tuple[float, bool]:
    """Contingency statistic of two per-cluster count vectors.

    ``expectation="total"`` uses E_ij = N_i N_j / N_total; ``"k"`` divides
    by the number of clusters instead. Clusters with N_i = 0 are skipped.
    """
    if expectation not in EXPECTATIONS:
        raise InvalidParameterError(f"expectation must be one of {EXPECTATIONS}")
    N = np.stack([np.asarray(n1, float), np.asarray(n2, float)], axis=1)
    Ni = N.sum(axis=1)
    Nj = N.sum(axis=0)
    keep = Ni > 0
    if not keep.any():
        raise InvalidModelError("every cluster is empty")
    denom = N.sum() if expectation == "total" else float(len(Ni))
    E = np.outer(Ni[keep], Nj) / denom
    Nk = N[keep]
    ok = E > 0
    chi2 = float((((Nk - E) ** 2)[ok] / E[ok]).sum())
    return chi2, bool((Nj == 0).any())


def chi_square_test(model: ClusterModel, bona_draw, test_draw, expectation: str = "total") -> ChiSquareResult:
    """Bona fide samples go to their nearest centroid; test samples only within its radius."""
    if len(_points(bona_draw)) == 0 or len(_points(test_draw)) == 0:
        raise ValidationInputError("both draws must be nonempty")
    if model.training_counts.sum() == 0:
        raise InvalidModelError("model has no populated cluster")
    lb = model.assign(bona_draw)
    lt = model.assign(test_draw, use_radius=True)
    n1 = np.bincount(lb, minlength=model.k)
    n2 = np.bincount(lt[lt >= 0], minlength=model.k)
    chi2, degenerate = chi_square_counts(n1, n2, expectation)
    return ChiSquareResult(chi2, float(np.mean(lt < 0)), degenerate, np.stack([n1, n2], axis=1))


@dataclass(frozen=True)
class ChiSquareRun:
    chi2_values: np.ndarray
    abandoned_fractions: np.ndarray
    draw_size: int
    expectation: str = "total"

    @property
    def repetitions(self) -> int:
        return len(self.chi2_values)


def sample_box_run(model: ClusterModel, bona_box, test_box, repetitions: int, draw_size: int, seed: int,
                   expectation: str = "total") -> ChiSquareRun:
    """Repeated chi-square tests on draws taken without replacement from two boxes.

    Draws go back into their box after each test. Repetition ``r`` uses the
    stream ``(seed, r)``; cluster labels are computed once per box.
    """
    if repetitions < 1:
        raise InvalidParameterError("repetitions must be >= 1")
    lb = model.assign(bona_box)
    lt = model.assign(test_box, use_radius=True)
    if draw_size < 1 or draw_size > min(len(lb), len(lt)):
        raise InvalidParameterError(f"draw_size={draw_size} must lie in [1, {min(len(lb), len(lt))}]")
    k = model.k
    chi = np.empty(repetitions)
    aband = np.empty(repetitions)
    for r in range(repetitions):
        gen = rng_stream(seed, r)
        ib = gen.choice(len(lb), draw_size, replace=False)
        it = gen.choice(len(lt), draw_size, replace=False)
        tb = lt[it]
        n1 = np.bincount(lb[ib], minlength=k)
        n2 = np.bincount(tb[tb >= 0], minlength=k)
        chi[r], _ = chi_square_counts(n1, n2, expectation)
        aband[r] = np.mean(tb < 0)
    return ChiSquareRun(chi, aband, int(draw_size), expectation)


@dataclass(frozen=True)
class PeakFit:
    X_c: float
    sigma: float
    center_err: float
    fit_residual: float
    converged: bool


def _gauss(x, a, mu, sig):
    return a * np.exp(-0.5 * ((x - mu) / sig) ** 2)


def fit_gaussian_peak(run, n_bins: int = 50) -> PeakFit:
    """Least-squares Gaussian fit to the histogram of chi-square values.

    Falls back to the sample mean and standard deviation (``converged``
    False) when the fit fails; ``center_err`` is then the standard error
    of the mean.
    """
    vals = np.asarray(run.chi2_values if isinstance(run, ChiSquareRun) else run, dtype=float)
    if vals.size < 2:
        raise ValidationInputError("need at least two chi-square values")
    mean, sd = float(vals.mean()), float(vals.std(ddof=1))
    sem = sd / math.sqrt(vals.size)
    if sd <= 0:
        return PeakFit(mean, 1e-9, 0.0, 0.0, False)
    counts, edges = np.histogram(vals, bins=n_bins)
    centers = (edges[:-1] + edges[1:]) / 2
    try:
        popt, pcov = curve_fit(_gauss, centers, counts, p0=(counts.max(), mean, sd), maxfev=10000)
        a, mu, sig = popt
        err = float(np.sqrt(pcov[1, 1]))
        if not (np.isfinite(err) and edges[0] <= mu <= edges[-1] and sig != 0):
            raise RuntimeError("fit left the data range")
        resid = float(np.sqrt(np.mean((counts - _gauss(centers, *popt)) ** 2)))
        return PeakFit(float(mu), float(abs(sig)), err, resid, True)
    except (RuntimeError, ValueError):
        return PeakFit(mean, sd, sem, float("nan"), False)


# --------------------------------------------------------------------------
# Output binning
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class BinningPartition:
    """Disjoint subsets of 1-based mode labels covering 1..m."""

    subsets: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        subs = tuple(tuple(int(i) for i in sub) for sub in self.subsets)
        flat = [i for sub in subs for i in sub]
        if not subs or any(len(sub) == 0 for sub in subs):
            raise InvalidInputError("partition subsets must be nonempty")
        if sorted(flat) != list(range(1, len(flat) + 1)):
            raise InvalidInputError(f"partition {subs} must cover 1..m without repeats")
        object.__setattr__(self, "subsets", subs)

    @property
    def m(self) -> int:
        return sum(len(sub) for sub in self.subsets)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(sub) for sub in self.subsets)

    @classmethod
    def parse(cls, text: str) -> "BinningPartition":
        """Parse ``"1,2|3,4|5"``."""
        try:
            return cls(tuple(tuple(int(x) for x in part.split(",")) for part in text.strip().split("|")))
        except ValueError:
            raise InvalidInputError(f"cannot parse partition {text!r}") from None

    @classmethod
    def adjacent_pairs(cls, m: int) -> "BinningPartition":
        return cls(tuple((i, i + 1) if i + 1 <= m else (i,) for i in range(1, m + 1, 2)))

    def __str__(self) -> str:
        return "|".join(",".join(str(i) for i in sub) for sub in self.subsets)


def bin_patterns(samples: SampleSet, partition: BinningPartition) -> SampleSet:
    """Replace each pattern by its per-subset photon sums."""
    if partition.m != samples.m:
        raise InvalidInputError(f"partition covers {partition.m} modes, samples have {samples.m}")
    cols = [np.asarray(sub) - 1 for sub in partition.subsets]
    binned = np.stack([samples.patterns[:, c].sum(axis=1) for c in cols], axis=1)
    meta = dict(samples.meta)
    if samples.n_cutoff is not None:
        meta["subset_cutoffs"] = [len(sub) * samples.n_cutoff for sub in partition.subsets]
    return SampleSet(binned, samples.model, dict(samples.params), samples.seed, samples.n_cutoff,
                     [list(sub) for sub in partition.subsets], meta)


# --------------------------------------------------------------------------
# Correlators
# --------------------------------------------------------------------------
def set_partitions(t: int) -> list[list[list[int]]]:
    """All partitions of {0, ..., t-1}, generated from restricted growth strings."""
    if not 1 <= t <= 8:
        raise InvalidParameterError(f"t must lie in 1..8, got {t}")
    out = []

    def grow(a: list[int], top: int):
        if len(a) == t:
            blocks: list[list[int]] = [[] for _ in range(top + 1)]
            for i, b in enumerate(a):
                blocks[b].append(i)
            out.append(blocks)
            return
        for b in range(top + 2):
            grow(a + [b], max(top, b))

    grow([0], 0)
    return out


def _cumulant(moment, t: int) -> float:
    total = 0.0
    for pi in set_partitions(t):
        nb = len(pi)
        term = math.factorial(nb - 1) * (-1) ** (nb - 1)
        for block in pi:
            term *= moment(tuple(block))
        total += term
    return total


def correlator(samples, modes: Sequence[int]) -> float:
    """Joint cumulant of photon numbers in the given 0-based modes."""
    X = _points(samples)
    modes = [int(o) for o in modes]
    if len(set(modes)) != len(modes):
        raise InvalidInputError(f"modes {modes} repeat")
    if any(o < 0 or o >= X.shape[1] for o in modes):
        raise InvalidInputError(f"modes {modes} out of range for {X.shape[1]} modes")
    cols = X[:, modes]
    return _cumulant(lambda block: float(np.prod(cols[:, list(block)], axis=1).mean()), len(modes))


class _MomentCache:
    def __init__(self, X: np.ndarray):
        self.X = X
        self.cache: dict[tuple[int, ...], float] = {}

    def __call__(self, modes: tuple[int, ...]) -> float:
        key = tuple(sorted(modes))
        if key not in self.cache:
            self.cache[key] = float(np.prod(self.X[:, list(key)], axis=1).mean())
        return self.cache[key]

    def kappa(self, combo: tuple[int, ...]) -> float:
        return _cumulant(lambda block: self(tuple(combo[i] for i in block)), len(combo))


@dataclass
class CorrelationReport:
    """Per-combination cumulants of two sample sets and their sum ratio."""

    t: int
    points: dict = field(default_factory=dict)
    gamma: float = float("nan")

    @property
    def kappa_noise(self) -> np.ndarray:
        return np.array([v[0] for v in self.points.values()])

    @property
    def kappa_ideal(self) -> np.ndarray:
        return np.array([v[1] for v in self.points.values()])


def gamma_deviation(noise, ideal, t: int) -> CorrelationReport:
    """Gamma = sum of noisy cumulants / sum of ideal cumulants over all t-mode combinations."""
    Xn, Xi = _points(noise), _points(ideal)
    if Xn.shape[1] != Xi.shape[1]:
        raise ValidationInputError("sample sets have different mode counts")
    m = Xn.shape[1]
    if not 1 <= t <= m:
        raise InvalidParameterError(f"t must lie in 1..{m}")
    cn, ci = _MomentCache(Xn), _MomentCache(Xi)
    points = {combo: (cn.kappa(combo), ci.kappa(combo)) for combo in itertools.combinations(range(m), t)}
    rep = CorrelationReport(t, points)
    den = rep.kappa_ideal.sum()
    if den == 0:
        raise UndefinedRatioError(f"ideal cumulants of order {t} sum to zero")
    rep.gamma = float(rep.kappa_noise.sum() / den)
    return rep
