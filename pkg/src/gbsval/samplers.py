"""Photon-pattern samplers.

The exact sampler is the chain rule with heterodyne auxiliaries: the modes
after ``i`` are replaced by heterodyne outcomes drawn once from the state's
Q-function, then ``s_i`` is drawn from its conditional law given the
earlier photon counts and the later heterodyne outcomes.

Mixed inputs whose covariance is diagonal per mode before the
interferometer (loss, distinguishability, squashed light) are written as a
pure squeezed state with a Gaussian random displacement. Each draw then
only touches pure states.

Every sample ``i`` owns the random stream ``(seed, i)``, so results do not
depend on the number of worker threads.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _backend
from ._pairing import mixed_arrays
from .errors import (
    InvalidInputError,
    InvalidParameterError,
    ResourceLimitError,
    SamplingDegeneracyError,
)
from .gaussian import (
    PURITY_TOL,
    GaussianState,
    Interferometer,
    SqueezingSpec,
    apply_interferometer,
    build_input_covariance,
    distinguishable_covariances,
    lossy_covariance,
    xp_to_q,
)
from .matchpoly import permanent_repeated
from .oracle import ProbabilityTable, enumeration_budget, single_mode_distribution

TRUNCATION_MODES = ("renormalize", "reject")
MAX_ATTEMPTS = 100_000
TINY = 1e-300


def rng_stream(seed: int, stream_id: int | Sequence[int] = 0) -> np.random.Generator:
    """Independent generator keyed by ``(seed, stream_id)``."""
    key = (stream_id,) if np.isscalar(stream_id) else tuple(stream_id)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=key)))


@dataclass(frozen=True)
class RngStream:
    seed: int
    stream_id: int

    def generator(self) -> np.random.Generator:
        return rng_stream(self.seed, self.stream_id)


@dataclass
class SampleSet:
    """Ordered photon patterns plus provenance.

    ``patterns`` is an ``(n, m)`` integer array. ``partition`` is set when
    the patterns are subset sums of a binned measurement.
    """

    patterns: np.ndarray
    model: str
    params: dict = field(default_factory=dict)
    seed: int | None = None
    n_cutoff: int | None = None
    partition: list[list[int]] | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        p = np.asarray(self.patterns, dtype=np.int64)
        if p.ndim != 2:
            raise InvalidInputError(f"patterns must be a 2-d array, got shape {p.shape}")
        if p.size and p.min() < 0:
            raise InvalidInputError("photon counts must be nonnegative")
        self.patterns = p

    def __len__(self) -> int:
        return self.patterns.shape[0]

    @property
    def m(self) -> int:
        return self.patterns.shape[1]

    def subset(self, idx) -> "SampleSet":
        return SampleSet(self.patterns[idx], self.model, dict(self.params), self.seed,
                         self.n_cutoff, self.partition, dict(self.meta))

    def frequencies(self) -> dict[tuple[int, ...], float]:
        uniq, counts = np.unique(self.patterns, axis=0, return_counts=True)
        n = len(self)
        return {tuple(int(x) for x in u): c / n for u, c in zip(uniq, counts)}


# --------------------------------------------------------------------------
# Chain rule
# --------------------------------------------------------------------------
def _mode_rows(modes, m):
    modes = list(modes)
    return modes + [k + m for k in modes]


def _swap(n):
    X = np.zeros((2 * n, 2 * n))
    X[:n, n:] = np.eye(n)
    X[n:, :n] = np.eye(n)
    return X


@dataclass
class _Step:
    rows_a: list
    rows_b: list
    gain: np.ndarray
    Qinv: np.ndarray
    logdet: float
    A: np.ndarray
    B: np.ndarray | None
    # reduced state over the earlier modes, used for absolute conditionals
    red_pos: list
    red_Qinv: np.ndarray | None
    red_logdet: float
    red_A: np.ndarray | None


def _inv_logdet(Q):
    Qinv = np.linalg.inv(Q)
    return Qinv, float(np.linalg.slogdet(Q)[1].real)


class ChainPlan:
    """Per-state precomputation for chain-rule draws.

    Conditioning on heterodyne outcomes changes only the mean, so the
    conditional covariances, their inverses and the kernel matrices are
    computed once per step here.

    Parameters
    ----------
    state : GaussianState
        Physical state to sample from; its displacement is the default mean.
    n_cutoff : int
        Per-mode photon cap.
    truncation : {"renormalize", "reject"}
        ``renormalize`` rescales each conditional law over ``0..n_cutoff``.
        ``reject`` computes absolute conditionals, treats the leftover mass
        as an overflow outcome and discards the draw when it occurs, giving
        exact samples of the law conditioned on the cutoff box.
    """

    def __init__(self, state: GaussianState, n_cutoff: int, truncation: str = "renormalize"):
        if truncation not in TRUNCATION_MODES:
            raise InvalidParameterError(f"truncation must be one of {TRUNCATION_MODES}")
        if n_cutoff < 0:
            raise InvalidParameterError("n_cutoff must be nonnegative")
        state.check_physical()
        self.state = state
        self.m = m = state.m
        self.n_cutoff = int(n_cutoff)
        self.truncation = truncation
        self.kern = _backend.kernels
        Q = state.Q
        self.steps: list[_Step] = []
        for i in range(m):
            a = _mode_rows(range(i + 1), m)
            b = _mode_rows(range(i + 1, m), m)
            if b:
                gain = np.linalg.solve(Q[np.ix_(b, b)].T, Q[np.ix_(a, b)].T).T
                Qc = Q[np.ix_(a, a)] - gain @ Q[np.ix_(b, a)]
            else:
                gain = np.zeros((len(a), 0), dtype=complex)
                Qc = Q[np.ix_(a, a)]
            Qc = (Qc + Qc.conj().T) / 2
            Qinv, logdet = _inv_logdet(Qc)
            n = i + 1
            A = _swap(n) @ (np.eye(2 * n) - Qinv)
            A = (A + A.T) / 2
            off = max(np.max(np.abs(A[:n, n:])), np.max(np.abs(A[n:, :n])))
            B = A[:n, :n].copy() if off < max(PURITY_TOL, 1e-9 * np.max(np.abs(A), initial=1.0)) else None
            pos = list(range(i)) + list(range(n, n + i))
            if i and truncation == "reject":
                Qr = Qc[np.ix_(pos, pos)]
                rQinv, rlogdet = _inv_logdet(Qr)
                rA = _swap(i) @ (np.eye(2 * i) - rQinv)
                rA = (rA + rA.T) / 2
            else:
                rQinv, rlogdet, rA = None, 0.0, None
            self.steps.append(_Step(a, b, gain, Qinv, logdet, A, B, pos, rQinv, rlogdet, rA))
        het = _mode_rows(range(1, m), m)
        Qh = Q[np.ix_(het, het)]
        nh = m - 1
        if nh:
            W = np.block([[np.eye(nh), 1j * np.eye(nh)], [np.eye(nh), -1j * np.eye(nh)]])
            cov = (W.conj().T @ Qh @ W).real / 4
            self.het_chol = np.linalg.cholesky((cov + cov.T) / 2)
        else:
            self.het_chol = np.zeros((0, 0))

    @property
    def pure(self) -> bool:
        return all(st.B is not None for st in self.steps)

    def draw(self, gen: np.random.Generator, alpha_bar: np.ndarray | None = None, trace: list | None = None):
        """One pattern (zeros allowed), or ``None`` when an overflow is drawn.

        ``trace`` collects the unnormalized conditional weights of each step
        (absolute probabilities in ``reject`` mode).
        """
        m, c = self.m, self.n_cutoff
        ab = self.state.alpha_bar if alpha_bar is None else np.asarray(alpha_bar, dtype=complex)
        nh = m - 1
        if nh:
            mean = np.concatenate([ab[1:m].real, ab[1:m].imag])
            x = mean + self.het_chol @ gen.standard_normal(2 * nh)
            alpha = x[:nh] + 1j * x[nh:]
        else:
            alpha = np.zeros(0, dtype=complex)
        s = np.zeros(m, dtype=np.int64)
        lfact = 0.0
        for i, st in enumerate(self.steps):
            later = alpha[i:]
            v = np.concatenate([later, later.conj()])
            mean_c = ab[st.rows_a] + st.gain @ (v - ab[st.rows_b])
            qv = st.Qinv @ mean_c
            gamma = qv.conj()
            prefix = s[:i]
            if st.B is not None:
                w = self.kern.chain_weights_pure(st.B, gamma[: i + 1], prefix, c)
            else:
                w = self.kern.chain_weights_mixed(st.A, gamma, prefix, c)
            w = np.clip(w, 0.0, None)
            if self.truncation == "reject":
                logp = -0.5 * float((mean_c.conj() @ qv).real) - 0.5 * st.logdet - lfact
                w = w * math.exp(logp) / self._denominator(st, mean_c, prefix, lfact)
                total = 1.0
            else:
                total = float(w.sum())
            if trace is not None:
                trace.append(w.copy())
            if not np.isfinite(w).all() or w.sum() < TINY:
                raise SamplingDegeneracyError(f"conditional weights vanish at mode {i}")
            k = int(np.searchsorted(np.cumsum(w), gen.random() * total, side="right"))
            if k > c:
                return None
            s[i] = k
            lfact += math.lgamma(k + 1)
        return s

    def _denominator(self, st: _Step, mean_c, prefix, lfact) -> float:
        if not len(prefix):
            return 1.0
        mr = mean_c[st.red_pos]
        qv = st.red_Qinv @ mr
        logp = -0.5 * float((mr.conj() @ qv).real) - 0.5 * st.red_logdet - lfact
        C, mu, n = mixed_arrays(st.red_A, qv.conj(), prefix)
        val = self.kern.lhafmix(C, mu, n).real if len(n) else 1.0
        d = val * math.exp(logp)
        if not d > TINY:
            raise SamplingDegeneracyError("prefix probability vanishes")
        return d


def _draw_loop(draw: Callable[[np.random.Generator], np.ndarray | None], gen, exclude_zero: bool, counters: dict):
    for _ in range(MAX_ATTEMPTS):
        s = draw(gen)
        if s is None:
            counters["overflow"] = counters.get("overflow", 0) + 1
            continue
        if exclude_zero and not s.any():
            counters["zero"] = counters.get("zero", 0) + 1
            continue
        return s
    raise SamplingDegeneracyError(f"no acceptable pattern after {MAX_ATTEMPTS} attempts")


def _run(draw, n_samples: int, seed: int, threads: int = 1, exclude_zero: bool = True):
    """Draw ``n_samples`` patterns, sample ``i`` from stream ``(seed, i)``."""
    if n_samples < 0:
        raise InvalidParameterError("n_samples must be nonnegative")
    if threads < 1:
        raise InvalidParameterError("threads must be >= 1")

    def one(i):
        counters: dict = {}
        return _draw_loop(draw, rng_stream(seed, i), exclude_zero, counters), counters

    if threads == 1:
        results = [one(i) for i in range(n_samples)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(one, range(n_samples)))
    pats = np.array([r[0] for r in results], dtype=np.int64).reshape(n_samples, -1)
    redraws = {"zero": 0, "overflow": 0}
    for _, cnt in results:
        for key, v in cnt.items():
            redraws[key] += v
    return pats, redraws


def chain_rule_sample(state: GaussianState, n_cutoff: int, rng, truncation: str = "renormalize",
                      exclude_zero: bool = True) -> np.ndarray:
    """Draw one pattern from ``state``; ``rng`` is a Generator, RngStream or seed."""
    if isinstance(rng, RngStream):
        rng = rng.generator()
    elif not isinstance(rng, np.random.Generator):
        rng = rng_stream(int(rng), 0)
    if exclude_zero and state.is_vacuum():
        raise SamplingDegeneracyError("vacuum input only produces the zero pattern")
    plan = ChainPlan(state, n_cutoff, truncation)
    return _draw_loop(plan.draw, rng, exclude_zero, {})


# --------------------------------------------------------------------------
# Pure-part / random-displacement split
# --------------------------------------------------------------------------
def split_mixed(V: np.ndarray) -> tuple[np.ndarray, np.ndarray] | None:
    """Write a per-mode diagonal covariance as pure part + displacement noise.

    For mode ``j`` with variances ``(a, b)`` and ``nu = sqrt(a b) >= 1`` the
    pure part is ``(a/nu, b/nu)``; the remainder is the covariance of a
    random displacement. Returns ``None`` when ``V`` is not diagonal.
    """
    V = np.asarray(V, dtype=float)
    d = np.diag(V)
    if np.max(np.abs(V - np.diag(d))) > 0:
        return None
    m = V.shape[0] // 2
    a, b = d[:m], d[m:]
    nu = np.sqrt(a * b)
    if np.any(nu < 1 - 1e-12):
        raise InvalidInputError("covariance violates the uncertainty relation")
    nu = np.maximum(nu, 1.0)
    pure = np.concatenate([a / nu, b / nu])
    return np.diag(pure), np.clip(d - pure, 0.0, None)


class GaussianSource:
    """Sampler for V pushed through an interferometer.

    Uses the pure split when available (per-sample random displacement),
    otherwise the mixed output state directly.
    """

    def __init__(self, V: np.ndarray, itf: Interferometer, n_cutoff: int, truncation: str = "renormalize"):
        self.m = itf.m
        self.T = itf.T
        split = split_mixed(V)
        if split is None:
            self.noise_sd = None
            state = apply_interferometer(xp_to_q(V), itf)
        else:
            Vp, noise = split
            self.noise_sd = np.sqrt(noise) if noise.any() else None
            state = apply_interferometer(xp_to_q(Vp), itf)
        self.vacuum = state.is_vacuum() and self.noise_sd is None
        self.plan = ChainPlan(state, n_cutoff, truncation)

    def draw(self, gen: np.random.Generator):
        if self.noise_sd is None:
            return self.plan.draw(gen)
        m = self.m
        d = self.noise_sd * gen.standard_normal(2 * m)
        beta = self.T @ ((d[:m] + 1j * d[m:]) / 2)
        return self.plan.draw(gen, np.concatenate([beta, beta.conj()]))


# --------------------------------------------------------------------------
# Model samplers
# --------------------------------------------------------------------------
def _itf(T) -> Interferometer:
    return T if isinstance(T, Interferometer) else Interferometer(np.asarray(T, dtype=complex))


def _spec_params(spec: SqueezingSpec, **extra) -> dict:
    return {"K": spec.K, "m": spec.m, "r": spec.r, **extra}


def _check_m(spec: SqueezingSpec, itf: Interferometer):
    if spec.m != itf.m:
        raise InvalidInputError(f"spec has {spec.m} modes, interferometer has {itf.m}")


def _source_samples(V, itf, n_samples, n_cutoff, seed, threads, truncation):
    src = GaussianSource(V, itf, n_cutoff, truncation)
    if src.vacuum:
        raise SamplingDegeneracyError("vacuum input only produces the zero pattern")
    return _run(src.draw, n_samples, seed, threads)


def sample_ideal(spec: SqueezingSpec, T, n_samples: int, n_cutoff: int, seed: int, threads: int = 1,
                 truncation: str = "renormalize") -> SampleSet:
    itf = _itf(T)
    _check_m(spec, itf)
    pats, redraws = _source_samples(build_input_covariance(spec), itf, n_samples, n_cutoff, seed, threads, truncation)
    return SampleSet(pats, "ideal", _spec_params(spec, truncation=truncation), seed, n_cutoff,
                     meta={"redraws": redraws})


def _thin(pattern: np.ndarray, eta: float, gen: np.random.Generator) -> np.ndarray:
    """Keep each photon independently when its uniform falls below ``eta``.

    One uniform per photon, independent of ``eta``: draws on a shared
    stream are nested across transmissions (common random numbers).
    """
    owner = np.repeat(np.arange(len(pattern)), pattern)
    kept = owner[gen.random(len(owner)) < eta]
    return np.bincount(kept, minlength=len(pattern)).astype(pattern.dtype)


def sample_lossy(spec: SqueezingSpec, T, eta_t: float, n_samples: int, n_cutoff: int, seed: int,
                 method: str = "direct", threads: int = 1, truncation: str = "renormalize") -> SampleSet:
    """Uniform loss, either on the covariance or by thinning ideal draws."""
    if not 0.0 <= eta_t <= 1.0:
        raise InvalidParameterError(f"eta_t must lie in [0, 1], got {eta_t}")
    itf = _itf(T)
    _check_m(spec, itf)
    V_in = build_input_covariance(spec)
    if method == "direct":
        pats, redraws = _source_samples(lossy_covariance(V_in, eta_t), itf, n_samples, n_cutoff, seed,
                                        threads, truncation)
    elif method == "thinning":
        if eta_t == 0.0 or spec.r == 0.0:
            raise SamplingDegeneracyError("no photons survive")
        src = GaussianSource(V_in, itf, n_cutoff, truncation)

        def draw(gen):
            s = src.draw(gen)
            return None if s is None else _thin(s, eta_t, gen)

        pats, redraws = _run(draw, n_samples, seed, threads)
    else:
        raise InvalidParameterError(f"unknown loss method {method!r}")
    return SampleSet(pats, "loss", _spec_params(spec, eta_t=eta_t, method=method, truncation=truncation),
                     seed, n_cutoff, meta={"redraws": redraws})


def sample_distinguishable(spec: SqueezingSpec, T, eta_ind: float, n_samples: int, n_cutoff: int, seed: int,
                           virtual_method: str = "multinomial", threads: int = 1,
                           truncation: str = "reject") -> SampleSet:
    """Sum of one actual and K virtual processes, redrawn when outside the box.

    ``virtual_method`` is ``"chain"`` (chain rule per virtual state) or
    ``"multinomial"`` (photon number of the single squeezed input, then a
    multinomial split over outputs with weights |T_ji|^2).
    """
    if not 0.0 <= eta_ind <= 1.0:
        raise InvalidParameterError(f"eta_ind must lie in [0, 1], got {eta_ind}")
    if virtual_method not in ("chain", "multinomial"):
        raise InvalidParameterError(f"unknown virtual method {virtual_method!r}")
    itf = _itf(T)
    _check_m(spec, itf)
    m, c = spec.m, n_cutoff
    V_act, V_virt = distinguishable_covariances(spec, eta_ind)
    actual = GaussianSource(V_act, itf, c, truncation)
    if eta_ind == 1.0:
        virt_draws = []
    elif virtual_method == "chain":
        virt_draws = [GaussianSource(V, itf, c, truncation).draw for V in V_virt]
    else:
        virt_draws = []
        for i, V in enumerate(V_virt):
            pn = single_mode_distribution(V[i, i], V[i + m, i + m], m * c)
            cdf = np.cumsum(pn)
            weights = np.abs(itf.T[:, i]) ** 2
            weights = weights / weights.sum()

            def draw_v(gen, cdf=cdf, weights=weights):
                n = int(np.searchsorted(cdf, gen.random(), side="right"))
                if n > m * c:
                    return None
                return gen.multinomial(n, weights)

            virt_draws.append(draw_v)
    if spec.r == 0.0:
        raise SamplingDegeneracyError("vacuum input only produces the zero pattern")

    def draw(gen):
        s = actual.draw(gen)
        if s is None:
            return None
        for dv in virt_draws:
            x = dv(gen)
            if x is None:
                return None
            s = s + x
        return None if s.max() > c else s

    pats, redraws = _run(draw, n_samples, seed, threads)
    return SampleSet(pats, "distinguishable",
                     _spec_params(spec, eta_ind=eta_ind, virtual_method=virtual_method, truncation=truncation),
                     seed, n_cutoff, meta={"redraws": redraws})


def thermal_table(spec: SqueezingSpec, T, n_cutoff: int) -> ProbabilityTable:
    """Raw thermal-input table from permanents of D_s, D = T diag(n/(1+n)) T^dag."""
    itf = _itf(T)
    _check_m(spec, itf)
    m = spec.m
    size = (n_cutoff + 1) ** m
    if size > enumeration_budget():
        raise ResourceLimitError(f"{size} patterns exceed the enumeration budget")
    n = np.zeros(m)
    n[: spec.K] = spec.mean_photons
    D = itf.T @ np.diag(n / (1 + n)) @ itf.T.conj().T
    norm = float(np.prod(1 + n))
    probs = np.zeros((n_cutoff + 1,) * m)
    for s in np.ndindex(*probs.shape):
        sv = np.asarray(s)
        val = permanent_repeated(D, sv, sv).real
        probs[s] = max(val, 0.0) / (math.prod(math.factorial(x) for x in s) * norm)
    return ProbabilityTable(probs, truncation_deficit=max(0.0, 1 - probs.sum()))


def categorical_sample(table: ProbabilityTable, n_samples: int, seed: int, model: str = "table") -> SampleSet:
    """Inverse-CDF draws from a normalized, zero-excluded table."""
    if not (table.normalized and table.zero_excluded):
        raise InvalidInputError("categorical sampling needs a normalized, zero-excluded table")
    p = table.probs.reshape(-1)
    cdf = np.cumsum(p)
    u = rng_stream(seed, 0).random(n_samples) * cdf[-1]
    idx = np.minimum(np.searchsorted(cdf, u, side="right"), p.size - 1)
    pats = np.array(np.unravel_index(idx, table.probs.shape)).T.reshape(n_samples, table.m)
    return SampleSet(pats, model, {}, seed, table.n_cutoff)


def sample_thermal(spec: SqueezingSpec, T, n_samples: int, seed: int, n_cutoff: int = 4) -> SampleSet:
    if spec.r == 0.0:
        raise SamplingDegeneracyError("thermal input with zero photons is the vacuum")
    table = thermal_table(spec, T, n_cutoff).exclude_zero_and_normalize()
    out = categorical_sample(table, n_samples, seed, "thermal")
    out.params = _spec_params(spec)
    return out


def coherent_amplitudes(spec: SqueezingSpec, T, theta: float = 0.0) -> np.ndarray:
    """beta_i = sum_j T_ji alpha_j with alpha_j = sqrt(<n>) e^{i theta} on squeezed modes."""
    itf = _itf(T)
    alpha = np.zeros(spec.m, dtype=complex)
    alpha[: spec.K] = math.sqrt(spec.mean_photons) * np.exp(1j * theta)
    return itf.T.T @ alpha


def sample_coherent(spec: SqueezingSpec, T, theta: float, n_samples: int, seed: int, n_cutoff: int = 4,
                    threads: int = 1) -> SampleSet:
    """Independent Poisson counts with means |beta_i|^2, redrawn outside the box."""
    itf = _itf(T)
    _check_m(spec, itf)
    lam = np.abs(coherent_amplitudes(spec, itf, theta)) ** 2
    if lam.sum() == 0:
        raise SamplingDegeneracyError("coherent input with zero amplitude is the vacuum")

    def draw(gen):
        s = gen.poisson(lam)
        return None if s.max() > n_cutoff else s

    pats, redraws = _run(draw, n_samples, seed, threads)
    return SampleSet(pats, "coherent", _spec_params(spec, theta=theta), seed, n_cutoff,
                     meta={"redraws": redraws})


def squashed_covariance(spec: SqueezingSpec) -> np.ndarray:
    """x variance 1 + 4<n> on the first K modes, vacuum elsewhere."""
    d = np.ones(2 * spec.m)
    d[: spec.K] = 1 + 4 * spec.mean_photons
    return np.diag(d)


def sample_squashed(spec: SqueezingSpec, T, n_samples: int, n_cutoff: int, seed: int, threads: int = 1,
                    truncation: str = "renormalize") -> SampleSet:
    itf = _itf(T)
    _check_m(spec, itf)
    pats, redraws = _source_samples(squashed_covariance(spec), itf, n_samples, n_cutoff, seed, threads, truncation)
    return SampleSet(pats, "squashed", _spec_params(spec, truncation=truncation), seed, n_cutoff,
                     meta={"redraws": redraws})


def mean_photon_ratio(samples: SampleSet, reference: SampleSet) -> float:
    if len(samples) == 0 or len(reference) == 0:
        raise InvalidInputError("mean photon ratio needs nonempty sample sets")
    ref = reference.patterns.sum(axis=1).mean()
    if ref == 0:
        raise InvalidInputError("reference set has no photons")
    return float(samples.patterns.sum(axis=1).mean() / ref)
