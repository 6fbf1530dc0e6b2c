"""Acceptance criteria A1-A12.

Each test records one PASS/FAIL line (shown in the terminal summary) and
then asserts the criterion at its stated tolerance. The heavy pipelines
(A8-A11) run the bundled presets through the command-line functions once
per session and share their outputs.
"""
import itertools
import math
import time

import numpy as np
import pytest
from scipy.stats import chi2_contingency

from conftest import record
from gbsval import cli
from gbsval import io as gio
from gbsval.gaussian import GaussianState, SqueezingSpec, build_input_covariance, haar_unitary, output_state, xp_to_q
from gbsval.matchpoly import (
    ProbabilityEngine,
    filldiag,
    greedy_pairing,
    hafnian_reference,
    lhafmix,
    loop_hafnian_reference,
    permanent,
    repeat_rows,
)
from gbsval.oracle import (
    distinguishable_probabilities,
    distinguishable_tables,
    enumerate_ideal,
    lossy_probabilities,
    marginal_distinguishable,
    structure_stats,
)
from gbsval.samplers import sample_distinguishable, sample_ideal, sample_lossy
from gbsval.validation import correlator

GRID = [1.0, 0.975, 0.95, 0.925, 0.9]


def _cfg(name, **over):
    cfg = cli.load_config(name)
    cfg.update(over)
    return cli._apply_overrides(cfg, None)


def _top_patterns_within(freq: dict, table, n: int, top: int, nsig: float = 5.0):
    """Worst |f - p| / (nsig * sd) over the ``top`` most probable patterns."""
    flat = sorted(table.items(), key=lambda kv: -kv[1])[:top]
    worst = 0.0
    for s, p in flat:
        bound = nsig * math.sqrt(p * (1 - p) / n)
        worst = max(worst, abs(freq.get(s, 0.0) - p) / bound)
    return worst


def _strict(seq, increasing=True):
    d = np.diff(seq)
    return bool(np.all(d > 0) if increasing else np.all(d < 0))


# --------------------------------------------------------------------------
# Shared pipeline runs
# --------------------------------------------------------------------------
@pytest.fixture(scope="module")
def work(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


def _peaks(paths):
    out = {}
    for p in paths:
        if p.name.startswith("peak_"):
            rec = gio.load_json(p)
            out[rec["noise"]] = rec
    return out


def _pattern_pipeline(name, root, threads=1):
    cfg = _cfg(name)
    t0 = time.perf_counter()
    files = cli.cmd_sample(cfg, None, root / name / "s", threads)
    tests = [p for p in files if p.name.startswith("samples_")]
    res = cli.cmd_validate(cfg, root / name / "s" / "bona.ndjson", tests, root / name / "v")
    return _peaks(res), time.perf_counter() - t0


@pytest.fixture(scope="module")
def loss_run(work):
    return _pattern_pipeline("loss_small", work)


@pytest.fixture(scope="module")
def dist_run(work):
    return _pattern_pipeline("dist_small", work)


# --------------------------------------------------------------------------
# A1-A3: oracles
# --------------------------------------------------------------------------
def test_a1_loop_hafnian_oracle():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst, cases = 0.0, 0
    while cases < 200:
        m = int(rng.integers(2, 6))
        spec = SqueezingSpec(m, m, float(rng.uniform(0.2, 0.9)))
        state = output_state(spec, haar_unitary(m, int(rng.integers(1 << 30))))
        displaced = cases % 2 == 1
        if displaced:
            beta = (rng.normal(size=m) + 1j * rng.normal(size=m)) * 0.5
            state = GaussianState(state.Q, np.concatenate([beta, beta.conj()]))
        eng = ProbabilityEngine(state)
        s = rng.multinomial(int(rng.integers(1, 11)), np.ones(m) / m)
        if not displaced and s.sum() % 2:
            continue
        gamma = eng.gamma[:m]
        idx = [i for i in range(m) for _ in range(s[i])]
        ref = loop_hafnian_reference(filldiag(repeat_rows(eng.B, s), gamma[idx]))
        got = lhafmix(greedy_pairing(s, eng.B, gamma))
        worst = max(worst, abs(got - ref) / max(abs(ref), 1e-300))
        cases += 1
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-6 and elapsed < 60
    record("A1", ok, f"{cases} cases, max rel err {worst:.2e} (< 1e-6), {elapsed:.1f} s (< 60 s)")
    assert ok


def test_a2_permanent_hafnian_identity():
    rng = np.random.default_rng(7)
    worst = 0.0
    for i in range(100):
        n = 1 + i % 5
        G = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        big = np.zeros((2 * n, 2 * n), dtype=complex)
        big[:n, n:] = G
        big[n:, :n] = G.T
        p, h = permanent(G), hafnian_reference(big)
        worst = max(worst, abs(p - h) / abs(h))
    ok = worst < 1e-10
    record("A2", ok, f"100 matrices up to 5x5, max rel err {worst:.2e} (< 1e-10)")
    assert ok


def test_a3_single_mode_squeezed_analytic():
    r = 0.5
    t = enumerate_ideal(xp_to_q(build_input_covariance(SqueezingSpec(1, 1, r))), 12)
    p = np.asarray(t.probs)
    exp0 = 1 / math.cosh(r)
    exp2 = math.tanh(r) ** 2 / (2 * math.cosh(r))
    err = max(abs(p[0] - exp0), abs(p[2] - exp2), float(np.max(np.abs(p[1::2]))))
    ok = err < 1e-10
    record("A3", ok, f"p(0)={p[0]:.5f}, p(2)={p[2]:.5f}, odd max {np.max(p[1::2]):.1e}; max abs err {err:.1e}")
    assert ok


# --------------------------------------------------------------------------
# A4-A6: samplers against oracles
# --------------------------------------------------------------------------
@pytest.fixture(scope="module")
def small():
    cfg = _cfg("loss_small")
    spec, itf = cli._spec(cfg), cli._interferometer(cfg, None)
    return spec, itf, enumerate_ideal(output_state(spec, itf), 4)


@pytest.mark.slow
def test_a4_ideal_sampler(small):
    spec, itf, ideal = small
    t0 = time.perf_counter()
    s = sample_ideal(spec, itf, 10_000, 4, seed=41)
    elapsed = time.perf_counter() - t0
    worst = _top_patterns_within(s.frequencies(), ideal.exclude_zero_and_normalize(), 10_000, 20)
    ok = worst <= 1.0 and elapsed < 1800
    record("A4", ok, f"top-20 worst deviation {worst:.2f} of the 5-sigma bound, sampling {elapsed:.0f} s")
    assert ok


@pytest.mark.slow
def test_a5_lossy_samplers(small):
    spec, itf, ideal = small
    table = lossy_probabilities(ideal, 0.9).exclude_zero_and_normalize()
    direct = sample_lossy(spec, itf, 0.9, 10_000, 4, seed=51, method="direct")
    thin = sample_lossy(spec, itf, 0.9, 10_000, 4, seed=52, method="thinning")
    wd = _top_patterns_within(direct.frequencies(), table, 10_000, 20)
    wt = _top_patterns_within(thin.frequencies(), table, 10_000, 20)
    # two-sample test on patterns seen at least 10 times in total, rest pooled
    fd, ft = direct.frequencies(), thin.frequencies()
    keys = sorted(set(fd) | set(ft))
    cd = np.array([fd.get(k, 0) * 10_000 for k in keys])
    ct = np.array([ft.get(k, 0) * 10_000 for k in keys])
    big = (cd + ct) >= 10
    rows = np.stack([np.append(cd[big], cd[~big].sum()), np.append(ct[big], ct[~big].sum())], axis=1)
    rows = rows[rows.sum(axis=1) > 0]
    pval = chi2_contingency(rows, correction=False)[1]
    ok = wd <= 1.0 and wt <= 1.0 and pval > 0.01
    record("A5", ok, f"direct {wd:.2f}, thinning {wt:.2f} of the 5-sigma bound; two-sample p={pval:.3f} (> 0.01)")
    assert ok


@pytest.mark.slow
def test_a6_distinguishable_marginals():
    spec = SqueezingSpec(5, 5, 0.3)
    itf = haar_unitary(5, cli.sub_seed(1, cli.ROLE_UNITARY))
    # raw probabilities do not depend on the cutoff, so box-sized tables suffice
    actual, virt = distinguishable_tables(spec, itf, 0.9, 1)
    table = marginal_distinguishable(actual, virt, 1)
    s = sample_distinguishable(spec, itf, 0.9, 10_000, 4, seed=61)
    inside = s.subset(np.all(s.patterns <= 1, axis=1))
    n = len(inside)
    worst = _top_patterns_within(inside.frequencies(), table, n, 2**5 - 1)
    ok = worst <= 1.0
    record("A6", ok, f"{n} of 10000 samples in the n_max=1 box; worst {worst:.2f} of the 5-sigma bound")
    assert ok


# --------------------------------------------------------------------------
# A7: output structure
# --------------------------------------------------------------------------
def _structure(name):
    cfg = _cfg(name)
    spec, itf, c = cli._spec(cfg), cli._interferometer(cfg, None), cfg["sampling"]["n_cutoff"]
    en = cfg["enumerate"]
    ideal = enumerate_ideal(output_state(spec, itf), c)
    rows = []
    for eta in sorted(GRID):
        if cfg["model"] == "loss":
            t = lossy_probabilities(ideal, eta)
        else:
            t = distinguishable_probabilities(*distinguishable_tables(spec, itf, eta, c), c)
        st = structure_stats(t, en["k"], en["short"], en["long"])
        rows.append((st.top_k_mass, st.mean_l2, st.short_tail_mass, st.long_tail_mass))
    return np.array(rows)


def test_a7_structure_monotonicity():
    detail, ok = [], True
    for name in ["loss_structure", "dist_structure"]:
        r = _structure(name)
        top = _strict(r[:, 0])
        l2 = _strict(r[:, 1]) or _strict(r[:, 1], False)
        tails = all(_strict(r[:, j]) or _strict(r[:, j], False) for j in (2, 3))
        ok &= top and l2 and tails
        detail.append(f"{name}: top-10 {r[0, 0]:.4f}->{r[-1, 0]:.4f}, L2 {r[0, 1]:.4f}->{r[-1, 1]:.4f}, "
                      f"tails {'monotone' if tails else 'NOT monotone'}")
    record("A7", ok, "; ".join(detail))
    assert ok


# --------------------------------------------------------------------------
# A8-A9: pattern-recognition monotonicity
# --------------------------------------------------------------------------
def _monotone_peaks(peaks: dict):
    etas = sorted(peaks, reverse=True)
    xs = [peaks[e]["X_c"] for e in etas]
    errs = [peaks[e]["center_err"] for e in etas]
    gaps = np.diff(xs)
    need = [2 * math.hypot(a, b) for a, b in zip(errs[:-1], errs[1:])]
    ok = all(g > n for g, n in zip(gaps, need))
    return ok, "X_c " + ", ".join(f"{e:g}:{x:.1f}" for e, x in zip(etas, xs))


@pytest.mark.slow
def test_a8_validation_monotonicity(loss_run, dist_run):
    (lp, lt), (dp, dt) = loss_run, dist_run
    ok_l, dl = _monotone_peaks(lp)
    ok_d, dd = _monotone_peaks(dp)
    ok = ok_l and ok_d and lt + dt < 4 * 3600
    record("A8", ok, f"loss {dl}; distinguishability {dd}; {lt + dt:.0f} s")
    assert ok


@pytest.mark.slow
def test_a9_binning(work):
    bp_l, _ = _pattern_pipeline("loss_binned", work)
    bp_d, _ = _pattern_pipeline("dist_binned", work)
    ok_l, dl = _monotone_peaks(bp_l)
    ok_d, dd = _monotone_peaks(bp_d)
    # wall time of one noise level, sampling included, binned vs unbinned
    times = {}
    for name in ["loss_binned", "loss_large"]:
        cfg = _cfg(name, eta=[0.9])
        t0 = time.perf_counter()
        files = cli.cmd_sample(cfg, None, work / "timing" / name / "s")
        tests = [p for p in files if p.name.startswith("samples_")]
        cli.cmd_validate(cfg, work / "timing" / name / "s" / "bona.ndjson", tests, work / "timing" / name / "v")
        times[name] = time.perf_counter() - t0
    ratio = times["loss_binned"] / times["loss_large"]
    ok = ok_l and ok_d and ratio < 0.25
    record("A9", ok, f"binned loss {dl}; binned distinguishability {dd}; "
                     f"wall time {times['loss_binned']:.0f} s vs {times['loss_large']:.0f} s (ratio {ratio:.2f} < 0.25)")
    assert ok


# --------------------------------------------------------------------------
# A10: correlators
# --------------------------------------------------------------------------
@pytest.mark.slow
def test_a10_correlators(work):
    cfg = _cfg("corr_loss")
    files = cli.cmd_sample(cfg, None, work / "corr" / "s")
    tests = [p for p in files if p.name.startswith("samples_")]
    res = cli.cmd_validate(cfg, work / "corr" / "s" / "bona.ndjson", tests, work / "corr" / "v")
    gam = {}
    for p in res:
        if p.name.startswith("gamma_"):
            rec = gio.load_json(p)
            gam[rec["noise"]] = {int(t): g for t, g in rec["gamma"].items()}
    etas = sorted(gam)
    ideal_dev = max(abs(gam[1.0][t] - 1) for t in range(1, 5))
    mono = all(_strict([gam[e][t] for e in etas]) for t in range(1, 5))
    bona, _ = gio.load_samples(work / "corr" / "s" / "bona.ndjson")
    X = bona.patterns.astype(float)
    cov_err = max(abs(correlator(X, [i, j]) - (np.mean(X[:, i] * X[:, j]) - X[:, i].mean() * X[:, j].mean()))
                  for i, j in itertools.combinations(range(X.shape[1]), 2))
    ok = ideal_dev <= 0.02 and mono and cov_err < 1e-12
    table = "; ".join(f"t={t}: " + ", ".join(f"{gam[e][t]:.3f}" for e in etas) for t in range(1, 5))
    record("A10", ok, f"ideal-vs-ideal max |Gamma-1| {ideal_dev:.4f} (<= 0.02); Gamma over eta {etas}: {table}; "
                      f"monotone {mono}; t=2 vs covariance {cov_err:.1e}")
    assert ok


# --------------------------------------------------------------------------
# A11: mockups
# --------------------------------------------------------------------------
@pytest.mark.slow
def test_a11_mockups(work, loss_run):
    ideal = loss_run[0][1.0]
    detail, ok = [], True
    for kind in ["thermal", "coherent", "squashed"]:
        peaks, _ = _pattern_pipeline(f"mockup_{kind}", work)
        (rec,) = peaks.values()
        margin = (rec["X_c"] - ideal["X_c"]) / max(ideal["sigma"], rec["sigma"])
        ok &= margin > 5
        detail.append(f"{kind} X_c {rec['X_c']:.1f} ({margin:.1f} sigma)")
    record("A11", ok, f"ideal-vs-ideal X_c {ideal['X_c']:.1f} sigma {ideal['sigma']:.1f}; " + ", ".join(detail))
    assert ok


# --------------------------------------------------------------------------
# A12: determinism
# --------------------------------------------------------------------------
@pytest.mark.slow
def test_a12_determinism(work, loss_run, tmp_path):
    first = work / "loss_small"
    cfg = _cfg("loss_small")
    cli.cmd_sample(cfg, None, tmp_path / "s", threads=4)
    diffs = [f.name for f in (first / "s").iterdir() if f.read_bytes() != (tmp_path / "s" / f.name).read_bytes()]
    test = tmp_path / "s" / "samples_loss_0.9000.ndjson"
    cli.cmd_validate(cfg, tmp_path / "s" / "bona.ndjson", [test], tmp_path / "v")
    for f in (tmp_path / "v").iterdir():
        if f.read_bytes() != (first / "v" / f.name).read_bytes():
            diffs.append(f.name)
    ecfg = _cfg("loss_structure")
    for d in ("e1", "e2"):
        cli.cmd_enumerate(ecfg, None, tmp_path / d)
    diffs += [f.name for f in (tmp_path / "e1").iterdir() if f.read_bytes() != (tmp_path / "e2" / f.name).read_bytes()]
    ok = not diffs
    record("A12", ok, "sample (threads 1 vs 4), validate and enumerate reruns byte-identical"
           if ok else f"differing files: {diffs}")
    assert ok
