import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import chi2_contingency

from gbsval.errors import InvalidInputError, InvalidParameterError, UndefinedRatioError, ValidationInputError
from gbsval.samplers import SampleSet
from gbsval.validation import (
    BinningPartition,
    bin_patterns,
    chi_square_counts,
    chi_square_test,
    correlator,
    fit_gaussian_peak,
    gamma_deviation,
    sample_box_run,
    set_partitions,
    train_clusters,
)


def _blobs(rng, n=300):
    centers = np.array([[0, 0], [6, 0], [0, 6]])
    lab = rng.integers(0, 3, n)
    return centers[lab] + rng.normal(scale=0.5, size=(n, 2)), lab


def test_kmeans_recovers_blobs(rng):
    X, lab = _blobs(rng)
    model = train_clusters(X, 3, seed=1)
    got = model.assign(X)
    # clusters agree with the truth up to relabeling
    for c in range(3):
        assert len(set(got[lab == c])) == 1
    assert model.converged
    assert model.training_counts.sum() == len(X)


def test_kmeans_is_deterministic_and_nearest(rng):
    X = rng.integers(0, 4, size=(400, 3)).astype(float)
    a, b = train_clusters(X, 12, seed=9), train_clusters(X, 12, seed=9)
    assert np.array_equal(a.centroids, b.centroids)
    lab = a.assign(X)
    d = ((X[:, None, :] - a.centroids[None]) ** 2).sum(-1)
    assert np.allclose(d[np.arange(len(X)), lab], d.min(axis=1))


def test_kmeans_duplicate_points():
    X = np.ones((20, 2))
    model = train_clusters(X, 3, seed=0)
    assert model.training_counts.sum() == 20


def test_kmeans_bad_k(rng):
    X = rng.normal(size=(5, 2))
    with pytest.raises(InvalidParameterError):
        train_clusters(X, 6, seed=0)
    with pytest.raises(InvalidParameterError):
        train_clusters(X, 1, seed=0)


def test_radius_abandonment(rng):
    X, _ = _blobs(rng)
    model = train_clusters(X, 3, seed=1)
    far = np.array([[30.0, 30.0], [0.0, 0.0]])
    lab = model.assign(far, use_radius=True)
    assert lab[0] == -1 and lab[1] >= 0


@given(seed=st.integers(0, 10**6))
@settings(max_examples=30, deadline=None)
def test_chi_square_matches_scipy(seed):
    rng = np.random.default_rng(seed)
    n1 = rng.integers(1, 40, 6)
    n2 = rng.integers(1, 40, 6)
    ours, deg = chi_square_counts(n1, n2)
    ref = chi2_contingency(np.stack([n1, n2], axis=1), correction=False)[0]
    assert np.isclose(ours, ref) and not deg


def test_chi_square_proportional_counts_vanish():
    assert chi_square_counts([10, 20, 0, 5], [20, 40, 0, 10])[0] == pytest.approx(0.0, abs=1e-12)


def test_chi_square_relabeling_invariance(rng):
    n1, n2 = rng.integers(0, 30, 8), rng.integers(0, 30, 8)
    perm = rng.permutation(8)
    assert np.isclose(chi_square_counts(n1, n2)[0], chi_square_counts(n1[perm], n2[perm])[0])


def test_chi_square_degenerate_and_k_form():
    chi, deg = chi_square_counts([5, 5], [0, 0])
    assert deg
    k_form, _ = chi_square_counts([4, 6], [5, 5], expectation="k")
    # E = N_i N_j / k with k = 2
    E = np.outer([9, 11], [10, 10]) / 2
    assert np.isclose(k_form, (((np.array([[4, 5], [6, 5]]) - E) ** 2) / E).sum())
    with pytest.raises(InvalidParameterError):
        chi_square_counts([1], [1], expectation="bogus")


def test_chi_square_test_permutation_invariance(rng):
    X, _ = _blobs(rng)
    model = train_clusters(X, 3, seed=1)
    a, b = X[:100], X[100:200]
    r1 = chi_square_test(model, a, b)
    r2 = chi_square_test(model, a[::-1], b[rng.permutation(100)])
    assert np.isclose(r1.chi2, r2.chi2)
    with pytest.raises(ValidationInputError):
        chi_square_test(model, a[:0], b)


def test_sample_box_run_deterministic(rng):
    X, _ = _blobs(rng, 600)
    model = train_clusters(X[:200], 3, seed=1)
    r1 = sample_box_run(model, X[200:400], X[400:], 50, 100, seed=3)
    r2 = sample_box_run(model, X[200:400], X[400:], 50, 100, seed=3)
    assert np.array_equal(r1.chi2_values, r2.chi2_values)
    assert r1.repetitions == 50
    with pytest.raises(InvalidParameterError):
        sample_box_run(model, X[200:400], X[400:], 5, 500, seed=3)


def test_peak_fit_recovers_gaussian(rng):
    vals = rng.normal(40.0, 3.0, 20000)
    pf = fit_gaussian_peak(vals)
    assert pf.converged
    assert abs(pf.X_c - 40.0) < 0.15 and abs(pf.sigma - 3.0) < 0.15
    flat = fit_gaussian_peak(np.full(10, 2.0))
    assert flat.X_c == 2.0 and not flat.converged


def test_partition_parse_and_binning():
    p = BinningPartition.parse("1,2|3,4|5")
    assert p.sizes == (2, 2, 1) and str(p) == "1,2|3,4|5"
    assert BinningPartition.adjacent_pairs(5) == p
    s = SampleSet(np.array([[1, 0, 2, 1, 0], [0, 0, 0, 0, 3]]), "ideal", {}, 0, 3)
    b = bin_patterns(s, p)
    assert b.patterns.tolist() == [[1, 3, 0], [0, 0, 3]]
    assert b.meta["subset_cutoffs"] == [6, 6, 3]
    for bad in ["1,2|2,3", "1,3", "a|b", "1,2|"]:
        with pytest.raises(InvalidInputError):
            BinningPartition.parse(bad)


@pytest.mark.parametrize("t,bell", [(1, 1), (2, 2), (3, 5), (4, 15), (5, 52), (6, 203)])
def test_set_partition_counts(t, bell):
    parts = set_partitions(t)
    assert len(parts) == bell
    assert len({tuple(map(tuple, p)) for p in parts}) == bell


def test_t2_correlator_is_covariance(rng):
    X = rng.poisson(1.5, size=(500, 3))
    c = correlator(X, [0, 2])
    ref = np.mean(X[:, 0] * X[:, 2]) - X[:, 0].mean() * X[:, 2].mean()
    assert abs(c - ref) < 1e-12
    assert np.isclose(correlator(X, [1]), X[:, 1].mean())
    with pytest.raises(InvalidInputError):
        correlator(X, [0, 0])


def test_independent_modes_have_small_cumulants(rng):
    X = rng.poisson(1.0, size=(40000, 4))
    for t in (2, 3, 4):
        for combo in itertools.combinations(range(4), t):
            assert abs(correlator(X, combo)) < 0.08


def test_gamma(rng):
    X = rng.poisson(1.0, size=(1000, 3))
    rep = gamma_deviation(X, X, 2)
    assert rep.gamma == pytest.approx(1.0)
    assert len(rep.points) == 3
    with pytest.raises(UndefinedRatioError):
        gamma_deviation(X, np.zeros((10, 3)), 1)
