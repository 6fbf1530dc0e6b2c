"""Compiled kernels versus the pure-Python fallback.

Run ``python benchmarks/bench_kernels.py [--repeat N]``. Each row times one
kernel call on both backends, checks that they agree, and reports the speedup.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from gbsval import _backend
from gbsval.gaussian import (
    SqueezingSpec,
    apply_interferometer,
    build_input_covariance,
    haar_unitary,
    lossy_covariance,
    output_state,
    xp_to_q,
)
from gbsval.matchpoly import ProbabilityEngine, greedy_pairing, mixed_pairing


def _cases():
    rng = np.random.default_rng(0)
    itf = haar_unitary(8, 1)
    eng = ProbabilityEngine(output_state(SqueezingSpec(8, 8, 0.6), itf))
    s = np.array([2, 1, 1, 0, 2, 1, 1, 0])
    ps = greedy_pairing(s, eng.B, eng.gamma[:8])
    mixed = ProbabilityEngine(_lossy_state())
    pm = mixed_pairing(np.array([1, 1, 0, 1, 0, 1]), mixed.A, mixed.gamma)
    M = rng.normal(size=(12, 12)) + 1j * rng.normal(size=(12, 12))
    M8 = M[:8, :8]
    rep = np.array([2, 1, 1, 2, 0, 1, 1, 0])
    pre = np.array([1, 0, 1, 0, 1, 0, 0])
    return [
        ("lhafmix pure, 8 photons", "lhafmix", (ps.C, ps.mu_bar, ps.n)),
        ("lhafmix mixed, 4 photons", "lhafmix", (pm.C, pm.mu_bar, pm.n)),
        ("chain weights pure, m=8 c=4", "chain_weights_pure", (eng.B, eng.gamma[:8], pre, 4)),
        ("chain weights mixed, m=6 c=3", "chain_weights_mixed", (mixed.A, mixed.gamma, pre[:5], 3)),
        ("permanent 12x12", "permanent", (M,)),
        ("repeated permanent 8 photons", "permanent_repeated", (M8, rep, rep)),
    ]


def _lossy_state():
    spec = SqueezingSpec(6, 6, 0.5)
    V = lossy_covariance(build_input_covariance(spec), 0.8)
    return apply_interferometer(xp_to_q(V), haar_unitary(6, 2))


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if _backend.compiled is None:
        print("compiled extension not built; only the fallback is available")
        return 1
    fast, slow = _backend.compiled, _backend.fallback
    print(f"{'kernel':34s} {'cython [ms]':>12s} {'python [ms]':>12s} {'speedup':>8s} {'max diff':>10s}")
    for label, name, args_ in _cases():
        f, g = getattr(fast, name), getattr(slow, name)
        diff = float(np.max(np.abs(np.asarray(f(*args_)) - np.asarray(g(*args_)))))
        tf = min(timeit.repeat(lambda: f(*args_), number=1, repeat=args.repeat)) * 1e3
        tg = min(timeit.repeat(lambda: g(*args_), number=1, repeat=args.repeat)) * 1e3
        print(f"{label:34s} {tf:12.3f} {tg:12.3f} {tg / tf:8.1f} {diff:10.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
