"""Time the numba kernels against their pure-numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat 5]

Inputs are sized like one resident at the finest segmentation (S=288,
31 days) and one SVM training fold (32 persons, 2 features).
"""

import argparse
import timeit

import numpy as np

from eigenbehaviour import kernels, synth
from eigenbehaviour._accel import NUMBA_AVAILABLE
from eigenbehaviour.eigen import fit_eigenmodel
from eigenbehaviour.ingest import LOCATIONS
from eigenbehaviour.matrix import build_behaviour_matrix


def occupancy_case():
    person = synth.generate_person(synth.default_template(), synth.NoiseProfile(600, 3.0), 31, seed=0)
    rows = [(d, a, b, LOCATIONS.index(loc)) for d, tl in enumerate(person.timelines) for a, b, loc in tl.segments]
    d, a, b, k = (np.array(c) for c in zip(*rows))
    args = (d.astype(np.int64), a.astype(float), b.astype(float), k.astype(np.int64), 31, 288, len(LOCATIONS), 300.0)
    return person, args


def l1_case(person):
    bm = build_behaviour_matrix(person.timelines, 288)
    model = fit_eigenmodel(bm)
    X = np.ascontiguousarray(bm.X_hat)
    V = np.ascontiguousarray(model.eigenvectors)
    return (X, np.ascontiguousarray(X @ V), V, model.rank)


def svm_case():
    rng = np.random.default_rng(0)
    F = rng.normal(size=(32, 2))
    y = np.where(F[:, 0] + rng.normal(0, 1.0, 32) > 0, 1.0, -1.0)
    return (np.ascontiguousarray(np.column_stack([F, np.ones(32)])), y, 1.0, 1e-6, 100_000)


def best_of(fn, args, repeat):
    fn(*args)  # warm-up (triggers compilation)
    number = 1
    while timeit.timeit(lambda: fn(*args), number=number) < 0.2:
        number *= 2
    return min(timeit.repeat(lambda: fn(*args), number=number, repeat=repeat)) / number


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    opts = ap.parse_args()
    if not NUMBA_AVAILABLE:
        raise SystemExit("numba is not installed; nothing to compare")

    person, occ = occupancy_case()
    cases = [
        ("window occupancy", kernels._occupancy_numba, kernels._occupancy_numpy, occ),
        ("L1 residual series", kernels._l1_series_numba, kernels._l1_series_numpy, l1_case(person)),
        ("SVM dual coordinate descent", kernels._svm_dual_cd_numba, kernels._svm_dual_cd_numpy, svm_case()),
    ]
    print(f"{'kernel':<30}{'numba':>12}{'numpy':>12}{'speed-up':>10}")
    for name, fast, slow, args in cases:
        t_fast = best_of(fast, args, opts.repeat)
        t_slow = best_of(slow, args, opts.repeat)
        print(f"{name:<30}{t_fast * 1e3:>10.3f}ms{t_slow * 1e3:>10.3f}ms{t_slow / t_fast:>9.1f}x")


if __name__ == "__main__":
    main()
