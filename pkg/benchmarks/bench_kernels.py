"""Time each hot kernel under numba and numpy on the same inputs.

    python3 benchmarks/bench_kernels.py [--repeat N]

The first numba call (compilation) is excluded.  Outputs are also compared
so a speedup never hides a wrong answer.
"""

import argparse
import timeit

import numpy as np

from twosex_ebt import _kernels


def cases(rng):
    K = 40
    yield "row_contract4 K=40", (
        _kernels.row_contract4_numba, _kernels.row_contract4_numpy,
        (rng.uniform(size=(K, K, K)), rng.uniform(size=K), rng.uniform(size=K),
         rng.uniform(size=(K, K)), rng.uniform(size=(K, K))))
    n = 400
    yield "couple_rhs 400x400", (
        _kernels.couple_rhs_numba, _kernels.couple_rhs_numpy,
        (rng.uniform(size=(n, n)), rng.uniform(size=(n, n)), rng.uniform(size=(n, n)),
         rng.uniform(size=n), rng.uniform(size=n), 5 + rng.uniform(size=n),
         5 + rng.uniform(size=n), np.full(n, 1 / n), np.full(n, 1 / n), 1.0))
    yield "l1_envelope 4000x1600", (
        _kernels.l1_envelope_numba, _kernels.l1_envelope_numpy,
        (rng.uniform(0, 2, (4000, 2)), rng.uniform(0, 2, (1600, 2)),
         rng.uniform(-1, 1, 1600), -1.0))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':<24}{'numba ms':>10}{'numpy ms':>10}{'speedup':>9}  agree")
    for name, (fast, slow, a) in cases(rng):
        ra, rb = fast(*a), slow(*a)
        agree = all(np.allclose(x, y, rtol=1e-12, atol=1e-14) for x, y in zip(ra, rb))
        tf = min(timeit.repeat(lambda: fast(*a), number=1, repeat=args.repeat)) * 1e3
        ts = min(timeit.repeat(lambda: slow(*a), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<24}{tf:>10.2f}{ts:>10.2f}{ts / tf:>8.1f}x  {agree}")


if __name__ == "__main__":
    main()
