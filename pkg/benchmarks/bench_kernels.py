"""Time the compiled kernels against the pure-Python fallback.

Usage:
    python3 benchmarks/bench_kernels.py [--repeat 5] [--quick]
"""

from __future__ import annotations

import argparse
import sys
import timeit
from dataclasses import dataclass
from typing import Callable

import numpy as np

from phenokg import kernels
from phenokg.kernels import python


@dataclass
class Case:
    kernel: str
    size: str
    args: tuple

    def call(self, mod) -> Callable[[], object]:
        fn = getattr(mod, self.kernel)
        return lambda: fn(*self.args)


def random_dag(d: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    W = np.triu(rng.random((d, d)) * (rng.random((d, d)) < 0.3), 1)
    perm = rng.permutation(d)
    W = W[np.ix_(perm, perm)]
    order = np.argsort(perm).astype(np.int64)
    return W, order


def cases(quick: bool) -> list[Case]:
    rng = np.random.default_rng(0)
    out = []
    for n in (100, 400) if quick else (100, 400, 1600):
        out.append(Case("domination_counts", f"n={n}", (rng.random((n, 3)),)))
    for length in (20, 80) if quick else (20, 80, 320):
        a = "".join(rng.choice(list("abcdefgh "), length))
        b = "".join(rng.choice(list("abcdefgh "), length))
        out.append(Case("edit_distance", f"len={length}", (a, b)))
    for d in (16, 48) if quick else (16, 48, 128):
        out.append(Case("strongest_paths", f"d={d}", random_dag(d, rng)))
    return out


def best_time(fn: Callable[[], object], repeat: int) -> float:
    timer = timeit.Timer(fn)
    number, _ = timer.autorange()
    return min(timer.repeat(repeat=repeat, number=number)) / number


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5, help="timing repeats; the best is kept")
    parser.add_argument("--quick", action="store_true", help="smaller inputs only")
    args = parser.parse_args(argv)

    if kernels.compiled is None:
        print("compiled kernels are not built; run `pip install -e . --no-build-isolation`", file=sys.stderr)
        return 1

    print(f"{'kernel':<20}{'size':>10}{'python (ms)':>14}{'compiled (ms)':>16}{'speedup':>10}")
    for case in cases(args.quick):
        ref, fast = case.call(python)(), case.call(kernels.compiled)()
        if isinstance(ref, tuple):
            same = all(np.array_equal(x, y) for x, y in zip(ref, fast))
        else:
            same = np.array_equal(ref, fast)
        if not same:
            print(f"{case.kernel} {case.size}: outputs differ", file=sys.stderr)
            return 1
        t_py = best_time(case.call(python), args.repeat)
        t_c = best_time(case.call(kernels.compiled), args.repeat)
        print(f"{case.kernel:<20}{case.size:>10}{t_py * 1e3:>14.3f}{t_c * 1e3:>16.3f}{t_py / t_c:>9.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
