"""Time GBDT training with the compiled kernels against the pure-Python ones.

    python benchmarks/bench_gbdt.py --rows 500 2000 --features 20 --rounds 20
"""

import argparse
import dataclasses
import statistics
import time

import numpy as np

from protovote.gbdt import GbdtConfig, fit_gbdt, get_kernels


def make_task(n, d, n_classes, seed):
    g = np.random.default_rng(seed)
    X = g.normal(size=(n, d))
    y = np.argmax(X @ g.normal(size=(d, n_classes)) + g.gumbel(size=(n, n_classes)), axis=1)
    return X, y


def time_fit(X, y, cfg, repeats):
    times, model = [], None
    for _ in range(repeats):
        t0 = time.perf_counter()
        model = fit_gbdt(X, y, cfg)
        times.append(time.perf_counter() - t0)
    return statistics.median(times), model


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, nargs="+", default=[500, 2000])
    ap.add_argument("--features", type=int, default=20)
    ap.add_argument("--classes", type=int, default=2)
    ap.add_argument("--rounds", type=int, default=20)
    ap.add_argument("--growth", choices=["depth", "leaf"], default="depth")
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    try:
        get_kernels("cython")
    except ImportError:
        raise SystemExit("compiled kernels not built; run `pip install -e . --no-build-isolation` first")

    base = GbdtConfig.depth_wise(6, n_rounds=args.rounds) if args.growth == "depth" else GbdtConfig.leaf_wise(31, n_rounds=args.rounds)
    print(f"{'rows':>7} {'cython s':>10} {'python s':>10} {'speedup':>8}  identical")
    for n in args.rows:
        X, y = make_task(n, args.features, args.classes, args.seed)
        t_c, m_c = time_fit(X, y, dataclasses.replace(base, backend="cython"), args.repeats)
        t_p, m_p = time_fit(X, y, dataclasses.replace(base, backend="python"), max(1, args.repeats // 3))
        same = m_c.to_json() == m_p.to_json()
        print(f"{n:>7} {t_c:>10.3f} {t_p:>10.3f} {t_p / t_c:>7.1f}x  {same}")


if __name__ == "__main__":
    main()
