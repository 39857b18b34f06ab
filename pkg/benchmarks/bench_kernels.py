"""Compare the numba and pure-numpy kernel backends.

Times modular multiplication and forward/inverse negacyclic NTT over the
full modulus chain of each preset, checks the two backends agree bit for
bit, and prints one CSV row per (preset, kernel).

    python benchmarks/bench_kernels.py [--presets test small full] [--repeats 5]
"""

import argparse
import time

import numpy as np

from fedchain._accel import HAS_NUMBA
from fedchain.ckks import preset, ring_context
from fedchain.ckks.kernels import BACKENDS


def best_of(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_preset(name, repeats, rng):
    params = preset(name)
    q, psi, psi_inv, n_inv = ring_context(params).rows(params.max_level)
    a = np.stack([rng.integers(0, qi, params.ring_dim, dtype=np.int64) for qi in q])
    b = np.stack([rng.integers(0, qi, params.ring_dim, dtype=np.int64) for qi in q])
    results = {}
    for backend, (mulmod, fwd, inv) in BACKENDS.items():
        # warm-up triggers JIT compilation (or cache load) outside the timing
        outs = (mulmod(a, b, q), fwd(a, q, psi), inv(a, q, psi_inv, n_inv))
        results[backend] = (
            outs,
            best_of(lambda: mulmod(a, b, q), repeats),
            best_of(lambda: fwd(a, q, psi), repeats),
            best_of(lambda: inv(a, q, psi_inv, n_inv), repeats),
        )
    ref = results["numpy"][0]
    for backend, (outs, *_) in results.items():
        for x, y in zip(outs, ref):
            if not np.array_equal(x, y):
                raise AssertionError(f"{backend} disagrees with numpy on preset {name}")
    rows = []
    for i, kernel in enumerate(("mulmod", "ntt_forward", "ntt_inverse"), start=1):
        t_np = results["numpy"][i]
        t_nb = results["numba"][i]
        rows.append((name, params.ring_dim, kernel, t_np, t_nb, t_np / t_nb))
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--presets", nargs="+", default=["test", "small", "medium", "full"])
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()
    if not HAS_NUMBA:
        print("# numba missing: both columns run the numpy path")
    rng = np.random.default_rng(0)
    print("preset,ring_dim,kernel,numpy_s,numba_s,speedup")
    for name in args.presets:
        for row in bench_preset(name, args.repeats, rng):
            print("{},{},{},{:.6f},{:.6f},{:.2f}".format(*row))


if __name__ == "__main__":
    main()
