"""Compare the compiled kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--n 200 1000 20000] [--repeat 200]

Prints the median time per call for each kernel and backend, the speedup,
and the largest absolute difference between the two backends' outputs.
"""

import argparse
import timeit

import numpy as np

from mixcausal import kernels


def cases(n, p, seed=0):
    rng = np.random.default_rng(seed)
    X = np.column_stack([np.ones(n), rng.normal(size=(n, p - 1))])
    z = (rng.random(n) < 0.4).astype(float)
    b = rng.normal(scale=0.4, size=p)
    D = np.ascontiguousarray(rng.normal(size=(n, p)) - 0.15)
    lam = rng.normal(scale=0.2, size=p)
    return {
        "logistic_terms": (X, z, b),
        "mixed_logistic_terms": (X, z, b, 0.5, 0.3),
        "mipw_objective_terms": (X, z, b, 0.5, 0.3),
        "eb_dual_terms": (D, lam),
        "eb_dual_solve": (D, np.zeros(p), 1e-10, 200, 1e6),
    }


def max_diff(a, b):
    out = 0.0
    for u, v in zip(a, b):
        if isinstance(u, (tuple, list)):
            u, v = np.asarray(u), np.asarray(v)
            if u.shape != v.shape:
                continue
        out = max(out, float(np.max(np.abs(np.asarray(u, float) - np.asarray(v, float)))))
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, nargs="+", default=[200, 1000, 20000])
    ap.add_argument("--p", type=int, default=6)
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args()

    py = kernels.get_backend("python")
    try:
        cy = kernels.get_backend("cython")
    except ImportError:
        raise SystemExit("compiled extension not built; run `pip install -e .` with a C compiler")

    print(f"p={args.p} repeat={args.repeat}")
    print(f"{'n':>6}  {'kernel':<22}{'numpy (us)':>12}{'cython (us)':>13}{'speedup':>9}"
          f"{'max |diff|':>12}")
    for n in args.n:
        for name, call_args in cases(n, args.p).items():
            run_case(py, cy, n, name, call_args, args.repeat)


def run_case(py, cy, n, name, call_args, repeat):
    times = {}
    for label, mod in (("py", py), ("cy", cy)):
        fn = getattr(mod, name)
        t = timeit.repeat(lambda: fn(*call_args), number=1, repeat=repeat)
        times[label] = 1e6 * float(np.median(t))
    diff = max_diff(getattr(py, name)(*call_args), getattr(cy, name)(*call_args))
    print(f"{n:>6}  {name:<22}{times['py']:>12.1f}{times['cy']:>13.1f}"
          f"{times['py'] / times['cy']:>8.1f}x{diff:>12.1e}")


if __name__ == "__main__":
    main()
