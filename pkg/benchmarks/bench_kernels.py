"""Time the Lindblad right-hand side with the compiled and numpy kernels.

    python3 benchmarks/bench_kernels.py [--pairs 1 2 3] [--cutoff 3] [--repeat 5]

Each case builds the full-path open-system generator for N pairs at the
given cutoff, applies it to a random density matrix and reports the best
of ``--repeat`` wall times per backend plus the largest output difference.
"""

from __future__ import annotations

import argparse
import time
import warnings

import numpy as np

from cattransfer import _fallback, kernels
from cattransfer.dynamics import CollapseSet, LindbladRHS
from cattransfer.hamiltonians import DispersiveWarning, SystemParams, build_H_prime
from cattransfer.hilbert import HilbertLayout

NAMES = ("csr_matmat", "anti_hermitian_part", "jump_sandwich", "axpy_into", "axpy_inplace")


def use_backend(module) -> None:
    for name in NAMES:
        setattr(kernels, name, getattr(module, name))


def best_time(rhs, rho, out, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        rhs(1e-9, rho, out)
        times.append(time.perf_counter() - t0)
    return min(times)


def bench(n_pairs: int, cutoff: int, repeat: int) -> dict:
    p = SystemParams.default(n_pairs=n_pairs)
    lay = HilbertLayout((cutoff,) * (2 * n_pairs))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DispersiveWarning)
        H = build_H_prime(p, lay, "full")
    rhs = LindbladRHS(H, CollapseSet.from_params(p, lay))
    rng = np.random.default_rng(0)
    a = rng.normal(size=(lay.dim, lay.dim)) + 1j * rng.normal(size=(lay.dim, lay.dim))
    rho = np.ascontiguousarray(a @ a.conj().T)
    rho /= np.trace(rho)
    row = {"pairs": n_pairs, "dim": lay.dim}
    outs = {}
    for label, module in (("numpy", _fallback), ("cython", getattr(kernels, "_impl", None))):
        if module is None or (label == "cython" and kernels.BACKEND != "cython"):
            continue
        use_backend(module)
        out = np.empty_like(rho)
        rhs(0.0, rho, out)  # warm up
        row[label] = best_time(rhs, rho, out, repeat)
        outs[label] = out.copy()
    if len(outs) == 2:
        scale = np.abs(outs["numpy"]).max()
        row["max_rel_diff"] = float(np.abs(outs["numpy"] - outs["cython"]).max() / scale)
    return row


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--pairs", type=int, nargs="+", default=[1, 2, 3])
    ap.add_argument("--cutoff", type=int, default=3)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    compiled = kernels._impl
    print(f"compiled backend available: {kernels.BACKEND == 'cython'}")
    print(f"{'pairs':>5} {'dim':>6} {'numpy s':>10} {'cython s':>10} {'speedup':>8} {'rel diff':>9}")
    for n in args.pairs:
        r = bench(n, args.cutoff, args.repeat)
        cy = r.get("cython")
        speed = f"{r['numpy'] / cy:8.2f}" if cy else f"{'n/a':>8}"
        cys = f"{cy:10.4f}" if cy else f"{'n/a':>10}"
        diff = f"{r['max_rel_diff']:9.1e}" if "max_rel_diff" in r else f"{'n/a':>9}"
        print(f"{r['pairs']:5d} {r['dim']:6d} {r['numpy']:10.4f} {cys} {speed} {diff}")
    use_backend(compiled)


if __name__ == "__main__":
    main()
