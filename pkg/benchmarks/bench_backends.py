"""Compare the compiled and pure-Python kernels.

Times one right-hand-side evaluation and a short integration at several
ring counts, and checks the two backends agree bit for bit.

    python benchmarks/bench_backends.py --rings 50 200 800 --t-end 0.05
"""
import argparse
import time

import numpy as np

from butterfly_fwm import ButterflyParams, IntegratorControl, SystemState, build_mode_grid, integrate
from butterfly_fwm._backend import compiled_kernels, get_kernels
from butterfly_fwm.dynamics import _Coupling


def _time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench(rings, t_end, repeat, threads):
    params = ButterflyParams(omega_d=0.1, omega_c=100.0, atom_number=1e6, radius=50.0, wavelength=1.0)
    grid = build_mode_grid(50.0, 1.0, rings)
    state = SystemState(1e6 - 10.0, 10.0, 0.01j, np.full(rings, 1e-3), np.full(rings, 2e-3),
                        np.full(rings, 1e-4j))
    y = state.to_vector()
    packed = _Coupling(params, grid).packed(False)
    backends = ["python"] + (["cython"] if compiled_kernels is not None else [])
    rows = []
    results = {}
    for name in backends:
        kern = get_kernels(name)
        out = np.empty_like(y)
        t_rhs = _time(lambda: kern.rhs(y, *packed, out, threads), max(repeat, 20))
        ctrl = IntegratorControl(samples=11, backend=name, threads=threads)
        t_int = _time(lambda: integrate(state, params, grid, t_end, ctrl), repeat)
        results[name] = integrate(state, params, grid, t_end, ctrl).states
        rows.append((name, t_rhs, t_int))
    same = len(results) < 2 or np.array_equal(results["python"], results["cython"])
    return rows, same


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rings", type=int, nargs="+", default=[50, 200, 800])
    ap.add_argument("--t-end", type=float, default=0.05, help="integration span in 1/Gamma")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args(argv)

    if compiled_kernels is None:
        print("compiled kernels not built; timing the Python backend only")
    print(f"{'rings':>6} {'backend':>8} {'rhs [us]':>11} {'integrate [s]':>14} {'speedup':>8} bitwise")
    for rings in args.rings:
        rows, same = bench(rings, args.t_end, args.repeat, args.threads)
        base = rows[0][2]
        for name, t_rhs, t_int in rows:
            print(f"{rings:>6} {name:>8} {t_rhs * 1e6:>11.1f} {t_int:>14.4f} "
                  f"{base / t_int:>8.1f} {'yes' if same else 'NO'}")


if __name__ == "__main__":
    main()
