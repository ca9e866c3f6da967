"""Compiled kernel against the pure-Python twin.

Times the hot calls of the plant and the controller on both backends and
prints the speed-up. Run with ``python benchmarks/bench_kernel.py``.
"""

import argparse
import timeit

import numpy as np

from tcawrist import kernel
from tcawrist.control.nmpc import MpcConfig, nmpc_solve
from tcawrist.dynamics import WristModel
from tcawrist.kinematics import WristPose


def cases(mod, p, x, u):
    return {
        "state_derivative": lambda: mod.state_derivative(x, u, p),
        "eom_terms": lambda: mod.eom_terms(x, p),
        "rk4_integrate x100 (one control tick)": lambda: mod.rk4_integrate(x, u, 1e-3, 100, p),
        "predictor + sensitivities": lambda: mod.predictor(x, u, 0.1, p, True, True),
    }


def best_of(fn, repeat):
    n, _ = timeit.Timer(fn).autorange()
    return min(timeit.Timer(fn).repeat(repeat, n)) / n


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    py = kernel.load_backend("python")
    try:
        cy = kernel.load_backend("cython")
    except ImportError:
        print("compiled extension not built; only the Python backend is available")
        cy = None

    model = WristModel()
    p = model.packed
    x = np.array([0.3, 0.7, 0.1, -0.2, 40.0, 30.0, 25.0])
    u = np.array([1.0, 2.0, 0.5])

    print(f"{'call':40s} {'python':>12s} {'cython':>12s} {'speed-up':>9s}")
    py_cases = cases(py, p, x, u)
    cy_cases = cases(cy, p, x, u) if cy else {}
    for name, fn in py_cases.items():
        t_py = best_of(fn, args.repeat)
        if cy:
            t_cy = best_of(cy_cases[name], args.repeat)
            print(f"{name:40s} {t_py * 1e6:10.1f}us {t_cy * 1e6:10.1f}us {t_py / t_cy:8.1f}x")
        else:
            print(f"{name:40s} {t_py * 1e6:10.1f}us")

    # end to end: one receding-horizon solve (N=5, p=10)
    for label, mod in (("python", py), ("cython", cy)):
        if mod is None:
            continue
        saved = kernel.predictor
        kernel.predictor = mod.predictor
        try:
            x0 = model.rest_state()
            refs = [WristPose(0.26, 0.1 * k) for k in range(1, 11)]
            t = best_of(lambda: nmpc_solve(x0, refs, np.zeros(3), MpcConfig(), model), 3)
        finally:
            kernel.predictor = saved
        print(f"{'nmpc_solve tick (' + label + ')':40s} {t * 1e3:10.2f}ms")


if __name__ == "__main__":
    main()
