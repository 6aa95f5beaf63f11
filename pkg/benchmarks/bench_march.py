"""Time the compiled and pure-Python time-stepping kernels on the same runs.

    python benchmarks/bench_march.py [--repeat 3]
"""
import argparse
import time

import numpy as np

from heatstab import kernels, pipeline
from heatstab.config import load_config
from heatstab.pde_sim import ClosedLoopProblem, Nonlinearity, simulate

CASES = [
    # (label, M, dt, T, nonlinear)
    ("linear M=400 dt=1e-3", 400, 1e-3, 5.0, False),
    ("linear M=400 dt=1e-4", 400, 1e-4, 1.0, False),
    ("y^2 M=400 dt=1e-3", 400, 1e-3, 5.0, True),
    ("linear M=2000 dt=1e-4", 2000, 1e-4, 0.5, False),
]


def best_time(problem, backend, repeat):
    best, traj = np.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        traj = simulate(problem, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best, traj


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    backends = kernels.available_backends()
    gains = pipeline.design(load_config()).gains
    print(f"backends: {', '.join(backends)}")
    print(f"{'case':<24}{'steps':>8}" + "".join(f"{b + ' [s]':>14}" for b in backends)
          + f"{'speedup':>10}{'max |diff|':>12}")
    for label, M, dt, T, nonlinear in CASES:
        nl = Nonlinearity("power", m=2) if nonlinear else Nonlinearity()
        p = ClosedLoopProblem(5.0, 1.5, M, dt, T, lambda x: 1e-3 * np.sin(x),
                              nonlinearity=nl, controller=gains)
        res = {b: best_time(p, b, args.repeat) for b in backends}
        row = f"{label:<24}{p.nsteps:>8}" + "".join(f"{res[b][0]:>14.4f}" for b in backends)
        if "cython" in res:
            py, cy = res["python"], res["cython"]
            diff = np.max(np.abs(py[1].snapshots - cy[1].snapshots))
            row += f"{py[0] / cy[0]:>10.1f}{diff:>12.1e}"
        print(row)


if __name__ == "__main__":
    main()
