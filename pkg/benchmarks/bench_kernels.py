"""Time the compiled kernels against the NumPy fallback.

    python benchmarks/bench_kernels.py [--repeat 5] [--episodes 500]

Reports per-call times for each kernel and the wall time of a full
``run_task`` with either backend swapped in.
"""
import argparse
import timeit

import numpy as np

from bucmatrixrl import _kernels_py, kernels
from bucmatrixrl.buc_agent import run_task
from bucmatrixrl.linear_mdp import default_mdp

try:
    from bucmatrixrl import _kernels as _compiled
except ImportError:
    _compiled = None

NAMES = ("backward_induction", "rollout", "sherman_morrison_update", "feature_potentials")


def kernel_cases(rng, S=10, A=4, H=5, d=8):
    p = np.ascontiguousarray(rng.dirichlet(np.ones(S), size=S * A))
    reward, bonus = rng.uniform(size=S * A), rng.uniform(0, 0.3, size=S * A)
    q, _, _ = _kernels_py.backward_induction(p, reward, bonus, H, A, True)
    vinv = np.eye(d)
    phi = rng.normal(size=d)
    phis = rng.normal(size=(200, H, d))
    u = rng.random(H)
    return {
        "backward_induction": lambda m: m.backward_induction(p, reward, bonus, H, A, True),
        "rollout": lambda m: m.rollout(p, reward, q, 0, u),
        "sherman_morrison_update": lambda m: m.sherman_morrison_update(vinv, phi * 1e-3),
        "feature_potentials": lambda m: m.feature_potentials(phis, 1.0),
    }


def time_call(fn, repeat, number=None):
    timer = timeit.Timer(fn)
    if number is None:
        number, _ = timer.autorange()
    return min(timer.repeat(repeat, number)) / number


def time_run(backend, episodes, repeat):
    saved = {n: getattr(kernels, n) for n in NAMES}
    for n in NAMES:
        setattr(kernels, n, getattr(backend, n))
    try:
        mdp = default_mdp()
        fn = lambda: run_task(mdp, np.zeros((3, 4)), 1.0, episodes, 0.1, np.random.default_rng(0))
        return time_call(fn, repeat, number=1)
    finally:
        for n, f in saved.items():
            setattr(kernels, n, f)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--episodes", type=int, default=500)
    args = ap.parse_args()

    backends = [("python", _kernels_py)]
    if _compiled is not None:
        backends.insert(0, ("cython", _compiled))
    else:
        print("compiled extension not available; timing the fallback only")
    print(f"active backend: {kernels.BACKEND}")

    cases = kernel_cases(np.random.default_rng(0))
    print(f"\n{'kernel':<26}" + "".join(f"{n:>14}" for n, _ in backends) + (f"{'speedup':>10}" if len(backends) == 2 else ""))
    for name, fn in cases.items():
        times = [time_call(lambda: fn(mod), args.repeat) for _, mod in backends]
        row = f"{name:<26}" + "".join(f"{t * 1e6:>11.2f} us" for t in times)
        if len(times) == 2:
            row += f"{times[1] / times[0]:>9.1f}x"
        print(row)

    times = [time_run(mod, args.episodes, args.repeat) for _, mod in backends]
    row = f"{'run_task (%d episodes)' % args.episodes:<26}" + "".join(f"{t * 1e3:>11.1f} ms" for t in times)
    if len(times) == 2:
        row += f"{times[1] / times[0]:>9.1f}x"
    print(row)


if __name__ == "__main__":
    main()
