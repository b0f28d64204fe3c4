"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--T 20000] [--repeat 3]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from delaybandits import ConvexBody
from delaybandits._backend import load_backend
from delaybandits.adversary import quadratic_tracking_losses
from delaybandits.games import chicken
from delaybandits.simulate import run_exp3, run_exp3_game, run_fkm
from delaybandits.stepsize import StepSizeSchedule


def _cases(T: int):
    rng = np.random.default_rng(0)
    K = 10
    losses = rng.random((T, K))
    d = rng.integers(1, 100, T)
    etas = StepSizeSchedule.power_log(5 / 8).capped().values(T)
    u = rng.random(T)
    yield "exp3", lambda kern: run_exp3(losses, d, etas, rng, "zero", True, 1.0, kernels=kern, uniforms=u)

    body = ConvexBody.ball(3)
    fam = quadratic_tracking_losses(T, 3, rng, radius=1.0)
    U = rng.standard_normal((T, 3))
    U /= np.linalg.norm(U, axis=1)[:, None]
    step = np.full(T, 0.01)
    yield "fkm", lambda kern: run_fkm(fam, body, 0.2, step, d, rng, kernels=kern, units=U)

    dg = np.stack([rng.integers(1, 30, T) for _ in range(2)])
    getas = StepSizeSchedule.power_log(1.0).capped().values(T)
    yield "game", lambda kern: run_exp3_game(chicken(), dg, getas, np.random.default_rng(5), kernels=kern)


def _best(fn, kern, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(kern)
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--T", type=int, default=20000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    try:
        cy = load_backend("cython")
    except ImportError:
        cy = None
    py = load_backend("python")
    print(f"{'kernel':<8}{'python s':>12}{'cython s':>12}{'speedup':>10}   (T = {args.T})")
    for name, fn in _cases(args.T):
        tp = _best(fn, py, args.repeat)
        if cy is None:
            print(f"{name:<8}{tp:>12.4f}{'n/a':>12}{'':>10}")
            continue
        tc = _best(fn, cy, args.repeat)
        print(f"{name:<8}{tp:>12.4f}{tc:>12.4f}{tp / tc:>9.1f}x")


if __name__ == "__main__":
    main()
