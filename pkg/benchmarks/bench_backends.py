"""Time the kernel backends on the hot paths of the control loop.

Usage: python benchmarks/bench_backends.py [--repeat N] [--duration SECONDS]
"""
import argparse
import timeit

import numpy as np

from iadp import _backend
from iadp.config import preset
from iadp.critic import CriticState, ExperienceBuffer, Regressand, weight_step
from iadp.harness import run_experiment
from iadp.plant import PlanarArm


def cases():
    rng = np.random.default_rng(0)
    arm = PlanarArm(payload_mass=0.25)
    q, qd, tau = rng.uniform(-2, 2, 3), rng.normal(size=3), rng.normal(size=3)
    crit = CriticState(None, [100.0, 4.0, 0.1, 16.0])
    buf = ExperienceBuffer(10)
    for y in rng.normal(size=(10, 4)):
        buf.admit(Regressand(float(rng.normal()), y))
    reg = Regressand(0.3, rng.normal(size=4))
    cand = Regressand(0.1, rng.normal(size=4))
    return {
        "arm.accel": lambda: arm.accel(0.0, q, qd, tau),
        "weight_step": lambda: weight_step(crit, reg, buf, 1e-3),
        "buffer.admit": lambda: buf.admit(cand),
    }


def bench(repeat, duration):
    rows = []
    for name in sorted(_backend.AVAILABLE):
        prev = _backend.set_backend(name)
        try:
            for label, fn in cases().items():
                n = 2000
                best = min(timeit.repeat(fn, number=n, repeat=repeat)) / n
                rows.append((name, label, f"{best * 1e6:9.2f} us"))
            cfg = preset("sinusoid")
            cfg["run"]["duration"] = duration
            res = run_experiment(cfg)
            ticks = res.metrics["ticks"]
            rows.append((name, f"closed loop ({ticks} ticks)",
                         f"{res.runtime:9.2f} s  ({res.runtime / max(ticks, 1) * 1e6:.1f} us/tick)"))
        finally:
            _backend.set_backend(prev)
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--duration", type=float, default=2.0)
    args = ap.parse_args()
    rows = bench(args.repeat, args.duration)
    w0 = max(len(r[0]) for r in rows)
    w1 = max(len(r[1]) for r in rows)
    for backend, label, value in rows:
        print(f"{backend:<{w0}}  {label:<{w1}}  {value}")


if __name__ == "__main__":
    main()
