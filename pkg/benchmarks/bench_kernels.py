"""Compiled vs pure-numpy kernels, plus one training epoch per backend.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from boilnet import kernels


def bench_kernel(mod, repeat):
    rng = np.random.default_rng(0)
    field = rng.normal(size=(150, 150, 9, 4))
    z = rng.normal(size=(256, 64))
    b = rng.normal(size=64)
    h, dh = np.empty_like(z), np.empty_like(z)
    theta, g = rng.normal(size=(2, 64 * 64))
    m, v = np.zeros_like(theta), np.zeros_like(theta)
    cases = {
        "block_mean 150x150x9x4 / 3,3,3,4": lambda: mod.block_mean(field, 3, 3, 3, 4),
        "bias_elu 256x64": lambda: mod.bias_elu(z.copy(), b, 1.0, h, dh),
        "adam_update 4096": lambda: mod.adam_update(theta, g, m, v, 1e-3, 0.9, 0.999, 1e-8, 0.1, 0.001),
    }
    return {name: min(timeit.repeat(fn, number=20, repeat=repeat)) / 20 for name, fn in cases.items()}


EPOCH = """
import time, numpy as np
from boilnet import nn, optim, BACKEND
from boilnet.featext import Dataset
rng = np.random.default_rng(0)
X = rng.normal(size=(7500, 19)); Y = np.tanh(X[:, :4])
net = nn.build_network([19, 64, 64, 64, 4], rng)
cfg = optim.TrainConfig(epochs=1, batch_size=256, seed=0)
optim.train(net, Dataset(X, Y), None, cfg)
best = min((lambda t: (optim.train(net, Dataset(X, Y), None, cfg), time.perf_counter() - t)[1])(time.perf_counter()) for _ in range({r}))
print(BACKEND, best)
"""


def bench_epoch(pure, repeat):
    env = dict(os.environ, BOILNET_PURE_PYTHON="1" if pure else "0")
    out = subprocess.run([sys.executable, "-c", EPOCH.format(r=repeat)], env=env,
                         capture_output=True, text=True, check=True).stdout.split()
    return out[0], float(out[1])


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args()
    mods = [("python", kernels.python_kernels)]
    if kernels.compiled_kernels is not None:
        mods.insert(0, ("compiled", kernels.compiled_kernels))
    else:
        print("compiled extension not built; timing the numpy fallback only")
    results = {name: bench_kernel(mod, args.repeat) for name, mod in mods}
    print(f"{'kernel':36s}" + "".join(f"{n:>14s}" for n, _ in mods))
    for k in results["python"]:
        print(f"{k:36s}" + "".join(f"{results[n][k] * 1e3:12.3f}ms" for n, _ in mods))
    print()
    for pure in ([False, True] if kernels.compiled_kernels is not None else [True]):
        backend, secs = bench_epoch(pure, args.repeat)
        print(f"one epoch, 7500 rows, 19-64-64-64-4, batch 256 [{backend}]: {secs:.3f} s")


if __name__ == "__main__":
    main()
