"""Compare the compiled kernels with the pure-Python fallback.

Times one network training run (full-batch gradient descent on a
1000-row, 3-feature problem with the default 8x16 architecture) and one
batch of CSS objective evaluations, per backend, and reports the speedup.

    python benchmarks/bench_kernels.py [--epochs N] [--css-calls N] [--repeat N] [--json PATH]
"""
from __future__ import annotations

import argparse
import json
import platform
import time

import numpy as np

from regnl import kernels
from regnl.mlp import MlpConfig, init_params


def _best_of(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def bench_training(impl, epochs: int, repeat: int, dropout: float) -> float:
    rng = np.random.default_rng(0)
    X = rng.random((1000, 3))
    y = rng.standard_normal(1000)
    params = init_params(MlpConfig(seed=0))
    thr = impl.dropout_threshold(dropout)

    def run():
        weights = [W.copy() for W in params.weights]
        biases = [b.copy() for b in params.biases]
        impl.train_full_batch(X, y, weights, biases, 3e-2, 1e-4, thr, 0, 0, epochs,
                              max(1, epochs // 1000))
    return _best_of(run, repeat) / epochs


def bench_css(impl, calls: int, repeat: int) -> float:
    rng = np.random.default_rng(1)
    w = rng.standard_normal(20)  # one region's differenced training quarters
    xs = rng.uniform(-0.5, 0.5, size=(calls, 5))

    def run():
        for x in xs:
            impl.css_penalized(x, w, 2, 2)
    return _best_of(run, repeat) / calls


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--epochs", type=int, default=200)
    parser.add_argument("--css-calls", type=int, default=20_000)
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--dropout", type=float, default=0.1)
    parser.add_argument("--json", help="also write the results to this file")
    args = parser.parse_args(argv)

    backends = kernels.available_backends()
    if "compiled" not in backends:
        print("compiled extension not built; only the fallback can be timed")
    results = {}
    for name, impl in backends.items():
        results[name] = {
            "train_us_per_epoch": 1e6 * bench_training(impl, args.epochs, args.repeat, args.dropout),
            "css_us_per_call": 1e6 * bench_css(impl, args.css_calls, args.repeat),
        }

    print(f"{'backend':<10}{'train us/epoch':>18}{'css us/call':>15}")
    for name, r in results.items():
        print(f"{name:<10}{r['train_us_per_epoch']:>18.1f}{r['css_us_per_call']:>15.2f}")
    if len(results) == 2:
        speed = {k: results["python"][k] / results["compiled"][k] for k in results["python"]}
        print(f"{'speedup':<10}{speed['train_us_per_epoch']:>17.1f}x{speed['css_us_per_call']:>14.1f}x")
        epochs_default = MlpConfig().epochs
        print(f"default training run ({epochs_default} epochs, 1000 rows): "
              f"compiled {results['compiled']['train_us_per_epoch'] * epochs_default / 1e6:.0f}s, "
              f"python {results['python']['train_us_per_epoch'] * epochs_default / 1e6:.0f}s")
        results["speedup"] = speed
    if args.json:
        results["machine"] = {"python": platform.python_version(), "processor": platform.machine()}
        results["settings"] = vars(args)
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(results, fh, indent=2)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
