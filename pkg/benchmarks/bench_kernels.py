"""Compare the compiled activation kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--size N] [--repeat R] [--end-to-end]

Prints per-kind timings (best of R) for both backends and their ratio. With
``--end-to-end`` it also times one sine streaming run per backend, where the
activation kernels are most of the work, and one Split MNIST mini-batch
update, where the matrix products dominate instead.
"""

import argparse
import timeit

import numpy as np

from elephant_cl import kernels
from elephant_cl.activations import KINDS, ActivationSpec


def bench_kernels(size, repeat):
    h = np.random.Generator(np.random.PCG64(0)).normal(0, 1, size)
    rows = []
    for kind in KINDS:
        s = ActivationSpec(kind, 0.5, 8.0)
        times = {}
        for backend in sorted(kernels.BACKENDS):
            t = timeit.repeat(lambda: kernels.activate(s.code, h, s.a, s.d, backend=backend), number=5, repeat=repeat)
            times[backend] = min(t) / 5
        rows.append((kind, times))
    return rows


def _with_backend(name, fn):
    saved = kernels.BACKEND
    kernels.BACKEND = name
    try:
        return fn()
    finally:
        kernels.BACKEND = saved


def bench_end_to_end():
    from elephant_cl import config, tasks
    from elephant_cl.autodiff import OptimizerState, forward_backward, rmsprop_step

    sine = config.from_dict({"model": {"m": 1000, "activation": {"kind": "elephant", "a": 0.04, "d": 8},
                                       "sigma_bias": 0.64}, "optimizer": {"lr": 1e-4}, "E": 10})
    mnist = config.from_dict({"experiment": "split_mnist",
                              "model": {"n": 784, "m": 1000, "o": 10, "activation": {"kind": "elephant", "a": 0.08, "d": 4},
                                        "sigma_bias": 0.16}, "optimizer": {"kind": "rmsprop", "lr": 3e-6}})
    r = np.random.Generator(np.random.PCG64(1))
    X, y = r.uniform(0, 1, (125, 784)), r.integers(0, 10, 125)
    p = tasks.make_model(mnist, 0, head="logits")
    state = OptimizerState.for_params(p, "rmsprop")

    def mnist_batch():
        _, g = forward_backward(p, X, y, "softmax_cross_entropy")
        rmsprop_step(p, g, state, 3e-6)

    out = {}
    for backend in sorted(kernels.BACKENDS):
        sine_t = min(timeit.repeat(lambda: _with_backend(backend, lambda: tasks.run_streaming_regression(sine, 0)),
                                   number=1, repeat=2))
        batch_t = min(timeit.repeat(lambda: _with_backend(backend, mnist_batch), number=10, repeat=3)) / 10
        out[backend] = (sine_t, batch_t)
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=1_000_000)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--end-to-end", action="store_true")
    args = ap.parse_args(argv)

    backends = sorted(kernels.BACKENDS)
    print(f"default backend: {kernels.BACKEND}; available: {', '.join(backends)}")
    print(f"activation + derivative over {args.size:,} values (ms, best of {args.repeat})")
    header = f"{'kind':<10}" + "".join(f"{b:>10}" for b in backends)
    if "cython" in backends:
        header += f"{'speedup':>10}"
    print(header)
    for kind, times in bench_kernels(args.size, args.repeat):
        line = f"{kind:<10}" + "".join(f"{times[b] * 1e3:>10.2f}" for b in backends)
        if "cython" in times:
            line += f"{times['python'] / times['cython']:>9.2f}x"
        print(line)

    if args.end_to_end:
        print("\nend to end (s)")
        print(f"{'':<10}{'sine run':>12}{'mnist batch':>14}")
        for b, (sine_t, batch_t) in bench_end_to_end().items():
            print(f"{b:<10}{sine_t:>12.2f}{batch_t:>14.4f}")


if __name__ == "__main__":
    main()
