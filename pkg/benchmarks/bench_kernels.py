"""Compiled vs pure-NumPy kernel timings.

    python3 benchmarks/bench_kernels.py [--repeat N]

Shapes follow one training batch on the default synthetic corpus: 64
utterances of 250 frames, 82 fused channels, 400-sample frames.
"""

import argparse
import timeit

import numpy as np

from dualhead_pd import _pykernels
from dualhead_pd.features import filter_pair

try:
    from dualhead_pd import _ckernels
except ImportError:
    _ckernels = None


def cases(rng):
    frames = rng.standard_normal((249, 400))
    lo, hi = filter_pair("db4")
    emb = rng.standard_normal((64, 82))
    labels = rng.integers(0, 2, 64).astype(np.int64)
    x = rng.standard_normal((32, 250, 82)).astype(np.float32)
    w = rng.standard_normal((3, 82, 20)).astype(np.float32)
    b = np.zeros(20, dtype=np.float32)
    return {
        "dwt_step (249x400, db4)": ("dwt_step", (frames, lo, hi)),
        "hardest_pairs (64x82)": ("hardest_pairs", (emb, labels)),
        "conv1d_forward (32x250x82, K=3)": ("conv1d_forward", (x, w, b)),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args(argv)
    print(f"{'kernel':<34}{'python (ms)':>12}{'compiled (ms)':>15}{'speedup':>9}")
    for label, (name, inputs) in cases(np.random.default_rng(0)).items():
        py = min(timeit.repeat(lambda: getattr(_pykernels, name)(*inputs), number=args.repeat // 10 or 1, repeat=10))
        py *= 1000 / (args.repeat // 10 or 1)
        fn = getattr(_ckernels, name, None) if _ckernels else None
        if fn is None:
            print(f"{label:<34}{py:>12.3f}{'n/a':>15}{'':>9}")
            continue
        c = min(timeit.repeat(lambda: fn(*inputs), number=args.repeat // 10 or 1, repeat=10))
        c *= 1000 / (args.repeat // 10 or 1)
        print(f"{label:<34}{py:>12.3f}{c:>15.3f}{py / c:>8.1f}x")


if __name__ == "__main__":
    main()
