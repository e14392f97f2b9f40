"""Permanent timing across sizes and worker counts."""

import argparse
import json
import os
import time

import numpy as np

from nlbs.fock import haar_unitary, permanent, permanents


def timed(fn, *a, **kw):
    t0 = time.perf_counter()
    fn(*a, **kw)
    return time.perf_counter() - t0


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", type=int, nargs="+", default=[12, 16, 20, 24])
    ap.add_argument("--batch-n", type=int, default=20)
    ap.add_argument("--workers", type=int, nargs="+", default=[1, 2, 4, 8])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    permanent(np.eye(2))  # compile
    single = {n: timed(permanent, haar_unitary(n, rng)) for n in args.sizes}
    mats = np.stack([haar_unitary(args.batch_n, rng) for _ in range(max(args.workers))])
    permanents(mats[:1])  # warm the batch path too
    base = timed(permanents, mats, workers=1)
    scaling = []
    for w in args.workers:
        t = timed(permanents, mats, workers=w)
        scaling.append({"workers": w, "seconds": t, "speedup": base / t, "efficiency": base / t / w})
    print(json.dumps({"cpus": os.cpu_count(), "single_s": single, "batch_n": args.batch_n, "scaling": scaling}, indent=2))


if __name__ == "__main__":
    main()
